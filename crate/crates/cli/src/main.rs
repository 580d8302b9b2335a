use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use drmdp::dp::{backward_induction, saddle_residual, value_iteration, DpSolution, DrMdpModel, Horizon, SolveOptions};
use drmdp::io::{policy_csv, records_csv, summary_csv, values_csv, ModelFile};
use drmdp::lp::write_lp_format;
use drmdp::newsvendor::{run_experiment, trend_checks, NewsvendorConfig};
use drmdp::parallel::{configure_threads, ExecutionMode};
use drmdp::reformulation::{assemble_stage_objective, build_srobust_lp};
use serde_json::json;

const EXIT_INVALID: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "drmdp", version, about = "Distributionally robust MDP solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Threads {
    /// worker threads (1 runs sequentially)
    #[arg(long, env = "DRMDP_THREADS")]
    threads: Option<usize>,
}

impl Threads {
    fn mode(&self) -> ExecutionMode {
        match self.threads {
            Some(1) => ExecutionMode::Sequential,
            Some(n) => {
                configure_threads(n);
                ExecutionMode::Parallel
            }
            None => ExecutionMode::Parallel,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve a model file and write values, policy and a summary
    Solve {
        model: PathBuf,
        /// value-iteration accuracy (infinite horizon)
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        /// write every state's final LP in LP text format into this directory
        #[arg(long)]
        dump_lp: Option<PathBuf>,
        /// output directory (summary goes to stdout either way)
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        threads: Threads,
    },
    /// Run the newsvendor out-of-sample experiment
    Newsvendor {
        /// TOML file with experiment settings; flags override it
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        radii: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        train_sizes: Option<Vec<usize>>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        test_runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// exit 0 even if some repetitions failed
        #[arg(long)]
        keep_going: bool,
        #[command(flatten)]
        threads: Threads,
    },
    /// Check a model file's ambiguity sets and factor maps
    Validate { model: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve { model, epsilon, dump_lp, out, threads } => {
            solve(&model, epsilon, dump_lp.as_deref(), out.as_deref(), threads.mode())
        }
        Command::Newsvendor { config, radii, train_sizes, reps, test_runs, seed, out_dir, keep_going, threads } => {
            let overrides = Overrides { radii, train_sizes, reps, test_runs, seed };
            newsvendor(config.as_deref(), overrides, &out_dir, keep_going, threads.mode())
        }
        Command::Validate { model } => validate(&model),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

type CmdResult = Result<(), (u8, String)>;

fn load(path: &Path) -> Result<DrMdpModel, (u8, String)> {
    let text = fs::read_to_string(path).map_err(|e| (EXIT_INVALID, format!("{}: {e}", path.display())))?;
    let file = ModelFile::parse(&text).map_err(|e| (EXIT_INVALID, format!("{}: {e}", path.display())))?;
    file.build().map_err(|e| (EXIT_INVALID, format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), (u8, String)> {
    fs::write(path, text).map_err(|e| (EXIT_INVALID, format!("{}: {e}", path.display())))
}

fn validate(path: &Path) -> CmdResult {
    let model = load(path)?;
    let report = model.validate();
    print!("{report}");
    if report.all_passed() {
        println!("all {} checks passed", report.checks.len());
        Ok(())
    } else {
        Err((EXIT_INVALID, format!("{} check(s) failed", report.failures().count())))
    }
}

fn solve(path: &Path, epsilon: f64, dump_lp: Option<&Path>, out: Option<&Path>, mode: ExecutionMode) -> CmdResult {
    let model = load(path)?;
    let report = model.validate();
    if !report.all_passed() {
        eprint!("{report}");
        return Err((EXIT_INVALID, "model failed validation".into()));
    }
    let opts = SolveOptions::default().with_mode(mode);
    let sol: DpSolution = match model.horizon() {
        Horizon::Finite { .. } => backward_induction(&model, &opts),
        Horizon::Infinite { .. } => value_iteration(&model, epsilon, &vec![0.0; model.states().len()], &opts),
    }
    .map_err(|e| (EXIT_SOLVER, e.to_string()))?;
    let residual = saddle_residual(&model, &sol).map_err(|e| (EXIT_SOLVER, e.to_string()))?;
    let s1 = model.initial_state();
    let summary = json!({
        "initial_state": model.states()[s1].name,
        "value": sol.values[s1],
        "saddle_residual": residual,
        "certificate_residual": sol.max_certificate_residual(),
        "iterations": sol.iterations,
    });
    let summary = serde_json::to_string_pretty(&summary).expect("plain json");
    println!("{summary}");
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| (EXIT_INVALID, format!("{}: {e}", dir.display())))?;
        write(&dir.join("values.csv"), &values_csv(&model, &sol.values))?;
        write(&dir.join("policy.csv"), &policy_csv(&model, &sol))?;
        write(&dir.join("summary.json"), &(summary + "\n"))?;
    }
    if let Some(dir) = dump_lp {
        dump_lps(&model, &sol, dir)?;
    }
    Ok(())
}

fn dump_lps(model: &DrMdpModel, sol: &DpSolution, dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| (EXIT_INVALID, format!("{}: {e}", dir.display())))?;
    let continuation = model.discount().unwrap_or(1.0);
    for (s, state) in model.states().iter().enumerate() {
        let Some(dec) = &state.decision else { continue };
        if sol.reports[s].is_none() {
            continue;
        }
        let v_next: Vec<f64> = dec.successors.iter().map(|&n| sol.values[n]).collect();
        let lp = assemble_stage_objective(&v_next, &dec.factor_map, continuation)
            .and_then(|obj| build_srobust_lp(&obj, &dec.ambiguity))
            .map_err(|e| (EXIT_SOLVER, format!("state '{}': {e}", state.name)))?;
        let file: String = state.name.chars().map(|c| if c.is_alphanumeric() { c } else { '_' }).collect();
        write(&dir.join(format!("{file}.lp")), &write_lp_format(lp.lp()))?;
    }
    Ok(())
}

struct Overrides {
    radii: Option<Vec<f64>>,
    train_sizes: Option<Vec<usize>>,
    reps: Option<usize>,
    test_runs: Option<usize>,
    seed: Option<u64>,
}

fn newsvendor(config: Option<&Path>, o: Overrides, out_dir: &Path, keep_going: bool, mode: ExecutionMode) -> CmdResult {
    let mut cfg = match config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| (EXIT_INVALID, format!("{}: {e}", p.display())))?;
            toml::from_str::<NewsvendorConfig>(&text).map_err(|e| (EXIT_INVALID, format!("{}: {e}", p.display())))?
        }
        None => NewsvendorConfig { train_sizes: vec![5, 15], radii: vec![0.0, 0.1, 0.2, 0.5, 1.0, 2.0], ..Default::default() },
    };
    if let Some(r) = o.radii {
        cfg.radii = r;
    }
    if let Some(n) = o.train_sizes {
        cfg.train_sizes = n;
    }
    if let Some(r) = o.reps {
        cfg.repetitions = r;
    }
    if let Some(t) = o.test_runs {
        cfg.test_runs = t;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| (EXIT_INVALID, e.to_string()))?;
    let opts = SolveOptions::default().with_mode(mode);
    let table = run_experiment(&cfg, &opts).map_err(|e| (EXIT_SOLVER, e.to_string()))?;
    fs::create_dir_all(out_dir).map_err(|e| (EXIT_INVALID, format!("{}: {e}", out_dir.display())))?;
    write(&out_dir.join("records.csv"), &records_csv(&table))?;
    write(&out_dir.join("summary.csv"), &summary_csv(&table))?;
    print!("{}", summary_csv(&table));
    match trend_checks(&table, &cfg) {
        Some(t) => {
            let tag = |ok: bool| if ok { "PASS" } else { "FAIL" };
            println!(
                "[{}] mean cost rises with the radius at N={}: t = {:.2}",
                tag(t.cost_increase_passed),
                cfg.train_sizes.iter().min().unwrap(),
                t.cost_increase_t
            );
            println!(
                "[{}] cost spread at radius 0 shrinks with more data: std {:.4} -> {:.4}",
                tag(t.std_decrease_passed),
                t.std_small,
                t.std_large
            );
        }
        None => println!("trend checks skipped (need radius 0 among the radii)"),
    }
    for f in &table.failures {
        eprintln!("repetition {} failed at N={}, theta={}: {}", f.repetition, f.train_size, f.theta, f.message);
    }
    if !table.failures.is_empty() && !keep_going {
        return Err((EXIT_SOLVER, format!("{} repetition(s) failed", table.failures.len())));
    }
    Ok(())
}

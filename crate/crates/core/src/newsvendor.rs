//! Multi-period newsvendor with backlogging and an unknown demand
//! distribution, plus the out-of-sample experiment harness.
//!
//! The factor vector is the demand distribution itself, so the ambiguity
//! lives on the probability simplex and transitions are linear in it.

use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ambiguity::{build_support_only, build_wasserstein, AmbiguityError, FactorMap, LiftedAmbiguitySet, Metric};
use crate::dp::{backward_induction, Decision, DpError, DpSolution, DrMdpModel, Horizon, SolveOptions, State};
use crate::geometry::PolyhedralSet;
use crate::parallel::par_map_range;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NewsvendorError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ambiguity(#[from] AmbiguityError),
    #[error(transparent)]
    Dp(#[from] DpError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewsvendorConfig {
    /// number of stages; decisions are taken in the first `horizon - 1`
    pub horizon: usize,
    pub s_min: i64,
    pub s_max: i64,
    pub initial_inventory: i64,
    /// per-stage costs, one entry per stage (the ordering cost of the last
    /// stage is unused)
    pub order_cost: Vec<f64>,
    pub holding_cost: Vec<f64>,
    pub backorder_cost: Vec<f64>,
    /// true probabilities of demands `0..p.len()`
    pub demand_probs: Vec<f64>,
    /// demand draws behind each training sample
    pub draws_per_sample: usize,
    pub train_sizes: Vec<usize>,
    pub radii: Vec<f64>,
    pub metric: Metric,
    pub repetitions: usize,
    pub test_runs: usize,
    pub seed: u64,
}

impl Default for NewsvendorConfig {
    fn default() -> Self {
        let horizon = 5;
        NewsvendorConfig {
            horizon,
            s_min: -5,
            s_max: 10,
            initial_inventory: 0,
            order_cost: vec![1.0; horizon],
            holding_cost: vec![2.0; horizon],
            backorder_cost: vec![3.0; horizon],
            demand_probs: vec![0.05, 0.4, 0.1, 0.4, 0.05],
            draws_per_sample: 20,
            train_sizes: vec![5, 10, 15],
            radii: vec![0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0],
            metric: Metric::L1,
            repetitions: 200,
            test_runs: 1000,
            seed: 20_161_104,
        }
    }
}

impl NewsvendorConfig {
    pub fn validate(&self) -> Result<(), NewsvendorError> {
        let bad = |m: &str| Err(NewsvendorError::Config(m.into()));
        if self.horizon < 2 {
            return bad("horizon must be at least 2");
        }
        if self.s_min > 0 || self.s_max < 0 || self.s_min > self.s_max {
            return bad("inventory bounds must satisfy s_min <= 0 <= s_max");
        }
        if !(self.s_min..=self.s_max).contains(&self.initial_inventory) {
            return bad("initial inventory lies outside the inventory bounds");
        }
        for (name, v) in [("order_cost", &self.order_cost), ("holding_cost", &self.holding_cost), ("backorder_cost", &self.backorder_cost)] {
            if v.len() != self.horizon || v.iter().any(|c| !c.is_finite()) {
                return bad(&format!("{name} needs {} finite entries", self.horizon));
            }
        }
        let p = &self.demand_probs;
        if p.is_empty() || p.iter().any(|&x| !(x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("demand_probs must be a probability vector");
        }
        if self.draws_per_sample == 0 || self.train_sizes.contains(&0) {
            return bad("sample sizes must be positive");
        }
        if self.radii.iter().any(|&r| !(r >= 0.0)) {
            return bad("radii must be nonnegative");
        }
        Ok(())
    }

    pub fn num_levels(&self) -> usize {
        (self.s_max - self.s_min + 1) as usize
    }

    pub fn num_demands(&self) -> usize {
        self.demand_probs.len()
    }

    /// Inventory after ordering `a` and meeting demand `d`, clipped to the
    /// bounds.
    pub fn next_inventory(&self, s: i64, a: i64, d: i64) -> i64 {
        (s + a - d).clamp(self.s_min, self.s_max)
    }

    /// Holding or backorder cost of inventory `s` at stage `t` (1-based).
    pub fn stock_cost(&self, t: usize, s: i64) -> f64 {
        (self.holding_cost[t - 1] * s as f64).max(-self.backorder_cost[t - 1] * s as f64)
    }

    pub fn num_actions(&self, s: i64) -> usize {
        (self.s_max - s + 1) as usize
    }
}

/// State layout and factor maps of the newsvendor; attach an ambiguity set
/// with [`NewsvendorModel::with_ambiguity`].
#[derive(Debug, Clone)]
pub struct NewsvendorModel {
    cfg: NewsvendorConfig,
    /// one factor map per inventory level, shared by all stages
    maps: Vec<FactorMap>,
}

impl NewsvendorModel {
    pub fn new(cfg: NewsvendorConfig) -> Result<Self, NewsvendorError> {
        cfg.validate()?;
        let levels = cfg.num_levels();
        let nd = cfg.num_demands();
        let maps = (0..levels)
            .map(|k| {
                let s = cfg.s_min + k as i64;
                let na = cfg.num_actions(s);
                let mut p_mat = vec![vec![0.0; nd]; na * levels];
                for a in 0..na {
                    for d in 0..nd {
                        let next = cfg.next_inventory(s, a as i64, d as i64);
                        p_mat[a * levels + (next - cfg.s_min) as usize][d] = 1.0;
                    }
                }
                // rewards are set per stage in `with_ambiguity`
                FactorMap::new(nd, na, levels, p_mat, vec![0.0; na * levels], vec![vec![0.0; nd]; na], vec![0.0; na])
                    .expect("consistent dimensions")
            })
            .collect();
        Ok(NewsvendorModel { cfg, maps })
    }

    pub fn config(&self) -> &NewsvendorConfig {
        &self.cfg
    }

    /// Index of inventory `s` at stage `t` (1-based) in the staged model.
    pub fn state_index(&self, t: usize, s: i64) -> usize {
        if t == 1 {
            0
        } else {
            1 + (t - 2) * self.cfg.num_levels() + (s - self.cfg.s_min) as usize
        }
    }

    fn stage_map(&self, t: usize, s: i64) -> FactorMap {
        let cfg = &self.cfg;
        let base = &self.maps[(s - cfg.s_min) as usize];
        let nd = cfg.num_demands();
        let na = base.num_actions();
        let levels = cfg.num_levels();
        let r0 = (0..na).map(|a| -(cfg.order_cost[t - 1] * a as f64 + cfg.stock_cost(t, s))).collect();
        let p_mat = (0..na * levels).map(|i| base.p_row(i / levels, i % levels).0.to_vec()).collect();
        FactorMap::new(nd, na, levels, p_mat, vec![0.0; na * levels], vec![vec![0.0; nd]; na], r0)
            .expect("consistent dimensions")
    }

    /// The staged model with the same ambiguity set at every decision state.
    pub fn with_ambiguity(&self, amb: Arc<LiftedAmbiguitySet>) -> Result<DrMdpModel, NewsvendorError> {
        let cfg = &self.cfg;
        if amb.factor_dim() != cfg.num_demands() {
            return Err(NewsvendorError::Config("ambiguity set dimension differs from the demand support".into()));
        }
        let levels = cfg.num_levels();
        let t_max = cfg.horizon;
        let mut states = Vec::new();
        let mut stages = Vec::new();
        let mut terminal = Vec::new();
        for t in 1..=t_max {
            let inv: Vec<i64> = if t == 1 { vec![cfg.initial_inventory] } else { (cfg.s_min..=cfg.s_max).collect() };
            let mut ids = Vec::new();
            for s in inv {
                let decision = (t < t_max).then(|| Decision {
                    successors: (0..levels).map(|k| self.state_index(t + 1, cfg.s_min + k as i64)).collect(),
                    factor_map: self.stage_map(t, s),
                    ambiguity: amb.clone(),
                });
                ids.push(states.len());
                terminal.push(if t == t_max { -cfg.stock_cost(t, s) } else { 0.0 });
                states.push(State { name: format!("t{t}:s{s}"), decision });
            }
            stages.push(ids);
        }
        Ok(DrMdpModel::new(states, Horizon::Finite { stages }, Some(terminal))?)
    }

    /// Per-stage ordering rule extracted from a solution of this model.
    pub fn policy(&self, sol: &DpSolution) -> NewsvendorPolicy {
        let cfg = &self.cfg;
        let dists = (1..cfg.horizon)
            .map(|t| {
                (cfg.s_min..=cfg.s_max)
                    .map(|s| {
                        if t == 1 && s != cfg.initial_inventory {
                            Vec::new()
                        } else {
                            sol.policy.dists[self.state_index(t, s)].clone()
                        }
                    })
                    .collect()
            })
            .collect();
        NewsvendorPolicy { s_min: cfg.s_min, dists }
    }
}

/// `dists[t-1][s - s_min]` is the order-quantity distribution at stage `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NewsvendorPolicy {
    pub s_min: i64,
    pub dists: Vec<Vec<Vec<f64>>>,
}

impl NewsvendorPolicy {
    /// Orders a fixed quantity at every stage and inventory level, clipped
    /// to the feasible range.
    pub fn constant(cfg: &NewsvendorConfig, order: usize) -> Self {
        let dists = (1..cfg.horizon)
            .map(|_| {
                (cfg.s_min..=cfg.s_max)
                    .map(|s| {
                        let na = cfg.num_actions(s);
                        let mut d = vec![0.0; na];
                        d[order.min(na - 1)] = 1.0;
                        d
                    })
                    .collect()
            })
            .collect();
        NewsvendorPolicy { s_min: cfg.s_min, dists }
    }

    fn sample<R: Rng>(&self, t: usize, s: i64, rng: &mut R) -> usize {
        let d = &self.dists[t - 1][(s - self.s_min) as usize];
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (a, &p) in d.iter().enumerate() {
            acc += p.max(0.0);
            if u < acc {
                return a;
            }
        }
        // rounding: fall back to the last action with positive mass
        d.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

/// How training samples are generated from the true demand distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingScheme {
    /// empirical frequencies of this many independent demand draws
    EmpiricalFrequency { draws: usize },
    /// the true distribution itself (no sampling noise)
    Exact,
}

/// `count` samples of the demand distribution, each on the simplex.
pub fn sample_training_set<R: Rng>(p: &[f64], count: usize, scheme: SamplingScheme, rng: &mut R) -> Vec<Vec<f64>> {
    match scheme {
        SamplingScheme::Exact => vec![p.to_vec(); count],
        SamplingScheme::EmpiricalFrequency { draws } => {
            let dist = WeightedIndex::new(p).expect("probability vector");
            (0..count)
                .map(|_| {
                    let mut freq = vec![0.0; p.len()];
                    for _ in 0..draws {
                        freq[dist.sample(rng)] += 1.0;
                    }
                    let total: f64 = freq.iter().sum();
                    freq.iter_mut().for_each(|f| *f /= total);
                    freq
                })
                .collect()
        }
    }
}

/// Total cost of one trajectory under `demands` (one per decision stage).
pub fn trajectory_cost<R: Rng>(cfg: &NewsvendorConfig, policy: &NewsvendorPolicy, demands: &[usize], rng: &mut R) -> f64 {
    let mut s = cfg.initial_inventory;
    let mut total = 0.0;
    for (t, &d) in (1..cfg.horizon).zip(demands) {
        let a = policy.sample(t, s, rng);
        total += cfg.order_cost[t - 1] * a as f64 + cfg.stock_cost(t, s);
        s = cfg.next_inventory(s, a as i64, d as i64);
    }
    total + cfg.stock_cost(cfg.horizon, s)
}

/// Mean total cost of `policy` over `runs` trajectories with demands drawn
/// from `p`.
pub fn simulate_policy<R: Rng>(cfg: &NewsvendorConfig, policy: &NewsvendorPolicy, p: &[f64], runs: usize, rng: &mut R) -> f64 {
    let dist = WeightedIndex::new(p).expect("probability vector");
    let mut demands = vec![0; cfg.horizon - 1];
    let mut sum = 0.0;
    for _ in 0..runs {
        demands.iter_mut().for_each(|d| *d = dist.sample(rng));
        sum += trajectory_cost(cfg, policy, &demands, rng);
    }
    sum / runs as f64
}

/// Ambiguity set for `samples` at radius `theta`: the type-1 Wasserstein
/// ball on the simplex.
pub fn wasserstein_ambiguity(samples: &[Vec<f64>], theta: f64, metric: Metric) -> Result<LiftedAmbiguitySet, NewsvendorError> {
    let d = samples.first().map_or(0, Vec::len);
    Ok(build_wasserstein(samples, theta, PolyhedralSet::simplex(d), metric)?)
}

/// Ambiguity set knowing only that the demand distribution is a
/// distribution.
pub fn support_only_ambiguity(num_demands: usize) -> Result<LiftedAmbiguitySet, NewsvendorError> {
    Ok(build_support_only(PolyhedralSet::simplex(num_demands))?)
}

/// Random streams: one per (repetition, purpose), so results do not depend
/// on evaluation order or thread count.
fn stream_rng(seed: u64, repetition: usize, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((repetition as u64) << 16) | tag);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub repetition: usize,
    pub train_size: usize,
    pub theta: f64,
    /// robust value at the initial state (negated worst-case cost)
    pub robust_value: f64,
    /// simulated out-of-sample mean cost
    pub mean_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub train_size: usize,
    pub theta: f64,
    pub count: usize,
    pub mean: f64,
    /// sample standard deviation across repetitions
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepetitionFailure {
    pub repetition: usize,
    pub train_size: usize,
    pub theta: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentTable {
    pub records: Vec<ExperimentRecord>,
    pub summary: Vec<CellSummary>,
    pub failures: Vec<RepetitionFailure>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

impl ExperimentTable {
    fn from_records(records: Vec<ExperimentRecord>, sizes: &[usize], radii: &[f64]) -> Self {
        let mut summary = Vec::new();
        for &n in sizes {
            for &theta in radii {
                let xs = Self::costs_of(&records, n, theta);
                let (mean, std) = mean_std(&xs);
                summary.push(CellSummary { train_size: n, theta, count: xs.len(), mean, std });
            }
        }
        ExperimentTable { records, summary, failures: Vec::new() }
    }

    fn costs_of(records: &[ExperimentRecord], n: usize, theta: f64) -> Vec<f64> {
        records.iter().filter(|r| r.train_size == n && r.theta == theta).map(|r| r.mean_cost).collect()
    }

    pub fn costs(&self, n: usize, theta: f64) -> Vec<f64> {
        Self::costs_of(&self.records, n, theta)
    }

    pub fn cell(&self, n: usize, theta: f64) -> Option<&CellSummary> {
        self.summary.iter().find(|c| c.train_size == n && c.theta == theta)
    }
}

/// Robust solve of one training set at one radius.
pub fn solve_for_samples(
    model: &NewsvendorModel,
    samples: &[Vec<f64>],
    theta: f64,
    opts: &SolveOptions,
) -> Result<DpSolution, NewsvendorError> {
    let amb = wasserstein_ambiguity(samples, theta, model.config().metric)?;
    let drmdp = model.with_ambiguity(Arc::new(amb))?;
    Ok(backward_induction(&drmdp, opts)?)
}

/// For every repetition, draws a fresh training set per size and a fresh
/// test seed, solves every radius and simulates the resulting policy.
/// Repetitions run in parallel; states within a stage run sequentially. A
/// solver failure abandons its repetition and is listed in `failures`.
pub fn run_experiment(cfg: &NewsvendorConfig, opts: &SolveOptions) -> Result<ExperimentTable, NewsvendorError> {
    let model = NewsvendorModel::new(cfg.clone())?;
    let inner = SolveOptions { mode: crate::parallel::ExecutionMode::Sequential, ..*opts };
    let per_rep = par_map_range(opts.mode, cfg.repetitions, |rep| {
        let mut out = Vec::new();
        for (k, &n) in cfg.train_sizes.iter().enumerate() {
            let mut train_rng = stream_rng(cfg.seed, rep, 2 * k as u64);
            let samples = sample_training_set(
                &cfg.demand_probs,
                n,
                SamplingScheme::EmpiricalFrequency { draws: cfg.draws_per_sample },
                &mut train_rng,
            );
            for &theta in &cfg.radii {
                let sol = match solve_for_samples(&model, &samples, theta, &inner) {
                    Ok(sol) => sol,
                    Err(e) => {
                        let failure = RepetitionFailure { repetition: rep, train_size: n, theta, message: e.to_string() };
                        return (out, Some(failure));
                    }
                };
                let policy = model.policy(&sol);
                // common test stream across radii for the same (rep, n)
                let mut test_rng = stream_rng(cfg.seed, rep, 2 * k as u64 + 1);
                let mean_cost = simulate_policy(cfg, &policy, &cfg.demand_probs, cfg.test_runs, &mut test_rng);
                out.push(ExperimentRecord { repetition: rep, train_size: n, theta, robust_value: sol.values[0], mean_cost });
            }
        }
        (out, None)
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (recs, fail) in per_rep {
        match fail {
            // a failed repetition contributes no records
            Some(f) => failures.push(f),
            None => records.extend(recs),
        }
    }
    let mut table = ExperimentTable::from_records(records, &cfg.train_sizes, &cfg.radii);
    table.failures = failures;
    Ok(table)
}

/// Welch t-statistic for `mean(a) > mean(b)`.
pub fn welch_t(a: &[f64], b: &[f64]) -> f64 {
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    let se = (sa * sa / a.len() as f64 + sb * sb / b.len() as f64).sqrt();
    if se == 0.0 {
        if ma > mb {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        (ma - mb) / se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendReport {
    /// Welch t of mean cost at the largest radius over radius zero, smallest
    /// training size
    pub cost_increase_t: f64,
    pub cost_increase_passed: bool,
    /// cost standard deviation at radius zero for the smallest and largest
    /// training sizes
    pub std_small: f64,
    pub std_large: f64,
    pub std_decrease_passed: bool,
}

/// Qualitative trends expected of the experiment: robustness costs money
/// when data are scarce, and more data reduce the spread of outcomes.
pub fn trend_checks(table: &ExperimentTable, cfg: &NewsvendorConfig) -> Option<TrendReport> {
    let small = *cfg.train_sizes.iter().min()?;
    let large = *cfg.train_sizes.iter().max()?;
    let zero = *cfg.radii.iter().find(|&&r| r == 0.0)?;
    let top = cfg.radii.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let t = welch_t(&table.costs(small, top), &table.costs(small, zero));
    let std_small = table.cell(small, zero)?.std;
    let std_large = table.cell(large, zero)?.std;
    Some(TrendReport {
        cost_increase_t: t,
        cost_increase_passed: t > 2.0,
        std_small,
        std_large,
        std_decrease_passed: std_large < std_small,
    })
}

use std::path::PathBuf;

use drmdp::dp::{backward_induction, saddle_residual, value_iteration, SolveOptions};
use drmdp::io::{policy_csv, values_csv, IoError, ModelFile};

fn model_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models").join(name)
}

fn load(name: &str) -> ModelFile {
    ModelFile::parse(&std::fs::read_to_string(model_path(name)).unwrap()).unwrap()
}

/// Six self-looping states, one per builder; every reward is `xi` and the
/// discount 0.5, so each value is twice the worst-case mean of `xi`.
const ALL_BUILDERS: &str = r#"
format_version = 1
horizon = { kind = "infinite", discount = 0.5 }

[[ambiguity]]
name = "support"
builder = "support_only"
support = { kind = "box", lower = [0.0], upper = [1.0] }

[[ambiguity]]
name = "mean"
builder = "uncertain_mean"
support = { kind = "box", lower = [0.0], upper = [1.0] }
mean_lower = [0.3]
mean_upper = [0.7]
center = [0.5]
theta = 0.2
norm = "l1"

[[ambiguity]]
name = "tv"
builder = "total_variation"
samples = [[0.2], [0.8]]
theta = 0.3

[[ambiguity]]
name = "wass"
builder = "wasserstein"
samples = [[0.4]]
theta = 0.1
support = { kind = "box", lower = [0.0], upper = [1.0] }
metric = "linf"

[[ambiguity]]
name = "hybrid"
builder = "wasserstein_mad"
samples = [[0.4], [0.6]]
theta = 0.1
support = { kind = "box", lower = [0.0], upper = [1.0] }
metric = "l1"
mean_lower = [0.2]
mean_upper = [0.8]
mad = 0.3

[[ambiguity]]
name = "mix"
builder = "mixture"
weights = { kind = "polyhedron", dim = 2, eq = [[1.0, 1.0, 1.0]], ineq = [[-1.0, 0.0, -0.2], [0.0, -1.0, -0.2]] }
components = [
  { support = { kind = "box", lower = [0.0], upper = [0.5] } },
  { support = { kind = "box", lower = [0.5], upper = [1.0] }, mean_equality = true, moment_set = { kind = "box", lower = [0.6], upper = [0.9] } },
]

[[state]]
name = "support"
successors = ["support"]
ambiguity = "support"
factor_map = { actions = 1, p = [[0.0]], p0 = [1.0], r = [[1.0]] }

[[state]]
name = "mean"
successors = ["mean"]
ambiguity = "mean"
factor_map = { actions = 1, p = [[0.0]], p0 = [1.0], r = [[1.0]] }

[[state]]
name = "tv"
successors = ["tv"]
ambiguity = "tv"
factor_map = { actions = 1, p = [[0.0]], p0 = [1.0], r = [[1.0]] }

[[state]]
name = "wass"
successors = ["wass"]
ambiguity = "wass"
factor_map = { actions = 1, p = [[0.0]], p0 = [1.0], r = [[1.0]] }

[[state]]
name = "hybrid"
successors = ["hybrid"]
ambiguity = "hybrid"
factor_map = { actions = 1, p = [[0.0]], p0 = [1.0], r = [[1.0]] }

[[state]]
name = "mix"
successors = ["mix"]
ambiguity = "mix"
factor_map = { actions = 1, p = [[0.0]], p0 = [1.0], r = [[1.0]] }
"#;

#[test]
fn every_builder_parses_solves_and_round_trips() {
    let file = ModelFile::parse(ALL_BUILDERS).unwrap();
    assert_eq!(ModelFile::parse(&file.to_toml().unwrap()).unwrap(), file);
    let model = file.build().unwrap();
    assert!(model.validate().all_passed(), "{}", model.validate());
    let sol = value_iteration(&model, 1e-9, &[0.0; 6], &SolveOptions::default()).unwrap();
    // worst-case means: 0, 0.3, 0.65*0.2 + 0.35*0.8, 0.3, 0.5 - 0.1, 0.2*0.6
    let expected = [0.0, 0.6, 0.82, 0.6, 0.8, 0.24];
    for ((s, v), e) in model.states().iter().zip(&sol.values).zip(expected) {
        assert!((v - e).abs() < 1e-6, "{}: {v} vs {e}", s.name);
    }
}

#[test]
fn shipped_models_round_trip() {
    for name in ["two_state.toml", "two_state_infinite.toml", "bad_weights.toml", "bad_rows.toml", "empty_ambiguity.toml"] {
        let file = load(name);
        assert_eq!(ModelFile::parse(&file.to_toml().unwrap()).unwrap(), file, "{name}");
        file.build().unwrap();
    }
}

#[test]
fn round_trip_preserves_the_value() {
    for name in ["two_state.toml", "two_state_infinite.toml"] {
        let file = load(name);
        let again = ModelFile::parse(&file.to_toml().unwrap()).unwrap();
        let solve = |f: &ModelFile| {
            let m = f.build().unwrap();
            solve_values(&m)[m.initial_state()]
        };
        assert_eq!(solve(&file), solve(&again), "{name}");
    }
}

fn solve_values(model: &drmdp::dp::DrMdpModel) -> Vec<f64> {
    let opts = SolveOptions::default();
    match model.discount() {
        Some(_) => value_iteration(model, 1e-8, &vec![0.0; model.states().len()], &opts).unwrap().values,
        None => backward_induction(model, &opts).unwrap().values,
    }
}

#[test]
fn two_state_value_by_hand() {
    // pi = (1/2, 1/2) makes the reward 1/4 whatever xi is
    let model = load("two_state.toml").build().unwrap();
    let sol = backward_induction(&model, &SolveOptions::default()).unwrap();
    assert!((sol.values[0] - 1.25).abs() < 1e-9);
    assert!((sol.policy.dists[0][0] - 0.5).abs() < 1e-9);
    assert!(saddle_residual(&model, &sol).unwrap() < 1e-9);
    assert_eq!(values_csv(&model, &sol.values).lines().next(), Some("state,value"));
    assert_eq!(policy_csv(&model, &sol).lines().count(), 1 + 2);
}

#[test]
fn discounted_two_state_matches_closed_form() {
    let model = load("two_state_infinite.toml").build().unwrap();
    let sol = value_iteration(&model, 1e-9, &[0.0, 0.0], &SolveOptions::default()).unwrap();
    assert!((sol.values[0] - 1.135 / 0.082).abs() < 1e-6, "{}", sol.values[0]);
}

#[test]
fn counterexamples_name_their_failed_checks() {
    for (name, check) in [
        ("bad_weights.toml", "weights strictly interior"),
        ("bad_rows.toml", "transition rows valid"),
        ("empty_ambiguity.toml", "ambiguity set nonempty"),
    ] {
        let report = load(name).build().unwrap().validate();
        let failed: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        assert!(failed.iter().any(|f| f.contains(check)), "{name}: {failed:?}");
    }
}

#[test]
fn version_and_syntax_errors() {
    let text = std::fs::read_to_string(model_path("two_state.toml")).unwrap();
    let err = ModelFile::parse(&text.replace("format_version = 1", "format_version = 2")).unwrap_err();
    assert!(matches!(err, IoError::Version { found: 2 }));
    let err = ModelFile::parse(&text.replace("stages = [", "stages = [[")).unwrap_err();
    assert!(matches!(err, IoError::Parse(_)));
    assert!(err.to_string().contains("line"), "{err}");
}

//! Acceptance suite: one test per criterion, each printing a single
//! `[PASS]`/`[FAIL]` line (written straight to stderr so it survives output
//! capture) before asserting.

mod common;

use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use drmdp::dp::*;
use drmdp::lp::{certificate_residuals, DenseSimplex, LinearProgram, LpBackend, LpStatus, RowKind, Sense};
use drmdp::newsvendor::*;
use drmdp::reformulation::{oracle_worst_case, worst_case_expectation};
use rand::Rng;

fn report(id: u32, title: &str, passed: bool, detail: &str, elapsed: Duration) {
    let tag = if passed { "PASS" } else { "FAIL" };
    let line = format!("[{tag}] criterion {id} ({title}): {detail} [{:.1}s]\n", elapsed.as_secs_f64());
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn within_budget(start: Instant, limit_s: u64) -> bool {
    start.elapsed() <= Duration::from_secs(limit_s)
}

/// The fixed newsvendor training set of criteria 1 and 7.
fn fixed_training_set() -> (NewsvendorModel, Vec<Vec<f64>>) {
    let cfg = NewsvendorConfig::default();
    let mut r = rng(5);
    let samples = sample_training_set(&cfg.demand_probs, 5, SamplingScheme::EmpiricalFrequency { draws: 20 }, &mut r);
    (NewsvendorModel::new(cfg).unwrap(), samples)
}

#[test]
fn criterion_1_wasserstein_limits() {
    let start = Instant::now();
    let (nv, samples) = fixed_training_set();
    let opts = SolveOptions::default();
    let v0 = solve_for_samples(&nv, &samples, 0.0, &opts).unwrap().values[0];
    let v2 = solve_for_samples(&nv, &samples, 2.0, &opts).unwrap().values[0];

    // empirical MDP: classical DP at the sample-average distribution
    let model = nv.with_ambiguity(Arc::new(wasserstein_ambiguity(&samples, 0.0, drmdp::ambiguity::Metric::L1).unwrap())).unwrap();
    let d = samples[0].len();
    let mean: Vec<f64> = (0..d).map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / samples.len() as f64).collect();
    let xi: Vec<Option<Vec<f64>>> = model.states().iter().map(|s| s.decision.as_ref().map(|_| mean.clone())).collect();
    let empirical = classical_optimal_values(&model, &nominal_mdp(&model, &xi).unwrap()).unwrap()[0];

    let robust_model = nv.with_ambiguity(Arc::new(support_only_ambiguity(d).unwrap())).unwrap();
    let robust = backward_induction(&robust_model, &opts).unwrap().values[0];

    let (g0, g2) = ((v0 - empirical).abs(), (v2 - robust).abs());
    let passed = g0 <= 1e-6 && g2 <= 1e-6 && within_budget(start, 30);
    report(
        1,
        "Wasserstein limit identities",
        passed,
        &format!("|v(0) - empirical DP| = {g0:.2e}, |v(2) - support-only| = {g2:.2e} (tol 1e-6)"),
        start.elapsed(),
    );
    assert!(passed);
}

#[test]
fn criterion_2_saddle_point() {
    let start = Instant::now();
    let mut r = rng(2);
    let opts = SolveOptions::default();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let model = random_staged_model(&mut r, &ALL_KINDS);
        assert!(model.validate().all_passed(), "{}", model.validate());
        let sol = backward_induction(&model, &opts).unwrap();
        worst = worst.max(saddle_residual(&model, &sol).unwrap());
    }
    let passed = worst <= 1e-5 && within_budget(start, 120);
    report(2, "saddle point", passed, &format!("max residual over 20 models {worst:.2e} (tol 1e-5)"), start.elapsed());
    assert!(passed);
}

#[test]
fn criterion_3_reformulation_vs_oracle() {
    let start = Instant::now();
    let mut r = rng(3);
    let backend = DenseSimplex::default();
    let mut worst_ratio: f64 = 0.0;
    let mut worst_exact: f64 = 0.0;
    let mut below = 0.0f64;
    for i in 0..20 {
        let d = r.gen_range(1..=3);
        let kind = ORACLE_KINDS[i % ORACLE_KINDS.len()];
        let amb = random_ambiguity(&mut r, d, kind);
        let na = r.gen_range(2..=3);
        let obj = random_objective(&mut r, d, na);
        let pi = random_policy(&mut r, na);
        let wc = worst_case_expectation(&obj, &amb, &pi, &backend).unwrap().value;
        let oracle = oracle_worst_case(&obj, &amb, &pi, GRID, &backend).unwrap();
        let gap = (wc - oracle).abs();
        // the grid restricts the adversary, so it can only do worse
        below = below.max(wc - oracle);
        if amb.supports().iter().all(|s| s.is_singleton(1e-12).unwrap()) {
            worst_exact = worst_exact.max(gap);
        } else {
            let lipschitz = obj.coef(&pi).iter().map(|c| c * c).sum::<f64>().sqrt();
            let bound = lipschitz * GRID * (d as f64).sqrt();
            worst_ratio = worst_ratio.max(gap / (bound + 1e-12));
        }
    }
    let passed = worst_ratio <= 1.0 && worst_exact <= 1e-7 && below <= 1e-7 && within_budget(start, 120);
    report(
        3,
        "reformulation vs grid oracle",
        passed,
        &format!(
            "max gap / Lipschitz bound {worst_ratio:.3}, max gap on point supports {worst_exact:.2e}, oracle undershoot {below:.2e}"
        ),
        start.elapsed(),
    );
    assert!(passed);
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn criterion_4_contraction() {
    let start = Instant::now();
    let opts = SolveOptions::default();
    let mut worst_excess = f64::NEG_INFINITY;
    for (k, gamma) in [0.5, 0.9].into_iter().enumerate() {
        let mut r = rng(40 + k as u64);
        let model = random_infinite_model(&mut r, 6, gamma, &ALL_KINDS);
        for _ in 0..100 {
            let v1: Vec<f64> = (0..6).map(|_| r.gen_range(-10.0..10.0)).collect();
            let v2: Vec<f64> = (0..6).map(|_| r.gen_range(-10.0..10.0)).collect();
            let l1 = bellman_operator(&model, &v1, &opts).unwrap().values;
            let l2 = bellman_operator(&model, &v2, &opts).unwrap().values;
            worst_excess = worst_excess.max(sup(&l1, &l2) - gamma * sup(&v1, &v2));
        }
    }
    let passed = worst_excess <= 1e-9 && within_budget(start, 60);
    report(
        4,
        "contraction",
        passed,
        &format!("max of |Lv1 - Lv2| - gamma |v1 - v2| over 200 pairs: {worst_excess:.2e} (tol 1e-9)"),
        start.elapsed(),
    );
    assert!(passed);
}

#[test]
fn criterion_5_value_iteration_fixed_point() {
    let start = Instant::now();
    let opts = SolveOptions::default();
    let eps = 1e-6;
    let mut r = rng(5);
    let (mut worst_gap, mut worst_res, mut coarse_res): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in 0..5 {
        let gamma = if i % 2 == 0 { 0.9 } else { 0.5 };
        let n = r.gen_range(3..=5);
        let model = random_infinite_model(&mut r, n, gamma, &ALL_KINDS);
        let zero = vec![0.0; n];
        let far: Vec<f64> = (0..n).map(|_| r.gen_range(-20.0..20.0)).collect();
        let a = value_iteration(&model, eps, &zero, &opts).unwrap();
        let b = value_iteration(&model, eps, &far, &opts).unwrap();
        worst_gap = worst_gap.max(sup(&a.values, &b.values));
        let again = bellman_operator(&model, &a.values, &opts).unwrap();
        coarse_res = coarse_res.max(sup(&again.values, &a.values));
        // the 1e-8 residual needs a stopping rule that implies it:
        // |Lv - v| <= eps' (1 - gamma) / 2 <= 1e-8
        let fine = value_iteration(&model, 2e-8 / (1.0 - gamma), &a.values, &opts).unwrap();
        let again = bellman_operator(&model, &fine.values, &opts).unwrap();
        worst_res = worst_res.max(sup(&again.values, &fine.values));
    }
    let passed = worst_gap <= 2.0 * eps && worst_res <= 1e-8 && within_budget(start, 120);
    report(
        5,
        "value-iteration fixed point",
        passed,
        &format!(
            "max init gap {worst_gap:.2e} (tol 2e-6), re-backup residual {worst_res:.2e} (tol 1e-8; {coarse_res:.2e} at eps = 1e-6)"
        ),
        start.elapsed(),
    );
    assert!(passed);
}

#[test]
fn criterion_6_newsvendor_trends() {
    let start = Instant::now();
    let cfg = NewsvendorConfig {
        repetitions: 200,
        test_runs: 1000,
        train_sizes: vec![5, 15],
        radii: vec![0.0, 0.1, 0.2, 0.5, 1.0, 2.0],
        ..NewsvendorConfig::default()
    };
    let table = run_experiment(&cfg, &SolveOptions::default()).unwrap();
    let trends = trend_checks(&table, &cfg).unwrap();
    let passed = table.failures.is_empty()
        && trends.cost_increase_passed
        && trends.std_decrease_passed
        && within_budget(start, 20 * 60);
    report(
        6,
        "newsvendor trends at desk scale",
        passed,
        &format!(
            "(a) t = {:.2} (need > 2); (b) std at theta 0: N=5 {:.4}, N=15 {:.4}; {} failed repetitions",
            trends.cost_increase_t,
            trends.std_small,
            trends.std_large,
            table.failures.len()
        ),
        start.elapsed(),
    );
    assert!(passed);
}

#[test]
fn criterion_7_monotone_in_radius() {
    let start = Instant::now();
    let (nv, samples) = fixed_training_set();
    let opts = SolveOptions::default();
    let grid = [0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0];
    let values: Vec<f64> = grid.iter().map(|&t| solve_for_samples(&nv, &samples, t, &opts).unwrap().values[0]).collect();
    let violation = values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let passed = violation <= 1e-7;
    report(
        7,
        "monotone in ambiguity size",
        passed,
        &format!("v over theta grid {values:.4?}; max increase {violation:.2e} (tol 1e-7)"),
        start.elapsed(),
    );
    assert!(passed);
}

/// Brute-force optimum over every basic solution of a bounded LP.
fn vertex_optimum(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    // candidate tight constraints: rows and finite bounds, as (coef, rhs)
    let mut cands: Vec<(Vec<f64>, f64)> = Vec::new();
    for row in &lp.rows {
        let mut a = vec![0.0; n];
        for &(j, v) in &row.coefs {
            a[j] += v;
        }
        cands.push((a, row.rhs));
    }
    for j in 0..n {
        for b in [lp.lower[j], lp.upper[j]] {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            cands.push((a, b));
        }
    }
    let feasible = |x: &[f64]| {
        let tol = 1e-9;
        (0..n).all(|j| x[j] >= lp.lower[j] - tol && x[j] <= lp.upper[j] + tol)
            && lp.rows.iter().all(|r| {
                let v = r.activity(x);
                match r.kind {
                    RowKind::Le => v <= r.rhs + tol,
                    RowKind::Ge => v >= r.rhs - tol,
                    RowKind::Eq => (v - r.rhs).abs() <= tol,
                }
            })
    };
    let mut best: Option<f64> = None;
    let mut pick = vec![0usize; n];
    fn solve(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &k| a[i][c].abs().partial_cmp(&a[k][c].abs()).unwrap())?;
            if a[p][c].abs() < 1e-10 {
                return None;
            }
            a.swap(c, p);
            b.swap(c, p);
            for i in 0..n {
                if i != c {
                    let f = a[i][c] / a[c][c];
                    for k in c..n {
                        a[i][k] -= f * a[c][k];
                    }
                    b[i] -= f * b[c];
                }
            }
        }
        Some((0..n).map(|i| b[i] / a[i][i]).collect())
    }
    fn rec(
        start: usize,
        depth: usize,
        pick: &mut Vec<usize>,
        cands: &[(Vec<f64>, f64)],
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if depth == pick.len() {
            visit(pick);
            return;
        }
        for i in start..cands.len() {
            pick[depth] = i;
            rec(i + 1, depth + 1, pick, cands, visit);
        }
    }
    let mut visit = |idx: &[usize]| {
        let mut a: Vec<Vec<f64>> = idx.iter().map(|&i| cands[i].0.clone()).collect();
        let mut b: Vec<f64> = idx.iter().map(|&i| cands[i].1).collect();
        if let Some(x) = solve(&mut a, &mut b) {
            if feasible(&x) {
                let v = lp.objective_at(&x);
                let better = match (best, lp.sense) {
                    (None, _) => true,
                    (Some(bv), Sense::Maximize) => v > bv,
                    (Some(bv), Sense::Minimize) => v < bv,
                };
                if better {
                    best = Some(v);
                }
            }
        }
    };
    rec(0, 0, &mut pick, &cands, &mut visit);
    best
}

#[test]
fn criterion_8_lp_kernel() {
    let start = Instant::now();
    let mut r = rng(8);
    let backend = DenseSimplex::default();
    let (mut worst_gap, mut worst_cert): (f64, f64) = (0.0, 0.0);
    let (mut mismatched, mut infeasible) = (0, 0);
    for _ in 0..500 {
        let n = r.gen_range(1..=6);
        let sense = if r.gen_bool(0.5) { Sense::Maximize } else { Sense::Minimize };
        let mut lp = LinearProgram::new(sense);
        let x0: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        for _ in 0..n {
            let lo = r.gen_range(-2.0..-1.0);
            let hi = r.gen_range(1.0..3.0);
            lp.add_var(lo, hi, r.gen_range(-2.0..2.0));
        }
        // most instances contain x0; some get arbitrary right-hand sides
        let honest = r.gen_bool(0.85);
        for _ in 0..r.gen_range(0..=4) {
            let coefs: Vec<(usize, f64)> = (0..n).map(|j| (j, r.gen_range(-2.0..2.0))).collect();
            let ax: f64 = coefs.iter().map(|&(j, a)| a * x0[j]).sum();
            let (kind, rhs) = match r.gen_range(0..10) {
                0 => (RowKind::Eq, ax),
                1..=3 => (RowKind::Ge, ax - r.gen_range(0.0..1.0)),
                _ => (RowKind::Le, ax + r.gen_range(0.0..1.0)),
            };
            let rhs = if honest { rhs } else { r.gen_range(-4.0..4.0) };
            lp.add_row(coefs, kind, rhs);
        }
        let sol = backend.solve(&lp);
        match (vertex_optimum(&lp), sol.status) {
            (Some(v), LpStatus::Optimal) => {
                worst_gap = worst_gap.max((v - sol.objective).abs());
                worst_cert = worst_cert.max(certificate_residuals(&lp, &sol).max());
            }
            (None, LpStatus::Infeasible) => infeasible += 1,
            _ => mismatched += 1,
        }
    }
    let passed = mismatched == 0 && worst_gap <= 1e-7 && worst_cert <= 1e-8;
    report(
        8,
        "LP kernel soundness",
        passed,
        &format!(
            "500 LPs ({infeasible} infeasible): max gap to vertex enumeration {worst_gap:.2e} (tol 1e-7), \
             max certificate residual {worst_cert:.2e} (tol 1e-8), {mismatched} status mismatches"
        ),
        start.elapsed(),
    );
    assert!(passed);
}

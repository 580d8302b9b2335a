//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use drmdp::ambiguity::*;
use drmdp::dp::{Decision, DrMdpModel, Horizon, State};
use drmdp::geometry::PolyhedralSet;
use drmdp::reformulation::{assemble_stage_objective, StageObjective};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const GRID: f64 = 0.05;

/// Multiple of the grid step in `[lo, hi]` (both on the grid).
pub fn grid_value(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let (a, b) = ((lo / GRID).round() as i64, (hi / GRID).round() as i64);
    rng.gen_range(a..=b) as f64 * GRID
}

pub fn grid_point(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter().zip(hi).map(|(&l, &h)| grid_value(rng, l, h)).collect()
}

pub fn unit_box(d: usize) -> PolyhedralSet {
    PolyhedralSet::boxed(&vec![0.0; d], &vec![1.0; d]).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    SupportOnly,
    UncertainMean,
    TotalVariation,
    Wasserstein,
    Hybrid,
    Mixture,
}

pub const ALL_KINDS: [Kind; 6] =
    [Kind::SupportOnly, Kind::UncertainMean, Kind::TotalVariation, Kind::Wasserstein, Kind::Hybrid, Kind::Mixture];

/// Kinds the grid oracle accepts.
pub const ORACLE_KINDS: [Kind; 5] =
    [Kind::SupportOnly, Kind::UncertainMean, Kind::TotalVariation, Kind::Wasserstein, Kind::Mixture];

/// A random ambiguity set of the given kind whose supports lie in the unit
/// box. All data sit on the 0.05 grid and norms are 1-norms, so
/// grid-restricted oracles are exact up to their discretization bound.
pub fn random_ambiguity(rng: &mut ChaCha8Rng, d: usize, kind: Kind) -> LiftedAmbiguitySet {
    let zeros = vec![0.0; d];
    let ones = vec![1.0; d];
    match kind {
        Kind::SupportOnly => {
            let lo = grid_point(rng, &zeros, &vec![0.4; d]);
            let hi: Vec<f64> = lo.iter().map(|&l| l + grid_value(rng, 0.1, 0.6)).collect();
            build_support_only(PolyhedralSet::boxed(&lo, &hi).unwrap()).unwrap()
        }
        Kind::UncertainMean => {
            let mu_lo = grid_point(rng, &vec![0.1; d], &vec![0.4; d]);
            let mu_hi: Vec<f64> = mu_lo.iter().map(|&l| l + grid_value(rng, 0.1, 0.4)).collect();
            let mu0: Vec<f64> = mu_lo.iter().zip(&mu_hi).map(|(l, h)| ((l + h) / 2.0 / GRID).round() * GRID).collect();
            let theta = grid_value(rng, 0.05, 0.3);
            let norm = if rng.gen_bool(0.5) { Metric::L1 } else { Metric::LInf };
            build_uncertain_mean(unit_box(d), &mu_lo, &mu_hi, &mu0, theta, norm).unwrap()
        }
        Kind::TotalVariation => {
            let n = rng.gen_range(2..=4);
            let samples: Vec<Vec<f64>> = (0..n).map(|_| grid_point(rng, &zeros, &ones)).collect();
            build_phi_divergence_tv(&samples, grid_value(rng, 0.05, 0.5)).unwrap()
        }
        Kind::Wasserstein => {
            let n = rng.gen_range(1..=3);
            let samples: Vec<Vec<f64>> = (0..n).map(|_| grid_point(rng, &zeros, &ones)).collect();
            build_wasserstein(&samples, grid_value(rng, 0.0, 0.5), unit_box(d), Metric::L1).unwrap()
        }
        Kind::Hybrid => {
            // mean box and deviation bound admit the empirical distribution
            let n = rng.gen_range(1..=3);
            let samples: Vec<Vec<f64>> = (0..n).map(|_| grid_point(rng, &zeros, &ones)).collect();
            let mean: Vec<f64> = (0..d).map(|i| samples.iter().map(|x| x[i]).sum::<f64>() / n as f64).collect();
            let mu_lo: Vec<f64> = mean.iter().map(|&m| m.min(0.2)).collect();
            let mu_hi: Vec<f64> = mean.iter().map(|&m| m.max(0.8)).collect();
            let total: f64 = mean.iter().sum();
            let mad = samples.iter().map(|x| (x.iter().sum::<f64>() - total).abs()).sum::<f64>() / n as f64;
            let metric = if rng.gen_bool(0.5) { Metric::L1 } else { Metric::LInf };
            build_hybrid_wasserstein_mad(
                &samples,
                grid_value(rng, 0.05, 0.5),
                unit_box(d),
                metric,
                &mu_lo,
                &mu_hi,
                mad + grid_value(rng, 0.05, 0.3),
            )
            .unwrap()
        }
        Kind::Mixture => {
            let half = vec![0.5; d];
            let mut second = MixtureComponent::support_only(PolyhedralSet::boxed(&half, &ones).unwrap());
            second.mean_equality = true;
            let m_lo = grid_point(rng, &vec![0.55; d], &vec![0.7; d]);
            let m_hi: Vec<f64> = m_lo.iter().map(|&l| l + 0.2).collect();
            second.moment_set = Some(PolyhedralSet::boxed(&m_lo, &m_hi).unwrap());
            let first = MixtureComponent::support_only(PolyhedralSet::boxed(&zeros, &half).unwrap());
            let floor = grid_value(rng, 0.1, 0.4);
            let weights = PolyhedralSet::simplex(2)
                .with_ineq(vec![-1.0, 0.0], -floor)
                .unwrap()
                .with_ineq(vec![0.0, -1.0], -floor)
                .unwrap();
            build_mixture(vec![first, second], weights).unwrap()
        }
    }
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut q: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = q.iter().sum();
    q.iter_mut().for_each(|x| *x /= s);
    q
}

/// Factor map whose rows are `q0 + sum_k xi_k (q_k - q0) / d`: a convex
/// combination of base distributions for every `xi` in the unit box.
pub fn random_factor_map(rng: &mut ChaCha8Rng, d: usize, na: usize, nn: usize) -> FactorMap {
    let mut p = vec![vec![0.0; d]; na * nn];
    let mut p0 = vec![0.0; na * nn];
    for a in 0..na {
        let q: Vec<Vec<f64>> = (0..=d).map(|_| random_distribution(rng, nn)).collect();
        for s in 0..nn {
            p0[a * nn + s] = q[0][s];
            for k in 0..d {
                p[a * nn + s][k] = (q[k + 1][s] - q[0][s]) / d as f64;
            }
        }
    }
    let r = (0..na).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let r0 = (0..na).map(|_| rng.gen_range(-1.0..1.0)).collect();
    FactorMap::new(d, na, nn, p, p0, r, r0).unwrap()
}

pub fn random_objective(rng: &mut ChaCha8Rng, d: usize, na: usize) -> StageObjective {
    let nn = 3;
    let fm = random_factor_map(rng, d, na, nn);
    let v: Vec<f64> = (0..nn).map(|_| rng.gen_range(-3.0..3.0)).collect();
    assemble_stage_objective(&v, &fm, 1.0).unwrap()
}

pub fn random_policy(rng: &mut ChaCha8Rng, na: usize) -> Vec<f64> {
    random_distribution(rng, na)
}

/// Staged model: one initial state, then 2..=4 states per stage, up to 3
/// actions and factor dimension up to 4, with a random ambiguity kind per
/// stage.
pub fn random_staged_model(rng: &mut ChaCha8Rng, kinds: &[Kind]) -> DrMdpModel {
    let stages_n = rng.gen_range(3..=4);
    let sizes: Vec<usize> = (0..stages_n).map(|t| if t == 0 { 1 } else { rng.gen_range(2..=4) }).collect();
    let mut ids = Vec::new();
    let mut next = 0;
    for &n in &sizes {
        ids.push((next..next + n).collect::<Vec<_>>());
        next += n;
    }
    let d = rng.gen_range(1..=4);
    let mut states = Vec::new();
    let mut terminal = Vec::new();
    for t in 0..stages_n {
        let kind = kinds[rng.gen_range(0..kinds.len())];
        let amb = Arc::new(random_ambiguity(rng, d, kind));
        for (k, _) in ids[t].iter().enumerate() {
            let decision = (t + 1 < stages_n).then(|| {
                let na = rng.gen_range(1..=3);
                Decision {
                    successors: ids[t + 1].clone(),
                    factor_map: random_factor_map(rng, d, na, ids[t + 1].len()),
                    ambiguity: amb.clone(),
                }
            });
            terminal.push(if t + 1 == stages_n { rng.gen_range(-2.0..2.0) } else { 0.0 });
            states.push(State { name: format!("t{t}s{k}"), decision });
        }
    }
    DrMdpModel::new(states, Horizon::Finite { stages: ids }, Some(terminal)).unwrap()
}

/// Discounted model on `n` states with a random ambiguity kind per state.
pub fn random_infinite_model(rng: &mut ChaCha8Rng, n: usize, discount: f64, kinds: &[Kind]) -> DrMdpModel {
    let d = rng.gen_range(1..=3);
    let states = (0..n)
        .map(|s| {
            let kind = kinds[rng.gen_range(0..kinds.len())];
            let amb = Arc::new(random_ambiguity(rng, d, kind));
            let na = rng.gen_range(1..=3);
            State {
                name: format!("s{s}"),
                decision: Some(Decision {
                    successors: (0..n).collect(),
                    factor_map: random_factor_map(rng, d, na, n),
                    ambiguity: amb,
                }),
            }
        })
        .collect();
    DrMdpModel::new(states, Horizon::Infinite { discount }, None).unwrap()
}

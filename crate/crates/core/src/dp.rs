//! Backward induction and value iteration over the robust Bellman operator.

use std::sync::Arc;

use crate::ambiguity::{validate_ambiguity, validate_factor_map, FactorMap, LiftedAmbiguitySet, ValidationReport};
use crate::lp::{DenseSimplex, LpBackend};
use crate::parallel::{par_map, ExecutionMode};
use crate::reformulation::{
    assemble_stage_objective, solve_srobust, worst_case_expectation, Certificate, ReformulationError, StageDuals,
};

/// Iteration cap of [`value_iteration`] and infinite-horizon evaluation.
pub const MAX_VALUE_ITERATIONS: usize = 100_000;
const POLICY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DpError {
    #[error("invalid model: {0}")]
    Structure(String),
    #[error("state {state}: {source}")]
    Solve {
        state: String,
        #[source]
        source: ReformulationError,
    },
    #[error("value iteration did not converge in {iterations} iterations (last change {last_change:.3e})")]
    NotConverged { iterations: usize, last_change: f64 },
    #[error("operation needs a {0} model")]
    WrongHorizon(&'static str),
}

/// Dynamics and ambiguity of a state that takes decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    /// states addressed by the factor map's transition columns
    pub successors: Vec<usize>,
    pub factor_map: FactorMap,
    pub ambiguity: Arc<LiftedAmbiguitySet>,
}

impl Decision {
    pub fn num_actions(&self) -> usize {
        self.factor_map.num_actions()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub name: String,
    /// `None` for terminal states
    pub decision: Option<Decision>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Horizon {
    /// Stage partition; the first stage holds only the initial state and
    /// states of the last stage are terminal.
    Finite { stages: Vec<Vec<usize>> },
    Infinite { discount: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrMdpModel {
    states: Vec<State>,
    horizon: Horizon,
    terminal: Vec<f64>,
}

impl DrMdpModel {
    /// `terminal` holds the values of last-stage states (ignored for the
    /// infinite horizon); `None` means zero.
    pub fn new(states: Vec<State>, horizon: Horizon, terminal: Option<Vec<f64>>) -> Result<Self, DpError> {
        let ns = states.len();
        if ns == 0 {
            return Err(DpError::Structure("no states".into()));
        }
        let terminal = terminal.unwrap_or_else(|| vec![0.0; ns]);
        if terminal.len() != ns || terminal.iter().any(|v| !v.is_finite()) {
            return Err(DpError::Structure("terminal values must be finite, one per state".into()));
        }
        let mut stage_of = vec![usize::MAX; ns];
        match &horizon {
            Horizon::Finite { stages } => {
                if stages.len() < 2 {
                    return Err(DpError::Structure("a finite horizon needs at least two stages".into()));
                }
                if stages[0].len() != 1 {
                    return Err(DpError::Structure("the first stage must contain exactly one state".into()));
                }
                for (t, stage) in stages.iter().enumerate() {
                    for &s in stage {
                        if s >= ns || stage_of[s] != usize::MAX {
                            return Err(DpError::Structure(format!("state {s} is out of range or in two stages")));
                        }
                        stage_of[s] = t;
                    }
                }
                if let Some(s) = stage_of.iter().position(|&t| t == usize::MAX) {
                    return Err(DpError::Structure(format!("state '{}' belongs to no stage", states[s].name)));
                }
            }
            Horizon::Infinite { discount } => {
                if !(*discount > 0.0 && *discount < 1.0) {
                    return Err(DpError::Structure(format!("discount must lie in (0, 1), got {discount}")));
                }
            }
        }
        let last = match &horizon {
            Horizon::Finite { stages } => stages.len() - 1,
            Horizon::Infinite { .. } => usize::MAX,
        };
        for (s, st) in states.iter().enumerate() {
            let needs = stage_of[s] != last;
            let Some(dec) = &st.decision else {
                if needs {
                    return Err(DpError::Structure(format!("state '{}' has no decision data", st.name)));
                }
                continue;
            };
            if !needs {
                continue;
            }
            let fm = &dec.factor_map;
            if fm.num_next() != dec.successors.len() {
                return Err(DpError::Structure(format!(
                    "state '{}': factor map addresses {} successors, {} listed",
                    st.name,
                    fm.num_next(),
                    dec.successors.len()
                )));
            }
            if fm.factor_dim() != dec.ambiguity.factor_dim() {
                return Err(DpError::Structure(format!(
                    "state '{}': factor map dimension {} differs from ambiguity dimension {}",
                    st.name,
                    fm.factor_dim(),
                    dec.ambiguity.factor_dim()
                )));
            }
            for &n in &dec.successors {
                let ok = n < ns && (last == usize::MAX || stage_of[n] == stage_of[s] + 1);
                if !ok {
                    return Err(DpError::Structure(format!(
                        "state '{}': successor {n} is not in the next stage",
                        st.name
                    )));
                }
            }
        }
        Ok(DrMdpModel { states, horizon, terminal })
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn horizon(&self) -> &Horizon {
        &self.horizon
    }

    pub fn terminal(&self) -> &[f64] {
        &self.terminal
    }

    /// The initial state (finite horizon) or state 0.
    pub fn initial_state(&self) -> usize {
        match &self.horizon {
            Horizon::Finite { stages } => stages[0][0],
            Horizon::Infinite { .. } => 0,
        }
    }

    pub fn discount(&self) -> Option<f64> {
        match self.horizon {
            Horizon::Infinite { discount } => Some(discount),
            Horizon::Finite { .. } => None,
        }
    }

    /// States that take decisions, in stage order for finite horizons.
    fn decision_stages(&self) -> Vec<Vec<usize>> {
        match &self.horizon {
            Horizon::Finite { stages } => stages[..stages.len() - 1].to_vec(),
            Horizon::Infinite { .. } => vec![(0..self.states.len()).collect()],
        }
    }

    fn decision(&self, s: usize) -> &Decision {
        self.states[s].decision.as_ref().expect("checked at construction")
    }

    /// Ambiguity and factor-map checks, each distinct ambiguity set once.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let mut seen_amb: Vec<*const LiftedAmbiguitySet> = Vec::new();
        let mut seen_fm: Vec<(*const LiftedAmbiguitySet, &FactorMap)> = Vec::new();
        for stage in self.decision_stages() {
            for s in stage {
                let dec = self.decision(s);
                let ptr = Arc::as_ptr(&dec.ambiguity);
                if !seen_amb.contains(&ptr) {
                    seen_amb.push(ptr);
                    report.extend(&format!("{}: ", self.states[s].name), validate_ambiguity(&dec.ambiguity));
                    let (ok, detail) = jointly_feasible(&dec.ambiguity);
                    report.push(format!("{}: ambiguity set nonempty", self.states[s].name), ok, detail);
                }
                if !seen_fm.iter().any(|(p, f)| *p == ptr && *f == &dec.factor_map) {
                    seen_fm.push((ptr, &dec.factor_map));
                    report.extend(
                        &format!("{}: ", self.states[s].name),
                        validate_factor_map(&dec.ambiguity, &dec.factor_map),
                    );
                }
            }
        }
        report
    }
}

/// Supports, moment sets and weights can each be nonempty while their
/// combination admits no distribution; probe with a zero objective.
fn jointly_feasible(amb: &LiftedAmbiguitySet) -> (bool, String) {
    let d = amb.factor_dim();
    let fm = FactorMap::new(d, 1, 1, vec![vec![0.0; d]], vec![1.0], vec![vec![0.0; d]], vec![0.0])
        .expect("constant single-state map");
    match assemble_stage_objective(&[0.0], &fm, 1.0).and_then(|obj| worst_case_expectation(&obj, amb, &[1.0], &DenseSimplex::default())) {
        Ok(_) => (true, String::new()),
        Err(e) => (false, format!("no distribution satisfies all constraints jointly ({e})")),
    }
}

/// Builds a staged model from a stationary description: stage 1 holds a
/// copy of `initial`, stages 2..=horizon hold copies of every state, and the
/// copies in the last stage are terminal with values `terminal`. Repeated
/// visits become distinct staged states.
pub fn staged_from_stationary(
    states: &[State],
    initial: usize,
    horizon: usize,
    terminal: &[f64],
) -> Result<DrMdpModel, DpError> {
    let ns = states.len();
    if horizon < 2 || initial >= ns || terminal.len() != ns {
        return Err(DpError::Structure("need horizon >= 2, a valid initial state and one terminal value per state".into()));
    }
    let index = |t: usize, s: usize| if t == 0 { 0 } else { 1 + (t - 1) * ns + s };
    let mut out = Vec::new();
    let mut stages = Vec::new();
    let mut term = Vec::new();
    for t in 0..horizon {
        let members: Vec<usize> = if t == 0 { vec![initial] } else { (0..ns).collect() };
        let mut ids = Vec::new();
        for &s in &members {
            let decision = if t + 1 < horizon {
                let Some(dec) = &states[s].decision else {
                    return Err(DpError::Structure(format!("state '{}' has no decision data", states[s].name)));
                };
                Some(Decision {
                    successors: dec.successors.iter().map(|&n| index(t + 1, n)).collect(),
                    ..dec.clone()
                })
            } else {
                None
            };
            ids.push(out.len());
            term.push(if t + 1 == horizon { terminal[s] } else { 0.0 });
            out.push(State { name: format!("{}@{}", states[s].name, t + 1), decision });
        }
        stages.push(ids);
    }
    DrMdpModel::new(out, Horizon::Finite { stages }, Some(term))
}

#[derive(Clone, Copy)]
pub struct SolveOptions<'a> {
    pub backend: &'a dyn LpBackend,
    pub mode: ExecutionMode,
}

static DEFAULT_BACKEND: DenseSimplex = DenseSimplex { max_iterations: None };

impl Default for SolveOptions<'static> {
    fn default() -> Self {
        SolveOptions { backend: &DEFAULT_BACKEND, mode: ExecutionMode::default() }
    }
}

impl<'a> SolveOptions<'a> {
    pub fn with_mode(mut self, mode: ExecutionMode) -> Self {
        self.mode = mode;
        self
    }
}

/// Per-state distributions over actions; empty for terminal states.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomizedPolicy {
    pub dists: Vec<Vec<f64>>,
}

impl RandomizedPolicy {
    /// Clamps tiny negatives and checks every distribution sums to one.
    pub fn is_valid(&self) -> bool {
        self.dists.iter().filter(|d| !d.is_empty()).all(|d| {
            d.iter().all(|&p| p >= -1e-12) && (d.iter().sum::<f64>() - 1.0).abs() <= POLICY_TOL
        })
    }

    /// Most likely action per state (`None` for terminal states).
    pub fn greedy(&self) -> Vec<Option<usize>> {
        self.dists
            .iter()
            .map(|d| {
                d.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                    .map(|(a, _)| a)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateReport {
    pub certificate: Certificate,
    pub duals: StageDuals,
    pub certificate_residual: f64,
    pub lp_iterations: usize,
}

/// Values, policy and per-state certificates of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct DpSolution {
    pub values: Vec<f64>,
    pub policy: RandomizedPolicy,
    pub reports: Vec<Option<StateReport>>,
    /// backups performed (stages or value-iteration sweeps)
    pub iterations: usize,
}

impl DpSolution {
    pub fn max_certificate_residual(&self) -> f64 {
        self.reports.iter().flatten().map(|r| r.certificate_residual).fold(0.0, f64::max)
    }
}

type Backup = (f64, Vec<f64>, StateReport);

fn backup(model: &DrMdpModel, s: usize, values: &[f64], continuation: f64, opts: &SolveOptions) -> Result<Backup, DpError> {
    let dec = model.decision(s);
    let v_next: Vec<f64> = dec.successors.iter().map(|&n| values[n]).collect();
    let ctx = |source| DpError::Solve { state: model.states[s].name.clone(), source };
    let obj = assemble_stage_objective(&v_next, &dec.factor_map, continuation).map_err(ctx)?;
    let sol = solve_srobust(&obj, &dec.ambiguity, opts.backend).map_err(ctx)?;
    let report = StateReport {
        certificate: sol.certificate,
        duals: sol.duals,
        certificate_residual: sol.certificate_residual,
        lp_iterations: sol.iterations,
    };
    Ok((sol.value, sol.policy, report))
}

/// Finite-horizon robust values, strategy and worst-case certificates.
pub fn backward_induction(model: &DrMdpModel, opts: &SolveOptions) -> Result<DpSolution, DpError> {
    let Horizon::Finite { stages } = &model.horizon else {
        return Err(DpError::WrongHorizon("finite-horizon"));
    };
    let ns = model.states.len();
    let mut values = model.terminal.clone();
    let mut dists = vec![Vec::new(); ns];
    let mut reports = vec![None; ns];
    for stage in stages[..stages.len() - 1].iter().rev() {
        let results = par_map(opts.mode, stage, |&s| backup(model, s, &values, 1.0, opts));
        for (&s, res) in stage.iter().zip(results) {
            let (v, pi, rep) = res?;
            values[s] = v;
            dists[s] = pi;
            reports[s] = Some(rep);
        }
    }
    Ok(DpSolution { values, policy: RandomizedPolicy { dists }, reports, iterations: stages.len() - 1 })
}

/// One application of the discounted robust Bellman operator.
pub fn bellman_operator(model: &DrMdpModel, v: &[f64], opts: &SolveOptions) -> Result<DpSolution, DpError> {
    let Some(gamma) = model.discount() else {
        return Err(DpError::WrongHorizon("infinite-horizon"));
    };
    if v.len() != model.states.len() {
        return Err(DpError::Structure(format!("value vector has {} entries for {} states", v.len(), model.states.len())));
    }
    let idx: Vec<usize> = (0..model.states.len()).collect();
    let results = par_map(opts.mode, &idx, |&s| backup(model, s, v, gamma, opts));
    let mut values = Vec::with_capacity(idx.len());
    let mut dists = Vec::with_capacity(idx.len());
    let mut reports = Vec::with_capacity(idx.len());
    for res in results {
        let (val, pi, rep) = res?;
        values.push(val);
        dists.push(pi);
        reports.push(Some(rep));
    }
    Ok(DpSolution { values, policy: RandomizedPolicy { dists }, reports, iterations: 1 })
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Iterates the Bellman operator until successive iterates differ by at
/// most `eps (1 - gamma) / (2 gamma)`, which puts the result within `eps` of
/// the fixed point.
pub fn value_iteration(model: &DrMdpModel, eps: f64, v0: &[f64], opts: &SolveOptions) -> Result<DpSolution, DpError> {
    let Some(gamma) = model.discount() else {
        return Err(DpError::WrongHorizon("infinite-horizon"));
    };
    if !(eps > 0.0) {
        return Err(DpError::Structure(format!("tolerance must be positive, got {eps}")));
    }
    let stop = eps * (1.0 - gamma) / (2.0 * gamma);
    let mut v = v0.to_vec();
    let mut last_change = f64::INFINITY;
    for it in 1..=MAX_VALUE_ITERATIONS {
        let mut next = bellman_operator(model, &v, opts)?;
        last_change = sup_dist(&next.values, &v);
        if last_change <= stop {
            next.iterations = it;
            return Ok(next);
        }
        v = next.values;
    }
    Err(DpError::NotConverged { iterations: MAX_VALUE_ITERATIONS, last_change })
}

fn check_policy(model: &DrMdpModel, policy: &RandomizedPolicy) -> Result<(), DpError> {
    if policy.dists.len() != model.states.len() {
        return Err(DpError::Structure("policy must cover every state".into()));
    }
    for stage in model.decision_stages() {
        for s in stage {
            let d = &policy.dists[s];
            if d.len() != model.decision(s).num_actions() || (d.iter().sum::<f64>() - 1.0).abs() > POLICY_TOL {
                return Err(DpError::Structure(format!(
                    "policy at state '{}' is not a distribution over its actions",
                    model.states[s].name
                )));
            }
        }
    }
    Ok(())
}

fn fixed_backup(model: &DrMdpModel, s: usize, pi: &[f64], values: &[f64], continuation: f64, opts: &SolveOptions) -> Result<f64, DpError> {
    let dec = model.decision(s);
    let v_next: Vec<f64> = dec.successors.iter().map(|&n| values[n]).collect();
    let ctx = |source| DpError::Solve { state: model.states[s].name.clone(), source };
    let obj = assemble_stage_objective(&v_next, &dec.factor_map, continuation).map_err(ctx)?;
    Ok(worst_case_expectation(&obj, &dec.ambiguity, pi, opts.backend).map_err(ctx)?.value)
}

/// Worst-case value of a fixed policy. For infinite horizons `eps` sets the
/// stopping rule as in [`value_iteration`]; it is ignored otherwise.
pub fn evaluate_policy_worst_case(
    model: &DrMdpModel,
    policy: &RandomizedPolicy,
    eps: f64,
    opts: &SolveOptions,
) -> Result<Vec<f64>, DpError> {
    check_policy(model, policy)?;
    match &model.horizon {
        Horizon::Finite { stages } => {
            let mut values = model.terminal.clone();
            for stage in stages[..stages.len() - 1].iter().rev() {
                let res = par_map(opts.mode, stage, |&s| fixed_backup(model, s, &policy.dists[s], &values, 1.0, opts));
                for (&s, r) in stage.iter().zip(res) {
                    values[s] = r?;
                }
            }
            Ok(values)
        }
        Horizon::Infinite { discount } => {
            let stop = eps * (1.0 - discount) / (2.0 * discount);
            let idx: Vec<usize> = (0..model.states.len()).collect();
            let mut v = vec![0.0; idx.len()];
            let mut last_change = f64::INFINITY;
            for _ in 0..MAX_VALUE_ITERATIONS {
                let next = par_map(opts.mode, &idx, |&s| fixed_backup(model, s, &policy.dists[s], &v, *discount, opts))
                    .into_iter()
                    .collect::<Result<Vec<_>, _>>()?;
                last_change = sup_dist(&next, &v);
                v = next;
                if last_change <= stop {
                    return Ok(v);
                }
            }
            Err(DpError::NotConverged { iterations: MAX_VALUE_ITERATIONS, last_change })
        }
    }
}

// ---------------------------------------------------------------------------
// classical (non-robust) dynamic programming on fixed parameters

/// Per-state transition rows and rewards at one fixed factor value.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalMdp {
    /// `rows[s][a]` over the state's successors; empty for terminal states
    pub rows: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<f64>>,
}

/// Evaluates every decision state's factor map at `xi[s]`.
pub fn nominal_mdp(model: &DrMdpModel, xi: &[Option<Vec<f64>>]) -> Result<NominalMdp, DpError> {
    let ns = model.states.len();
    let mut rows = vec![Vec::new(); ns];
    let mut rewards = vec![Vec::new(); ns];
    for stage in model.decision_stages() {
        for s in stage {
            let fm = &model.decision(s).factor_map;
            let Some(x) = xi.get(s).and_then(|x| x.as_ref()) else {
                return Err(DpError::Structure(format!("no factor value for state '{}'", model.states[s].name)));
            };
            rows[s] = (0..fm.num_actions()).map(|a| fm.transitions(a, x)).collect();
            rewards[s] = (0..fm.num_actions()).map(|a| fm.reward(a, x)).collect();
        }
    }
    Ok(NominalMdp { rows, rewards })
}

/// The nominal model at every state's certificate mean.
pub fn certificate_mdp(model: &DrMdpModel, sol: &DpSolution) -> Result<NominalMdp, DpError> {
    let xi: Vec<Option<Vec<f64>>> =
        sol.reports.iter().map(|r| r.as_ref().map(|r| r.certificate.mean_factor())).collect();
    nominal_mdp(model, &xi)
}

fn classical_backup(model: &DrMdpModel, mdp: &NominalMdp, s: usize, v: &[f64], w: f64, pi: Option<&[f64]>) -> f64 {
    let succ = &model.decision(s).successors;
    let q = |a: usize| mdp.rewards[s][a] + w * mdp.rows[s][a].iter().zip(succ).map(|(p, &n)| p * v[n]).sum::<f64>();
    match pi {
        Some(p) => p.iter().enumerate().map(|(a, pa)| pa * q(a)).sum(),
        None => (0..mdp.rewards[s].len()).map(q).fold(f64::NEG_INFINITY, f64::max),
    }
}

fn classical_run(model: &DrMdpModel, mdp: &NominalMdp, policy: Option<&RandomizedPolicy>) -> Result<Vec<f64>, DpError> {
    let pi_of = |s: usize| policy.map(|p| p.dists[s].as_slice());
    match &model.horizon {
        Horizon::Finite { stages } => {
            let mut v = model.terminal.clone();
            for stage in stages[..stages.len() - 1].iter().rev() {
                for &s in stage {
                    v[s] = classical_backup(model, mdp, s, &v, 1.0, pi_of(s));
                }
            }
            Ok(v)
        }
        Horizon::Infinite { discount } => {
            let ns = model.states.len();
            let mut v = vec![0.0; ns];
            for _ in 0..MAX_VALUE_ITERATIONS {
                let next: Vec<f64> = (0..ns).map(|s| classical_backup(model, mdp, s, &v, *discount, pi_of(s))).collect();
                let change = sup_dist(&next, &v);
                v = next;
                if change <= 1e-13 * (1.0 - discount) {
                    return Ok(v);
                }
            }
            Err(DpError::NotConverged { iterations: MAX_VALUE_ITERATIONS, last_change: f64::NAN })
        }
    }
}

/// Optimal values of the nominal model over Markov policies.
pub fn classical_optimal_values(model: &DrMdpModel, mdp: &NominalMdp) -> Result<Vec<f64>, DpError> {
    classical_run(model, mdp, None)
}

/// Values of a fixed policy in the nominal model.
pub fn classical_policy_values(model: &DrMdpModel, mdp: &NominalMdp, policy: &RandomizedPolicy) -> Result<Vec<f64>, DpError> {
    check_policy(model, policy)?;
    classical_run(model, mdp, Some(policy))
}

/// Gap between the nominal optimum under the worst-case certificates and
/// the robust value: at the initial state for finite horizons, the largest
/// over states otherwise. Zero at an exact saddle point.
pub fn saddle_residual(model: &DrMdpModel, sol: &DpSolution) -> Result<f64, DpError> {
    let mdp = certificate_mdp(model, sol)?;
    let v = classical_optimal_values(model, &mdp)?;
    Ok(match model.horizon {
        Horizon::Finite { .. } => {
            let s1 = model.initial_state();
            (v[s1] - sol.values[s1]).abs()
        }
        Horizon::Infinite { .. } => sup_dist(&v, &sol.values),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambiguity::build_support_only;
    use crate::geometry::PolyhedralSet;

    /// Two states, one action each, deterministic chain 0 -> 1 -> 1 with
    /// rewards 1 and 2, as a singleton-ambiguity infinite-horizon model.
    fn chain(discount: f64) -> DrMdpModel {
        let amb = Arc::new(build_support_only(PolyhedralSet::point(&[1.0])).unwrap());
        let mk = |p: [f64; 2], r: f64| {
            FactorMap::new(1, 1, 2, vec![vec![0.0], vec![0.0]], p.to_vec(), vec![vec![0.0]], vec![r]).unwrap()
        };
        let states = vec![
            State {
                name: "a".into(),
                decision: Some(Decision { successors: vec![0, 1], factor_map: mk([0.0, 1.0], 1.0), ambiguity: amb.clone() }),
            },
            State {
                name: "b".into(),
                decision: Some(Decision { successors: vec![0, 1], factor_map: mk([0.0, 1.0], 2.0), ambiguity: amb }),
            },
        ];
        DrMdpModel::new(states, Horizon::Infinite { discount }, None).unwrap()
    }

    #[test]
    fn closed_form_chain_fixed_point() {
        // v_b = 2 / (1 - g), v_a = 1 + g v_b
        let g = 0.5;
        let model = chain(g);
        let eps = 1e-8;
        let sol = value_iteration(&model, eps, &[0.0, 0.0], &SolveOptions::default()).unwrap();
        let vb = 2.0 / (1.0 - g);
        assert!((sol.values[1] - vb).abs() <= eps);
        assert!((sol.values[0] - (1.0 + g * vb)).abs() <= eps);
        assert!(sol.policy.is_valid());
    }

    #[test]
    fn staging_helper_replicates_states() {
        let model = chain(0.5);
        let staged = staged_from_stationary(model.states(), 0, 3, &[0.0, 10.0]).unwrap();
        // stage 1: a; stage 2: a, b; stage 3: a, b (terminal)
        assert_eq!(staged.states().len(), 5);
        let sol = backward_induction(&staged, &SolveOptions::default()).unwrap();
        // a@1 -> b@2 -> b@3 : 1 + 2 + 10
        assert!((sol.values[0] - 13.0).abs() < 1e-9);
        assert!(saddle_residual(&staged, &sol).unwrap() < 1e-9);
    }

    #[test]
    fn rejects_bad_structure() {
        let model = chain(0.5);
        assert!(DrMdpModel::new(model.states().to_vec(), Horizon::Infinite { discount: 1.0 }, None).is_err());
        let staged = DrMdpModel::new(model.states().to_vec(), Horizon::Finite { stages: vec![vec![0, 1]] }, None);
        assert!(staged.is_err());
    }
}

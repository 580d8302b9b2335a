//! Lifted ambiguity sets over a per-state factor vector.
//!
//! A set is described by scenarios `n` (each with a polyhedral support
//! `D_n`), condition groups `j` (a subset of scenarios, an optional
//! conditional-mean equality, a vector of piecewise-linear convex
//! `g`-functions bounded in conditional expectation, and a moment set `U_j`),
//! and a weight set `W` for the scenario probabilities.
//!
//! Moment-set coordinates are laid out as `[mu (factor_dim, only with a mean
//! equality)] [nu (M_j)] [extra]`. Extra coordinates are either auxiliary
//! lifting variables or parameters that the `g`-functions may read: a
//! `g`-function of dimension `factor_dim + extra` sees `(zeta, extra)`.

use std::fmt;

use crate::geometry::{Feasibility, GeometryError, PolyhedralSet, PwlConvexFn};
use crate::lp::Sense;

/// Lower bound placed on every scenario weight by the data-driven builders.
pub const WEIGHT_FLOOR: f64 = 1e-9;
/// Entry tolerance for transition rows produced by a [`FactorMap`].
pub const ROW_TOL: f64 = 1e-9;
const FIXED_WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AmbiguityError {
    #[error("{context}: {source}")]
    Geometry {
        context: String,
        #[source]
        source: GeometryError,
    },
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension { context: String, expected: usize, found: usize },
    #[error("invalid ambiguity set: {0}")]
    Invalid(String),
}

fn geo(context: impl Into<String>) -> impl FnOnce(GeometryError) -> AmbiguityError {
    let context = context.into();
    move |source| AmbiguityError::Geometry { context, source }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionGroup {
    pub members: Vec<usize>,
    pub mean_equality: bool,
    /// `g[k][i]`: output `i` of the function attached to `members[k]`.
    pub g: Vec<Vec<PwlConvexFn>>,
    pub moment_set: PolyhedralSet,
}

impl ConditionGroup {
    pub fn new(
        members: Vec<usize>,
        mean_equality: bool,
        g: Vec<Vec<PwlConvexFn>>,
        moment_set: PolyhedralSet,
    ) -> Self {
        ConditionGroup { members, mean_equality, g, moment_set }
    }

    /// `M_j`, the number of `g` outputs.
    pub fn outputs(&self) -> usize {
        self.g.first().map_or(0, Vec::len)
    }

    pub fn nu_offset(&self, factor_dim: usize) -> usize {
        if self.mean_equality {
            factor_dim
        } else {
            0
        }
    }

    pub fn extra_offset(&self, factor_dim: usize) -> usize {
        self.nu_offset(factor_dim) + self.outputs()
    }

    pub fn extra_dim(&self, factor_dim: usize) -> usize {
        self.moment_set.dim().saturating_sub(self.extra_offset(factor_dim))
    }

    fn reads_extra(&self, factor_dim: usize) -> bool {
        self.g.iter().flatten().any(|f| {
            f.blocks()
                .iter()
                .flatten()
                .any(|p| p.coef[factor_dim..].iter().any(|a| *a != 0.0))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedAmbiguitySet {
    factor_dim: usize,
    supports: Vec<PolyhedralSet>,
    groups: Vec<ConditionGroup>,
    weights: PolyhedralSet,
    fixed_weights: Option<Vec<f64>>,
}

impl LiftedAmbiguitySet {
    /// Checks structure and normalizes every `g`-function to the
    /// `factor_dim + extra` input dimension. `weights` may carry auxiliary
    /// coordinates after the first `supports.len()`.
    pub fn new(
        factor_dim: usize,
        supports: Vec<PolyhedralSet>,
        mut groups: Vec<ConditionGroup>,
        weights: PolyhedralSet,
    ) -> Result<Self, AmbiguityError> {
        let n = supports.len();
        if factor_dim == 0 || n == 0 {
            return Err(AmbiguityError::Invalid("need a positive factor dimension and at least one scenario".into()));
        }
        for (i, d) in supports.iter().enumerate() {
            if d.dim() != factor_dim {
                return Err(AmbiguityError::Dimension {
                    context: format!("support of scenario {i}"),
                    expected: factor_dim,
                    found: d.dim(),
                });
            }
        }
        if weights.dim() < n {
            return Err(AmbiguityError::Dimension {
                context: "weight set".into(),
                expected: n,
                found: weights.dim(),
            });
        }
        for (j, grp) in groups.iter_mut().enumerate() {
            if grp.members.is_empty() {
                return Err(AmbiguityError::Invalid(format!("group {j} has no scenarios")));
            }
            let mut sorted = grp.members.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != grp.members.len() || sorted.iter().any(|&m| m >= n) {
                return Err(AmbiguityError::Invalid(format!("group {j} has repeated or out-of-range scenarios")));
            }
            if !grp.g.is_empty() && grp.g.len() != grp.members.len() {
                return Err(AmbiguityError::Invalid(format!(
                    "group {j}: {} g-function lists for {} scenarios",
                    grp.g.len(),
                    grp.members.len()
                )));
            }
            if grp.g.is_empty() {
                grp.g = vec![Vec::new(); grp.members.len()];
            }
            let m = grp.outputs();
            if grp.g.iter().any(|gs| gs.len() != m) {
                return Err(AmbiguityError::Invalid(format!("group {j}: output dimension differs across scenarios")));
            }
            let base = grp.extra_offset(factor_dim);
            if grp.moment_set.dim() < base {
                return Err(AmbiguityError::Dimension {
                    context: format!("moment set of group {j}"),
                    expected: base,
                    found: grp.moment_set.dim(),
                });
            }
            let extra = grp.extra_dim(factor_dim);
            for f in grp.g.iter_mut().flatten() {
                if f.dim() == factor_dim && extra > 0 {
                    *f = f.pad(extra);
                } else if f.dim() != factor_dim + extra {
                    return Err(AmbiguityError::Dimension {
                        context: format!("g-function of group {j}"),
                        expected: factor_dim + extra,
                        found: f.dim(),
                    });
                }
            }
        }

        let bbox = weights.bounding_box().map_err(geo("weight set"))?;
        let fixed_weights = if bbox[..n].iter().all(|(lo, hi)| hi - lo <= FIXED_WEIGHT_TOL) {
            Some(bbox[..n].iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect())
        } else {
            None
        };
        for (j, grp) in groups.iter().enumerate() {
            if grp.members.len() > 1 && fixed_weights.is_none() && grp.reads_extra(factor_dim) {
                return Err(AmbiguityError::Invalid(format!(
                    "group {j}: g-functions may read moment-set parameters only when the group has one \
                     scenario or the weights are fixed"
                )));
            }
        }
        Ok(LiftedAmbiguitySet { factor_dim, supports, groups, weights, fixed_weights })
    }

    pub fn factor_dim(&self) -> usize {
        self.factor_dim
    }

    pub fn num_scenarios(&self) -> usize {
        self.supports.len()
    }

    pub fn supports(&self) -> &[PolyhedralSet] {
        &self.supports
    }

    pub fn groups(&self) -> &[ConditionGroup] {
        &self.groups
    }

    pub fn weights(&self) -> &PolyhedralSet {
        &self.weights
    }

    /// The scenario weights when `W` is a single point.
    pub fn fixed_weights(&self) -> Option<&[f64]> {
        self.fixed_weights.as_deref()
    }

    /// Groups containing scenario `n`.
    pub fn groups_of(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        self.groups.iter().enumerate().filter(move |(_, g)| g.members.contains(&n)).map(|(j, _)| j)
    }
}

// ---------------------------------------------------------------------------
// builders

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    L1,
    LInf,
}

impl Metric {
    pub fn distance_fn(self, anchor: &[f64]) -> PwlConvexFn {
        match self {
            Metric::L1 => PwlConvexFn::l1_distance(anchor),
            Metric::LInf => PwlConvexFn::linf_distance(anchor),
        }
    }

    /// Upper bound on the diameter of a box under this metric.
    fn box_diameter(self, bbox: &[(f64, f64)]) -> f64 {
        let widths = bbox.iter().map(|(lo, hi)| hi - lo);
        match self {
            Metric::L1 => widths.sum(),
            Metric::LInf => widths.fold(0.0, f64::max),
        }
    }
}

fn singleton_weights(n: usize) -> PolyhedralSet {
    PolyhedralSet::point(&vec![1.0 / n as f64; n])
}

fn bounded(d: &PolyhedralSet, what: &str) -> Result<Vec<(f64, f64)>, AmbiguityError> {
    d.bounding_box().map_err(geo(what))
}

/// Only the support is known: one scenario, no condition groups.
pub fn build_support_only(support: PolyhedralSet) -> Result<LiftedAmbiguitySet, AmbiguityError> {
    bounded(&support, "support")?;
    let d = support.dim();
    LiftedAmbiguitySet::new(d, vec![support], vec![], PolyhedralSet::point(&[1.0]))
}

/// Support plus a conditional-mean equality with the mean confined to
/// `[mu_lo, mu_hi]` and a polyhedral norm ball of radius `theta` around `mu0`.
pub fn build_uncertain_mean(
    support: PolyhedralSet,
    mu_lo: &[f64],
    mu_hi: &[f64],
    mu0: &[f64],
    theta: f64,
    norm: Metric,
) -> Result<LiftedAmbiguitySet, AmbiguityError> {
    let d = support.dim();
    for (what, v) in [("mean lower bound", mu_lo), ("mean upper bound", mu_hi), ("mean center", mu0)] {
        if v.len() != d {
            return Err(AmbiguityError::Dimension { context: what.into(), expected: d, found: v.len() });
        }
    }
    if !(theta >= 0.0) {
        return Err(AmbiguityError::Invalid(format!("radius must be nonnegative, got {theta}")));
    }
    let bbox = bounded(&support, "support")?;
    // an infinite radius leaves only the box
    let ball = theta.is_finite();

    // coordinates: mu (d), then for the 1-norm d auxiliary |mu - mu0| bounds
    let extra = if norm == Metric::L1 && ball { d } else { 0 };
    let dim = d + extra;
    let mut u = PolyhedralSet::unconstrained(dim);
    let mut push = |coef: Vec<f64>, rhs: f64| u.add_ineq(coef, rhs).map_err(geo("mean set"));
    for i in 0..d {
        push(unit(dim, i, 1.0), mu_hi[i])?;
        push(unit(dim, i, -1.0), -mu_lo[i])?;
        match norm {
            _ if !ball => {}
            Metric::LInf => {
                push(unit(dim, i, 1.0), mu0[i] + theta)?;
                push(unit(dim, i, -1.0), theta - mu0[i])?;
            }
            Metric::L1 => {
                let mut a = unit(dim, i, 1.0);
                a[d + i] = -1.0;
                push(a, mu0[i])?;
                let mut b = unit(dim, i, -1.0);
                b[d + i] = -1.0;
                push(b, -mu0[i])?;
            }
        }
    }
    if extra > 0 {
        let mut a = vec![0.0; dim];
        for v in &mut a[d..] {
            *v = 1.0;
        }
        push(a, theta)?;
    }
    // the mean must be attainable inside the support's bounding box
    let mut probe = u.clone();
    for i in 0..d {
        probe.add_ineq(unit(dim, i, 1.0), bbox[i].1).map_err(geo("mean set"))?;
        probe.add_ineq(unit(dim, i, -1.0), -bbox[i].0).map_err(geo("mean set"))?;
    }
    if !probe.feasibility_check().is_feasible() {
        return Err(AmbiguityError::Invalid("mean set is empty or misses the support".into()));
    }
    let group = ConditionGroup::new(vec![0], true, vec![], u);
    LiftedAmbiguitySet::new(d, vec![support], vec![group], PolyhedralSet::point(&[1.0]))
}

/// Total-variation ball of radius `theta` around the uniform reweighting of
/// the samples. `W` lives over `(omega, z)` with `z_i >= |omega_i - 1/N|`.
pub fn build_phi_divergence_tv(samples: &[Vec<f64>], theta: f64) -> Result<LiftedAmbiguitySet, AmbiguityError> {
    let n = samples.len();
    if n == 0 {
        return Err(AmbiguityError::Invalid("need at least one sample".into()));
    }
    if !(theta >= 0.0) {
        return Err(AmbiguityError::Invalid(format!("radius must be nonnegative, got {theta}")));
    }
    let d = samples[0].len();
    let supports = samples
        .iter()
        .map(|s| {
            if s.len() != d {
                return Err(AmbiguityError::Dimension { context: "sample".into(), expected: d, found: s.len() });
            }
            Ok(PolyhedralSet::point(s))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let dim = 2 * n;
    let uniform = 1.0 / n as f64;
    let mut w = PolyhedralSet::unconstrained(dim);
    let mut sum = vec![0.0; dim];
    for v in &mut sum[..n] {
        *v = 1.0;
    }
    w.add_eq(sum, 1.0).map_err(geo("weight set"))?;
    let mut budget = vec![0.0; dim];
    for i in 0..n {
        w.add_ineq(unit(dim, i, -1.0), -WEIGHT_FLOOR).map_err(geo("weight set"))?;
        let mut a = unit(dim, i, 1.0);
        a[n + i] = -1.0;
        w.add_ineq(a, uniform).map_err(geo("weight set"))?;
        let mut b = unit(dim, i, -1.0);
        b[n + i] = -1.0;
        w.add_ineq(b, -uniform).map_err(geo("weight set"))?;
        budget[n + i] = 1.0;
    }
    w.add_ineq(budget, theta.min(2.0)).map_err(geo("weight set"))?;
    LiftedAmbiguitySet::new(d, supports, vec![], w)
}

fn wasserstein_group(
    samples: &[Vec<f64>],
    theta: f64,
    support: &PolyhedralSet,
    metric: Metric,
    bbox: &[(f64, f64)],
) -> Result<ConditionGroup, AmbiguityError> {
    if !(theta >= 0.0) {
        return Err(AmbiguityError::Invalid(format!("radius must be nonnegative, got {theta}")));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.len() != support.dim() {
            return Err(AmbiguityError::Dimension {
                context: format!("sample {i}"),
                expected: support.dim(),
                found: s.len(),
            });
        }
        if !support.contains(s, 1e-9) {
            return Err(AmbiguityError::Invalid(format!("sample {i} lies outside the support")));
        }
    }
    let theta = theta.min(metric.box_diameter(bbox));
    let g = samples.iter().map(|s| vec![metric.distance_fn(s)]).collect();
    let u = PolyhedralSet::boxed(&[0.0], &[theta]).map_err(geo("transport budget"))?;
    Ok(ConditionGroup::new((0..samples.len()).collect(), false, g, u))
}

/// Type-1 Wasserstein ball of radius `theta` around the empirical
/// distribution of `samples`, all supported on `support`. Infinite `theta`
/// is capped at the support's diameter.
pub fn build_wasserstein(
    samples: &[Vec<f64>],
    theta: f64,
    support: PolyhedralSet,
    metric: Metric,
) -> Result<LiftedAmbiguitySet, AmbiguityError> {
    let n = samples.len();
    if n == 0 {
        return Err(AmbiguityError::Invalid("need at least one sample".into()));
    }
    let bbox = bounded(&support, "support")?;
    let group = wasserstein_group(samples, theta, &support, metric, &bbox)?;
    let d = support.dim();
    LiftedAmbiguitySet::new(d, vec![support; n], vec![group], singleton_weights(n))
}

/// Wasserstein ball intersected with a mean box and a bound on the mean
/// absolute deviation `E|e.(zeta - mu0)| <= mad` for some `mu0` in the box.
pub fn build_hybrid_wasserstein_mad(
    samples: &[Vec<f64>],
    theta: f64,
    support: PolyhedralSet,
    metric: Metric,
    mu_lo: &[f64],
    mu_hi: &[f64],
    mad: f64,
) -> Result<LiftedAmbiguitySet, AmbiguityError> {
    let n = samples.len();
    if n == 0 {
        return Err(AmbiguityError::Invalid("need at least one sample".into()));
    }
    let d = support.dim();
    for (what, v) in [("mean lower bound", mu_lo), ("mean upper bound", mu_hi)] {
        if v.len() != d {
            return Err(AmbiguityError::Dimension { context: what.into(), expected: d, found: v.len() });
        }
    }
    if !(mad >= 0.0) {
        return Err(AmbiguityError::Invalid(format!("deviation bound must be nonnegative, got {mad}")));
    }
    let bbox = bounded(&support, "support")?;
    let wass = wasserstein_group(samples, theta, &support, metric, &bbox)?;

    // coordinates: mu (d), nu (1), mu0 (d)
    let cap: f64 = (0..d)
        .map(|i| (bbox[i].1 - mu_lo[i]).abs().max((mu_hi[i] - bbox[i].0).abs()))
        .sum();
    let dim = 2 * d + 1;
    let mut u = PolyhedralSet::unconstrained(dim);
    for i in 0..d {
        for off in [0, d + 1] {
            u.add_ineq(unit(dim, off + i, 1.0), mu_hi[i]).map_err(geo("mean box"))?;
            u.add_ineq(unit(dim, off + i, -1.0), -mu_lo[i]).map_err(geo("mean box"))?;
        }
    }
    u.add_ineq(unit(dim, d, 1.0), mad.min(cap)).map_err(geo("deviation bound"))?;
    u.add_ineq(unit(dim, d, -1.0), 0.0).map_err(geo("deviation bound"))?;
    if !u.feasibility_check().is_feasible() {
        return Err(AmbiguityError::Invalid("mean box is empty".into()));
    }
    let mut coef = vec![1.0; d];
    coef.extend(std::iter::repeat(-1.0).take(d));
    let dev = PwlConvexFn::abs_affine(coef, 0.0);
    let mad_group = ConditionGroup::new((0..n).collect(), true, vec![vec![dev]; n], u);
    LiftedAmbiguitySet::new(d, vec![support; n], vec![wass, mad_group], singleton_weights(n))
}

/// One component of a mixture: its own support and optional moment data.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent {
    pub support: PolyhedralSet,
    pub mean_equality: bool,
    pub g: Vec<PwlConvexFn>,
    /// Required when `mean_equality` is set or `g` is nonempty.
    pub moment_set: Option<PolyhedralSet>,
}

impl MixtureComponent {
    pub fn support_only(support: PolyhedralSet) -> Self {
        MixtureComponent { support, mean_equality: false, g: vec![], moment_set: None }
    }
}

/// Mixture of components with uncertain mixing weights in `weights`.
pub fn build_mixture(
    components: Vec<MixtureComponent>,
    weights: PolyhedralSet,
) -> Result<LiftedAmbiguitySet, AmbiguityError> {
    let Some(first) = components.first() else {
        return Err(AmbiguityError::Invalid("need at least one component".into()));
    };
    let d = first.support.dim();
    let mut supports = Vec::with_capacity(components.len());
    let mut groups = Vec::new();
    for (n, comp) in components.into_iter().enumerate() {
        bounded(&comp.support, &format!("support of component {n}"))?;
        supports.push(comp.support);
        if comp.mean_equality || !comp.g.is_empty() {
            let Some(u) = comp.moment_set else {
                return Err(AmbiguityError::Invalid(format!("component {n} needs a moment set")));
            };
            groups.push(ConditionGroup::new(vec![n], comp.mean_equality, vec![comp.g], u));
        }
    }
    LiftedAmbiguitySet::new(d, supports, groups, weights)
}

pub(crate) fn unit(dim: usize, i: usize, v: f64) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[i] = v;
    e
}

// ---------------------------------------------------------------------------
// factor maps

/// Affine map from the factor vector to transition rows and rewards:
/// `p = P xi + p0` (stacked per action over successor states) and
/// `r = R xi + r0` (one entry per action).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMap {
    factor_dim: usize,
    num_actions: usize,
    num_next: usize,
    p_mat: Vec<Vec<f64>>,
    p0: Vec<f64>,
    r_mat: Vec<Vec<f64>>,
    r0: Vec<f64>,
}

impl FactorMap {
    pub fn new(
        factor_dim: usize,
        num_actions: usize,
        num_next: usize,
        p_mat: Vec<Vec<f64>>,
        p0: Vec<f64>,
        r_mat: Vec<Vec<f64>>,
        r0: Vec<f64>,
    ) -> Result<Self, AmbiguityError> {
        let dims = [
            ("transition matrix rows", p_mat.len(), num_actions * num_next),
            ("transition offset", p0.len(), num_actions * num_next),
            ("reward matrix rows", r_mat.len(), num_actions),
            ("reward offset", r0.len(), num_actions),
        ];
        for (what, found, expected) in dims {
            if found != expected {
                return Err(AmbiguityError::Dimension { context: what.into(), expected, found });
            }
        }
        if num_actions == 0 {
            return Err(AmbiguityError::Invalid("a state needs at least one action".into()));
        }
        for row in p_mat.iter().chain(&r_mat) {
            if row.len() != factor_dim {
                return Err(AmbiguityError::Dimension {
                    context: "factor map row".into(),
                    expected: factor_dim,
                    found: row.len(),
                });
            }
        }
        let all = p_mat.iter().chain(&r_mat).flatten().chain(&p0).chain(&r0);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(AmbiguityError::Invalid("non-finite factor map entry".into()));
        }
        Ok(FactorMap { factor_dim, num_actions, num_next, p_mat, p0, r_mat, r0 })
    }

    /// The factor vector is `(p, r)` itself.
    pub fn identity(num_actions: usize, num_next: usize) -> Self {
        let np = num_actions * num_next;
        let d = np + num_actions;
        let p_mat = (0..np).map(|i| unit(d, i, 1.0)).collect();
        let r_mat = (0..num_actions).map(|a| unit(d, np + a, 1.0)).collect();
        FactorMap {
            factor_dim: d,
            num_actions,
            num_next,
            p_mat,
            p0: vec![0.0; np],
            r_mat,
            r0: vec![0.0; num_actions],
        }
    }

    pub fn factor_dim(&self) -> usize {
        self.factor_dim
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_next(&self) -> usize {
        self.num_next
    }

    pub fn p_row(&self, a: usize, s_next: usize) -> (&[f64], f64) {
        let k = a * self.num_next + s_next;
        (&self.p_mat[k], self.p0[k])
    }

    pub fn r_row(&self, a: usize) -> (&[f64], f64) {
        (&self.r_mat[a], self.r0[a])
    }

    /// Transition probabilities for action `a` at factor value `xi`.
    pub fn transitions(&self, a: usize, xi: &[f64]) -> Vec<f64> {
        (0..self.num_next)
            .map(|s| {
                let (row, off) = self.p_row(a, s);
                crate::linalg::dot(row, xi) + off
            })
            .collect()
    }

    pub fn reward(&self, a: usize, xi: &[f64]) -> f64 {
        let (row, off) = self.r_row(a);
        crate::linalg::dot(row, xi) + off
    }
}

// ---------------------------------------------------------------------------
// validation

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of [`validate`]. Passing is necessary, not sufficient, for the
/// strong duality the reformulation relies on.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into() });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn extend(&mut self, prefix: &str, other: ValidationReport) {
        for c in other.checks {
            self.checks.push(Check { name: format!("{prefix}{}", c.name), ..c });
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            if c.detail.is_empty() {
                writeln!(f, "[{tag}] {}", c.name)?;
            } else {
                writeln!(f, "[{tag}] {}: {}", c.name, c.detail)?;
            }
        }
        Ok(())
    }
}

fn check_set(report: &mut ValidationReport, name: &str, set: &PolyhedralSet, slater: bool) {
    match set.feasibility_check() {
        Feasibility::Infeasible { .. } => {
            report.push(format!("{name} nonempty"), false, "infeasible");
            return;
        }
        Feasibility::Feasible { radius, .. } => {
            report.push(format!("{name} nonempty"), true, "");
            if slater && !set.ineq().is_empty() {
                report.push(
                    format!("{name} strictly feasible"),
                    radius > 1e-9,
                    format!("inscribed radius {radius:.3e}"),
                );
            }
        }
    }
    match set.bounding_box() {
        Ok(_) => report.push(format!("{name} bounded"), true, ""),
        Err(e) => report.push(format!("{name} bounded"), false, e.to_string()),
    }
}

/// Type invariants plus heuristic surrogates for the Slater condition.
pub fn validate_ambiguity(amb: &LiftedAmbiguitySet) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut checked: Vec<&PolyhedralSet> = Vec::new();
    for (n, d) in amb.supports.iter().enumerate() {
        if checked.contains(&d) {
            continue;
        }
        checked.push(d);
        check_set(&mut report, &format!("support[{n}]"), d, true);
    }

    let n = amb.num_scenarios();
    let w = &amb.weights;
    check_set(&mut report, "weights", w, false);
    let mut sum = vec![0.0; w.dim()];
    for v in &mut sum[..n] {
        *v = 1.0;
    }
    let lo = w.optimize_linear(&sum, Sense::Minimize).map(|r| r.0);
    let hi = w.optimize_linear(&sum, Sense::Maximize).map(|r| r.0);
    match (lo, hi) {
        (Ok(lo), Ok(hi)) => report.push(
            "weights on simplex hyperplane",
            (lo - 1.0).abs() <= 1e-9 && (hi - 1.0).abs() <= 1e-9,
            format!("sum of weights ranges over [{lo}, {hi}]"),
        ),
        _ => report.push("weights on simplex hyperplane", false, "could not optimize over weights"),
    }
    let mut worst = (f64::INFINITY, 0);
    for i in 0..n {
        if let Ok((v, _)) = w.optimize_linear(&unit(w.dim(), i, 1.0), Sense::Minimize) {
            if v < worst.0 {
                worst = (v, i);
            }
        }
    }
    report.push(
        "weights strictly interior",
        worst.0 > 1e-12,
        format!("smallest attainable weight {:.3e} (scenario {})", worst.0, worst.1),
    );

    for (j, grp) in amb.groups.iter().enumerate() {
        check_set(&mut report, &format!("moment_set[{j}]"), &grp.moment_set, false);
    }
    report
}

/// Checks that every transition row is a probability vector for every
/// factor value in every scenario's support.
pub fn validate_factor_map(amb: &LiftedAmbiguitySet, fm: &FactorMap) -> ValidationReport {
    let mut report = ValidationReport::default();
    if fm.factor_dim != amb.factor_dim {
        report.push(
            "factor dimension",
            false,
            format!("factor map uses {}, ambiguity set {}", fm.factor_dim, amb.factor_dim),
        );
        return report;
    }
    let mut seen: Vec<&PolyhedralSet> = Vec::new();
    let mut failures = Vec::new();
    for (n, d) in amb.supports.iter().enumerate() {
        if seen.contains(&d) {
            continue;
        }
        seen.push(d);
        let points = match d.enumerate_vertices() {
            Ok(v) => v.vertices,
            Err(GeometryError::EnumerationGuard(_)) => {
                failures.extend(row_checks_by_lp(fm, d, n));
                continue;
            }
            Err(e) => {
                failures.push(format!("scenario {n}: {e}"));
                continue;
            }
        };
        'outer: for xi in &points {
            for a in 0..fm.num_actions {
                let row = fm.transitions(a, xi);
                if let Some((s, v)) = row.iter().enumerate().find(|(_, v)| **v < -ROW_TOL) {
                    failures.push(format!("scenario {n}, action {a}, next state {s}: entry {v:.3e} at {xi:?}"));
                    break 'outer;
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > ROW_TOL {
                    failures.push(format!("scenario {n}, action {a}: row sums to {total} at {xi:?}"));
                    break 'outer;
                }
            }
        }
    }
    report.push(
        "transition rows valid",
        failures.is_empty(),
        failures.first().cloned().unwrap_or_default(),
    );
    report
}

fn row_checks_by_lp(fm: &FactorMap, d: &PolyhedralSet, n: usize) -> Vec<String> {
    let mut out = Vec::new();
    for a in 0..fm.num_actions {
        let mut sum = vec![0.0; fm.factor_dim];
        let mut off = 0.0;
        for s in 0..fm.num_next {
            let (row, c) = fm.p_row(a, s);
            if row.iter().any(|v| *v != 0.0) {
                if let Ok((v, _)) = d.optimize_linear(row, Sense::Minimize) {
                    if v + c < -ROW_TOL {
                        out.push(format!("scenario {n}, action {a}, next state {s}: entry can reach {:.3e}", v + c));
                    }
                }
            } else if c < -ROW_TOL {
                out.push(format!("scenario {n}, action {a}, next state {s}: constant entry {c}"));
            }
            for (t, v) in sum.iter_mut().zip(row) {
                *t += v;
            }
            off += c;
        }
        for sense in [Sense::Minimize, Sense::Maximize] {
            if let Ok((v, _)) = d.optimize_linear(&sum, sense) {
                if (v + off - 1.0).abs() > ROW_TOL {
                    out.push(format!("scenario {n}, action {a}: row sum can reach {}", v + off));
                }
            }
        }
    }
    out
}

/// Runs [`validate_ambiguity`] and [`validate_factor_map`].
pub fn validate(amb: &LiftedAmbiguitySet, fm: &FactorMap) -> ValidationReport {
    let mut report = validate_ambiguity(amb);
    report.extend("", validate_factor_map(amb, fm));
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simplex_samples() -> Vec<Vec<f64>> {
        vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.2, 0.2]]
    }

    #[test]
    fn tv_ball_for_two_samples_is_interval() {
        let amb = build_phi_divergence_tv(&[vec![0.0], vec![1.0]], 0.5).unwrap();
        let w = amb.weights();
        let lo = w.optimize_linear(&[1.0, 0.0, 0.0, 0.0], Sense::Minimize).unwrap().0;
        let hi = w.optimize_linear(&[1.0, 0.0, 0.0, 0.0], Sense::Maximize).unwrap().0;
        assert!((lo - 0.25).abs() < 1e-9 && (hi - 0.75).abs() < 1e-9, "[{lo}, {hi}]");
    }

    #[test]
    fn tv_zero_radius_pins_uniform_weights() {
        let amb = build_phi_divergence_tv(&[vec![0.0], vec![1.0], vec![2.0]], 0.0).unwrap();
        let fixed = amb.fixed_weights().expect("weights should be pinned");
        for w in fixed {
            assert!((w - 1.0 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn builders_pass_type_checks() {
        let d = PolyhedralSet::simplex(3);
        let samples = simplex_samples();
        let sets = vec![
            build_support_only(d.clone()).unwrap(),
            build_uncertain_mean(d.clone(), &[0.0; 3], &[1.0; 3], &[0.3, 0.3, 0.4], 0.2, Metric::L1).unwrap(),
            build_uncertain_mean(d.clone(), &[0.0; 3], &[1.0; 3], &[0.3, 0.3, 0.4], 0.2, Metric::LInf).unwrap(),
            build_phi_divergence_tv(&samples, 0.3).unwrap(),
            build_wasserstein(&samples, 0.3, d.clone(), Metric::L1).unwrap(),
            build_hybrid_wasserstein_mad(&samples, 0.3, d.clone(), Metric::LInf, &[0.0; 3], &[1.0; 3], 0.5)
                .unwrap(),
        ];
        for amb in &sets {
            let report = validate_ambiguity(amb);
            assert!(report.all_passed(), "{report}");
        }
    }

    #[test]
    fn weights_touching_boundary_fail_interiority() {
        let amb = build_mixture(
            vec![
                MixtureComponent::support_only(PolyhedralSet::point(&[0.0])),
                MixtureComponent::support_only(PolyhedralSet::point(&[1.0])),
            ],
            PolyhedralSet::simplex(2),
        )
        .unwrap();
        let report = validate_ambiguity(&amb);
        let check = report.checks.iter().find(|c| c.name == "weights strictly interior").unwrap();
        assert!(!check.passed);
    }

    #[test]
    fn factor_map_with_negative_entry_is_flagged() {
        // one action, two next states: p = (xi1, 1 - xi1) with xi1 in [-0.5, 1]
        let d = PolyhedralSet::boxed(&[-0.5, 0.0], &[1.0, 1.0]).unwrap();
        let amb = build_support_only(d).unwrap();
        let fm = FactorMap::new(
            2,
            1,
            2,
            vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
            vec![0.0, 1.0],
            vec![vec![0.0, 1.0]],
            vec![0.0],
        )
        .unwrap();
        let report = validate_factor_map(&amb, &fm);
        assert!(!report.all_passed());
        assert!(report.checks[0].detail.contains("next state 0"), "{report}");
    }

    #[test]
    fn wasserstein_rejects_sample_outside_support() {
        let err = build_wasserstein(&[vec![2.0]], 0.1, PolyhedralSet::boxed(&[0.0], &[1.0]).unwrap(), Metric::L1);
        assert!(err.is_err());
        let err = build_wasserstein(&[vec![0.5]], -1.0, PolyhedralSet::boxed(&[0.0], &[1.0]).unwrap(), Metric::L1);
        assert!(err.is_err());
    }

    #[test]
    fn parameter_reading_needs_fixed_weights() {
        let g = PwlConvexFn::abs_affine(vec![1.0, -1.0], 0.0);
        let u = PolyhedralSet::boxed(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let grp = ConditionGroup::new(vec![0, 1], false, vec![vec![g.clone()], vec![g]], u);
        let supports = vec![PolyhedralSet::boxed(&[0.0], &[1.0]).unwrap(); 2];
        let w = PolyhedralSet::simplex(2)
            .with_ineq(vec![-1.0, 0.0], -0.1)
            .unwrap()
            .with_ineq(vec![0.0, -1.0], -0.1)
            .unwrap();
        assert!(LiftedAmbiguitySet::new(1, supports, vec![grp], w).is_err());
    }
}

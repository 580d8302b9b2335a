//! Compilation of the per-state max-min subproblem into one linear program.
//!
//! For linear objectives the adversary only needs one point per scenario
//! (its conditional mean), so the inner infimum is the finite LP
//!
//! ```text
//! min  sum_n kappa(pi) w_n + c(pi).y_n
//! s.t. (w, w_aux) in W
//!      A_n y_n <= b_n w_n,  E_n y_n = e_n w_n                  (support, perspective)
//!      t >= a.y_n + rho_n a_u.u_j + b w_n   per g-piece          (epigraph)
//!      sum_{n in N_j} sum_blocks t <= u_j[nu]                    (g-moment)
//!      sum_{n in N_j} y_n = u_j[mu]                              (mean, optional)
//!      F_j u_j <= h_j sum_{n in N_j} w_n                         (scaled moment set)
//! ```
//!
//! with `y_n = w_n * xi_n`. Its LP dual is linear in `pi`, so adding the
//! policy simplex gives the robust counterpart as a single maximization.
//! The duals of that maximization recover the adversary's `(w, y)`, which is
//! the worst-case certificate.

use crate::ambiguity::{FactorMap, LiftedAmbiguitySet};
use crate::geometry::{GeometryError, PolyhedralSet, PwlConvexFn};
use crate::linalg::dot;
use crate::lp::{LinearProgram, LpBackend, LpSolution, LpStatus, RowKind, Sense};

/// Certificate consistency tolerance.
pub const CERTIFICATE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReformulationError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension { context: &'static str, expected: usize, found: usize },
    #[error("LP solve ended with status {status:?} ({context})")]
    Solver { status: LpStatus, context: &'static str },
    #[error("oracle guard: {0}")]
    Guard(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// `E[r.pi + p.(V pi)] = kappa(pi) + c(pi).xi` for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct StageObjective {
    v_next: Vec<f64>,
    continuation: f64,
    factor_dim: usize,
    /// per action: `r0_a + w * sum_s' v(s') p0_{a,s'}`
    k: Vec<f64>,
    /// per action: `R_a + w * sum_s' v(s') P_{a,s'}`
    c: Vec<Vec<f64>>,
}

/// Composes the continuation values (scaled by `continuation`, the discount
/// or 1) with the factor map.
pub fn assemble_stage_objective(
    v_next: &[f64],
    fm: &FactorMap,
    continuation: f64,
) -> Result<StageObjective, ReformulationError> {
    if v_next.len() != fm.num_next() {
        return Err(ReformulationError::Dimension {
            context: "continuation values",
            expected: fm.num_next(),
            found: v_next.len(),
        });
    }
    let d = fm.factor_dim();
    let mut k = Vec::with_capacity(fm.num_actions());
    let mut c = Vec::with_capacity(fm.num_actions());
    for a in 0..fm.num_actions() {
        let (r_row, r0) = fm.r_row(a);
        let mut ka = r0;
        let mut ca = r_row.to_vec();
        for (s, &v) in v_next.iter().enumerate() {
            let w = continuation * v;
            if w == 0.0 {
                continue;
            }
            let (p_row, p0) = fm.p_row(a, s);
            ka += w * p0;
            for (ci, pi) in ca.iter_mut().zip(p_row) {
                *ci += w * pi;
            }
        }
        k.push(ka);
        c.push(ca);
    }
    Ok(StageObjective { v_next: v_next.to_vec(), continuation, factor_dim: d, k, c })
}

impl StageObjective {
    pub fn num_actions(&self) -> usize {
        self.k.len()
    }

    pub fn factor_dim(&self) -> usize {
        self.factor_dim
    }

    pub fn kappa(&self, pi: &[f64]) -> f64 {
        dot(&self.k, pi)
    }

    pub fn coef(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.factor_dim];
        for (ca, &p) in self.c.iter().zip(pi) {
            for (o, v) in out.iter_mut().zip(ca) {
                *o += p * v;
            }
        }
        out
    }

    pub fn action_value(&self, a: usize, xi: &[f64]) -> f64 {
        self.k[a] + dot(&self.c[a], xi)
    }

    pub fn value(&self, pi: &[f64], xi: &[f64]) -> f64 {
        self.kappa(pi) + dot(&self.coef(pi), xi)
    }

    /// The block-diagonal continuation matrix with `|A|` copies of the
    /// (scaled) successor values; rows are `(action, successor)` pairs.
    pub fn block_matrix(&self) -> Vec<Vec<f64>> {
        let (na, ns) = (self.num_actions(), self.v_next.len());
        let mut out = vec![vec![0.0; na]; na * ns];
        for a in 0..na {
            for s in 0..ns {
                out[a * ns + s][a] = self.continuation * self.v_next[s];
            }
        }
        out
    }

    /// Multiplies every coefficient by `lambda`.
    pub fn scaled(&self, lambda: f64) -> StageObjective {
        StageObjective {
            v_next: self.v_next.iter().map(|v| v * lambda).collect(),
            continuation: self.continuation,
            factor_dim: self.factor_dim,
            k: self.k.iter().map(|v| v * lambda).collect(),
            c: self.c.iter().map(|r| r.iter().map(|v| v * lambda).collect()).collect(),
        }
    }
}

/// Scenario weights and conditional factor means of a worst-case
/// distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
}

impl Certificate {
    /// `sum_n w_n xi_n`, the unconditional mean factor.
    pub fn mean_factor(&self) -> Vec<f64> {
        let d = self.means.first().map_or(0, Vec::len);
        let mut out = vec![0.0; d];
        for (w, m) in self.weights.iter().zip(&self.means) {
            for (o, v) in out.iter_mut().zip(m) {
                *o += w * v;
            }
        }
        out
    }

    /// `sum_n w_n (kappa + c.xi_n)`.
    pub fn objective(&self, obj: &StageObjective, pi: &[f64]) -> f64 {
        let kappa = obj.kappa(pi);
        let c = obj.coef(pi);
        self.weights.iter().zip(&self.means).map(|(w, m)| w * (kappa + dot(&c, m))).sum()
    }
}

/// Multipliers of the robust counterpart, signed so that for every scenario
/// `n` and every `zeta` in its support
/// `alpha_n + sum_{j ∋ n} (beta_j.zeta + gamma_j.g_jn(zeta)) >= -objective(zeta)`,
/// with `gamma >= 0` and the optimal value equal to `-delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageDuals {
    pub alpha: Vec<f64>,
    /// empty for groups without a mean equality
    pub beta: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SRobustSolution {
    pub policy: Vec<f64>,
    pub value: f64,
    pub duals: StageDuals,
    pub certificate: Certificate,
    /// `|certificate objective - value|`
    pub certificate_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    pub value: f64,
    pub certificate: Certificate,
    pub certificate_residual: f64,
}

// ---------------------------------------------------------------------------
// adversary program

#[derive(Debug, Clone, Copy, PartialEq)]
enum ColCost {
    Zero,
    Kappa,
    Coef(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tag {
    Weight(usize),
    Support(usize, usize),
    Epigraph(usize, usize, usize),
    GMoment(usize, usize),
    Mean(usize, usize),
    Moment(usize, usize),
}

struct PRow {
    coefs: Vec<(usize, f64)>,
    kind: RowKind,
    rhs: f64,
    tag: Tag,
}

struct Adversary {
    cost: Vec<ColCost>,
    fixed: Vec<Option<f64>>,
    col_names: Vec<String>,
    rows: Vec<PRow>,
    omega: Vec<usize>,
    y: Vec<Vec<usize>>,
}

impl Adversary {
    fn col(&mut self, cost: ColCost, fixed: Option<f64>, name: String) -> usize {
        self.cost.push(cost);
        self.fixed.push(fixed);
        self.col_names.push(name);
        self.cost.len() - 1
    }

    fn row(&mut self, coefs: Vec<(usize, f64)>, kind: RowKind, rhs: f64, tag: Tag) {
        self.rows.push(PRow { coefs, kind, rhs, tag });
    }

    fn build(amb: &LiftedAmbiguitySet) -> Adversary {
        let d = amb.factor_dim();
        let n_scen = amb.num_scenarios();
        let fixed_w = amb.fixed_weights();
        let mut adv = Adversary {
            cost: Vec::new(),
            fixed: Vec::new(),
            col_names: Vec::new(),
            rows: Vec::new(),
            omega: Vec::new(),
            y: Vec::new(),
        };
        for n in 0..n_scen {
            let fx = fixed_w.map(|w| w[n]);
            let c = adv.col(ColCost::Kappa, fx, format!("w[{n}]"));
            adv.omega.push(c);
        }
        if fixed_w.is_none() {
            let w = amb.weights();
            let aux: Vec<usize> =
                (n_scen..w.dim()).map(|k| adv.col(ColCost::Zero, None, format!("waux[{k}]"))).collect();
            let vars: Vec<usize> = adv.omega.iter().chain(&aux).copied().collect();
            for (k, r) in w.ineq().iter().enumerate() {
                adv.row(zip(&vars, &r.coef), RowKind::Le, r.rhs, Tag::Weight(k));
            }
            for (k, r) in w.eq().iter().enumerate() {
                adv.row(zip(&vars, &r.coef), RowKind::Eq, r.rhs, Tag::Weight(w.ineq().len() + k));
            }
        }
        for n in 0..n_scen {
            let ys: Vec<usize> = (0..d).map(|i| adv.col(ColCost::Coef(i), None, format!("y[{n}][{i}]"))).collect();
            adv.y.push(ys);
        }
        for (n, dn) in amb.supports().iter().enumerate() {
            let (ys, w) = (adv.y[n].clone(), adv.omega[n]);
            for (k, r) in dn.ineq().iter().enumerate() {
                let mut coefs = zip(&ys, &r.coef);
                coefs.push((w, -r.rhs));
                adv.row(coefs, RowKind::Le, 0.0, Tag::Support(n, k));
            }
            for (k, r) in dn.eq().iter().enumerate() {
                let mut coefs = zip(&ys, &r.coef);
                coefs.push((w, -r.rhs));
                adv.row(coefs, RowKind::Eq, 0.0, Tag::Support(n, dn.ineq().len() + k));
            }
        }
        for (j, grp) in amb.groups().iter().enumerate() {
            let u: Vec<usize> = (0..grp.moment_set.dim())
                .map(|k| adv.col(ColCost::Zero, None, format!("u[{j}][{k}]")))
                .collect();
            let m = grp.outputs();
            let nu0 = grp.nu_offset(d);
            let ex0 = grp.extra_offset(d);
            let wbar: f64 = fixed_w.map_or(0.0, |w| grp.members.iter().map(|&n| w[n]).sum());
            let mut gsum: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
            for (pos, &n) in grp.members.iter().enumerate() {
                let rho = match fixed_w {
                    Some(w) if wbar > 0.0 => w[n] / wbar,
                    _ => 1.0,
                };
                for (i, f) in grp.g[pos].iter().enumerate() {
                    for (b, block) in f.blocks().iter().enumerate() {
                        let t = adv.col(ColCost::Zero, None, format!("t[{j}][{n}][{i}][{b}]"));
                        gsum[i].push((t, 1.0));
                        for piece in block {
                            let mut coefs = zip(&adv.y[n], &piece.coef[..d]);
                            for (k, &a) in piece.coef[d..].iter().enumerate() {
                                if a != 0.0 {
                                    coefs.push((u[ex0 + k], rho * a));
                                }
                            }
                            coefs.push((adv.omega[n], piece.constant));
                            coefs.push((t, -1.0));
                            adv.row(coefs, RowKind::Le, 0.0, Tag::Epigraph(j, n, i));
                        }
                    }
                }
            }
            for (i, mut coefs) in gsum.into_iter().enumerate() {
                coefs.push((u[nu0 + i], -1.0));
                adv.row(coefs, RowKind::Le, 0.0, Tag::GMoment(j, i));
            }
            if grp.mean_equality {
                for i in 0..d {
                    let mut coefs: Vec<(usize, f64)> = grp.members.iter().map(|&n| (adv.y[n][i], 1.0)).collect();
                    coefs.push((u[i], -1.0));
                    adv.row(coefs, RowKind::Eq, 0.0, Tag::Mean(j, i));
                }
            }
            let us = &grp.moment_set;
            for (k, r) in us.ineq().iter().enumerate() {
                let mut coefs = zip(&u, &r.coef);
                coefs.extend(grp.members.iter().map(|&n| (adv.omega[n], -r.rhs)));
                adv.row(coefs, RowKind::Le, 0.0, Tag::Moment(j, k));
            }
            for (k, r) in us.eq().iter().enumerate() {
                let mut coefs = zip(&u, &r.coef);
                coefs.extend(grp.members.iter().map(|&n| (adv.omega[n], -r.rhs)));
                adv.row(coefs, RowKind::Eq, 0.0, Tag::Moment(j, us.ineq().len() + k));
            }
        }
        adv
    }

    fn cost_of(&self, col: usize, obj: &StageObjective, a: usize) -> f64 {
        match self.cost[col] {
            ColCost::Zero => 0.0,
            ColCost::Kappa => obj.k[a],
            ColCost::Coef(i) => obj.c[a][i],
        }
    }
}

fn zip(vars: &[usize], coef: &[f64]) -> Vec<(usize, f64)> {
    vars.iter().zip(coef).filter(|(_, a)| **a != 0.0).map(|(&j, &a)| (j, a)).collect()
}

fn tag_name(tag: Tag) -> String {
    match tag {
        Tag::Weight(k) => format!("weight[{k}]"),
        Tag::Support(n, k) => format!("support[{n}][{k}]"),
        Tag::Epigraph(j, n, i) => format!("epi[{j}][{n}][{i}]"),
        Tag::GMoment(j, i) => format!("gamma[{j}][{i}]"),
        Tag::Mean(j, i) => format!("beta[{j}][{i}]"),
        Tag::Moment(j, k) => format!("moment[{j}][{k}]"),
    }
}

/// The robust counterpart of one state's subproblem, ready to solve.
#[derive(Debug, Clone)]
pub struct CompiledStage {
    lp: LinearProgram,
    /// policy variables (empty when the policy was fixed at compile time)
    pub pi_vars: Vec<usize>,
    /// constant added to the LP objective (fixed policy only)
    offset: f64,
    adv_rows: Vec<(Tag, RowKind)>,
    /// LP variable of each adversary row's multiplier
    mult_var: Vec<usize>,
    /// dual-LP row of each free adversary column
    col_row: Vec<Option<usize>>,
    fixed: Vec<Option<f64>>,
    omega: Vec<usize>,
    y: Vec<Vec<usize>>,
    /// coefficient of `w_n` in every adversary row
    omega_coef: Vec<Vec<(usize, f64)>>,
}

impl CompiledStage {
    pub fn lp(&self) -> &LinearProgram {
        &self.lp
    }

    pub fn lp_mut(&mut self) -> &mut LinearProgram {
        &mut self.lp
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    fn certificate(&self, sol: &LpSolution) -> Certificate {
        let get = |col: usize| match (self.fixed[col], self.col_row[col]) {
            (Some(v), _) => v,
            (None, Some(r)) => sol.dual[r],
            (None, None) => 0.0,
        };
        let mut weights: Vec<f64> = self.omega.iter().map(|&c| get(c)).collect();
        let mut ys: Vec<Vec<f64>> = self.y.iter().map(|cs| cs.iter().map(|&c| get(c)).collect()).collect();
        if weights.iter().sum::<f64>() < 0.0 {
            // opposite dual sign convention in a plugged-in backend
            weights.iter_mut().for_each(|w| *w = -*w);
            ys.iter_mut().flatten().for_each(|v| *v = -*v);
        }
        let means = weights
            .iter()
            .zip(ys)
            .map(|(&w, y)| y.into_iter().map(|v| if w.abs() > 0.0 { v / w } else { 0.0 }).collect())
            .collect();
        Certificate { weights, means }
    }

    fn duals(&self, sol: &LpSolution, obj: &StageObjective, pi: &[f64], value: f64, amb: &LiftedAmbiguitySet) -> StageDuals {
        let mult = |r: usize| {
            let v = sol.primal[self.mult_var[r]];
            match self.adv_rows[r].1 {
                RowKind::Eq => -v,
                _ => v,
            }
        };
        let kappa = obj.kappa(pi);
        let mut alpha = vec![-kappa; self.omega.len()];
        let d = amb.factor_dim();
        let mut beta: Vec<Vec<f64>> =
            amb.groups().iter().map(|g| if g.mean_equality { vec![0.0; d] } else { vec![] }).collect();
        let mut gamma: Vec<Vec<f64>> = amb.groups().iter().map(|g| vec![0.0; g.outputs()]).collect();
        for (r, &(tag, _)) in self.adv_rows.iter().enumerate() {
            match tag {
                Tag::Support(..) | Tag::Epigraph(..) => {
                    // Lagrangian multiplier times the row's w_n coefficient
                    for &(n, a) in &self.omega_coef[r] {
                        alpha[n] -= mult(r) * a;
                    }
                }
                Tag::Mean(j, i) => beta[j][i] = mult(r),
                Tag::GMoment(j, i) => gamma[j][i] = mult(r),
                _ => {}
            }
        }
        StageDuals { alpha, beta, gamma, delta: -value }
    }
}

fn compile(obj: &StageObjective, amb: &LiftedAmbiguitySet, pi: Option<&[f64]>) -> Result<CompiledStage, ReformulationError> {
    if obj.factor_dim != amb.factor_dim() {
        return Err(ReformulationError::Dimension {
            context: "stage objective factor dimension",
            expected: amb.factor_dim(),
            found: obj.factor_dim,
        });
    }
    if let Some(p) = pi {
        if p.len() != obj.num_actions() {
            return Err(ReformulationError::Dimension {
                context: "policy",
                expected: obj.num_actions(),
                found: p.len(),
            });
        }
    }
    let adv = Adversary::build(amb);
    let na = obj.num_actions();
    let ncols = adv.cost.len();
    let mut lp = LinearProgram::new(Sense::Maximize);

    let pi_vars: Vec<usize> = match pi {
        None => (0..na).map(|a| lp.add_named_var(&format!("pi[{a}]"), 0.0, f64::INFINITY, 0.0)).collect(),
        Some(_) => Vec::new(),
    };
    let mut offset = 0.0;
    let mut pi_obj = vec![0.0; na];
    for col in 0..ncols {
        if let Some(v) = adv.fixed[col] {
            for (a, po) in pi_obj.iter_mut().enumerate() {
                *po += adv.cost_of(col, obj, a) * v;
            }
        }
    }
    match pi {
        None => {
            for (a, &v) in pi_vars.iter().enumerate() {
                lp.cost[v] = pi_obj[a];
            }
        }
        Some(p) => offset = dot(&pi_obj, p),
    }

    let mut mult_var = Vec::with_capacity(adv.rows.len());
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ncols];
    let mut omega_coef = Vec::with_capacity(adv.rows.len());
    let omega_of: Vec<Option<usize>> = {
        let mut m = vec![None; ncols];
        for (n, &c) in adv.omega.iter().enumerate() {
            m[c] = Some(n);
        }
        m
    };
    for prow in &adv.rows {
        let mut rhs = prow.rhs;
        for &(c, a) in &prow.coefs {
            if let Some(v) = adv.fixed[c] {
                rhs -= a * v;
            }
        }
        let name = tag_name(prow.tag);
        let var = match prow.kind {
            RowKind::Le => lp.add_named_var(&name, 0.0, f64::INFINITY, -rhs),
            _ => lp.add_named_var(&name, f64::NEG_INFINITY, f64::INFINITY, rhs),
        };
        let sign = if prow.kind == RowKind::Le { -1.0 } else { 1.0 };
        for &(c, a) in &prow.coefs {
            if adv.fixed[c].is_none() {
                by_col[c].push((var, sign * a));
            }
        }
        omega_coef.push(prow.coefs.iter().filter_map(|&(c, a)| omega_of[c].map(|n| (n, a))).collect());
        mult_var.push(var);
    }

    let mut col_row = vec![None; ncols];
    for (col, mut coefs) in by_col.into_iter().enumerate() {
        if adv.fixed[col].is_some() {
            continue;
        }
        let mut rhs = 0.0;
        match pi {
            None => {
                for (a, &v) in pi_vars.iter().enumerate() {
                    let cst = adv.cost_of(col, obj, a);
                    if cst != 0.0 {
                        coefs.push((v, -cst));
                    }
                }
            }
            Some(p) => rhs = (0..na).map(|a| adv.cost_of(col, obj, a) * p[a]).sum(),
        }
        col_row[col] = Some(lp.num_rows());
        lp.add_row(coefs, RowKind::Eq, rhs);
    }
    if pi.is_none() {
        lp.add_row(pi_vars.iter().map(|&v| (v, 1.0)).collect(), RowKind::Eq, 1.0);
    }

    Ok(CompiledStage {
        lp,
        pi_vars,
        offset,
        adv_rows: adv.rows.iter().map(|r| (r.tag, r.kind)).collect(),
        mult_var,
        col_row,
        fixed: adv.fixed,
        omega: adv.omega,
        y: adv.y,
        omega_coef,
    })
}

/// The robust counterpart with the policy as decision variables. Its
/// optimal value is the state's robust value and its `pi_vars` block is the
/// robust randomized action.
pub fn build_srobust_lp(obj: &StageObjective, amb: &LiftedAmbiguitySet) -> Result<CompiledStage, ReformulationError> {
    compile(obj, amb, None)
}

fn residual(cert: &Certificate, obj: &StageObjective, pi: &[f64], value: f64) -> f64 {
    (cert.objective(obj, pi) - value).abs()
}

/// Solves the robust counterpart and extracts policy, duals and certificate.
pub fn solve_srobust(
    obj: &StageObjective,
    amb: &LiftedAmbiguitySet,
    backend: &dyn LpBackend,
) -> Result<SRobustSolution, ReformulationError> {
    let compiled = build_srobust_lp(obj, amb)?;
    let sol = backend.solve(&compiled.lp);
    if sol.status != LpStatus::Optimal {
        return Err(ReformulationError::Solver { status: sol.status, context: "robust counterpart" });
    }
    let mut policy: Vec<f64> = compiled.pi_vars.iter().map(|&v| sol.primal[v].max(0.0)).collect();
    let total: f64 = policy.iter().sum();
    policy.iter_mut().for_each(|p| *p /= total);
    let value = sol.objective;
    let certificate = compiled.certificate(&sol);
    let certificate_residual = residual(&certificate, obj, &policy, value);
    let duals = compiled.duals(&sol, obj, &policy, value, amb);
    Ok(SRobustSolution { policy, value, duals, certificate, certificate_residual, iterations: sol.iterations })
}

/// Worst-case expectation of the objective under a fixed randomized action.
pub fn worst_case_expectation(
    obj: &StageObjective,
    amb: &LiftedAmbiguitySet,
    pi: &[f64],
    backend: &dyn LpBackend,
) -> Result<WorstCase, ReformulationError> {
    let compiled = compile(obj, amb, Some(pi))?;
    let sol = backend.solve(&compiled.lp);
    if sol.status != LpStatus::Optimal {
        return Err(ReformulationError::Solver { status: sol.status, context: "fixed-policy worst case" });
    }
    let value = sol.objective + compiled.offset;
    let certificate = compiled.certificate(&sol);
    let certificate_residual = residual(&certificate, obj, pi, value);
    Ok(WorstCase { value, certificate, certificate_residual })
}

// ---------------------------------------------------------------------------
// oracle

/// Largest factor dimension accepted by [`oracle_worst_case`].
pub const ORACLE_MAX_DIM: usize = 4;
/// Largest scenario count accepted by [`oracle_worst_case`].
pub const ORACLE_MAX_SCENARIOS: usize = 4;
const ORACLE_MAX_POINTS: usize = 200_000;

/// Grid points of `set` (spacing `step` over its bounding box) plus its
/// vertices.
pub fn grid_points(set: &PolyhedralSet, step: f64) -> Result<Vec<Vec<f64>>, ReformulationError> {
    let bbox = set.bounding_box()?;
    let mut pts = set.enumerate_vertices()?.vertices;
    let counts: Vec<usize> = bbox.iter().map(|(lo, hi)| ((hi - lo) / step + 1e-9).floor() as usize + 1).collect();
    let total: usize = counts.iter().product();
    if total > ORACLE_MAX_POINTS {
        return Err(ReformulationError::Guard(format!("{total} grid points")));
    }
    let mut idx = vec![0usize; bbox.len()];
    loop {
        let x: Vec<f64> = idx.iter().zip(&bbox).map(|(&k, (lo, _))| lo + k as f64 * step).collect();
        if set.contains(&x, 1e-9) {
            pts.push(x);
        }
        let mut i = 0;
        loop {
            if i == idx.len() {
                return Ok(pts);
            }
            idx[i] += 1;
            if idx[i] < counts[i] {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// Solves the moment problem directly over discrete distributions supported
/// on grid points of every `D_n`. The result upper-bounds the true worst
/// case and converges to it as `grid_step` shrinks.
pub fn oracle_worst_case(
    obj: &StageObjective,
    amb: &LiftedAmbiguitySet,
    pi: &[f64],
    grid_step: f64,
    backend: &dyn LpBackend,
) -> Result<f64, ReformulationError> {
    let d = amb.factor_dim();
    if d > ORACLE_MAX_DIM || amb.num_scenarios() > ORACLE_MAX_SCENARIOS {
        return Err(ReformulationError::Guard(format!(
            "factor dimension {d} / scenarios {} exceed {ORACLE_MAX_DIM} / {ORACLE_MAX_SCENARIOS}",
            amb.num_scenarios()
        )));
    }
    if amb.groups().iter().any(|g| g.extra_dim(d) > 0 && g.g.iter().flatten().any(|f| reads_params(f, d))) {
        return Err(ReformulationError::Guard("g-functions reading moment-set parameters".into()));
    }
    let kappa = obj.kappa(pi);
    let c = obj.coef(pi);
    let mut lp = LinearProgram::new(Sense::Minimize);
    let w = amb.weights();
    let wv: Vec<usize> = (0..w.dim()).map(|_| lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0)).collect();
    w.push_rows(&mut lp, &wv);

    let mut masses: Vec<Vec<(usize, Vec<f64>)>> = Vec::new();
    for (n, dn) in amb.supports().iter().enumerate() {
        let pts = grid_points(dn, grid_step)?;
        let mut cols = Vec::with_capacity(pts.len());
        let mut sum = vec![(wv[n], -1.0)];
        for p in pts {
            let q = lp.add_var(0.0, f64::INFINITY, kappa + dot(&c, &p));
            sum.push((q, 1.0));
            cols.push((q, p));
        }
        lp.add_row(sum, RowKind::Eq, 0.0);
        masses.push(cols);
    }
    for grp in amb.groups() {
        let u: Vec<usize> =
            (0..grp.moment_set.dim()).map(|_| lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0)).collect();
        let nu0 = grp.nu_offset(d);
        for i in 0..grp.outputs() {
            let mut coefs = vec![(u[nu0 + i], -1.0)];
            for (pos, &n) in grp.members.iter().enumerate() {
                let f = &grp.g[pos][i];
                for (q, p) in &masses[n] {
                    let mut arg = p.clone();
                    arg.resize(f.dim(), 0.0);
                    coefs.push((*q, f.eval_unchecked(&arg)));
                }
            }
            lp.add_row(coefs, RowKind::Le, 0.0);
        }
        if grp.mean_equality {
            for i in 0..d {
                let mut coefs = vec![(u[i], -1.0)];
                for &n in &grp.members {
                    coefs.extend(masses[n].iter().map(|(q, p)| (*q, p[i])));
                }
                lp.add_row(coefs, RowKind::Eq, 0.0);
            }
        }
        let ms = &grp.moment_set;
        for (rows, kind) in [(ms.ineq(), RowKind::Le), (ms.eq(), RowKind::Eq)] {
            for r in rows {
                let mut coefs = zip(&u, &r.coef);
                coefs.extend(grp.members.iter().map(|&n| (wv[n], -r.rhs)));
                lp.add_row(coefs, kind, 0.0);
            }
        }
    }
    let sol = backend.solve(&lp);
    match sol.status {
        LpStatus::Optimal => Ok(sol.objective),
        status => Err(ReformulationError::Solver { status, context: "grid oracle" }),
    }
}

fn reads_params(f: &PwlConvexFn, d: usize) -> bool {
    f.blocks().iter().flatten().any(|p| p.coef[d..].iter().any(|a| *a != 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambiguity::{build_support_only, build_wasserstein, Metric};
    use crate::lp::DenseSimplex;

    /// One action, identity-like map: objective is `xi` itself.
    fn scalar_objective(d: usize, k: f64, c: Vec<f64>) -> StageObjective {
        StageObjective { v_next: vec![], continuation: 1.0, factor_dim: d, k: vec![k], c: vec![c] }
    }

    #[test]
    fn stage_objective_matches_direct_expansion() {
        // 2 actions, 2 successors, identity factor map
        let fm = FactorMap::identity(2, 2);
        let v = [3.0, -1.0];
        let obj = assemble_stage_objective(&v, &fm, 1.0).unwrap();
        let xi = [0.3, 0.7, 0.9, 0.1, 2.0, -1.0];
        let pi = [0.25, 0.75];
        let direct: f64 = (0..2)
            .map(|a| pi[a] * (xi[4 + a] + (0..2).map(|s| xi[2 * a + s] * v[s]).sum::<f64>()))
            .sum();
        assert!((obj.value(&pi, &xi) - direct).abs() < 1e-12);
        let v0 = assemble_stage_objective(&[0.0, 0.0], &fm, 1.0).unwrap();
        assert!((v0.value(&pi, &xi) - (0.25 * 2.0 - 0.75)).abs() < 1e-12);
        let block = obj.block_matrix();
        assert_eq!(block.len(), 4);
        assert_eq!(block[3], vec![0.0, -1.0]);
    }

    #[test]
    fn one_sample_wasserstein_transport() {
        let d = PolyhedralSet::boxed(&[0.0], &[1.0]).unwrap();
        let amb = build_wasserstein(&[vec![0.5]], 0.3, d, Metric::L1).unwrap();
        let obj = scalar_objective(1, 0.0, vec![1.0]);
        let wc = worst_case_expectation(&obj, &amb, &[1.0], &DenseSimplex::default()).unwrap();
        assert!((wc.value - 0.2).abs() < 1e-9, "{}", wc.value);
        assert!((wc.certificate.means[0][0] - 0.2).abs() < 1e-9);
        assert!(wc.certificate_residual < 1e-9);
    }

    #[test]
    fn support_only_simplex_picks_cheapest_vertex() {
        let amb = build_support_only(PolyhedralSet::simplex(3)).unwrap();
        let obj = scalar_objective(3, 0.5, vec![2.0, -1.0, 4.0]);
        let wc = worst_case_expectation(&obj, &amb, &[1.0], &DenseSimplex::default()).unwrap();
        assert!((wc.value - (0.5 - 1.0)).abs() < 1e-9);
        let m = &wc.certificate.means[0];
        assert!((m[1] - 1.0).abs() < 1e-9 && m[0].abs() < 1e-9 && m[2].abs() < 1e-9);
    }

    #[test]
    fn singleton_support_is_nominal() {
        let amb = build_support_only(PolyhedralSet::point(&[0.2, 0.8])).unwrap();
        let obj = scalar_objective(2, 1.0, vec![3.0, -2.0]);
        let sol = solve_srobust(&obj, &amb, &DenseSimplex::default()).unwrap();
        assert!((sol.value - (1.0 + 0.6 - 1.6)).abs() < 1e-12);
        assert_eq!(sol.policy, vec![1.0]);
    }

    #[test]
    fn grid_points_include_vertices_and_interior() {
        let pts = grid_points(&PolyhedralSet::boxed(&[0.0, 0.0], &[1.0, 0.5]).unwrap(), 0.25).unwrap();
        // 4 vertices + 5 x 3 grid
        assert_eq!(pts.len(), 4 + 15);
    }
}

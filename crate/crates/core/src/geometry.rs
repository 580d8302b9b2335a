//! Polyhedral sets and piecewise-linear convex functions.
//!
//! Every support set, moment set and weight set in the crate is a
//! [`PolyhedralSet`] (`A x <= b`, `C x = d`). Every `g`-function, including
//! the 1-norm and infinity-norm transport metrics, is a [`PwlConvexFn`]: a sum
//! of max-blocks of affine pieces. Together they keep every robust
//! subproblem a finite linear program.

use crate::linalg::{dot, norm2, row_space_basis, Lu};
use crate::lp::{solve_lp, LinearProgram, LpStatus, RowKind, Sense};

/// Feasibility tolerance for membership and vertex checks.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Two vertices closer than this (sup norm) are the same vertex.
pub const VERTEX_DEDUP_TOL: f64 = 1e-7;
/// Largest dimension accepted by [`PolyhedralSet::enumerate_vertices`].
pub const MAX_ENUMERATION_DIM: usize = 8;
const MAX_BASES: u128 = 5_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch { context: &'static str, expected: usize, found: usize },
    #[error("set is empty")]
    Empty,
    #[error("set not compact: coordinate {coord} is unbounded")]
    NotCompact { coord: usize },
    #[error("vertex enumeration refused: {0}")]
    EnumerationGuard(String),
    #[error("LP solver returned {0:?}")]
    Solver(LpStatus),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// `coef . x <= rhs` or `coef . x = rhs`, depending on where it is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub coef: Vec<f64>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn new(coef: Vec<f64>, rhs: f64) -> Self {
        LinearRow { coef, rhs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedralSet {
    dim: usize,
    ineq: Vec<LinearRow>,
    eq: Vec<LinearRow>,
}

/// Outcome of [`PolyhedralSet::feasibility_check`].
#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    /// `witness` is the Chebyshev center (radius capped at one).
    Feasible { witness: Vec<f64>, radius: f64 },
    Infeasible { certificate: FarkasCertificate },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible { .. })
    }
}

/// Multipliers `u >= 0`, `v` with `A^T u + C^T v = 0` and `b.u + d.v < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasCertificate {
    pub ineq: Vec<f64>,
    pub eq: Vec<f64>,
}

impl FarkasCertificate {
    /// True when the multipliers really prove `set` empty.
    pub fn proves_empty(&self, set: &PolyhedralSet, tol: f64) -> bool {
        if self.ineq.iter().any(|&u| u < -tol) {
            return false;
        }
        let mut combo = vec![0.0; set.dim];
        let mut rhs = 0.0;
        for (row, &u) in set.ineq.iter().zip(&self.ineq) {
            for (c, a) in combo.iter_mut().zip(&row.coef) {
                *c += u * a;
            }
            rhs += u * row.rhs;
        }
        for (row, &v) in set.eq.iter().zip(&self.eq) {
            for (c, a) in combo.iter_mut().zip(&row.coef) {
                *c += v * a;
            }
            rhs += v * row.rhs;
        }
        combo.iter().all(|c| c.abs() <= tol) && rhs < -tol
    }
}

impl PolyhedralSet {
    pub fn new(dim: usize, ineq: Vec<LinearRow>, eq: Vec<LinearRow>) -> Result<Self, GeometryError> {
        if dim == 0 {
            return Err(GeometryError::Invalid("dimension must be positive".into()));
        }
        for row in ineq.iter().chain(&eq) {
            if row.coef.len() != dim {
                return Err(GeometryError::DimensionMismatch {
                    context: "constraint row",
                    expected: dim,
                    found: row.coef.len(),
                });
            }
            if !row.rhs.is_finite() || row.coef.iter().any(|a| !a.is_finite()) {
                return Err(GeometryError::Invalid("non-finite constraint data".into()));
            }
        }
        Ok(PolyhedralSet { dim, ineq, eq })
    }

    /// All of `R^dim`.
    pub fn unconstrained(dim: usize) -> Self {
        PolyhedralSet { dim, ineq: Vec::new(), eq: Vec::new() }
    }

    /// `lo <= x <= hi`; infinite entries are omitted.
    pub fn boxed(lo: &[f64], hi: &[f64]) -> Result<Self, GeometryError> {
        if lo.len() != hi.len() {
            return Err(GeometryError::DimensionMismatch {
                context: "box bounds",
                expected: lo.len(),
                found: hi.len(),
            });
        }
        let dim = lo.len();
        let mut set = PolyhedralSet::unconstrained(dim);
        for i in 0..dim {
            if hi[i].is_finite() {
                set.ineq.push(LinearRow::new(unit(dim, i, 1.0), hi[i]));
            }
            if lo[i].is_finite() {
                set.ineq.push(LinearRow::new(unit(dim, i, -1.0), -lo[i]));
            }
        }
        Ok(set)
    }

    /// The probability simplex `{x >= 0, sum x = 1}`.
    pub fn simplex(dim: usize) -> Self {
        let mut set = PolyhedralSet::unconstrained(dim);
        for i in 0..dim {
            set.ineq.push(LinearRow::new(unit(dim, i, -1.0), 0.0));
        }
        set.eq.push(LinearRow::new(vec![1.0; dim], 1.0));
        set
    }

    /// The singleton `{x}`.
    pub fn point(x: &[f64]) -> Self {
        let dim = x.len();
        let mut set = PolyhedralSet::unconstrained(dim);
        for (i, &v) in x.iter().enumerate() {
            set.eq.push(LinearRow::new(unit(dim, i, 1.0), v));
        }
        set
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ineq(&self) -> &[LinearRow] {
        &self.ineq
    }

    pub fn eq(&self) -> &[LinearRow] {
        &self.eq
    }

    pub fn add_ineq(&mut self, coef: Vec<f64>, rhs: f64) -> Result<(), GeometryError> {
        self.check_row(&coef, "inequality row")?;
        self.ineq.push(LinearRow::new(coef, rhs));
        Ok(())
    }

    pub fn add_eq(&mut self, coef: Vec<f64>, rhs: f64) -> Result<(), GeometryError> {
        self.check_row(&coef, "equality row")?;
        self.eq.push(LinearRow::new(coef, rhs));
        Ok(())
    }

    pub fn with_ineq(mut self, coef: Vec<f64>, rhs: f64) -> Result<Self, GeometryError> {
        self.add_ineq(coef, rhs)?;
        Ok(self)
    }

    pub fn with_eq(mut self, coef: Vec<f64>, rhs: f64) -> Result<Self, GeometryError> {
        self.add_eq(coef, rhs)?;
        Ok(self)
    }

    /// Intersection of two sets of the same dimension.
    pub fn intersect(&self, other: &PolyhedralSet) -> Result<Self, GeometryError> {
        if self.dim != other.dim {
            return Err(GeometryError::DimensionMismatch {
                context: "intersection",
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut out = self.clone();
        out.ineq.extend(other.ineq.iter().cloned());
        out.eq.extend(other.eq.iter().cloned());
        Ok(out)
    }

    fn check_row(&self, coef: &[f64], context: &'static str) -> Result<(), GeometryError> {
        if coef.len() != self.dim {
            return Err(GeometryError::DimensionMismatch { context, expected: self.dim, found: coef.len() });
        }
        Ok(())
    }

    /// Largest constraint violation at `x` (zero when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let a = self.ineq.iter().map(|r| (dot(&r.coef, x) - r.rhs).max(0.0));
        let e = self.eq.iter().map(|r| (dot(&r.coef, x) - r.rhs).abs());
        a.chain(e).fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim && self.max_violation(x) <= tol
    }

    /// Appends the set's rows to `lp` over the variables `vars`.
    pub(crate) fn push_rows(&self, lp: &mut LinearProgram, vars: &[usize]) {
        for r in &self.ineq {
            lp.add_row(zip_coefs(vars, &r.coef), RowKind::Le, r.rhs);
        }
        for r in &self.eq {
            lp.add_row(zip_coefs(vars, &r.coef), RowKind::Eq, r.rhs);
        }
    }

    /// Optimizes `c . x` over the set. Returns the optimal value and point.
    pub fn optimize_linear(&self, c: &[f64], sense: Sense) -> Result<(f64, Vec<f64>), GeometryError> {
        self.check_row(c, "linear objective")?;
        let mut lp = LinearProgram::new(sense);
        let vars: Vec<usize> = c.iter().map(|&ci| lp.add_var(f64::NEG_INFINITY, f64::INFINITY, ci)).collect();
        self.push_rows(&mut lp, &vars);
        let sol = solve_lp(&lp);
        match sol.status {
            LpStatus::Optimal => Ok((sol.objective, sol.primal)),
            LpStatus::Infeasible => Err(GeometryError::Empty),
            LpStatus::Unbounded => {
                let coord = c.iter().position(|v| *v != 0.0).unwrap_or(0);
                Err(GeometryError::NotCompact { coord })
            }
            s => Err(GeometryError::Solver(s)),
        }
    }

    /// Nonemptiness test with a witness or a Farkas certificate.
    pub fn feasibility_check(&self) -> Feasibility {
        if let Some((center, radius)) = self.chebyshev_center() {
            return Feasibility::Feasible { witness: center, radius };
        }
        Feasibility::Infeasible { certificate: self.farkas_certificate() }
    }

    /// Chebyshev center within the affine hull of the equality rows, with the
    /// radius capped at one so unbounded sets still produce a point.
    pub fn chebyshev_center(&self) -> Option<(Vec<f64>, f64)> {
        let eq_rows: Vec<Vec<f64>> = self.eq.iter().map(|r| r.coef.clone()).collect();
        let basis = row_space_basis(&eq_rows, 1e-12);
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x: Vec<usize> = (0..self.dim)
            .map(|_| lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0))
            .collect();
        let r = lp.add_var(0.0, 1.0, 1.0);
        for row in &self.ineq {
            let mut proj = row.coef.clone();
            for q in &basis {
                let p = dot(&proj, q);
                for (a, qi) in proj.iter_mut().zip(q) {
                    *a -= p * qi;
                }
            }
            let mut coefs = zip_coefs(&x, &row.coef);
            coefs.push((r, norm2(&proj)));
            lp.add_row(coefs, RowKind::Le, row.rhs);
        }
        for row in &self.eq {
            lp.add_row(zip_coefs(&x, &row.coef), RowKind::Eq, row.rhs);
        }
        let sol = solve_lp(&lp);
        if sol.status != LpStatus::Optimal {
            return None;
        }
        let center = sol.primal[..self.dim].to_vec();
        Some((center, sol.primal[r]))
    }

    fn farkas_certificate(&self) -> FarkasCertificate {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let u: Vec<usize> = self.ineq.iter().map(|r| lp.add_var(0.0, 1.0, r.rhs)).collect();
        let v: Vec<usize> = self.eq.iter().map(|r| lp.add_var(-1.0, 1.0, r.rhs)).collect();
        for k in 0..self.dim {
            let mut coefs: Vec<(usize, f64)> = Vec::new();
            for (row, &ui) in self.ineq.iter().zip(&u) {
                coefs.push((ui, row.coef[k]));
            }
            for (row, &vi) in self.eq.iter().zip(&v) {
                coefs.push((vi, row.coef[k]));
            }
            lp.add_row(coefs, RowKind::Eq, 0.0);
        }
        let sol = solve_lp(&lp);
        if sol.status != LpStatus::Optimal {
            return FarkasCertificate { ineq: vec![0.0; u.len()], eq: vec![0.0; v.len()] };
        }
        FarkasCertificate {
            ineq: u.iter().map(|&i| sol.primal[i]).collect(),
            eq: v.iter().map(|&i| sol.primal[i]).collect(),
        }
    }

    /// Per-coordinate `[min, max]` via `2 * dim` LP solves.
    pub fn bounding_box(&self) -> Result<Vec<(f64, f64)>, GeometryError> {
        let mut out = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            let e = unit(self.dim, i, 1.0);
            let lo = self.optimize_linear(&e, Sense::Minimize).map_err(|err| relabel(err, i))?.0;
            let hi = self.optimize_linear(&e, Sense::Maximize).map_err(|err| relabel(err, i))?.0;
            out.push((lo, hi));
        }
        Ok(out)
    }

    /// True when the bounding box has zero width in every coordinate.
    pub fn is_singleton(&self, tol: f64) -> Result<bool, GeometryError> {
        Ok(self.bounding_box()?.iter().all(|(lo, hi)| hi - lo <= tol))
    }

    /// All basic feasible solutions, deduplicated at [`VERTEX_DEDUP_TOL`].
    pub fn enumerate_vertices(&self) -> Result<VertexList, GeometryError> {
        if self.dim > MAX_ENUMERATION_DIM {
            return Err(GeometryError::EnumerationGuard(format!(
                "dimension {} exceeds {}",
                self.dim, MAX_ENUMERATION_DIM
            )));
        }
        if !self.feasibility_check().is_feasible() {
            return Err(GeometryError::Empty);
        }
        self.bounding_box()?;

        // independent subset of the equality rows
        let mut eq_sel: Vec<&LinearRow> = Vec::new();
        let mut seen: Vec<Vec<f64>> = Vec::new();
        for row in &self.eq {
            let mut trial = seen.clone();
            trial.push(row.coef.clone());
            if row_space_basis(&trial, 1e-10).len() > seen.len() {
                seen.push(row.coef.clone());
                eq_sel.push(row);
            }
        }
        let k = self.dim - eq_sel.len();
        let m = self.ineq.len();
        if binomial(m, k) > MAX_BASES {
            return Err(GeometryError::EnumerationGuard(format!("{} candidate bases", binomial(m, k))));
        }

        let mut vertices: Vec<Vec<f64>> = Vec::new();
        let n = self.dim;
        let mut combo: Vec<usize> = (0..k).collect();
        loop {
            if k <= m {
                let mut mat = Vec::with_capacity(n * n);
                let mut rhs = Vec::with_capacity(n);
                for row in &eq_sel {
                    mat.extend_from_slice(&row.coef);
                    rhs.push(row.rhs);
                }
                for &i in &combo {
                    mat.extend_from_slice(&self.ineq[i].coef);
                    rhs.push(self.ineq[i].rhs);
                }
                if let Some(lu) = Lu::factor(mat, n, 1e-11) {
                    let x = lu.solve(&rhs);
                    if self.contains(&x, MEMBERSHIP_TOL)
                        && !vertices.iter().any(|v| sup_dist(v, &x) <= VERTEX_DEDUP_TOL)
                    {
                        vertices.push(x);
                    }
                }
            }
            if !next_combination(&mut combo, m) {
                break;
            }
        }
        Ok(VertexList { dim: n, vertices })
    }
}

fn relabel(err: GeometryError, coord: usize) -> GeometryError {
    match err {
        GeometryError::NotCompact { .. } => GeometryError::NotCompact { coord },
        other => other,
    }
}

pub(crate) fn unit(dim: usize, i: usize, v: f64) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[i] = v;
    e
}

pub(crate) fn zip_coefs(vars: &[usize], coef: &[f64]) -> Vec<(usize, f64)> {
    vars.iter().zip(coef).filter(|(_, a)| **a != 0.0).map(|(&j, &a)| (j, a)).collect()
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in (i + 1)..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Vertices of a bounded polyhedron.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexList {
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
}

impl VertexList {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Keeps the first `k` coordinates of every vertex, deduplicating. The
    /// result contains every vertex of the projected polytope.
    pub fn project(&self, k: usize) -> VertexList {
        let mut out: Vec<Vec<f64>> = Vec::new();
        for v in &self.vertices {
            let p = v[..k].to_vec();
            if !out.iter().any(|w| sup_dist(w, &p) <= VERTEX_DEDUP_TOL) {
                out.push(p);
            }
        }
        VertexList { dim: k, vertices: out }
    }
}

/// One affine piece `coef . x + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePiece {
    pub coef: Vec<f64>,
    pub constant: f64,
}

impl AffinePiece {
    pub fn new(coef: Vec<f64>, constant: f64) -> Self {
        AffinePiece { coef, constant }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.coef, x) + self.constant
    }
}

/// `f(x) = sum over blocks of max over pieces of (a . x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PwlConvexFn {
    dim: usize,
    blocks: Vec<Vec<AffinePiece>>,
}

impl PwlConvexFn {
    pub fn new(dim: usize, blocks: Vec<Vec<AffinePiece>>) -> Result<Self, GeometryError> {
        for block in &blocks {
            if block.is_empty() {
                return Err(GeometryError::Invalid("empty max-block".into()));
            }
            for piece in block {
                if piece.coef.len() != dim {
                    return Err(GeometryError::DimensionMismatch {
                        context: "affine piece",
                        expected: dim,
                        found: piece.coef.len(),
                    });
                }
            }
        }
        Ok(PwlConvexFn { dim, blocks })
    }

    pub fn affine(coef: Vec<f64>, constant: f64) -> Self {
        PwlConvexFn { dim: coef.len(), blocks: vec![vec![AffinePiece::new(coef, constant)]] }
    }

    /// `|coef . x + constant|`.
    pub fn abs_affine(coef: Vec<f64>, constant: f64) -> Self {
        let neg: Vec<f64> = coef.iter().map(|a| -a).collect();
        PwlConvexFn {
            dim: coef.len(),
            blocks: vec![vec![AffinePiece::new(coef, constant), AffinePiece::new(neg, -constant)]],
        }
    }

    /// `||x - anchor||_1`: one two-piece block per coordinate.
    pub fn l1_distance(anchor: &[f64]) -> Self {
        let dim = anchor.len();
        let blocks = (0..dim)
            .map(|i| {
                vec![
                    AffinePiece::new(unit(dim, i, 1.0), -anchor[i]),
                    AffinePiece::new(unit(dim, i, -1.0), anchor[i]),
                ]
            })
            .collect();
        PwlConvexFn { dim, blocks }
    }

    /// `||x - anchor||_inf`: a single block with `2 * dim` pieces.
    pub fn linf_distance(anchor: &[f64]) -> Self {
        let dim = anchor.len();
        let mut block = Vec::with_capacity(2 * dim);
        for i in 0..dim {
            block.push(AffinePiece::new(unit(dim, i, 1.0), -anchor[i]));
            block.push(AffinePiece::new(unit(dim, i, -1.0), anchor[i]));
        }
        PwlConvexFn { dim, blocks: vec![block] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[Vec<AffinePiece>] {
        &self.blocks
    }

    /// Appends `extra` zero-coefficient coordinates to every piece.
    pub fn pad(&self, extra: usize) -> PwlConvexFn {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                b.iter()
                    .map(|p| {
                        let mut coef = p.coef.clone();
                        coef.extend(std::iter::repeat(0.0).take(extra));
                        AffinePiece::new(coef, p.constant)
                    })
                    .collect()
            })
            .collect();
        PwlConvexFn { dim: self.dim + extra, blocks }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, GeometryError> {
        if x.len() != self.dim {
            return Err(GeometryError::DimensionMismatch {
                context: "pwl evaluation",
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.iter().map(|p| p.eval(x)).fold(f64::NEG_INFINITY, f64::max))
            .sum()
    }
}

/// Evaluates `f` at `x`.
pub fn pwl_eval(f: &PwlConvexFn, x: &[f64]) -> Result<f64, GeometryError> {
    f.eval(x)
}

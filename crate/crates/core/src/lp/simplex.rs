//! Two-phase dense tableau simplex.
//!
//! Pricing is Dantzig (most negative reduced cost) until a phase has spent
//! `3 * (rows + cols)` pivots, after which Bland's rule takes over so that
//! degenerate cycling cannot continue. The final basis is refactored from the
//! original data to clean up accumulated round-off in both the primal point
//! and the duals.

use super::{LinearProgram, LpBackend, LpSolution, LpStatus, RowKind, Sense, PIVOT_TOL};
use crate::linalg::Lu;

#[derive(Debug, Clone)]
pub struct DenseSimplex {
    /// Hard cap on pivots per solve; `None` picks a size-dependent default.
    pub max_iterations: Option<usize>,
}

impl Default for DenseSimplex {
    fn default() -> Self {
        DenseSimplex { max_iterations: None }
    }
}

impl LpBackend for DenseSimplex {
    fn solve(&self, lp: &LinearProgram) -> LpSolution {
        if lp.check().is_err() {
            return LpSolution::failed(LpStatus::NumericalFailure, lp.num_vars(), lp.num_rows(), 0);
        }
        let sf = StandardForm::build(lp);
        let cap = self
            .max_iterations
            .unwrap_or(50 * (sf.m + sf.width) + 1000);
        sf.solve(lp, cap)
    }
}

#[derive(Debug, Clone, Copy)]
enum VarMap {
    Fixed(f64),
    /// x = lo + col
    Shift(usize, f64),
    /// x = hi - col
    Flip(usize, f64),
    /// x = pos - neg
    Split(usize, usize),
}

struct StandardForm {
    m: usize,
    /// rows of the original program (bound rows come after)
    m_orig: usize,
    n_struct: usize,
    /// total columns excluding rhs
    width: usize,
    /// first artificial column; columns at or past it never re-enter
    art_start: usize,
    map: Vec<VarMap>,
    /// dense `m x (width + 1)` initial tableau, rhs last
    a0: Vec<f64>,
    cost: Vec<f64>,
    /// initial basic column of every row
    init_basis: Vec<usize>,
    row_sign: Vec<f64>,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Self {
        let dir = if lp.sense == Sense::Maximize { -1.0 } else { 1.0 };
        let mut map = Vec::with_capacity(lp.num_vars());
        let mut n_struct = 0;
        let mut bound_rows: Vec<(usize, f64)> = Vec::new();
        let mut struct_cost: Vec<f64> = Vec::new();
        for j in 0..lp.num_vars() {
            let (lo, hi, c) = (lp.lower[j], lp.upper[j], dir * lp.cost[j]);
            let vm = if lo == hi {
                VarMap::Fixed(lo)
            } else if lo.is_finite() {
                let col = n_struct;
                n_struct += 1;
                struct_cost.push(c);
                if hi.is_finite() {
                    bound_rows.push((col, hi - lo));
                }
                VarMap::Shift(col, lo)
            } else if hi.is_finite() {
                let col = n_struct;
                n_struct += 1;
                struct_cost.push(-c);
                VarMap::Flip(col, hi)
            } else {
                let (p, q) = (n_struct, n_struct + 1);
                n_struct += 2;
                struct_cost.push(c);
                struct_cost.push(-c);
                VarMap::Split(p, q)
            };
            map.push(vm);
        }

        let m_orig = lp.num_rows();
        let m = m_orig + bound_rows.len();
        let mut dense = vec![0.0; m * n_struct];
        let mut rhs = vec![0.0; m];
        let mut kinds = Vec::with_capacity(m);
        for (i, row) in lp.rows.iter().enumerate() {
            let mut b = row.rhs;
            for &(j, a) in &row.coefs {
                match map[j] {
                    VarMap::Fixed(v) => b -= a * v,
                    VarMap::Shift(col, lo) => {
                        dense[i * n_struct + col] += a;
                        b -= a * lo;
                    }
                    VarMap::Flip(col, hi) => {
                        dense[i * n_struct + col] -= a;
                        b -= a * hi;
                    }
                    VarMap::Split(p, q) => {
                        dense[i * n_struct + p] += a;
                        dense[i * n_struct + q] -= a;
                    }
                }
            }
            rhs[i] = b;
            kinds.push(row.kind);
        }
        for (k, &(col, ub)) in bound_rows.iter().enumerate() {
            let i = m_orig + k;
            dense[i * n_struct + col] = 1.0;
            rhs[i] = ub;
            kinds.push(RowKind::Le);
        }

        let n_slack = kinds.iter().filter(|k| **k != RowKind::Eq).count();
        let mut row_sign = vec![1.0; m];
        let mut slack_of = vec![usize::MAX; m];
        let mut slack_coef = vec![0.0; m];
        let mut next = n_struct;
        for i in 0..m {
            if kinds[i] != RowKind::Eq {
                slack_of[i] = next;
                slack_coef[i] = if kinds[i] == RowKind::Le { 1.0 } else { -1.0 };
                next += 1;
            }
            if rhs[i] < 0.0 {
                row_sign[i] = -1.0;
            }
        }
        let art_start = n_struct + n_slack;
        let needs_art: Vec<bool> = (0..m)
            .map(|i| !(slack_of[i] != usize::MAX && slack_coef[i] * row_sign[i] > 0.0))
            .collect();
        let n_art = needs_art.iter().filter(|b| **b).count();
        let width = art_start + n_art;
        let stride = width + 1;
        let mut a0 = vec![0.0; m * stride];
        let mut init_basis = vec![0; m];
        let mut next_art = art_start;
        for i in 0..m {
            let s = row_sign[i];
            let row = &mut a0[i * stride..(i + 1) * stride];
            for j in 0..n_struct {
                row[j] = s * dense[i * n_struct + j];
            }
            if slack_of[i] != usize::MAX {
                row[slack_of[i]] = s * slack_coef[i];
            }
            row[width] = s * rhs[i];
            if needs_art[i] {
                row[next_art] = 1.0;
                init_basis[i] = next_art;
                next_art += 1;
            } else {
                init_basis[i] = slack_of[i];
            }
        }
        let mut cost = vec![0.0; width];
        cost[..n_struct].copy_from_slice(&struct_cost);

        StandardForm {
            m,
            m_orig,
            n_struct,
            width,
            art_start,
            map,
            a0,
            cost,
            init_basis,
            row_sign,
        }
    }

    fn solve(&self, lp: &LinearProgram, cap: usize) -> LpSolution {
        let (m, w) = (self.m, self.width);
        let mut tab = Tableau {
            m,
            stride: w + 1,
            t: self.a0.clone(),
            obj: vec![0.0; w + 1],
            basis: self.init_basis.clone(),
        };
        let mut iterations = 0;
        let fail = |status, it| LpSolution::failed(status, lp.num_vars(), lp.num_rows(), it);

        // phase 1: minimize the sum of artificials
        if self.art_start < w {
            let mut c1 = vec![0.0; w];
            for c in c1.iter_mut().skip(self.art_start) {
                *c = 1.0;
            }
            tab.price(&c1);
            match tab.run(&self.a0, &c1, self.width, 1.0, cap, &mut iterations) {
                Phase::Optimal => {}
                Phase::Unbounded => return fail(LpStatus::NumericalFailure, iterations),
                Phase::Stalled => return fail(LpStatus::NumericalFailure, iterations),
            }
            let bmax = (0..m).map(|i| self.a0[i * (w + 1) + w].abs()).fold(0.0, f64::max);
            let mut infeas = -tab.obj[w];
            if infeas > PIVOT_TOL * (1.0 + bmax) && tab.reinvert(&self.a0, &c1) {
                // rule out round-off before declaring infeasibility
                match tab.run(&self.a0, &c1, self.width, 1.0, cap, &mut iterations) {
                    Phase::Optimal => infeas = -tab.obj[w],
                    _ => return fail(LpStatus::NumericalFailure, iterations),
                }
            }
            if infeas > PIVOT_TOL * (1.0 + bmax) {
                return fail(LpStatus::Infeasible, iterations);
            }
            // drive remaining artificials out where possible
            for r in 0..m {
                if tab.basis[r] < self.art_start {
                    continue;
                }
                let row = &tab.t[r * tab.stride..r * tab.stride + self.art_start];
                let mut best = (usize::MAX, PIVOT_TOL);
                for (j, &v) in row.iter().enumerate() {
                    if v.abs() > best.1 {
                        best = (j, v.abs());
                    }
                }
                if best.0 != usize::MAX {
                    tab.pivot(r, best.0);
                }
            }
        }

        // phase 2
        let cmax = self.cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        tab.price(&self.cost);
        let mut attempts = 0;
        let (xb, y) = loop {
            match tab.run(&self.a0, &self.cost, self.art_start, 1.0 + cmax, cap, &mut iterations) {
                Phase::Optimal => {}
                Phase::Unbounded => return fail(LpStatus::Unbounded, iterations),
                Phase::Stalled => return fail(LpStatus::NumericalFailure, iterations),
            }
            let (xb, y) = self.refine(&tab);
            attempts += 1;
            if attempts >= 3 || self.verified(&tab.basis, &xb, &y, bmax_of(&self.a0, m, w), 1.0 + cmax) {
                break (xb, y);
            }
            // the tableau has drifted from the data: refactor and keep pivoting
            if !tab.reinvert(&self.a0, &self.cost) {
                break (xb, y);
            }
        };
        let mut xs = vec![0.0; self.n_struct];
        for (i, &col) in tab.basis.iter().enumerate() {
            if col < self.n_struct {
                xs[col] = xb[i].max(0.0);
            }
        }
        let primal: Vec<f64> = self
            .map
            .iter()
            .map(|vm| match *vm {
                VarMap::Fixed(v) => v,
                VarMap::Shift(c, lo) => lo + xs[c],
                VarMap::Flip(c, hi) => hi - xs[c],
                VarMap::Split(p, q) => xs[p] - xs[q],
            })
            .collect();
        let dir = if lp.sense == Sense::Maximize { -1.0 } else { 1.0 };
        let dual: Vec<f64> = (0..self.m_orig).map(|i| dir * self.row_sign[i] * y[i]).collect();
        let objective = lp.objective_at(&primal);
        LpSolution { status: LpStatus::Optimal, primal, dual, objective, iterations }
    }

    /// Primal feasibility of `x_B` and dual feasibility of `y`, both
    /// recomputed from the original data.
    fn verified(&self, basis: &[usize], xb: &[f64], y: &[f64], bscale: f64, cscale: f64) -> bool {
        let stride = self.width + 1;
        if xb.iter().zip(basis).any(|(&x, _)| !(x >= -1e-7 * (1.0 + bscale))) {
            return false;
        }
        (0..self.art_start).all(|j| {
            let mut d = self.cost[j];
            for (i, yi) in y.iter().enumerate() {
                let a = self.a0[i * stride + j];
                if a != 0.0 {
                    d -= yi * a;
                }
            }
            d >= -1e-7 * cscale
        })
    }

    /// Re-solves `B x_B = b` and `B^T y = c_B` from the original data.
    fn refine(&self, tab: &Tableau) -> (Vec<f64>, Vec<f64>) {
        let (m, stride) = (self.m, self.width + 1);
        let mut bmat = vec![0.0; m * m];
        for (k, &col) in tab.basis.iter().enumerate() {
            for i in 0..m {
                bmat[i * m + k] = self.a0[i * stride + col];
            }
        }
        let b: Vec<f64> = (0..m).map(|i| self.a0[i * stride + self.width]).collect();
        let cb: Vec<f64> = tab.basis.iter().map(|&c| self.cost[c]).collect();
        match Lu::factor(bmat, m, 1e-13) {
            Some(lu) => (lu.solve(&b), lu.solve_transpose(&cb)),
            None => {
                // reduced cost of the initial basic column gives -y directly
                let xb = (0..m).map(|i| tab.t[i * stride + self.width]).collect();
                let y = self.init_basis.iter().map(|&c| self.cost[c] - tab.obj[c]).collect();
                (xb, y)
            }
        }
    }
}

fn bmax_of(a0: &[f64], m: usize, w: usize) -> f64 {
    (0..m).map(|i| a0[i * (w + 1) + w].abs()).fold(0.0, f64::max)
}

enum Phase {
    Optimal,
    Unbounded,
    Stalled,
}

/// Pivots between refactorizations of the tableau from the original data.
const REINVERT_EVERY: usize = 512;
/// Primal slack allowed by the Harris ratio test.
const HARRIS_TOL: f64 = 1e-9;

struct Tableau {
    m: usize,
    stride: usize,
    t: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn price(&mut self, cost: &[f64]) {
        let w = self.stride - 1;
        self.obj[..w].copy_from_slice(cost);
        self.obj[w] = 0.0;
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.t[i * self.stride..(i + 1) * self.stride];
            for (o, &v) in self.obj.iter_mut().zip(row) {
                *o -= cb * v;
            }
        }
    }

    /// Recomputes `B^-1 [A | b]` from the initial tableau and reprices.
    /// Leaves the tableau alone if the basis is numerically singular.
    fn reinvert(&mut self, a0: &[f64], cost: &[f64]) -> bool {
        let (m, s) = (self.m, self.stride);
        let mut bmat = vec![0.0; m * m];
        for (k, &col) in self.basis.iter().enumerate() {
            for i in 0..m {
                bmat[i * m + k] = a0[i * s + col];
            }
        }
        let Some(lu) = Lu::factor(bmat, m, 1e-12) else {
            return false;
        };
        let mut col = vec![0.0; m];
        for j in 0..s {
            let mut any = false;
            for i in 0..m {
                col[i] = a0[i * s + j];
                any |= col[i] != 0.0;
            }
            let x = if any { lu.solve(&col) } else { vec![0.0; m] };
            for i in 0..m {
                self.t[i * s + j] = x[i];
            }
        }
        // basic columns are exact unit vectors
        for (i, &c) in self.basis.iter().enumerate() {
            for k in 0..m {
                self.t[k * s + c] = if k == i { 1.0 } else { 0.0 };
            }
        }
        self.price(cost);
        true
    }

    /// Pivots until optimal over columns `< allowed`.
    #[allow(clippy::too_many_arguments)]
    fn run(&mut self, a0: &[f64], cost: &[f64], allowed: usize, scale: f64, cap: usize, iterations: &mut usize) -> Phase {
        let w = self.stride - 1;
        let opt_tol = PIVOT_TOL * scale;
        let bland_after = 3 * (self.m + w);
        let mut local = 0usize;
        let mut since_reinvert = 0usize;
        loop {
            if *iterations >= cap {
                return Phase::Stalled;
            }
            if since_reinvert >= REINVERT_EVERY {
                self.reinvert(a0, cost);
                since_reinvert = 0;
            }
            let bland = local >= bland_after;
            let mut q = usize::MAX;
            let mut best = -opt_tol;
            for j in 0..allowed {
                let d = self.obj[j];
                if d < best {
                    q = j;
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            if q == usize::MAX {
                return Phase::Optimal;
            }
            let r = match self.ratio_test(q, bland) {
                Some(r) => r,
                None if since_reinvert > 0 => {
                    // likely round-off: refactor and price again
                    if !self.reinvert(a0, cost) {
                        return Phase::Unbounded;
                    }
                    since_reinvert = 0;
                    continue;
                }
                None => return Phase::Unbounded,
            };
            self.pivot(r, q);
            *iterations += 1;
            local += 1;
            since_reinvert += 1;
        }
    }

    /// Harris two-pass ratio test: among rows whose ratio is within the
    /// primal tolerance of the minimum, take the largest pivot. Under
    /// Bland's rule the exact minimum ratio with the lowest basic index wins.
    fn ratio_test(&self, q: usize, bland: bool) -> Option<usize> {
        let (w, s) = (self.stride - 1, self.stride);
        let colmax = (0..self.m).map(|i| self.t[i * s + q].abs()).fold(0.0, f64::max);
        let piv_tol = PIVOT_TOL * colmax.max(1.0);
        let entry = |i: usize| (self.t[i * s + q], self.t[i * s + w].max(0.0));
        if bland {
            let mut r: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let (a, b) = entry(i);
                if a <= piv_tol {
                    continue;
                }
                let ratio = b / a;
                r = match r {
                    None => Some((i, ratio)),
                    Some((k, best)) => {
                        let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                        if (ratio < best && !tie) || (tie && self.basis[i] < self.basis[k]) {
                            Some((i, ratio))
                        } else {
                            Some((k, best))
                        }
                    }
                };
            }
            return r.map(|(i, _)| i);
        }
        let mut bound = f64::INFINITY;
        for i in 0..self.m {
            let (a, b) = entry(i);
            if a > piv_tol {
                bound = bound.min((b + HARRIS_TOL) / a);
            }
        }
        if !bound.is_finite() {
            return None;
        }
        let mut r = None;
        let mut best_piv = 0.0;
        for i in 0..self.m {
            let (a, b) = entry(i);
            if a > piv_tol && b / a <= bound && a > best_piv {
                r = Some(i);
                best_piv = a;
            }
        }
        r
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let s = self.stride;
        let p = self.t[r * s + q];
        let inv = 1.0 / p;
        let mut nz: Vec<usize> = Vec::with_capacity(s);
        {
            let row = &mut self.t[r * s..(r + 1) * s];
            for (j, v) in row.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v *= inv;
                    nz.push(j);
                }
            }
            row[q] = 1.0;
        }
        let (before, rest) = self.t.split_at_mut(r * s);
        let (prow, after) = rest.split_at_mut(s);
        let eliminate = |row: &mut [f64]| {
            let f = row[q];
            if f != 0.0 {
                for &j in &nz {
                    row[j] -= f * prow[j];
                }
                row[q] = 0.0;
            }
        };
        for row in before.chunks_mut(s) {
            eliminate(row);
        }
        for row in after.chunks_mut(s) {
            eliminate(row);
        }
        eliminate(&mut self.obj);
        self.basis[r] = q;
    }
}

//! Dense simplex for linear programs in inequality form
//!
//! ```text
//!     minimize    c' x
//!     subject to  A x <= b        (x free)
//! ```
//!
//! The tableau works on the dual standard form `min b'y  s.t.  A'y = -c, y >= 0`, which
//! has one row per primal variable. Identification problems have thousands of
//! constraints but fewer than twenty variables, so the tableau stays short and wide.
//! Pricing is Dantzig with lowest-index ties; after a streak of degenerate pivots the
//! phase switches to Bland's rule for the rest of the run.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

const DEGENERATE_STREAK: usize = 50;
const PIVOT_TOL: f64 = 1e-10;
const UNBOUNDED_RC: f64 = 1e-7;
const HARRIS_TOL: f64 = 1e-9;
/// Pivots between refactorizations of the tableau from the original data.
const REINVERT_EVERY: usize = 32;

#[derive(Debug, Clone)]
pub struct LpProblem {
    pub c: Vector,
    pub a: Mat,
    pub b: Vector,
}

impl LpProblem {
    pub fn new(c: Vector, a: Mat, b: Vector) -> Result<Self> {
        if a.ncols() != c.len() {
            return Err(Error::DimensionMismatch {
                what: "LP constraint columns",
                expected: c.len(),
                found: a.ncols(),
            });
        }
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch {
                what: "LP offsets",
                expected: a.nrows(),
                found: b.len(),
            });
        }
        if c.iter().chain(a.iter()).chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("LP data must be finite".into()));
        }
        Ok(LpProblem { c, a, b })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal point, or a feasible point when unbounded; empty when infeasible.
    pub x: Vector,
    pub value: f64,
    /// Optimal multipliers `y >= 0` with `A'y = -c`; for infeasible problems a Farkas
    /// ray with `A'y = 0`, `b'y < 0`.
    pub dual: Vector,
    /// Recession direction with `A d <= 0`, `c'd < 0` for unbounded problems.
    pub ray: Option<Vector>,
    /// Constraint indices of the optimal basis.
    pub basis: Vec<usize>,
    pub pivots: usize,
}

struct Tableau {
    rows: usize,
    width: usize,
    data: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
    /// Standard-form rows `[A' | I | rhs]` the tableau is `B⁻¹` times.
    orig: Vec<f64>,
    /// Phase cost per column; the last entry is unused.
    cost: Vec<f64>,
    since_reinvert: usize,
}

enum PhaseEnd {
    Optimal,
    Unbounded(usize),
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.width - 1)
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let w = self.width;
        let inv = 1.0 / self.data[r * w + col];
        for v in &mut self.data[r * w..(r + 1) * w] {
            *v *= inv;
        }
        self.data[r * w + col] = 1.0;
        let (before, rest) = self.data.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[col];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * p;
                }
                row[col] = 0.0;
            }
        }
        let f = self.obj[col];
        if f != 0.0 {
            for (v, p) in self.obj.iter_mut().zip(prow.iter()) {
                *v -= f * p;
            }
            self.obj[col] = 0.0;
        }
        for i in 0..self.rows {
            let rhs = &mut self.data[i * w + w - 1];
            if *rhs < 0.0 {
                *rhs = 0.0;
            }
        }
        self.basis[r] = col;
        self.pivots += 1;
        self.since_reinvert += 1;
        if self.since_reinvert >= REINVERT_EVERY {
            self.reinvert();
        }
    }

    /// Recomputes the tableau and reduced costs for the current basis from the
    /// original rows, discarding accumulated elimination error. Keeps the
    /// current tableau when the basis matrix is numerically singular.
    fn reinvert(&mut self) -> bool {
        let (n, w) = (self.rows, self.width);
        let bmat = Mat::from_fn(n, n, |i, k| self.orig[i * w + self.basis[k]]);
        let full = Mat::from_fn(n, w, |i, j| self.orig[i * w + j]);
        let Some(x) = bmat.lu().solve(&full) else {
            return false;
        };
        if x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        for k in 0..n {
            for j in 0..w {
                self.data[k * w + j] = x[(k, j)];
            }
            for (kk, &bj) in self.basis.iter().enumerate() {
                self.data[k * w + bj] = if kk == k { 1.0 } else { 0.0 };
            }
            let rhs = &mut self.data[k * w + w - 1];
            if *rhs < 0.0 {
                *rhs = 0.0;
            }
        }
        for j in 0..w {
            let mut v = if j + 1 < w { self.cost[j] } else { 0.0 };
            for k in 0..n {
                v -= self.cost[self.basis[k]] * self.data[k * w + j];
            }
            self.obj[j] = v;
        }
        for &bj in &self.basis {
            self.obj[bj] = 0.0;
        }
        self.since_reinvert = 0;
        true
    }

    /// Runs simplex iterations over columns `0..allowed`.
    fn run(&mut self, allowed: usize, rc_tol: f64, max_pivots: usize) -> Result<PhaseEnd> {
        let mut streak = 0usize;
        let mut bland = false;
        // Columns whose negative reduced cost is noise-level and that have no pivot entry.
        let mut skipped = vec![false; allowed];
        loop {
            if self.pivots >= max_pivots {
                return Err(Error::NonConvergence {
                    what: "simplex",
                    iterations: max_pivots,
                });
            }
            let mut enter = None;
            let mut best = -rc_tol;
            for j in 0..allowed {
                let rc = self.obj[j];
                if rc < best && !skipped[j] {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(col) = enter else {
                // Confirm optimality on a freshly factored tableau.
                if self.since_reinvert > 0 && self.reinvert() {
                    skipped.iter_mut().for_each(|v| *v = false);
                    continue;
                }
                return Ok(PhaseEnd::Optimal);
            };
            // Harris ratio test: bound the step with a small feasibility relaxation,
            // then take the largest pivot element among rows within that bound.
            let mut bound = f64::INFINITY;
            for i in 0..self.rows {
                let a = self.at(i, col);
                if a > PIVOT_TOL {
                    bound = bound.min((self.rhs(i).max(0.0) + HARRIS_TOL) / a);
                }
            }
            let mut leave: Option<usize> = None;
            let mut best_pivot = 0.0;
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.rows {
                let a = self.at(i, col);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i).max(0.0) / a;
                    if ratio <= bound {
                        let better = match leave {
                            None => true,
                            Some(l) => a > best_pivot * (1.0 + 1e-12) || (a >= best_pivot * (1.0 - 1e-12) && self.basis[i] < self.basis[l]),
                        };
                        if better {
                            leave = Some(i);
                            best_pivot = a;
                            best_ratio = ratio;
                        }
                    }
                }
            }
            let Some(r) = leave else {
                if self.obj[col] < -UNBOUNDED_RC {
                    return Ok(PhaseEnd::Unbounded(col));
                }
                skipped[col] = true;
                continue;
            };
            skipped.iter_mut().for_each(|v| *v = false);
            if best_ratio <= 1e-14 {
                streak += 1;
                if streak >= DEGENERATE_STREAK {
                    bland = true;
                }
            } else {
                streak = 0;
            }
            self.pivot(r, col);
        }
    }
}

/// Solves `min c'x s.t. Ax <= b` with `x` free.
pub fn solve_lp(p: &LpProblem, tol: f64) -> Result<LpSolution> {
    let n = p.c.len();
    let m = p.b.len();
    if n == 0 {
        return Ok(trivial_zero_var(p, tol));
    }
    let bscale = 1.0 + p.b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let cscale = 1.0 + p.c.iter().map(|v| v.abs()).fold(0.0, f64::max);

    // Row i of the standard form: (A' row i) y = -c_i, sign-normalized and scaled.
    let width = m + n + 1;
    let mut data = vec![0.0; n * width];
    for i in 0..n {
        let q = -p.c[i];
        let sign = if q < 0.0 { -1.0 } else { 1.0 };
        let rowmax = p.a.column(i).iter().map(|v| v.abs()).fold(q.abs(), f64::max);
        let s = if rowmax > 0.0 { sign / rowmax } else { sign };
        let row = &mut data[i * width..(i + 1) * width];
        for j in 0..m {
            row[j] = s * p.a[(j, i)];
        }
        row[m + i] = 1.0;
        row[width - 1] = s * q;
    }
    let mut obj = vec![0.0; width];
    for i in 0..n {
        for j in 0..m {
            obj[j] -= data[i * width + j];
        }
        obj[width - 1] -= data[i * width + width - 1];
    }
    let mut cost = vec![0.0; width];
    cost[m..m + n].iter_mut().for_each(|v| *v = 1.0);
    let mut t = Tableau {
        rows: n,
        width,
        orig: data.clone(),
        data,
        obj,
        basis: (m..m + n).collect(),
        pivots: 0,
        cost,
        since_reinvert: 0,
    };
    let max_pivots = 50 * (n + m) + 1000;

    // Phase 1 on the dual.
    match t.run(m, 1e-12, max_pivots)? {
        PhaseEnd::Optimal => {}
        PhaseEnd::Unbounded(_) => {
            return Err(Error::SolverFailure("phase-1 objective unbounded".into()));
        }
    }
    let infeas = -t.obj[width - 1];
    if infeas > 1e-9 {
        return dual_infeasible(p, tol, t.pivots);
    }
    for i in 0..n {
        if t.basis[i] >= m {
            let mut best = None;
            let mut best_abs = 1e-9;
            for j in 0..m {
                let a = t.at(i, j).abs();
                if a > best_abs {
                    best_abs = a;
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                t.pivot(i, j);
            }
        }
    }

    // Phase 2: reduced costs of b'y.
    let mut cost = vec![0.0; width];
    for j in 0..m {
        cost[j] = p.b[j] / bscale;
    }
    t.cost = cost;
    if !t.reinvert() {
        let mut obj = t.cost.clone();
        obj[width - 1] = 0.0;
        for i in 0..n {
            let cb = t.cost[t.basis[i]];
            if cb != 0.0 {
                for (o, v) in obj.iter_mut().zip(&t.data[i * width..(i + 1) * width]) {
                    *o -= cb * v;
                }
            }
        }
        t.obj = obj;
    }
    let rc_tol = tol.min(1e-9);
    match t.run(m, rc_tol, max_pivots)? {
        PhaseEnd::Optimal => {}
        PhaseEnd::Unbounded(col) => {
            // Dual unbounded: Farkas certificate of primal infeasibility.
            let mut ray = Vector::zeros(m);
            ray[col] = 1.0;
            for i in 0..n {
                let bi = t.basis[i];
                if bi < m {
                    ray[bi] = (-t.at(i, col)).max(0.0);
                }
            }
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: Vector::zeros(0),
                value: f64::INFINITY,
                dual: ray,
                ray: None,
                basis: Vec::new(),
                pivots: t.pivots,
            });
        }
    }

    let basis: Vec<usize> = t.basis.iter().copied().filter(|&j| j < m).collect();
    let mut dual = Vector::zeros(m);
    for i in 0..n {
        let bi = t.basis[i];
        if bi < m {
            dual[bi] = t.rhs(i).max(0.0);
        }
    }
    let x = basis_point(p, &basis)?;
    if basis.len() == n {
        let ab = basis_rows(&p.a, &basis);
        if let Some(y) = ab.transpose().lu().solve(&(-&p.c)) {
            if y.iter().all(|v| *v > -1e-7 * cscale) {
                dual.fill(0.0);
                for (k, &j) in basis.iter().enumerate() {
                    dual[j] = y[k].max(0.0);
                }
            }
        }
    }
    let viol = (&p.a * &x - &p.b).iter().copied().fold(0.0, f64::max);
    if viol > 1e-6 * bscale {
        return Err(Error::SolverFailure(alloc::format!(
            "basis point violates constraints by {viol:e}"
        )));
    }
    let value = p.c.dot(&x);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        value,
        dual,
        ray: None,
        basis,
        pivots: t.pivots,
    })
}

fn trivial_zero_var(p: &LpProblem, tol: f64) -> LpSolution {
    let m = p.b.len();
    match p.b.iter().position(|v| *v < -tol) {
        Some(i) => {
            let mut ray = Vector::zeros(m);
            ray[i] = 1.0;
            LpSolution {
                status: LpStatus::Infeasible,
                x: Vector::zeros(0),
                value: f64::INFINITY,
                dual: ray,
                ray: None,
                basis: Vec::new(),
                pivots: 0,
            }
        }
        None => LpSolution {
            status: LpStatus::Optimal,
            x: Vector::zeros(0),
            value: 0.0,
            dual: Vector::zeros(m),
            ray: None,
            basis: Vec::new(),
            pivots: 0,
        },
    }
}

/// Dual infeasible: the primal is either infeasible or unbounded.
fn dual_infeasible(p: &LpProblem, tol: f64, pivots: usize) -> Result<LpSolution> {
    let n = p.c.len();
    let m = p.b.len();
    let feas = solve_lp(
        &LpProblem {
            c: Vector::zeros(n),
            a: p.a.clone(),
            b: p.b.clone(),
        },
        tol,
    )?;
    if feas.status == LpStatus::Infeasible {
        return Ok(LpSolution {
            pivots: pivots + feas.pivots,
            ..feas
        });
    }
    let mut a = Mat::zeros(m + 2 * n, n);
    a.view_mut((0, 0), (m, n)).copy_from(&p.a);
    let mut b = Vector::zeros(m + 2 * n);
    for i in 0..n {
        a[(m + i, i)] = 1.0;
        a[(m + n + i, i)] = -1.0;
        b[m + i] = 1.0;
        b[m + n + i] = 1.0;
    }
    let dir = solve_lp(
        &LpProblem {
            c: p.c.clone(),
            a,
            b,
        },
        tol,
    )?;
    if dir.status != LpStatus::Optimal || dir.value >= -tol {
        return Err(Error::SolverFailure(
            "dual infeasible but no recession direction found".into(),
        ));
    }
    Ok(LpSolution {
        status: LpStatus::Unbounded,
        x: feas.x,
        value: f64::NEG_INFINITY,
        dual: Vector::zeros(m),
        ray: Some(dir.x),
        basis: Vec::new(),
        pivots: pivots + feas.pivots + dir.pivots,
    })
}

fn basis_rows(a: &Mat, basis: &[usize]) -> Mat {
    Mat::from_fn(basis.len(), a.ncols(), |i, j| a[(basis[i], j)])
}

fn basis_point(p: &LpProblem, basis: &[usize]) -> Result<Vector> {
    let n = p.c.len();
    if basis.is_empty() {
        return Ok(Vector::zeros(n));
    }
    let ab = basis_rows(&p.a, basis);
    let bb = Vector::from_iterator(basis.len(), basis.iter().map(|&j| p.b[j]));
    if basis.len() == n {
        if let Some(x) = ab.clone().lu().solve(&bb) {
            return Ok(x);
        }
    }
    ab.svd(true, true)
        .solve(&bb, 1e-12)
        .map_err(|e| Error::SolverFailure(alloc::string::String::from(e)))
}

/// Checks the certificate carried by an LP solution.
pub fn verify_lp_certificate(p: &LpProblem, sol: &LpSolution, tol: f64) -> core::result::Result<(), &'static str> {
    let scale = 1.0
        + p.b.iter().chain(p.c.iter()).map(|v| v.abs()).fold(0.0, f64::max);
    match sol.status {
        LpStatus::Optimal => {
            let slack = &p.b - &p.a * &sol.x;
            if slack.iter().any(|s| *s < -tol * scale) {
                return Err("primal infeasible point");
            }
            if sol.dual.iter().any(|y| *y < 0.0) {
                return Err("negative multiplier");
            }
            let stat = p.a.transpose() * &sol.dual + &p.c;
            if stat.amax() > tol * scale {
                return Err("dual residual too large");
            }
            let comp = slack
                .iter()
                .zip(sol.dual.iter())
                .map(|(s, y)| (s * y).abs())
                .fold(0.0, f64::max);
            if comp > tol * scale {
                return Err("complementary slackness violated");
            }
            Ok(())
        }
        LpStatus::Infeasible => {
            let y = &sol.dual;
            if y.iter().any(|v| *v < 0.0) {
                return Err("farkas ray has negative entries");
            }
            let ynorm = y.amax().max(1e-300);
            if (p.a.transpose() * y).amax() > tol * scale * ynorm {
                return Err("farkas ray not in null space");
            }
            if p.b.dot(y) >= -tol * ynorm {
                return Err("farkas ray has nonnegative offset");
            }
            Ok(())
        }
        LpStatus::Unbounded => {
            let d = sol.ray.as_ref().ok_or("missing recession direction")?;
            if (&p.a * d).iter().any(|v| *v > tol * scale) {
                return Err("ray leaves the recession cone");
            }
            if p.c.dot(d) >= 0.0 {
                return Err("ray does not decrease the objective");
            }
            let slack = &p.b - &p.a * &sol.x;
            if slack.iter().any(|s| *s < -tol * scale) {
                return Err("reported feasible point is infeasible");
            }
            Ok(())
        }
    }
}

/// Warm-started support queries over one polytope `{x : Ax <= b}`.
///
/// Walks adjacent vertices from the previous optimum, so a sequence of nearby
/// directions costs a few pivots each.
pub struct VertexWalker<'a> {
    a: &'a Mat,
    b: &'a Vector,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    x: Vector,
    slack: Vector,
    pub pivots: usize,
}

impl<'a> VertexWalker<'a> {
    /// Starts from a vertex basis of `n` linearly independent active rows.
    pub fn new(a: &'a Mat, b: &'a Vector, basis: Vec<usize>) -> Option<Self> {
        if basis.len() != a.ncols() {
            return None;
        }
        let mut in_basis = vec![false; a.nrows()];
        for &j in &basis {
            in_basis[j] = true;
        }
        let mut w = VertexWalker {
            a,
            b,
            basis,
            in_basis,
            x: Vector::zeros(a.ncols()),
            slack: Vector::zeros(a.nrows()),
            pivots: 0,
        };
        w.refresh()?;
        Some(w)
    }

    /// Builds a walker by solving one LP from scratch.
    pub fn from_polytope(a: &'a Mat, b: &'a Vector) -> Result<Option<Self>> {
        let n = a.ncols();
        let mut c = Vector::zeros(n);
        if n > 0 {
            c[0] = -1.0;
        }
        let sol = solve_lp(&LpProblem::new(c, a.clone(), b.clone())?, 1e-9)?;
        match sol.status {
            LpStatus::Infeasible => Err(Error::Infeasible("empty polytope".into())),
            LpStatus::Unbounded => Err(Error::UnboundedSupport),
            LpStatus::Optimal => Ok(Self::new(a, b, sol.basis)),
        }
    }

    fn basis_matrix(&self) -> Mat {
        basis_rows(self.a, &self.basis)
    }

    fn refresh(&mut self) -> Option<()> {
        let ab = self.basis_matrix();
        let bb = Vector::from_iterator(self.basis.len(), self.basis.iter().map(|&j| self.b[j]));
        self.x = ab.lu().solve(&bb)?;
        self.slack = self.b - self.a * &self.x;
        for s in self.slack.iter_mut() {
            if *s < 0.0 {
                *s = 0.0;
            }
        }
        Some(())
    }

    pub fn point(&self) -> &Vector {
        &self.x
    }

    /// Returns `max d'x` over the polytope and leaves the walker at the maximizer.
    pub fn maximize(&mut self, d: &Vector) -> Result<f64> {
        let n = self.a.ncols();
        if n == 0 {
            return Ok(0.0);
        }
        let dscale = d.amax().max(1e-300);
        let mut streak = 0usize;
        let mut bland = false;
        let cap = 20 * self.a.nrows() + 1000;
        for _ in 0..cap {
            let ab = self.basis_matrix();
            let lu = ab.clone().lu();
            let y = ab
                .transpose()
                .lu()
                .solve(d)
                .ok_or_else(|| Error::SolverFailure("singular vertex basis".into()))?;
            let mut leave = None;
            let mut best = -1e-11 * dscale;
            for k in 0..n {
                if y[k] < best {
                    if bland {
                        if leave.map_or(true, |l: usize| self.basis[k] < self.basis[l]) {
                            leave = Some(k);
                        }
                    } else {
                        best = y[k];
                        leave = Some(k);
                    }
                }
            }
            let Some(r) = leave else {
                return Ok(d.dot(&self.x));
            };
            let mut e = Vector::zeros(n);
            e[r] = -1.0;
            let delta = lu
                .solve(&e)
                .ok_or_else(|| Error::SolverFailure("singular vertex basis".into()))?;
            let rate = self.a * &delta;
            let rate_tol = PIVOT_TOL * (1.0 + delta.amax());
            let mut bound = f64::INFINITY;
            for j in 0..self.a.nrows() {
                if !self.in_basis[j] && rate[j] > rate_tol {
                    bound = bound.min((self.slack[j] + HARRIS_TOL) / rate[j]);
                }
            }
            let mut enter = None;
            let mut best_rate = 0.0;
            let mut best_ratio = f64::INFINITY;
            for j in 0..self.a.nrows() {
                if self.in_basis[j] || rate[j] <= rate_tol {
                    continue;
                }
                let ratio = self.slack[j] / rate[j];
                if ratio <= bound && rate[j] > best_rate {
                    best_rate = rate[j];
                    best_ratio = ratio;
                    enter = Some(j);
                }
            }
            let Some(j) = enter else {
                return Err(Error::UnboundedSupport);
            };
            if best_ratio <= 1e-14 {
                streak += 1;
                if streak >= DEGENERATE_STREAK {
                    bland = true;
                }
            } else {
                streak = 0;
            }
            self.in_basis[self.basis[r]] = false;
            self.in_basis[j] = true;
            self.basis[r] = j;
            self.pivots += 1;
            self.refresh()
                .ok_or_else(|| Error::SolverFailure("singular vertex basis".into()))?;
        }
        Err(Error::NonConvergence {
            what: "vertex walk",
            iterations: cap,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(c: &[f64], a: &[f64], b: &[f64]) -> LpProblem {
        let n = c.len();
        let m = b.len();
        LpProblem::new(
            Vector::from_column_slice(c),
            Mat::from_row_slice(m, n, a),
            Vector::from_column_slice(b),
        )
        .unwrap()
    }

    #[test]
    fn min_x_above_one() {
        let p = lp(&[1.0], &[-1.0], &[-1.0]);
        let s = solve_lp(&p, 1e-9).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        verify_lp_certificate(&p, &s, 1e-9).unwrap();
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let p = lp(&[-1.0], &[1.0, -1.0], &[0.0, -1.0]);
        let s = solve_lp(&p, 1e-9).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
        verify_lp_certificate(&p, &s, 1e-9).unwrap();
    }

    #[test]
    fn open_halfline_is_unbounded() {
        let p = lp(&[-1.0, 0.0], &[-1.0, 0.0, 0.0, 1.0, 0.0, -1.0], &[0.0, 1.0, 1.0]);
        let s = solve_lp(&p, 1e-9).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
        verify_lp_certificate(&p, &s, 1e-9).unwrap();
    }

    #[test]
    fn no_constraints() {
        let p = LpProblem::new(Vector::zeros(2), Mat::zeros(0, 2), Vector::zeros(0)).unwrap();
        let s = solve_lp(&p, 1e-9).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        let p = LpProblem::new(Vector::from_column_slice(&[1.0, 0.0]), Mat::zeros(0, 2), Vector::zeros(0)).unwrap();
        assert_eq!(solve_lp(&p, 1e-9).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn walker_agrees_with_fresh_solves_on_square() {
        let a = Mat::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let b = Vector::from_column_slice(&[1.0, 2.0, 3.0, 4.0]);
        let mut w = VertexWalker::from_polytope(&a, &b).unwrap().unwrap();
        for (dx, dy, expect) in [(1.0, 0.0, 1.0), (-1.0, 0.0, 2.0), (0.0, 1.0, 3.0), (-1.0, -1.0, 6.0)] {
            let v = w.maximize(&Vector::from_column_slice(&[dx, dy])).unwrap();
            assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
        }
    }
}

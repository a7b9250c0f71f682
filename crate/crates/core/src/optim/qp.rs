//! Primal active-set method for strictly convex quadratic programs
//!
//! ```text
//!     minimize    1/2 x'Hx + f'x
//!     subject to  A x <= b,  Aeq x = beq
//! ```

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: Mat,
    pub f: Vector,
    pub a: Mat,
    pub b: Vector,
    pub aeq: Mat,
    pub beq: Vector,
}

impl QpProblem {
    /// Checks dimensions, symmetry and positive definiteness of `h`.
    pub fn new(h: Mat, f: Vector, a: Mat, b: Vector, aeq: Mat, beq: Vector) -> Result<Self> {
        let n = f.len();
        let dims = [
            ("QP Hessian rows", n, h.nrows()),
            ("QP Hessian columns", n, h.ncols()),
            ("QP inequality columns", n, a.ncols()),
            ("QP inequality offsets", a.nrows(), b.len()),
            ("QP equality columns", n, aeq.ncols()),
            ("QP equality offsets", aeq.nrows(), beq.len()),
        ];
        for (what, expected, found) in dims {
            if expected != found {
                return Err(Error::DimensionMismatch { what, expected, found });
            }
        }
        let all = h.iter().chain(f.iter()).chain(a.iter()).chain(b.iter());
        if all.chain(aeq.iter()).chain(beq.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("QP data must be finite".into()));
        }
        let asym = (&h - h.transpose()).amax();
        if asym > 1e-9 * (1.0 + h.amax()) {
            return Err(Error::InvalidInput("QP Hessian is not symmetric".into()));
        }
        let h = (&h + h.transpose()) * 0.5;
        if n > 0 && h.clone().cholesky().is_none() {
            return Err(Error::InvalidInput("QP Hessian is not positive definite".into()));
        }
        Ok(QpProblem { h, f, a, b, aeq, beq })
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn objective(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.f.dot(x)
    }

    /// Largest violation of the inequality and equality constraints.
    pub fn violation(&self, x: &Vector) -> f64 {
        let ineq = (&self.a * x - &self.b).iter().copied().fold(0.0, f64::max);
        let eq = if self.beq.is_empty() { 0.0 } else { (&self.aeq * x - &self.beq).amax() };
        ineq.max(eq)
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vector,
    pub value: f64,
    /// Multipliers of the inequalities, nonnegative.
    pub multipliers: Vector,
    pub eq_multipliers: Vector,
    pub active: Vec<usize>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

/// Stationarity, feasibility and complementarity residual of a primal-dual pair.
pub fn kkt_residual(p: &QpProblem, x: &Vector, lam: &Vector, mu: &Vector) -> f64 {
    let mut g = &p.h * x + &p.f + p.a.transpose() * lam;
    if !p.beq.is_empty() {
        g += p.aeq.transpose() * mu;
    }
    let slack = &p.b - &p.a * x;
    let comp = slack
        .iter()
        .zip(lam.iter())
        .map(|(s, l)| (s * l).abs())
        .fold(0.0, f64::max);
    let neg = lam.iter().map(|l| (-l).max(0.0)).fold(0.0, f64::max);
    g.amax().max(p.violation(x)).max(comp).max(neg)
}

/// Solves the QP, optionally starting from `warm` when it is feasible.
///
/// A feasible warm start runs the primal active-set method; without one, or when
/// the primal iteration stalls on a degenerate working set, the dual method of
/// Goldfarb and Idnani is used. Returns `Error::Infeasible` when the constraints
/// admit no point.
pub fn solve_qp(p: &QpProblem, tol: f64, warm: Option<&Vector>) -> Result<QpSolution> {
    let n = p.dim();
    let feas_tol = tol * constraint_scale(p);
    if let Some(w) = warm {
        if w.len() == n && p.violation(w) <= feas_tol {
            if let Some(sol) = primal(p, tol, w.clone())? {
                return Ok(sol);
            }
        }
    }
    dual(p, tol)
}

fn constraint_scale(p: &QpProblem) -> f64 {
    1.0 + p.b.iter().chain(p.beq.iter()).map(|v| v.abs()).fold(0.0, f64::max)
}

fn finish(p: &QpProblem, x: Vector, lam: Vector, mu: Vector, active: Vec<usize>, iterations: usize) -> QpSolution {
    let res = kkt_residual(p, &x, &lam, &mu);
    let value = p.objective(&x);
    QpSolution { x, value, multipliers: lam, eq_multipliers: mu, active, iterations, kkt_residual: res }
}

/// Primal active-set iteration from a feasible point; `None` when it stalls.
fn primal(p: &QpProblem, tol: f64, mut x: Vector) -> Result<Option<QpSolution>> {
    let n = p.dim();
    let m = p.b.len();
    let meq = p.beq.len();
    let mut working: Vec<usize> = Vec::new();
    let mut in_w = vec![false; m];
    let cap = 10 * (n + m) + 100;
    let stall_limit = 3 * n + 20;
    // Set after an unblocked full step: x minimizes over the current working set.
    let mut at_min = false;
    let row_norm: Vec<f64> = (0..m).map(|i| p.a.row(i).norm()).collect();
    let mut best = p.objective(&x);
    let mut stalled = 0;
    for it in 0..cap {
        let k = working.len();
        let dim = n + meq + k;
        let mut kkt = Mat::zeros(dim, dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
        for r in 0..meq {
            for j in 0..n {
                kkt[(n + r, j)] = p.aeq[(r, j)];
                kkt[(j, n + r)] = p.aeq[(r, j)];
            }
        }
        for (r, &i) in working.iter().enumerate() {
            for j in 0..n {
                kkt[(n + meq + r, j)] = p.a[(i, j)];
                kkt[(j, n + meq + r)] = p.a[(i, j)];
            }
        }
        let g = &p.h * &x + &p.f;
        let mut rhs = Vector::zeros(dim);
        for j in 0..n {
            rhs[j] = -g[j];
        }
        if meq > 0 {
            let req = &p.beq - &p.aeq * &x;
            for r in 0..meq {
                rhs[n + r] = req[r];
            }
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            return Ok(None);
        };
        let step = sol.rows(0, n).into_owned();
        let xscale = 1.0 + x.amax();
        // Steps at the KKT solve noise level count as zero.
        if at_min || step.amax() <= 1e-9 * xscale {
            let mut worst = None;
            let mut worst_val = -tol.min(1e-10);
            for r in 0..k {
                let l = sol[n + meq + r];
                if l < worst_val {
                    worst_val = l;
                    worst = Some(r);
                }
            }
            match worst {
                Some(r) => {
                    in_w[working[r]] = false;
                    working.remove(r);
                    at_min = false;
                    continue;
                }
                None => {
                    let mut lam = Vector::zeros(m);
                    for (r, &i) in working.iter().enumerate() {
                        lam[i] = sol[n + meq + r].max(0.0);
                    }
                    let mu = sol.rows(n, meq).into_owned();
                    return Ok(Some(finish(p, x, lam, mu, working, it + 1)));
                }
            }
        }
        let rate = &p.a * &step;
        let slack = &p.b - &p.a * &x;
        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..m {
            if in_w[i] || rate[i] <= 1e-12 * row_norm[i] * step.amax() {
                continue;
            }
            let t = slack[i].max(0.0) / rate[i];
            if t < alpha {
                alpha = t;
                blocking = Some(i);
            }
        }
        x += &step * alpha;
        match blocking {
            Some(i) => {
                in_w[i] = true;
                working.push(i);
            }
            None => at_min = true,
        }
        let obj = p.objective(&x);
        if obj < best - 1e-12 * (1.0 + best.abs()) {
            best = obj;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled > stall_limit {
                return Ok(None);
            }
        }
    }
    Ok(None)
}

/// Dual active-set method: starts at the unconstrained minimizer and adds the most
/// violated constraint while keeping the multipliers dual feasible.
fn dual(p: &QpProblem, tol: f64) -> Result<QpSolution> {
    let n = p.dim();
    let m = p.b.len();
    let meq = p.beq.len();
    let feas_tol = tol * constraint_scale(p);
    let chol = p
        .h
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("QP Hessian is not positive definite".into()))?;
    // Constraint `j` as `n_j' x <= c_j`; equalities first, never dropped.
    let normal = |j: usize| -> Vector {
        if j < meq {
            p.aeq.row(j).transpose()
        } else {
            p.a.row(j - meq).transpose()
        }
    };
    let rhs = |j: usize| -> f64 {
        if j < meq {
            p.beq[j]
        } else {
            p.b[j - meq]
        }
    };
    let mut x = -chol.solve(&p.f);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut in_a = vec![false; meq + m];
    let cap = 10 * (n + m + meq) + 100;

    // Directions for adding `np_` to the active set: primal `z`, dual `r`.
    let directions = |active: &[usize], np_: &Vector| -> Option<(Vector, Vector)> {
        let q = active.len();
        let hinv_np = chol.solve(np_);
        if q == 0 {
            return Some((hinv_np, Vector::zeros(0)));
        }
        let mut nmat = Mat::zeros(n, q);
        for (c, &j) in active.iter().enumerate() {
            nmat.set_column(c, &normal(j));
        }
        let hinv_n = chol.solve(&nmat);
        let gram = nmat.transpose() * &hinv_n;
        let r = gram.lu().solve(&(nmat.transpose() * &hinv_np))?;
        let z = hinv_np - hinv_n * &r;
        Some((z, r))
    };

    for it in 0..cap {
        // Most violated constraint, equalities taking priority.
        let mut pick = None;
        let mut worst = feas_tol;
        for j in 0..meq + m {
            if in_a[j] {
                continue;
            }
            let nj = normal(j);
            let s = nj.dot(&x) - rhs(j);
            let viol = if j < meq { s.abs() } else { s };
            let viol = viol / (1.0 + nj.amax()).max(1.0);
            if viol > worst {
                worst = viol;
                pick = Some(j);
            }
        }
        let Some(jp) = pick else {
            let mut lam = Vector::zeros(m);
            let mut mu = Vector::zeros(meq);
            for (c, &j) in active.iter().enumerate() {
                if j < meq {
                    mu[j] = u[c];
                } else {
                    lam[j - meq] = u[c].max(0.0);
                }
            }
            let act = active.iter().filter(|&&j| j >= meq).map(|&j| j - meq).collect();
            return Ok(finish(p, x, lam, mu, act, it + 1));
        };
        // Equalities violated from below are handled through the flipped row.
        let sign = if jp < meq && normal(jp).dot(&x) < rhs(jp) { -1.0 } else { 1.0 };
        let np_ = normal(jp) * sign;
        let cp = rhs(jp) * sign;
        let mut up = 0.0;
        loop {
            let (z, r) = directions(&active, &np_)
                .ok_or_else(|| Error::SolverFailure("singular active set in dual QP".into()))?;
            let zn = z.dot(&np_);
            let zero_z = z.amax() <= 1e-12 * (1.0 + np_.amax());
            // Partial step limited by an active inequality multiplier reaching zero.
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (c, &j) in active.iter().enumerate() {
                if j >= meq && r[c] > 1e-14 {
                    let t = u[c] / r[c];
                    if t < t1 {
                        t1 = t;
                        drop = Some(c);
                    }
                }
            }
            let slack = np_.dot(&x) - cp;
            let t2 = if zero_z || zn <= 0.0 { f64::INFINITY } else { slack / zn };
            if t1.is_infinite() && t2.is_infinite() {
                return Err(Error::Infeasible(alloc::format!(
                    "QP constraint {} cannot be satisfied",
                    jp
                )));
            }
            let t = t1.min(t2);
            if !zero_z && t.is_finite() {
                x -= &z * t;
            }
            for c in 0..active.len() {
                u[c] -= t * r[c];
            }
            up += t;
            if t2 <= t1 {
                active.push(jp);
                u.push(up * sign);
                in_a[jp] = true;
                break;
            }
            let c = drop.expect("partial step has a blocking multiplier");
            in_a[active[c]] = false;
            active.remove(c);
            u.remove(c);
        }
        if it + 1 == cap {
            break;
        }
    }
    Err(Error::SolverFailure(alloc::format!("dual QP iteration cap {cap} reached")))
}

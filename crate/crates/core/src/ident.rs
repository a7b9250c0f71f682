//! Set-membership identification of multi-step output predictors.
//!
//! For every horizon `p` the regressor is
//! `[y(k)..y(k-o+1), u(k-1)..u(k-o+1), u(k)..u(k+p-1)]` with target `y(k+p)`.
//! All horizons share the index range `k = o-1 ..= L-1-p_bar`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::HPolytope;
use crate::linalg::{Mat, Vector};
use crate::optim::{solve_lp, LpProblem, LpStatus, VertexWalker};

/// Regressor width for order `o` and horizon `p`.
pub fn regressor_width(o: usize, p: usize) -> usize {
    2 * o - 1 + p
}

#[derive(Debug, Clone)]
pub struct RegressorTable {
    pub p: usize,
    pub o: usize,
    /// Time index of the first row.
    pub first_k: usize,
    pub rows: Mat,
    pub targets: Vector,
}

impl RegressorTable {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn width(&self) -> usize {
        self.rows.ncols()
    }
}

/// Regressor at time `k`.
pub fn regressor(y: &[f64], u: &[f64], o: usize, p: usize, k: usize) -> Vector {
    let mut phi = Vector::zeros(regressor_width(o, p));
    for i in 0..o {
        phi[i] = y[k - i];
    }
    for i in 1..o {
        phi[o + i - 1] = u[k - i];
    }
    for j in 0..p {
        phi[2 * o - 1 + j] = u[k + j];
    }
    phi
}

pub fn build_regressors(y: &[f64], u: &[f64], o: usize, p: usize, p_bar: usize) -> Result<RegressorTable> {
    if o == 0 || p == 0 || p > p_bar {
        return Err(Error::InvalidInput("need o >= 1 and 1 <= p <= p_bar".into()));
    }
    if y.len() != u.len() {
        return Err(Error::DimensionMismatch { what: "dataset columns", expected: u.len(), found: y.len() });
    }
    let len = y.len();
    let needed = o + p_bar;
    if len < needed {
        return Err(Error::DatasetTooShort { needed, available: len });
    }
    let first = o - 1;
    let count = len - p_bar - o + 1;
    let w = regressor_width(o, p);
    let mut rows = Mat::zeros(count, w);
    let mut targets = Vector::zeros(count);
    for r in 0..count {
        let k = first + r;
        rows.row_mut(r).copy_from(&regressor(y, u, o, p, k).transpose());
        targets[r] = y[k + p];
    }
    Ok(RegressorTable { p, o, first_k: first, rows, targets })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsEstimate {
    pub lambda: f64,
    pub eps_hat: f64,
}

/// Smallest uniform residual bound beyond `d_bar`, inflated by `alpha`.
pub fn estimate_eps(table: &RegressorTable, d_bar: f64, alpha: f64) -> Result<EpsEstimate> {
    if !(alpha >= 1.0) {
        return Err(Error::InvalidInput("alpha must be at least 1".into()));
    }
    let n = table.len();
    let w = table.width();
    let mut a = Mat::zeros(2 * n, w + 1);
    let mut b = Vector::zeros(2 * n);
    for k in 0..n {
        for j in 0..w {
            a[(k, j)] = table.rows[(k, j)];
            a[(n + k, j)] = -table.rows[(k, j)];
        }
        a[(k, w)] = -1.0;
        a[(n + k, w)] = -1.0;
        b[k] = table.targets[k] + d_bar;
        b[n + k] = -table.targets[k] + d_bar;
    }
    let mut c = Vector::zeros(w + 1);
    c[w] = 1.0;
    let sol = solve_lp(&LpProblem::new(c, a, b)?, 1e-10)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::SolverFailure(alloc::format!("residual-bound LP ended {:?}", sol.status)));
    }
    let lambda = sol.value;
    Ok(EpsEstimate { lambda, eps_hat: (alpha * lambda).max(0.0) })
}

#[derive(Debug, Clone)]
pub struct FeasibleParamSet {
    pub p: usize,
    pub eps_hat: f64,
    pub d_bar: f64,
    pub poly: HPolytope,
    /// Canonical support intervals `[min, max]` of every coordinate.
    pub bounds: Vec<(f64, f64)>,
}

fn unit(n: usize, i: usize, s: f64) -> Vector {
    let mut e = Vector::zeros(n);
    e[i] = s;
    e
}

/// Half-spaces `±phi_k' θ <= ±y(k+p) + eps_hat + d_bar`, deduplicated, with a
/// boundedness check in every canonical direction.
pub fn build_fps(table: &RegressorTable, eps_hat: f64, d_bar: f64) -> Result<FeasibleParamSet> {
    let n = table.len();
    let w = table.width();
    let width = eps_hat + d_bar;
    // Dedup identical data rows.
    let mut order: Vec<usize> = (0..n).collect();
    let key = |k: usize| -> Vec<f64> {
        let mut v: Vec<f64> = table.rows.row(k).iter().copied().collect();
        v.push(table.targets[k]);
        v
    };
    let keys: Vec<Vec<f64>> = (0..n).map(key).collect();
    order.sort_by(|&i, &j| {
        keys[i]
            .iter()
            .zip(&keys[j])
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let mut unique: Vec<usize> = Vec::with_capacity(n);
    for &k in &order {
        let dup = unique.last().is_some_and(|&prev| {
            keys[prev].iter().zip(&keys[k]).all(|(a, b)| (a - b).abs() <= 1e-12)
        });
        if !dup {
            unique.push(k);
        }
    }
    unique.sort_unstable();
    let m = unique.len();
    let mut a = Mat::zeros(2 * m, w);
    let mut b = Vector::zeros(2 * m);
    for (r, &k) in unique.iter().enumerate() {
        for j in 0..w {
            a[(r, j)] = table.rows[(k, j)];
            a[(m + r, j)] = -table.rows[(k, j)];
        }
        b[r] = table.targets[k] + width;
        b[m + r] = -table.targets[k] + width;
    }
    let poly = HPolytope::new(a, b)?;
    let mut walker = match VertexWalker::from_polytope(&poly.a, &poly.b) {
        Ok(Some(wk)) => wk,
        Ok(None) => return Err(Error::SolverFailure("degenerate FPS start vertex".into())),
        Err(Error::UnboundedSupport) => return Err(Error::UninformativeData { p: table.p, direction: 0 }),
        Err(e) => return Err(e),
    };
    let mut bounds = Vec::with_capacity(w);
    for i in 0..w {
        let hi = walker.maximize(&unit(w, i, 1.0)).map_err(|e| match e {
            Error::UnboundedSupport => Error::UninformativeData { p: table.p, direction: i },
            other => other,
        })?;
        let lo = -walker.maximize(&unit(w, i, -1.0)).map_err(|e| match e {
            Error::UnboundedSupport => Error::UninformativeData { p: table.p, direction: w + i },
            other => other,
        })?;
        bounds.push((lo, hi));
    }
    Ok(FeasibleParamSet { p: table.p, eps_hat, d_bar, poly, bounds })
}

/// Per-row supports `h_k = max θ'φ_k`, `l_k = min θ'φ_k` over the FPS.
#[derive(Debug, Clone)]
pub struct RowSupports {
    pub h: Vector,
    pub l: Vector,
}

pub fn row_supports(fps: &FeasibleParamSet, table: &RegressorTable) -> Result<RowSupports> {
    let n = table.len();
    let dirs_pos: Vec<Vector> = (0..n).map(|k| table.rows.row(k).transpose()).collect();
    let dirs_neg: Vec<Vector> = dirs_pos.iter().map(|d| -d).collect();
    let h = fps.poly.supports(&dirs_pos)?;
    let l = fps.poly.supports(&dirs_neg)?;
    Ok(RowSupports {
        h: Vector::from_vec(h),
        l: Vector::from_iterator(n, l.into_iter().map(|v| -v)),
    })
}

/// `max_k max(h_k - θ'φ_k, θ'φ_k - l_k) + eps_hat`.
pub fn worst_case_error(fps: &FeasibleParamSet, sup: &RowSupports, theta: &[f64], table: &RegressorTable) -> Result<f64> {
    if theta.len() != table.width() {
        return Err(Error::DimensionMismatch { what: "predictor parameters", expected: table.width(), found: theta.len() });
    }
    let pred = &table.rows * Vector::from_column_slice(theta);
    let mut worst = f64::NEG_INFINITY;
    for k in 0..table.len() {
        worst = worst.max(sup.h[k] - pred[k]).max(pred[k] - sup.l[k]);
    }
    Ok(worst.max(0.0) + fps.eps_hat)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub p: usize,
    pub o: usize,
    pub theta: Vec<f64>,
    pub lambda: f64,
    pub eps_hat: f64,
    pub tau_lower: f64,
    pub tau_hat: f64,
    /// Largest FPS constraint violation of `theta`.
    pub fps_residual: f64,
}

impl PredictorModel {
    pub fn theta_ar(&self) -> &[f64] {
        &self.theta[..self.o]
    }

    pub fn theta_u(&self) -> &[f64] {
        &self.theta[self.o..2 * self.o - 1]
    }

    pub fn theta_ubar(&self) -> &[f64] {
        &self.theta[2 * self.o - 1..]
    }
}

pub fn predict(model: &PredictorModel, phi: &Vector) -> Result<f64> {
    if phi.len() != model.theta.len() {
        return Err(Error::DimensionMismatch { what: "regressor", expected: model.theta.len(), found: phi.len() });
    }
    Ok(phi.iter().zip(&model.theta).map(|(a, b)| a * b).sum())
}

/// Min-max fit over the FPS: `min t` s.t. `θ ∈ FPS`, `h_k - θ'φ_k <= t`, `θ'φ_k - l_k <= t`.
pub fn fit_nominal(
    fps: &FeasibleParamSet,
    sup: &RowSupports,
    table: &RegressorTable,
    lambda: f64,
    gamma: f64,
) -> Result<PredictorModel> {
    if !(gamma >= 1.0) {
        return Err(Error::InvalidInput("gamma must be at least 1".into()));
    }
    let n = table.len();
    let w = table.width();
    let mf = fps.poly.num_constraints();
    let rows = mf + 2 * n;
    let mut a = Mat::zeros(rows, w + 1);
    let mut b = Vector::zeros(rows);
    a.view_mut((0, 0), (mf, w)).copy_from(&fps.poly.a);
    b.rows_mut(0, mf).copy_from(&fps.poly.b);
    for k in 0..n {
        for j in 0..w {
            let v = table.rows[(k, j)];
            a[(mf + k, j)] = -v;
            a[(mf + n + k, j)] = v;
        }
        a[(mf + k, w)] = -1.0;
        a[(mf + n + k, w)] = -1.0;
        b[mf + k] = -sup.h[k];
        b[mf + n + k] = sup.l[k];
    }
    let mut c = Vector::zeros(w + 1);
    c[w] = 1.0;
    let sol = solve_lp(&LpProblem::new(c, a, b)?, 1e-10)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::SolverFailure(alloc::format!("min-max fit LP ended {:?}", sol.status)));
    }
    let theta: Vec<f64> = sol.x.rows(0, w).iter().copied().collect();
    let tau_lower = worst_case_error(fps, sup, &theta, table)?;
    let fps_residual = (&fps.poly.a * Vector::from_column_slice(&theta) - &fps.poly.b)
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    Ok(PredictorModel {
        p: table.p,
        o: table.o,
        theta,
        lambda,
        eps_hat: fps.eps_hat,
        tau_lower,
        tau_hat: gamma * tau_lower,
        fps_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentOptions {
    pub o: usize,
    pub p_bar: usize,
    pub d_bar: f64,
    pub alpha: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorBank {
    pub o: usize,
    pub p_bar: usize,
    pub d_bar: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub models: Vec<PredictorModel>,
    pub fingerprint: u64,
}

impl PredictorBank {
    pub fn model(&self, p: usize) -> &PredictorModel {
        &self.models[p - 1]
    }

    /// `w̄_p = tau_hat_p + d_bar`.
    pub fn w_bar(&self) -> Vec<f64> {
        self.models.iter().map(|m| m.tau_hat + self.d_bar).collect()
    }
}

/// FNV-1a over the dataset samples and the identification shape.
pub fn dataset_fingerprint(y: &[f64], u: &[f64], o: usize, p_bar: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |x: u64| {
        for byte in x.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(o as u64);
    eat(p_bar as u64);
    for (a, b) in y.iter().zip(u) {
        eat(a.to_bits());
        eat(b.to_bits());
    }
    h
}

/// Everything computed for one horizon.
#[derive(Debug, Clone)]
pub struct HorizonFit {
    pub table: RegressorTable,
    pub fps: FeasibleParamSet,
    pub supports: RowSupports,
    pub model: PredictorModel,
}

#[derive(Debug, Clone)]
pub struct Identification {
    pub bank: PredictorBank,
    pub fits: Vec<HorizonFit>,
}

pub fn identify_horizon(y: &[f64], u: &[f64], opts: &IdentOptions, p: usize) -> Result<HorizonFit> {
    let table = build_regressors(y, u, opts.o, p, opts.p_bar)?;
    let eps = estimate_eps(&table, opts.d_bar, opts.alpha)?;
    let fps = build_fps(&table, eps.eps_hat, opts.d_bar)?;
    let supports = row_supports(&fps, &table)?;
    let model = fit_nominal(&fps, &supports, &table, eps.lambda, opts.gamma)?;
    Ok(HorizonFit { table, fps, supports, model })
}

pub fn identify(y: &[f64], u: &[f64], opts: &IdentOptions) -> Result<Identification> {
    let mut fits = Vec::with_capacity(opts.p_bar);
    for p in 1..=opts.p_bar {
        fits.push(identify_horizon(y, u, opts, p)?);
    }
    let bank = PredictorBank {
        o: opts.o,
        p_bar: opts.p_bar,
        d_bar: opts.d_bar,
        alpha: opts.alpha,
        gamma: opts.gamma,
        models: fits.iter().map(|f| f.model.clone()).collect(),
        fingerprint: dataset_fingerprint(y, u, opts.o, opts.p_bar),
    };
    Ok(Identification { bank, fits })
}

/// Coefficients over the `p`-step regressor of the one-step model applied `p` times.
pub fn iterate_one_step(theta1: &[f64], p: usize) -> Result<Vec<f64>> {
    if theta1.len() < 2 || theta1.len() % 2 != 0 || p == 0 {
        return Err(Error::InvalidInput("one-step parameters must have even length 2o and p >= 1".into()));
    }
    let o = theta1.len() / 2;
    let w = regressor_width(o, p);
    let a = &theta1[..o];
    let b_past = &theta1[o..2 * o - 1];
    let b_now = theta1[2 * o - 1];
    // Input u(k+j) as a coefficient vector, for j >= -(o-1).
    let u_index = |j: isize| -> usize {
        if j >= 0 {
            2 * o - 1 + j as usize
        } else {
            o + (-j) as usize - 1
        }
    };
    let mut preds: Vec<Vec<f64>> = Vec::with_capacity(p);
    for s in 1..=p {
        let mut c = vec![0.0; w];
        for i in 0..o {
            let j = s as isize - 1 - i as isize;
            if j >= 1 {
                for (ci, pv) in c.iter_mut().zip(&preds[j as usize - 1]) {
                    *ci += a[i] * pv;
                }
            } else {
                c[(-j) as usize] += a[i];
            }
        }
        for i in 1..o {
            let j = s as isize - 1 - i as isize;
            c[u_index(j)] += b_past[i - 1];
        }
        c[u_index(s as isize - 1)] += b_now;
        preds.push(c);
    }
    Ok(preds.pop().unwrap_or_default())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thm1Row {
    pub p: usize,
    pub tau_star: f64,
    pub tau_iterated: f64,
    pub gap: f64,
    pub iterated_in_fps: bool,
}

/// Compares the min-max predictor with the iterated one-step model on each horizon's
/// data surrogate; fails on the first horizon where the optimal one is worse.
pub fn verify_thm1(fits: &[HorizonFit], theta1: &[f64], tol: f64) -> Result<Vec<Thm1Row>> {
    let mut out = Vec::with_capacity(fits.len());
    for fit in fits {
        let iter = iterate_one_step(theta1, fit.table.p)?;
        let tau_iter = worst_case_error(&fit.fps, &fit.supports, &iter, &fit.table)?;
        let tau_star = fit.model.tau_lower;
        let in_fps = fit.fps.poly.contains(&Vector::from_column_slice(&iter), 1e-9);
        let gap = tau_iter - tau_star;
        if tau_star > tau_iter + tol {
            return Err(Error::BoundOrderingViolated { p: fit.table.p, gap });
        }
        out.push(Thm1Row { p: fit.table.p, tau_star, tau_iterated: tau_iter, gap, iterated_in_fps: in_fps });
    }
    Ok(out)
}

/// Propagated bound from iterating the one-step model: `b_1 = w_1`,
/// `b_p = w_1 + sum_{i=1}^{min(o, p-1)} |a_i| b_{p-i}`.
pub fn iterated_bounds(ar: &[f64], w1: f64, p_bar: usize) -> Vec<f64> {
    let mut b: Vec<f64> = Vec::with_capacity(p_bar);
    for p in 1..=p_bar {
        let mut v = w1;
        for i in 1..=ar.len().min(p - 1) {
            v += ar[i - 1].abs() * b[p - 1 - i];
        }
        b.push(v);
    }
    b
}

//! Discrete-time LQ gain via the structure-preserving doubling algorithm.

use super::lyap::solve_dlyap;
use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, Mat};

#[derive(Debug, Clone)]
pub struct Lqr {
    /// Gain with the convention `u = K x`, so `A + B K` is the closed loop.
    pub gain: Mat,
    /// Stabilizing solution of the algebraic Riccati equation.
    pub cost: Mat,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LqrOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LqrOptions {
    fn default() -> Self {
        LqrOptions { max_iter: 10_000, tol: 1e-10 }
    }
}

pub fn riccati_residual(a: &Mat, b: &Mat, q: &Mat, r: &Mat, x: &Mat) -> f64 {
    let btx = b.transpose() * x;
    let m = r + &btx * b;
    let Some(gain) = m.lu().solve(&(&btx * a)) else {
        return f64::INFINITY;
    };
    (a.transpose() * x * a - x - (a.transpose() * x * b) * gain + q).amax()
}

fn gain_from(a: &Mat, b: &Mat, r: &Mat, x: &Mat) -> Result<Mat> {
    let btx = b.transpose() * x;
    let m = r + &btx * b;
    m.lu()
        .solve(&(&btx * a))
        .map(|g| -g)
        .ok_or_else(|| Error::SolverFailure("singular R + B'XB".into()))
}

pub fn dlqr(a: &Mat, b: &Mat, q: &Mat, r: &Mat, opts: LqrOptions) -> Result<Lqr> {
    let n = a.nrows();
    let m = b.ncols();
    let checks = [
        ("LQ state matrix columns", n, a.ncols()),
        ("LQ input rows", n, b.nrows()),
        ("LQ state weight", n, q.nrows()),
        ("LQ input weight", m, r.nrows()),
    ];
    for (what, expected, found) in checks {
        if expected != found {
            return Err(Error::DimensionMismatch { what, expected, found });
        }
    }
    let rinv_bt = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("LQ input weight must be positive definite".into()))?
        .solve(&b.transpose());
    let mut ak = a.clone();
    let mut gk = b * rinv_bt;
    let mut hk = (q + q.transpose()) * 0.5;
    let eye = Mat::identity(n, n);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let w = &eye + &gk * &hk;
        let lu = w.lu();
        let (Some(wa), Some(wg)) = (lu.solve(&ak), lu.solve(&gk)) else {
            break;
        };
        let h_next = &hk + ak.transpose() * &hk * &wa;
        let g_next = &gk + &ak * wg * ak.transpose();
        let a_next = &ak * wa;
        let diff = (&h_next - &hk).amax();
        hk = (&h_next + h_next.transpose()) * 0.5;
        gk = (&g_next + g_next.transpose()) * 0.5;
        ak = a_next;
        if !hk.iter().all(|v| v.is_finite()) {
            break;
        }
        if diff <= opts.tol * (1.0 + hk.amax()) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            what: "Riccati doubling (is (A, B) stabilizable?)",
            iterations,
        });
    }
    let mut x = hk;
    let mut gain = gain_from(a, b, r, &x)?;
    // Newton polish: X solves the closed-loop Lyapunov equation for the current gain.
    for _ in 0..3 {
        if riccati_residual(a, b, q, r, &x) <= 1e-12 * (1.0 + x.amax()) {
            break;
        }
        let f = a + b * &gain;
        let s = q + gain.transpose() * r * &gain;
        match solve_dlyap(&f, &s) {
            Ok(next) => {
                x = next;
                gain = gain_from(a, b, r, &x)?;
            }
            Err(_) => break,
        }
    }
    let rho = spectral_radius(&(a + b * &gain));
    if rho >= 1.0 {
        return Err(Error::NotStable { rho });
    }
    let residual = riccati_residual(a, b, q, r, &x);
    Ok(Lqr { gain, cost: x, residual, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    #[test]
    fn stable_plant_without_state_cost() {
        let l = dlqr(&s(0.5), &s(1.0), &s(0.0), &s(1.0), LqrOptions::default()).unwrap();
        assert!(l.gain[(0, 0)].abs() < 1e-14);
    }

    #[test]
    fn scalar_riccati_root() {
        // x = 1 + 4x - 4x^2/(1+x)  <=>  x^2 - 4x - 1 = 0.
        let l = dlqr(&s(2.0), &s(1.0), &s(1.0), &s(1.0), LqrOptions::default()).unwrap();
        let root = 2.0 + libm::sqrt(5.0);
        assert!((l.cost[(0, 0)] - root).abs() < 1e-10);
        assert!((2.0 + l.gain[(0, 0)]).abs() < 1.0);
        assert!(l.residual < 1e-8);
    }
}

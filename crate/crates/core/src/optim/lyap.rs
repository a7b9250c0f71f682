//! Discrete Lyapunov equation `F'PF - P = -S`.

use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, Mat};

const KRONECKER_MAX: usize = 20;

/// Residual `|F'PF - P + S|_max`.
pub fn dlyap_residual(f: &Mat, s: &Mat, p: &Mat) -> f64 {
    (f.transpose() * p * f - p + s).amax()
}

pub fn solve_dlyap(f: &Mat, s: &Mat) -> Result<Mat> {
    let n = f.nrows();
    if f.ncols() != n || s.nrows() != n || s.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "Lyapunov operands",
            expected: n,
            found: if f.ncols() != n { f.ncols() } else { s.nrows() },
        });
    }
    let rho = spectral_radius(f);
    if rho >= 1.0 {
        return Err(Error::NotStable { rho });
    }
    let s = (s + s.transpose()) * 0.5;
    let mut p = if n <= KRONECKER_MAX { kronecker(f, &s)? } else { doubling(f, &s)? };
    p = (&p + p.transpose()) * 0.5;
    // One correction pass on the residual equation.
    let r = f.transpose() * &p * f - &p + &s;
    if r.amax() > 1e-12 * (1.0 + s.amax()) {
        let dp = if n <= KRONECKER_MAX { kronecker(f, &r)? } else { doubling(f, &r)? };
        p += (&dp + dp.transpose()) * 0.5;
    }
    Ok(p)
}

fn kronecker(f: &Mat, s: &Mat) -> Result<Mat> {
    let n = f.nrows();
    let nn = n * n;
    let mut m = Mat::zeros(nn, nn);
    // Entry of F'PF at (r, c) is sum_{a,b} F[a,r] P[a,b] F[b,c].
    for c in 0..n {
        for r in 0..n {
            let row = c * n + r;
            for bcol in 0..n {
                let fbc = f[(bcol, c)];
                if fbc == 0.0 {
                    continue;
                }
                for a in 0..n {
                    m[(row, bcol * n + a)] += f[(a, r)] * fbc;
                }
            }
        }
    }
    for i in 0..nn {
        m[(i, i)] -= 1.0;
    }
    let rhs = -crate::linalg::Vector::from_column_slice(s.as_slice());
    let v = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SolverFailure("singular Lyapunov operator".into()))?;
    Ok(Mat::from_column_slice(n, n, v.as_slice()))
}

fn doubling(f: &Mat, s: &Mat) -> Result<Mat> {
    let mut a = f.clone();
    let mut p = s.clone();
    for _ in 0..64 {
        let step = a.transpose() * &p * &a;
        p += &step;
        a = &a * &a;
        if step.amax() <= 1e-16 * (1.0 + p.amax()) {
            return Ok(p);
        }
    }
    Err(Error::NonConvergence {
        what: "Lyapunov doubling",
        iterations: 64,
    })
}

//! Maximal positively invariant set of `x+ = F x` inside `{x : G x <= g}`.

use alloc::vec::Vec;

use super::HPolytope;
use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, Mat, Vector};

#[derive(Debug, Clone, Copy)]
pub struct TerminalOptions {
    pub max_iter: usize,
    pub redundancy_tol: f64,
    /// Drop redundant rows from the result.
    pub prune: bool,
}

impl Default for TerminalOptions {
    fn default() -> Self {
        TerminalOptions { max_iter: 200, redundancy_tol: 1e-9, prune: true }
    }
}

/// Largest `h(X, F'a_i) - b_i` over the rows of `X`; nonpositive means `F X ⊆ X`.
pub fn invariance_slack(f: &Mat, x: &HPolytope) -> Result<f64> {
    let dirs: Vec<Vector> = x.a.row_iter().map(|r| f.transpose() * r.transpose()).collect();
    let h = x.supports(&dirs)?;
    Ok(h.iter().zip(x.b.iter()).map(|(s, b)| s - b).fold(f64::NEG_INFINITY, f64::max))
}

pub fn compute_terminal_set(f: &Mat, g_rows: &Mat, g: &Vector, opts: TerminalOptions) -> Result<HPolytope> {
    let n = f.nrows();
    if g_rows.ncols() != n || g_rows.nrows() != g.len() {
        return Err(Error::DimensionMismatch {
            what: "terminal constraints",
            expected: n,
            found: g_rows.ncols(),
        });
    }
    let rho = spectral_radius(f);
    if rho >= 1.0 {
        return Err(Error::NotStable { rho });
    }
    let mut omega = HPolytope::new(g_rows.clone(), g.clone())?;
    if omega.witness()?.is_none() {
        return Err(Error::EmptyTerminalSet);
    }
    let mut power = f.clone();
    for _ in 0..opts.max_iter {
        let cand = g_rows * &power;
        let dirs: Vec<Vector> = cand.row_iter().map(|r| r.transpose()).collect();
        let h = omega.supports(&dirs)?;
        let new_rows: Vec<usize> = (0..dirs.len())
            .filter(|&i| h[i] > g[i] + opts.redundancy_tol)
            .collect();
        if new_rows.is_empty() {
            let result = if opts.prune { omega.remove_redundant(opts.redundancy_tol)? } else { omega };
            if result.witness()?.is_none() {
                return Err(Error::EmptyTerminalSet);
            }
            return Ok(result);
        }
        let old = omega.num_constraints();
        let mut a = Mat::zeros(old + new_rows.len(), n);
        let mut b = Vector::zeros(old + new_rows.len());
        a.view_mut((0, 0), (old, n)).copy_from(&omega.a);
        b.rows_mut(0, old).copy_from(&omega.b);
        for (k, &i) in new_rows.iter().enumerate() {
            a.row_mut(old + k).copy_from(&cand.row(i));
            b[old + k] = g[i];
        }
        omega = HPolytope::new(a, b)?;
        if omega.witness()?.is_none() {
            return Err(Error::EmptyTerminalSet);
        }
        power = f * power;
    }
    Err(Error::NonConvergence { what: "terminal set backpropagation", iterations: opts.max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Hyperbox;

    #[test]
    fn zero_dynamics_keeps_constraints() {
        let bx = Hyperbox::symmetric(&[1.0, 2.0]).unwrap().to_hpolytope();
        let t = compute_terminal_set(&Mat::zeros(2, 2), &bx.a, &bx.b, TerminalOptions::default()).unwrap();
        assert_eq!(t.num_constraints(), 4);
    }

    #[test]
    fn scalar_contraction_already_invariant() {
        let bx = Hyperbox::symmetric(&[1.0]).unwrap().to_hpolytope();
        let t = compute_terminal_set(&Mat::from_element(1, 1, 0.5), &bx.a, &bx.b, TerminalOptions::default()).unwrap();
        assert_eq!(t, bx);
    }

    #[test]
    fn empty_constraints_rejected() {
        let a = Mat::from_row_slice(2, 1, &[1.0, -1.0]);
        let b = Vector::from_column_slice(&[-1.0, -1.0]);
        let r = compute_terminal_set(&Mat::from_element(1, 1, 0.5), &a, &b, TerminalOptions::default());
        assert!(matches!(r, Err(Error::EmptyTerminalSet)));
    }
}

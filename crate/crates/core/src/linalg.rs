//! Dense linear-algebra helpers shared by the solvers and set routines.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{Complex, DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

fn cabs(z: &Complex<f64>) -> f64 {
    libm::hypot(z.re, z.im)
}

/// Largest absolute eigenvalue.
pub fn spectral_radius(m: &Mat) -> f64 {
    assert!(m.is_square(), "spectral radius needs a square matrix");
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| libm::hypot(z.re, z.im))
        .fold(0.0, f64::max)
}

/// Induced 2-norm (largest singular value).
pub fn norm2(m: &Mat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a (6,6) Padé approximant.
pub fn expm(a: &Mat) -> Mat {
    assert!(a.is_square());
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm1 * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let x = a * scale;
    const Q: usize = 6;
    // c_k = q!(2q-k)! / ((2q)! k! (q-k)!)
    let mut c = [0.0f64; Q + 1];
    c[0] = 1.0;
    for k in 1..=Q {
        c[k] = c[k - 1] * ((Q + 1 - k) as f64) / ((k * (2 * Q + 1 - k)) as f64);
    }
    let eye = Mat::identity(n, n);
    let mut num = eye.clone() * c[0];
    let mut den = eye.clone() * c[0];
    let mut power = eye;
    for (k, ck) in c.iter().enumerate().skip(1) {
        power = &power * &x;
        num += &power * *ck;
        if k % 2 == 0 {
            den += &power * *ck;
        } else {
            den -= &power * *ck;
        }
    }
    let mut r = den
        .lu()
        .solve(&num)
        .expect("Padé denominator is nonsingular for scaled arguments");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// Monic characteristic polynomial `[1, c1, .., cn]` of `det(zI - m)` (Faddeev–LeVerrier).
pub fn charpoly(m: &Mat) -> Vec<f64> {
    let n = m.nrows();
    let mut coeffs = vec![0.0; n + 1];
    coeffs[0] = 1.0;
    let mut mk = Mat::zeros(n, n);
    let eye = Mat::identity(n, n);
    for k in 1..=n {
        mk = m * (&mk + &eye * coeffs[k - 1]);
        coeffs[k] = -mk.trace() / k as f64;
    }
    coeffs
}

/// Companion matrix whose characteristic polynomial is `z^n - a1 z^{n-1} - ... - an`.
pub fn ar_companion(ar: &[f64]) -> Mat {
    let n = ar.len();
    let mut c = Mat::zeros(n, n);
    for (j, a) in ar.iter().enumerate() {
        c[(0, j)] = *a;
    }
    for i in 1..n {
        c[(i, i - 1)] = 1.0;
    }
    c
}

/// Roots of a polynomial given in descending powers.
pub fn poly_roots(coeffs: &[f64]) -> Vec<Complex<f64>> {
    let first = coeffs.iter().position(|c| *c != 0.0);
    let Some(first) = first else {
        return Vec::new();
    };
    let c = &coeffs[first..];
    let n = c.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let ar: Vec<f64> = c[1..].iter().map(|v| -v / c[0]).collect();
    ar_companion(&ar).complex_eigenvalues().iter().copied().collect()
}

/// One diagonal block of a real modal decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModalBlock {
    pub start: usize,
    /// 1 for a real eigenvalue, 2 for a complex pair.
    pub size: usize,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone)]
pub struct ModalBasis {
    pub v: Mat,
    pub blocks: Vec<ModalBlock>,
}

/// Real basis `V` such that `V^{-1} m V` is block diagonal with 1x1 blocks for real
/// eigenvalues and rotation-scaling 2x2 blocks `[[re, im], [-im, re]]` for complex pairs.
///
/// Returns `None` when `m` is (numerically) defective or the basis is ill-conditioned.
pub fn real_modal_basis(m: &Mat) -> Option<ModalBasis> {
    let n = m.nrows();
    if n == 0 {
        return Some(ModalBasis { v: Mat::zeros(0, 0), blocks: Vec::new() });
    }
    let scale = 1.0 + m.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let eig: Vec<Complex<f64>> = m.clone().complex_eigenvalues().iter().copied().collect();
    let cluster_tol = 1e-7 * scale;
    let mut used = vec![false; n];
    let mut cols: Vec<Vector> = Vec::with_capacity(n);
    let mut blocks = Vec::new();
    let cm: DMatrix<Complex<f64>> = m.map(|v| Complex::new(v, 0.0));
    for i in 0..n {
        if used[i] {
            continue;
        }
        let is_real = eig[i].im.abs() <= cluster_tol;
        let members: Vec<usize> = (i..n)
            .filter(|&j| !used[j] && cabs(&(eig[j] - eig[i])) <= cluster_tol)
            .collect();
        for &j in &members {
            used[j] = true;
        }
        if !is_real {
            // Mark the conjugate cluster.
            let conj = eig[i].conj();
            for j in 0..n {
                if !used[j] && cabs(&(eig[j] - conj)) <= cluster_tol {
                    used[j] = true;
                }
            }
        }
        let k = members.len();
        let mean = members.iter().fold(Complex::new(0.0, 0.0), |acc, &j| acc + eig[j])
            / k as f64;
        let lam = if is_real {
            Complex::new(mean.re, 0.0)
        } else if mean.im < 0.0 {
            mean.conj()
        } else {
            mean
        };
        let mut shifted = cm.clone();
        for r in 0..n {
            shifted[(r, r)] -= lam;
        }
        let svd = shifted.svd(false, true);
        let vt = svd.v_t?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|a, b| svd.singular_values[*a].total_cmp(&svd.singular_values[*b]));
        for &idx in order.iter().take(k) {
            if svd.singular_values[idx] > 1e-6 * scale {
                return None;
            }
            let v: Vec<Complex<f64>> = (0..n).map(|j| vt[(idx, j)].conj()).collect();
            if is_real {
                let (jmax, _) = v
                    .iter()
                    .enumerate()
                    .fold((0, -1.0), |acc, (j, z)| if cabs(z) > acc.1 { (j, cabs(z)) } else { acc });
                let phase = v[jmax].conj() / cabs(&v[jmax]);
                blocks.push(ModalBlock { start: cols.len(), size: 1, re: lam.re, im: 0.0 });
                cols.push(Vector::from_iterator(n, v.iter().map(|z| (z * phase).re)));
            } else {
                blocks.push(ModalBlock { start: cols.len(), size: 2, re: lam.re, im: lam.im });
                cols.push(Vector::from_iterator(n, v.iter().map(|z| z.re)));
                cols.push(Vector::from_iterator(n, v.iter().map(|z| z.im)));
            }
        }
    }
    if cols.len() != n {
        return None;
    }
    let basis = Mat::from_columns(&cols);
    let sv = basis.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smin > 1e-10 * smax) {
        return None;
    }
    Some(ModalBasis { v: basis, blocks })
}

/// Elementwise absolute value.
pub fn abs_mat(m: &Mat) -> Mat {
    m.map(f64::abs)
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Diagonal matrix from a slice.
pub fn diag(values: &[f64]) -> Mat {
    Mat::from_diagonal(&Vector::from_column_slice(values))
}

/// Stack matrices vertically; all must share the column count.
pub fn vstack(blocks: &[&Mat]) -> Mat {
    let cols = blocks.first().map(|b| b.ncols()).unwrap_or(0);
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Splitmix64 step, used to derive independent sub-seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_scalar_and_rotation() {
        let a = Mat::from_row_slice(1, 1, &[-0.1]);
        assert!((expm(&a)[(0, 0)] - libm::exp(-0.1)).abs() < 1e-15);
        let t = 1.3;
        let r = Mat::from_row_slice(2, 2, &[0.0, -t, t, 0.0]);
        let e = expm(&r);
        assert!((e[(0, 0)] - libm::cos(t)).abs() < 1e-13);
        assert!((e[(1, 0)] - libm::sin(t)).abs() < 1e-13);
    }

    #[test]
    fn charpoly_of_companion_recovers_coefficients() {
        let c = ar_companion(&[1.2, -0.5, 0.1]);
        let p = charpoly(&c);
        let expected = [1.0, -1.2, 0.5, -0.1];
        for (a, b) in p.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_and_nilpotent_radius() {
        let eye = Mat::identity(4, 4);
        assert!((spectral_radius(&eye) - 1.0).abs() < 1e-12);
        assert!((norm2(&eye) - 1.0).abs() < 1e-12);
        let mut nil = Mat::zeros(4, 4);
        nil[(0, 1)] = 3.0;
        nil[(1, 2)] = -2.0;
        nil[(2, 3)] = 1.0;
        assert!(spectral_radius(&nil) < 1e-8);
    }

    fn check_modal(m: &Mat) {
        let mb = real_modal_basis(m).expect("diagonalizable");
        let lam = mb.v.clone().try_inverse().unwrap() * m * &mb.v;
        let mut expect = Mat::zeros(m.nrows(), m.nrows());
        for b in &mb.blocks {
            expect[(b.start, b.start)] = b.re;
            if b.size == 2 {
                expect[(b.start, b.start + 1)] = b.im;
                expect[(b.start + 1, b.start)] = -b.im;
                expect[(b.start + 1, b.start + 1)] = b.re;
            }
        }
        assert!((lam - expect).amax() < 1e-9);
    }

    #[test]
    fn modal_basis_block_diagonalizes() {
        check_modal(&Mat::from_row_slice(3, 3, &[0.5, 0.3, 0.0, -0.4, 0.2, 0.1, 0.0, 0.2, -0.3]));
        check_modal(&(Mat::identity(3, 3) * 0.5));
        let rot = Mat::from_row_slice(2, 2, &[0.0, -0.9, 0.9, 0.0]);
        let mut m = Mat::zeros(4, 4);
        m.view_mut((0, 0), (2, 2)).copy_from(&rot);
        m.view_mut((2, 2), (2, 2)).copy_from(&rot);
        check_modal(&m);
    }

    #[test]
    fn modal_basis_rejects_jordan_block() {
        let m = Mat::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.5]);
        assert!(real_modal_basis(&m).is_none());
    }
}

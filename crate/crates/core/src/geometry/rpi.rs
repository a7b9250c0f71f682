//! Outer approximation of the minimal robust positively invariant set of
//! `e+ = F e + M w`, `w ∈ W`.
//!
//! The set is `⊕_{i<s} F^i M W ⊕ T`, where the tail `T` absorbs everything after
//! step `s`. `T` is a product of scaled segments and regular polygons in the real
//! modal coordinates of `F`, sized so that `F T ⊕ F^s M W ⊆ T` holds exactly.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{linear_map, minkowski_sum, unit, Hyperbox, Support, Zonotope};
use crate::error::{Error, Result};
use crate::linalg::{real_modal_basis, spectral_radius, Mat, ModalBasis, Vector};

#[derive(Debug, Clone, Copy)]
pub struct RpiOptions {
    /// Truncation threshold relative to the largest support of `M W`.
    pub contraction_tol: f64,
    pub max_terms: usize,
    pub slack_tol: f64,
    pub random_directions: usize,
}

impl Default for RpiOptions {
    fn default() -> Self {
        RpiOptions { contraction_tol: 1e-3, max_terms: 500, slack_tol: 1e-8, random_directions: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpiMethod {
    /// `F^s M = 0`: the finite sum is the minimal RPI set.
    Exact,
    /// Finite sum plus a modal tail.
    ModalTail,
    /// Finite sum scaled by `1/(1 - alpha)`; used when `F` has no modal basis.
    ScaledSum,
}

#[derive(Debug, Clone)]
pub struct RpiSet {
    pub set: Zonotope,
    pub terms: usize,
    pub method: RpiMethod,
    /// Worst support slack of `F E ⊕ M W ⊆ E` over the checked directions.
    pub slack: f64,
}

/// Largest `h(F E ⊕ M W, d) - h(E, d)` over the given directions.
pub fn rpi_slack(f: &Mat, m: &Mat, w: &Hyperbox, e: &Zonotope, dirs: &[Vector]) -> Result<f64> {
    let fe = linear_map(f, e)?;
    let mw = linear_map(m, &w.to_zonotope())?;
    let mut worst = f64::NEG_INFINITY;
    for d in dirs {
        let lhs = fe.support(d)? + mw.support(d)?;
        worst = worst.max(lhs - e.support(d)?);
    }
    Ok(worst)
}

fn canonical_max(z: &Zonotope) -> Result<f64> {
    let n = z.dim();
    let mut best: f64 = 0.0;
    for i in 0..n {
        best = best.max(z.support(&unit(n, i, 1.0))?).max(z.support(&unit(n, i, -1.0))?);
    }
    Ok(best)
}

/// Generators of a regular polygon with `m` generator directions in the plane.
fn polygon(m: usize) -> Mat {
    Mat::from_fn(2, m, |r, j| {
        let a = j as f64 * PI / m as f64;
        if r == 0 { libm::cos(a) } else { libm::sin(a) }
    })
}

/// Gauge of `q` with respect to the polygon spanned by `gens`.
fn polygon_gauge(gens: &Mat, q: (f64, f64)) -> f64 {
    let mut g: f64 = 0.0;
    for j in 0..gens.ncols() {
        let (nx, ny) = (-gens[(1, j)], gens[(0, j)]);
        let h: f64 = (0..gens.ncols()).map(|i| (nx * gens[(0, i)] + ny * gens[(1, i)]).abs()).sum();
        g = g.max((nx * q.0 + ny * q.1).abs() / h);
    }
    g
}

/// Smallest polygon order keeping a rotation-scaling block by `r` contractive.
fn polygon_order(r: f64) -> Option<usize> {
    let target = 0.5 * (1.0 + r);
    (2..=256).find(|&m| r / libm::cos(PI / (2.0 * m as f64)) <= target)
}

fn modal_tail(mb: &ModalBasis, tail_map: &Mat, w_half: &Vector) -> Result<Zonotope> {
    let n = mb.v.nrows();
    let vinv = mb
        .v
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SolverFailure("singular modal basis".into()))?;
    let modal = &vinv * tail_map;
    let mut cols: Vec<Vector> = Vec::new();
    for blk in &mb.blocks {
        let s = blk.start;
        if blk.size == 1 {
            let r = blk.re.abs();
            let b: f64 = (0..modal.ncols()).map(|k| modal[(s, k)].abs() * w_half[k]).sum();
            let sigma = b / (1.0 - r);
            cols.push(mb.v.column(s) * sigma);
        } else {
            let r = libm::hypot(blk.re, blk.im);
            let order = polygon_order(r).ok_or(Error::NotStable { rho: r })?;
            let gens = polygon(order);
            let kappa = 1.0 / libm::cos(PI / (2.0 * order as f64));
            let b: f64 = (0..modal.ncols())
                .map(|k| polygon_gauge(&gens, (modal[(s, k)], modal[(s + 1, k)])) * w_half[k])
                .sum();
            let sigma = b / (1.0 - r * kappa);
            let vblk = mb.v.columns(s, 2);
            for j in 0..order {
                cols.push(&vblk * gens.column(j) * sigma);
            }
        }
    }
    let g = if cols.is_empty() { Mat::zeros(n, 0) } else { Mat::from_columns(&cols) };
    Ok(Zonotope { center: Vector::zeros(n), generators: g })
}

fn check_directions(n: usize, count: usize) -> Vec<Vector> {
    let mut dirs = Vec::with_capacity(2 * n + count);
    for i in 0..n {
        dirs.push(unit(n, i, 1.0));
        dirs.push(unit(n, i, -1.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0F_29_u64);
    for _ in 0..count {
        let d = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let norm = d.norm();
        if norm > 1e-12 {
            dirs.push(d / norm);
        }
    }
    dirs
}

pub fn compute_rpi(f: &Mat, m: &Mat, w: &Hyperbox, opts: RpiOptions) -> Result<RpiSet> {
    let n = f.nrows();
    if f.ncols() != n || m.nrows() != n || m.ncols() != w.dim() {
        return Err(Error::DimensionMismatch {
            what: "RPI operands",
            expected: n,
            found: if f.ncols() != n { f.ncols() } else { m.nrows() },
        });
    }
    let rho = spectral_radius(f);
    if rho >= 1.0 {
        return Err(Error::NotStable { rho });
    }
    // Nonzero disturbance center moves the set to the fixed point of the mean dynamics.
    let wc = w.center();
    let center = if wc.amax() > 0.0 {
        (Mat::identity(n, n) - f)
            .lu()
            .solve(&(m * &wc))
            .ok_or_else(|| Error::SolverFailure("I - F singular".into()))?
    } else {
        Vector::zeros(n)
    };
    let w_half = w.half_widths();
    let w0 = Hyperbox::symmetric(w_half.as_slice())?.to_zonotope();
    let mw = linear_map(m, &w0)?.prune(0.0);
    let base = canonical_max(&mw)?;
    let threshold = opts.contraction_tol * base;

    let mut sum = Zonotope::point(Vector::zeros(n));
    let mut power = m.clone();
    let mut terms = 0;
    loop {
        if terms >= opts.max_terms {
            return Err(Error::NonConvergence { what: "RPI truncation", iterations: terms });
        }
        let term = linear_map(&power, &w0)?.prune(1e-300);
        sum = minkowski_sum(&sum, &term)?;
        terms += 1;
        power = f * power;
        let next = linear_map(&power, &w0)?;
        if canonical_max(&next)? <= threshold || power.amax() == 0.0 {
            break;
        }
    }

    let (mut set, method) = if power.amax() == 0.0 {
        (sum, RpiMethod::Exact)
    } else {
        match real_modal_basis(f) {
            Some(mb) => {
                let tail = modal_tail(&mb, &power, &w_half)?.prune(0.0);
                (minkowski_sum(&sum, &tail)?, RpiMethod::ModalTail)
            }
            None => (sum.scale(1.0 / (1.0 - opts.contraction_tol)), RpiMethod::ScaledSum),
        }
    };
    set.center = center;

    let dirs = check_directions(n, opts.random_directions);
    let raw = rpi_slack(f, m, w, &set, &dirs)?;
    let scale = 1.0 + canonical_max(&set)?;
    if raw > opts.slack_tol * scale {
        return Err(Error::InclusionViolated(alloc::format!(
            "RPI inclusion fails by {raw:e} ({method:?})"
        )));
    }
    Ok(RpiSet { set, terms, method, slack: raw })
}

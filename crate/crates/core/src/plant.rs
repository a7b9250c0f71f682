//! Ground-truth ARX plant, excitation and bounded-noise sampling.
//!
//! Coefficient layout of `theta_bar` for order `n`:
//! `[a_1..a_n, b_2..b_n, b_1]`, so that
//! `z(k+1) = sum a_i z(k+1-i) + b_1 u(k) + sum_{i>=2} b_i u(k+1-i) + v(k)`.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{ar_companion, charpoly, expm, poly_roots, spectral_radius, splitmix64, Mat};

#[derive(Debug, Clone, PartialEq)]
pub struct ArxPlant {
    pub n: usize,
    pub theta_bar: Vec<f64>,
    pub v_bar: f64,
    pub d_bar: f64,
}

impl ArxPlant {
    pub fn new(n: usize, theta_bar: Vec<f64>, v_bar: f64, d_bar: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("plant order must be positive".into()));
        }
        if theta_bar.len() != 2 * n {
            return Err(Error::DimensionMismatch {
                what: "plant coefficients",
                expected: 2 * n,
                found: theta_bar.len(),
            });
        }
        if !(v_bar >= 0.0 && d_bar >= 0.0) || theta_bar.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("noise bounds must be nonnegative and coefficients finite".into()));
        }
        let rho = spectral_radius(&ar_companion(&theta_bar[..n]));
        if rho >= 1.0 {
            return Err(Error::NotStable { rho });
        }
        Ok(ArxPlant { n, theta_bar, v_bar, d_bar })
    }

    pub fn ar(&self) -> &[f64] {
        &self.theta_bar[..self.n]
    }

    /// Input coefficients `b_1..b_n` in delay order.
    pub fn input_coeffs(&self) -> Vec<f64> {
        let n = self.n;
        let mut b = vec![self.theta_bar[2 * n - 1]];
        b.extend_from_slice(&self.theta_bar[n..2 * n - 1]);
        b
    }

    pub fn dc_gain(&self) -> f64 {
        let num: f64 = self.theta_bar[self.n..].iter().sum();
        let den = 1.0 - self.ar().iter().sum::<f64>();
        num / den
    }

    /// One-step coefficients for a model of order `o >= n`, zero-padded.
    pub fn padded_theta(&self, o: usize) -> Result<Vec<f64>> {
        if o < self.n {
            return Err(Error::InvalidInput(alloc::format!(
                "model order {o} below plant order {}",
                self.n
            )));
        }
        let n = self.n;
        let mut t = vec![0.0; 2 * o];
        t[..n].copy_from_slice(self.ar());
        t[o..o + n - 1].copy_from_slice(&self.theta_bar[n..2 * n - 1]);
        t[2 * o - 1] = self.theta_bar[2 * n - 1];
        Ok(t)
    }

    /// Next noise-free output given the `n` latest outputs (newest first), the `n-1`
    /// previous inputs (newest first) and the current input.
    #[inline]
    pub(crate) fn step(&self, z_hist: &[f64], u_hist: &[f64], u_now: f64) -> f64 {
        let n = self.n;
        let mut acc = self.theta_bar[2 * n - 1] * u_now;
        for i in 0..n {
            acc += self.theta_bar[i] * z_hist[i];
        }
        for i in 0..n - 1 {
            acc += self.theta_bar[n + i] * u_hist[i];
        }
        acc
    }
}

/// ZOH discretization of a strictly proper, stable continuous transfer function.
///
/// Coefficients are in descending powers of `s`.
pub fn discretize_zoh(num: &[f64], den: &[f64], ts: f64) -> Result<ArxPlant> {
    let strip = |c: &[f64]| -> Vec<f64> {
        let first = c.iter().position(|v| *v != 0.0).unwrap_or(c.len());
        c[first..].to_vec()
    };
    let num = strip(num);
    let den = strip(den);
    if den.len() < 2 || num.is_empty() {
        return Err(Error::InvalidInput("transfer function needs a nonzero numerator and a pole".into()));
    }
    if !(ts > 0.0) || !ts.is_finite() {
        return Err(Error::InvalidInput("sampling time must be positive".into()));
    }
    let n = den.len() - 1;
    if num.len() > n {
        return Err(Error::Unsupported(
            "only strictly proper transfer functions have an ARX form with this regressor layout".into(),
        ));
    }
    if poly_roots(&den).iter().any(|r| r.re >= 0.0) {
        return Err(Error::InvalidInput("continuous-time plant is not asymptotically stable".into()));
    }
    let lead = den[0];
    let alpha: Vec<f64> = den[1..].iter().map(|v| v / lead).collect();
    let mut beta = vec![0.0; n];
    for (i, v) in num.iter().rev().enumerate() {
        beta[n - 1 - i] = v / lead;
    }
    // Controllable canonical realization.
    let mut aug = Mat::zeros(n + 1, n + 1);
    for j in 0..n {
        aug[(0, j)] = -alpha[j] * ts;
    }
    for i in 1..n {
        aug[(i, i - 1)] = ts;
    }
    aug[(0, n)] = ts;
    let e = expm(&aug);
    let phi = e.view((0, 0), (n, n)).into_owned();
    let gamma = e.view((0, n), (n, 1)).into_owned();
    let c = Mat::from_row_slice(1, n, &beta);
    let den_d = charpoly(&phi);
    let shifted = charpoly(&(&phi - &gamma * &c));
    let mut theta = vec![0.0; 2 * n];
    for i in 0..n {
        theta[i] = -den_d[i + 1];
    }
    let numd: Vec<f64> = (1..=n).map(|i| shifted[i] - den_d[i]).collect();
    theta[n..2 * n - 1].copy_from_slice(&numd[1..]);
    theta[2 * n - 1] = numd[0];
    ArxPlant::new(n, theta, 0.0, 0.0)
}

/// Runs the ARX recursion from `z_init = [z(0), z(-1), .., z(-n+1)]`; inputs before
/// time 0 are zero. Returns `(z, y)` with `y = z + d`.
pub fn simulate(
    plant: &ArxPlant,
    u: &[f64],
    v: &[f64],
    d: &[f64],
    z_init: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let len = u.len();
    for (what, found) in [("process noise", v.len()), ("measurement noise", d.len())] {
        if found != len {
            return Err(Error::DimensionMismatch { what, expected: len, found });
        }
    }
    if z_init.len() != plant.n {
        return Err(Error::DimensionMismatch {
            what: "initial outputs",
            expected: plant.n,
            found: z_init.len(),
        });
    }
    let slack = 1e-12;
    if v.iter().any(|x| x.abs() > plant.v_bar + slack) {
        return Err(Error::InvalidInput("process noise exceeds its bound".into()));
    }
    if d.iter().any(|x| x.abs() > plant.d_bar + slack) {
        return Err(Error::InvalidInput("measurement noise exceeds its bound".into()));
    }
    let n = plant.n;
    let mut z = vec![0.0; len];
    if len == 0 {
        return Ok((z, Vec::new()));
    }
    let mut z_hist: Vec<f64> = z_init.to_vec();
    let mut u_hist = vec![0.0; n.saturating_sub(1)];
    z[0] = z_init[0];
    for k in 0..len - 1 {
        let next = plant.step(&z_hist, &u_hist, u[k]) + v[k];
        z[k + 1] = next;
        z_hist.rotate_right(1);
        z_hist[0] = next;
        if n > 1 {
            u_hist.rotate_right(1);
            u_hist[0] = u[k];
        }
    }
    let y = z.iter().zip(d).map(|(a, b)| a + b).collect();
    Ok((z, y))
}

/// Piecewise-constant input holding a uniformly drawn level for `hold` steps.
pub fn generate_excitation(seed: u64, length: usize, hold: usize, levels: &[f64]) -> Result<Vec<f64>> {
    if hold == 0 || levels.is_empty() {
        return Err(Error::InvalidInput("excitation needs hold >= 1 and at least one level".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(length);
    while out.len() < length {
        let level = levels[rng.random_range(0..levels.len())];
        let take = hold.min(length - out.len());
        out.extend(core::iter::repeat_n(level, take));
    }
    Ok(out)
}

/// I.i.d. samples uniform on `[-bound, bound]`.
pub fn sample_bounded_noise(seed: u64, length: usize, bound: f64) -> Result<Vec<f64>> {
    if !(bound >= 0.0) || !bound.is_finite() {
        return Err(Error::InvalidInput("noise bound must be finite and nonnegative".into()));
    }
    if bound == 0.0 {
        return Ok(vec![0.0; length]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..length).map(|_| rng.random_range(-bound..=bound)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// Regressor/target pairs available for the order and horizon the data was sized for.
    pub n_pairs: usize,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub seed: u64,
    pub n_pairs: usize,
    pub p_bar: usize,
    /// Model order the record is sized for.
    pub order: usize,
    pub hold: usize,
    pub levels: Vec<f64>,
}

/// Sub-seeds for the three random streams of one experiment.
pub fn stream_seeds(seed: u64) -> [u64; 3] {
    let a = splitmix64(seed);
    let b = splitmix64(a);
    let c = splitmix64(b);
    [a, b, c]
}

/// Simulates the plant from rest, drops a warm-up of `n + p_bar` samples and keeps
/// `n_pairs + p_bar + order - 1` samples.
pub fn generate_dataset(plant: &ArxPlant, cfg: &DataConfig) -> Result<Dataset> {
    if cfg.n_pairs == 0 || cfg.p_bar == 0 || cfg.order == 0 {
        return Err(Error::InvalidInput("dataset needs positive pairs, horizon and order".into()));
    }
    let warmup = plant.n + cfg.p_bar;
    let keep = cfg.n_pairs + cfg.p_bar + cfg.order - 1;
    let total = warmup + keep;
    let [su, sv, sd] = stream_seeds(cfg.seed);
    let u = generate_excitation(su, total, cfg.hold, &cfg.levels)?;
    let v = sample_bounded_noise(sv, total, plant.v_bar)?;
    let d = sample_bounded_noise(sd, total, plant.d_bar)?;
    let (z, y) = simulate(plant, &u, &v, &d, &vec![0.0; plant.n])?;
    Ok(Dataset {
        u: u[warmup..].to_vec(),
        y: y[warmup..].to_vec(),
        z: z[warmup..].to_vec(),
        n_pairs: cfg.n_pairs,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_order_zoh_pole() {
        let p = discretize_zoh(&[1.0], &[1.0, 1.0], 0.1).unwrap();
        assert!((p.theta_bar[0] - libm::exp(-0.1)).abs() < 1e-14);
        assert!((p.theta_bar[1] - (1.0 - libm::exp(-0.1))).abs() < 1e-14);
    }

    #[test]
    fn zoh_keeps_unit_dc_gain() {
        for a in [0.3, 2.0, 15.0] {
            let p = discretize_zoh(&[a], &[1.0, a], 0.1).unwrap();
            assert!((p.dc_gain() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn biproper_and_unstable_rejected() {
        assert!(discretize_zoh(&[1.0, 0.0], &[1.0, 1.0], 0.1).is_err());
        assert!(discretize_zoh(&[1.0], &[1.0, -1.0], 0.1).is_err());
    }

    #[test]
    fn zero_input_stays_at_rest() {
        let p = ArxPlant::new(2, vec![0.5, 0.1, 0.3, 1.0], 0.0, 0.0).unwrap();
        let (z, y) = simulate(&p, &[0.0; 20], &[0.0; 20], &[0.0; 20], &[0.0, 0.0]).unwrap();
        assert!(z.iter().chain(&y).all(|v| *v == 0.0));
    }

    #[test]
    fn excitation_deterministic_and_piecewise() {
        let a = generate_excitation(3, 103, 5, &[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(a, generate_excitation(3, 103, 5, &[-1.0, 0.0, 1.0]).unwrap());
        assert_eq!(a.len(), 103);
        for seg in a.chunks(5) {
            assert!(seg.iter().all(|v| *v == seg[0]));
        }
        assert!(generate_excitation(1, 10, 3, &[0.0]).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn noise_over_bound_rejected() {
        let p = ArxPlant::new(1, vec![0.5, 1.0], 0.1, 0.1).unwrap();
        assert!(simulate(&p, &[0.0; 3], &[0.0, 0.2, 0.0], &[0.0; 3], &[0.0]).is_err());
    }
}

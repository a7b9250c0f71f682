//! Multirate lifting and the tube controller built on the predictor bank.
//!
//! The long-step state is `X(j) = [y(jp̄) .. y(jp̄-o+1), u(jp̄-1) .. u(jp̄-o+1)]` and the
//! long-step input is `U(j) = [u(jp̄) .. u(jp̄+p̄-1)]`.

mod closed_loop;
mod controller;
mod synth;

pub use closed_loop::{
    run_closed_loop, settling_index, simulate_open_loop, Audits, ClosedLoopOptions, ClosedLoopTrace, Excursion,
    LongStepRecord, NoiseMode, ShortRecord,
};
pub use controller::{assemble_qp, CandidateCheck, Controller, MpcSolution, StageMaps};
pub use synth::{one_step_closed_loop, one_step_model, synth, SynthOptions, SynthReport, TubeController};

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ident::{regressor, PredictorBank};
use crate::linalg::{Mat, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedModel {
    pub a: Mat,
    pub b: Mat,
    pub m: Mat,
    pub c: Mat,
    pub d: Mat,
    pub o: usize,
    pub p_bar: usize,
}

impl LiftedModel {
    pub fn state_dim(&self) -> usize {
        2 * self.o - 1
    }
}

pub fn lift(bank: &PredictorBank) -> Result<LiftedModel> {
    let o = bank.o;
    let pb = bank.p_bar;
    if pb <= o {
        return Err(Error::Unsupported(alloc::format!(
            "lifting needs p_bar > o (got p_bar = {pb}, o = {o})"
        )));
    }
    if bank.models.len() != pb || bank.models.iter().enumerate().any(|(i, m)| m.p != i + 1 || m.o != o) {
        return Err(Error::InvalidInput("bank must hold one model per horizon 1..=p_bar".into()));
    }
    let nx = 2 * o - 1;
    let mut a = Mat::zeros(nx, nx);
    let mut b = Mat::zeros(nx, pb);
    let mut m = Mat::zeros(nx, pb);
    for i in 0..o {
        let model = bank.model(pb - i);
        for (j, v) in model.theta[..nx].iter().enumerate() {
            a[(i, j)] = *v;
        }
        for (j, v) in model.theta_ubar().iter().enumerate() {
            b[(i, j)] = *v;
        }
        m[(i, pb - 1 - i)] = 1.0;
    }
    for r in 0..o - 1 {
        b[(o + r, pb - 1 - r)] = 1.0;
    }
    let mut c = Mat::zeros(pb, nx);
    let mut d = Mat::zeros(pb, pb);
    for p in 1..=pb {
        let model = bank.model(p);
        for (j, v) in model.theta[..nx].iter().enumerate() {
            c[(p - 1, j)] = *v;
        }
        for (j, v) in model.theta_ubar().iter().enumerate() {
            d[(p - 1, j)] = *v;
        }
    }
    Ok(LiftedModel { a, b, m, c, d, o, p_bar: pb })
}

/// Checks the lifted matrices against direct predictor evaluation on random
/// input/output records.
///
/// Returns the largest discrepancy over outputs and next states.
pub fn exact_lift_consistency(lifted: &LiftedModel, bank: &PredictorBank, seed: u64, trials: usize) -> Result<f64> {
    let o = lifted.o;
    let pb = lifted.p_bar;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let len = o + pb + 1;
    for _ in 0..trials {
        let y: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k = o - 1;
        let mut x = Vector::zeros(2 * o - 1);
        for i in 0..o {
            x[i] = y[k - i];
        }
        for i in 1..o {
            x[o + i - 1] = u[k - i];
        }
        let uu = Vector::from_iterator(pb, (0..pb).map(|j| u[k + j]));
        let zhat = &lifted.c * &x + &lifted.d * &uu;
        let mut preds = Vec::with_capacity(pb);
        for p in 1..=pb {
            let phi = regressor(&y, &u, o, p, k);
            let direct = crate::ident::predict(bank.model(p), &phi)?;
            worst = worst.max((zhat[p - 1] - direct).abs());
            preds.push(direct);
        }
        // Next state from the predictions at horizons p̄, p̄-1, .., p̄-o+1 and the applied inputs.
        let next = &lifted.a * &x + &lifted.b * &uu;
        for i in 0..o {
            worst = worst.max((next[i] - preds[pb - 1 - i]).abs());
        }
        for r in 0..o - 1 {
            worst = worst.max((next[o + r] - u[k + pb - 1 - r]).abs());
        }
    }
    Ok(worst)
}

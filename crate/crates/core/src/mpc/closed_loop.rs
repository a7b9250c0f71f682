//! Closed-loop simulation of the plant under the tube controller, with per-step audits.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::controller::{CandidateCheck, Controller};
use crate::error::{Error, Result};
use crate::geometry::linear_map;
use crate::linalg::Vector;
use crate::plant::{sample_bounded_noise, stream_seeds, ArxPlant};

/// Constant input applied from rest before the controller takes over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Excursion {
    pub level: f64,
    pub steps: usize,
}

impl Default for Excursion {
    fn default() -> Self {
        Excursion { level: 1.5, steps: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Uniform,
    /// Each sample is `±bound` with a random sign.
    Extreme,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopOptions {
    pub long_steps: usize,
    pub seed: u64,
    pub noise: NoiseMode,
    pub excursion: Excursion,
    pub cost_tol: f64,
    pub tube_tol: f64,
    pub box_tol: f64,
}

impl Default for ClosedLoopOptions {
    fn default() -> Self {
        ClosedLoopOptions {
            long_steps: 40,
            seed: 1,
            noise: NoiseMode::Uniform,
            excursion: Excursion::default(),
            cost_tol: 1e-6,
            tube_tol: 1e-8,
            box_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShortRecord {
    pub k: usize,
    pub u: f64,
    pub z: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongStepRecord {
    pub j: usize,
    /// Short-step index at which the long step starts.
    pub k: usize,
    pub x: Vector,
    pub x_bar: Vector,
    pub j_star: f64,
    pub stage_cost: f64,
    pub applied_u: Vector,
    /// Shifted previous solution checked at this state; `None` at `j = 0`.
    pub candidate: Option<CandidateCheck>,
    /// `J*(j) - J*(j-1) + ℓ(j-1)`; nonpositive when the cost decreases as predicted.
    pub cost_slack: Option<f64>,
    pub tube_violation: f64,
    /// Largest nominal output magnitude at this step.
    pub z_bar_max: f64,
    /// ℓ1 distance of the predicted lifted output to `Ḡ𝔼`.
    pub tube_distance: f64,
    pub cut_rounds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Audits {
    pub max_cost_slack: f64,
    pub max_tube_violation: f64,
    pub min_candidate_margin: f64,
    pub max_abs_u: f64,
    pub max_abs_z: f64,
    pub cost_ok: bool,
    pub tube_ok: bool,
    pub candidates_ok: bool,
    pub input_ok: bool,
    pub output_ok: bool,
    /// Mean of the largest nominal output over the final quarter, relative to `j = 0`.
    pub z_bar_final_ratio: f64,
    pub convergence_ok: bool,
    /// Mean tube distance over the last quarter minus that over the third quarter.
    pub distance_trend: f64,
    pub distance_trend_ok: bool,
}

impl Audits {
    pub fn all_ok(&self) -> bool {
        self.cost_ok
            && self.tube_ok
            && self.candidates_ok
            && self.input_ok
            && self.output_ok
            && self.convergence_ok
            && self.distance_trend_ok
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopTrace {
    pub short: Vec<ShortRecord>,
    pub long: Vec<LongStepRecord>,
    /// First short step under feedback.
    pub start: usize,
    pub audits: Audits,
}

struct Sim<'a> {
    plant: &'a ArxPlant,
    v: Vec<f64>,
    d: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    u: Vec<f64>,
}

impl<'a> Sim<'a> {
    fn new(plant: &'a ArxPlant, len: usize, seed: u64, mode: NoiseMode) -> Result<Self> {
        let [_, sv, sd] = stream_seeds(seed);
        let (v, d) = match mode {
            NoiseMode::Uniform => (
                sample_bounded_noise(sv, len, plant.v_bar)?,
                sample_bounded_noise(sd, len, plant.d_bar)?,
            ),
            NoiseMode::Extreme => (extreme_noise(sv, len, plant.v_bar), extreme_noise(sd, len, plant.d_bar)),
        };
        let y0 = d[0];
        Ok(Sim { plant, v, d, z: vec![0.0], y: vec![y0], u: Vec::new() })
    }

    /// Applies `u(k)` at the current time `k` and advances to `k+1`.
    fn apply(&mut self, u: f64) {
        let n = self.plant.n;
        let k = self.u.len();
        let at = |s: &[f64], i: isize| if i < 0 { 0.0 } else { s[i as usize] };
        let zh: Vec<f64> = (0..n).map(|i| at(&self.z, k as isize - i as isize)).collect();
        let uh: Vec<f64> = (1..n).map(|i| at(&self.u, k as isize - i as isize)).collect();
        let next = self.plant.step(&zh, &uh, u) + self.v[k];
        self.u.push(u);
        self.z.push(next);
        self.y.push(next + self.d[k + 1]);
    }

    /// Lifted state `[y(k)..y(k-o+1), u(k-1)..u(k-o+1)]` at the current time.
    fn lifted_state(&self, o: usize) -> Vector {
        let k = self.u.len();
        let at = |s: &[f64], i: isize| if i < 0 { 0.0 } else { s[i as usize] };
        let mut x = Vector::zeros(2 * o - 1);
        for i in 0..o {
            x[i] = at(&self.y, k as isize - i as isize);
        }
        for i in 1..o {
            x[o - 1 + i] = at(&self.u, k as isize - i as isize);
        }
        x
    }

    fn records(&self) -> Vec<ShortRecord> {
        (0..self.z.len())
            .map(|k| ShortRecord { k, u: self.u.get(k).copied().unwrap_or(0.0), z: self.z[k], y: self.y[k] })
            .collect()
    }
}

fn extreme_noise(seed: u64, len: usize, bound: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| if rng.random_bool(0.5) { bound } else { -bound }).collect()
}

/// Runs the excursion, then `long_steps` long steps of tube MPC.
pub fn run_closed_loop(plant: &ArxPlant, controller: &mut Controller, opts: &ClosedLoopOptions) -> Result<ClosedLoopTrace> {
    let o = controller.ctrl.lifted.o;
    let pb = controller.ctrl.lifted.p_bar;
    let len = opts.excursion.steps + opts.long_steps * pb + 1;
    let mut sim = Sim::new(plant, len, opts.seed, opts.noise)?;
    for _ in 0..opts.excursion.steps {
        sim.apply(opts.excursion.level);
    }
    let start = opts.excursion.steps;
    let g_tube = linear_map(&controller.ctrl.g_bar(), &controller.ctrl.e.set)?;
    let lifted = controller.ctrl.lifted.clone();
    let mut long = Vec::with_capacity(opts.long_steps);
    let mut prev: Option<(f64, f64, Vector)> = None;
    controller.set_warm_start(None);
    for j in 0..opts.long_steps {
        let x = sim.lifted_state(o);
        let candidate = match &prev {
            Some((_, _, cand)) => Some(controller.check(&x, cand)?),
            None => None,
        };
        let sol = match controller.step(&x) {
            Ok(s) => s,
            Err(Error::Infeasible(msg)) => {
                if j == 0 {
                    return Err(Error::Infeasible(msg));
                }
                return Err(Error::FeasibilityLost { long_step: j });
            }
            Err(e) => return Err(e),
        };
        let cost_slack = prev.as_ref().map(|(js, l, _)| sol.j_star - js + l);
        let z_pred = &lifted.c * &x + &lifted.d * &sol.applied_u;
        let (dist, _) = g_tube.separate(&z_pred)?;
        let z_bar_max = sol.z_bar.iter().map(|z| z.amax()).fold(0.0, f64::max);
        for i in 0..pb {
            sim.apply(sol.applied_u[i]);
        }
        let cand = controller.shifted_candidate(&sol);
        controller.set_warm_start(Some(cand.clone()));
        long.push(LongStepRecord {
            j,
            k: start + j * pb,
            x,
            x_bar: sol.x_bar.clone(),
            j_star: sol.j_star,
            stage_cost: sol.stage_cost,
            applied_u: sol.applied_u.clone(),
            candidate,
            cost_slack,
            tube_violation: sol.tube_violation,
            z_bar_max,
            tube_distance: dist.max(0.0),
            cut_rounds: sol.cut_rounds,
        });
        prev = Some((sol.j_star, sol.stage_cost, cand));
    }
    let short = sim.records();
    let audits = audit(&short[start..], &long, controller, opts);
    Ok(ClosedLoopTrace { short, long, start, audits })
}

fn audit(short: &[ShortRecord], long: &[LongStepRecord], controller: &Controller, opts: &ClosedLoopOptions) -> Audits {
    let scale = long.iter().map(|r| r.j_star).fold(1.0, f64::max);
    let max_cost_slack = long.iter().filter_map(|r| r.cost_slack).fold(f64::NEG_INFINITY, f64::max);
    let max_tube_violation = long.iter().map(|r| r.tube_violation).fold(f64::NEG_INFINITY, f64::max);
    let min_candidate_margin = long
        .iter()
        .filter_map(|r| r.candidate)
        .map(|c| -c.row_violation.max(c.tube_violation))
        .fold(f64::INFINITY, f64::min);
    let fed = &short[..short.len().saturating_sub(1)];
    let max_abs_u = fed.iter().map(|r| r.u.abs()).fold(0.0, f64::max);
    let max_abs_z = short.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    let u_lim = controller.ctrl.u_box.upper().amax();
    let z_lim = controller.ctrl.z_box.upper().amax();
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let q = long.len() / 4;
    let zb: Vec<f64> = long.iter().map(|r| r.z_bar_max).collect();
    let z0 = zb.first().copied().unwrap_or(0.0);
    let z_bar_final_ratio = if z0 > 0.0 { mean(&zb[long.len() - q..]) / z0 } else { 0.0 };
    let dist: Vec<f64> = long.iter().map(|r| r.tube_distance).collect();
    let distance_trend = mean(&dist[long.len() - q..]) - mean(&dist[long.len() - 2 * q..long.len() - q]);
    let dist_scale = 1.0 + dist.iter().copied().fold(0.0, f64::max);
    Audits {
        z_bar_final_ratio,
        convergence_ok: z_bar_final_ratio <= 1e-3,
        distance_trend,
        distance_trend_ok: distance_trend <= 1e-9 * dist_scale,
        max_cost_slack,
        max_tube_violation,
        min_candidate_margin,
        max_abs_u,
        max_abs_z,
        cost_ok: !(max_cost_slack > opts.cost_tol * scale),
        tube_ok: !(max_tube_violation > opts.tube_tol),
        candidates_ok: !(min_candidate_margin < -opts.tube_tol),
        input_ok: max_abs_u <= u_lim + opts.box_tol,
        output_ok: max_abs_z <= z_lim + opts.box_tol,
    }
}

/// Same excursion and noise realization with zero input afterwards.
pub fn simulate_open_loop(plant: &ArxPlant, excursion: Excursion, seed: u64, noise: NoiseMode, steps_after: usize) -> Result<Vec<ShortRecord>> {
    let len = excursion.steps + steps_after + 1;
    let mut sim = Sim::new(plant, len, seed, noise)?;
    for _ in 0..excursion.steps {
        sim.apply(excursion.level);
    }
    for _ in 0..steps_after {
        sim.apply(0.0);
    }
    Ok(sim.records())
}

/// First index `i >= from` after which `|z| < band` for the rest of the record.
pub fn settling_index(z: &[f64], from: usize, band: f64) -> Option<usize> {
    let last_out = z.iter().enumerate().skip(from).filter(|(_, v)| v.abs() >= band).map(|(i, _)| i).last();
    match last_out {
        None => Some(from),
        Some(i) if i + 1 < z.len() => Some(i + 1),
        Some(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settling_index_cases() {
        let z = [3.0, 1.0, 0.1, 0.6, 0.2, 0.1];
        assert_eq!(settling_index(&z, 0, 0.5), Some(4));
        assert_eq!(settling_index(&z, 4, 0.5), Some(4));
        assert_eq!(settling_index(&[0.0, 1.0], 0, 0.5), None);
    }
}

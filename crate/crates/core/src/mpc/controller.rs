//! Condensed QP of the tube controller and the receding-horizon step.
//!
//! Decision vector `[X̄(j); Ū(j); ..; Ū(j+Np-1)]`. The tube constraint
//! `X(j) - X̄(j) ∈ 𝔼` is imposed through a pool of valid cutting planes of 𝔼 that
//! grows by separation until the optimizer lies in 𝔼.

use alloc::vec::Vec;

use super::synth::TubeController;
use crate::error::{Error, Result};
use crate::geometry::Support;
use crate::linalg::{diag, Mat, Vector};
use crate::optim::{solve_qp, QpProblem};

/// Linear maps from the decision vector to nominal states, inputs and outputs.
#[derive(Debug, Clone)]
pub struct StageMaps {
    /// `X̄(j+i)` for `i = 0..=Np`.
    pub x: Vec<Mat>,
    /// `Ū(j+i)` for `i < Np`.
    pub u: Vec<Mat>,
    /// `Ẑ̄(j+i) = C̄X̄(j+i) + D̄Ū(j+i)` for `i < Np`.
    pub z: Vec<Mat>,
}

impl StageMaps {
    pub fn new(ctrl: &TubeController) -> Self {
        let nx = ctrl.lifted.state_dim();
        let pb = ctrl.lifted.p_bar;
        let np = ctrl.np;
        let nz = nx + np * pb;
        let mut x = Vec::with_capacity(np + 1);
        let mut u = Vec::with_capacity(np);
        let mut z = Vec::with_capacity(np);
        let mut cur = Mat::zeros(nx, nz);
        cur.view_mut((0, 0), (nx, nx)).fill_with_identity();
        for i in 0..np {
            let mut sel = Mat::zeros(pb, nz);
            sel.view_mut((0, nx + i * pb), (pb, pb)).fill_with_identity();
            z.push(&ctrl.lifted.c * &cur + &ctrl.lifted.d * &sel);
            let next = &ctrl.lifted.a * &cur + &ctrl.lifted.b * &sel;
            x.push(cur);
            u.push(sel);
            cur = next;
        }
        x.push(cur);
        StageMaps { x, u, z }
    }

    pub fn dim(&self) -> usize {
        self.x[0].ncols()
    }
}

fn hessian(ctrl: &TubeController, maps: &StageMaps) -> Mat {
    let q = diag(&ctrl.q);
    let r = diag(&ctrl.r);
    let n = maps.dim();
    let mut h = Mat::zeros(n, n);
    for i in 0..ctrl.np {
        h += maps.z[i].transpose() * &q * &maps.z[i] + maps.u[i].transpose() * &r * &maps.u[i];
    }
    let xn = &maps.x[ctrl.np];
    h += xn.transpose() * &ctrl.p * xn;
    h *= 2.0;
    (&h + h.transpose()) * 0.5
}

/// Box rows for inputs and outputs per stage, then the terminal-set rows.
fn static_rows(ctrl: &TubeController, maps: &StageMaps) -> (Mat, Vector) {
    let pb = ctrl.lifted.p_bar;
    let n = maps.dim();
    let nf = ctrl.xf.num_constraints();
    let rows = ctrl.np * 4 * pb + nf;
    let mut a = Mat::zeros(rows, n);
    let mut b = Vector::zeros(rows);
    let mut r = 0;
    for i in 0..ctrl.np {
        for (map, bx) in [(&maps.u[i], &ctrl.u_tight), (&maps.z[i], &ctrl.z_tight)] {
            for c in 0..pb {
                a.row_mut(r).copy_from(&map.row(c));
                b[r] = bx.upper()[c];
                a.row_mut(r + 1).copy_from(&(-map.row(c)));
                b[r + 1] = -bx.lower()[c];
                r += 2;
            }
        }
    }
    let term = &ctrl.xf.a * &maps.x[ctrl.np];
    a.view_mut((r, 0), (nf, n)).copy_from(&term);
    b.rows_mut(r, nf).copy_from(&ctrl.xf.b);
    (a, b)
}

/// QP for the measured state `x_now`, with the tube described by the cut rows
/// `d' e <= h` (each valid for 𝔼).
pub fn assemble_qp(ctrl: &TubeController, maps: &StageMaps, x_now: &Vector, cuts: &[(Vector, f64)]) -> Result<QpProblem> {
    let (sa, sb) = static_rows(ctrl, maps);
    with_cuts(hessian(ctrl, maps), &sa, &sb, x_now, cuts)
}

fn with_cuts(h: Mat, sa: &Mat, sb: &Vector, x_now: &Vector, cuts: &[(Vector, f64)]) -> Result<QpProblem> {
    let n = sa.ncols();
    let nx = x_now.len();
    let ms = sa.nrows();
    let mut a = Mat::zeros(ms + cuts.len(), n);
    let mut b = Vector::zeros(ms + cuts.len());
    a.view_mut((0, 0), (ms, n)).copy_from(sa);
    b.rows_mut(0, ms).copy_from(sb);
    // d'(x_now - X̄) <= h  <=>  -d'X̄ <= h - d'x_now.
    for (k, (d, hd)) in cuts.iter().enumerate() {
        for i in 0..nx {
            a[(ms + k, i)] = -d[i];
        }
        b[ms + k] = hd - d.dot(x_now);
    }
    QpProblem::new(h, Vector::zeros(n), a, b, Mat::zeros(0, n), Vector::zeros(0))
}

#[derive(Debug, Clone)]
pub struct MpcSolution {
    pub decision: Vector,
    pub x_bar: Vector,
    pub u_bar: Vec<Vector>,
    /// Nominal outputs `Ẑ̄(j+i)`.
    pub z_bar: Vec<Vector>,
    pub j_star: f64,
    pub applied_u: Vector,
    /// `|Ẑ̄(j)|²_Q + |Ū(j)|²_R`.
    pub stage_cost: f64,
    /// Separation value of `X(j) - X̄(j)` against 𝔼; nonpositive means inside.
    pub tube_violation: f64,
    pub cut_rounds: usize,
    pub qp_iterations: usize,
    pub kkt_residual: f64,
}

/// Feasibility of a decision vector at a given measured state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateCheck {
    pub row_violation: f64,
    pub tube_violation: f64,
    pub cost: f64,
}

impl CandidateCheck {
    pub fn feasible(&self, tol: f64) -> bool {
        self.row_violation <= tol && self.tube_violation <= tol
    }
}

/// Receding-horizon controller: synthesized data plus the warm-start state.
#[derive(Debug, Clone)]
pub struct Controller {
    pub ctrl: TubeController,
    pub maps: StageMaps,
    h: Mat,
    static_a: Mat,
    static_b: Vector,
    /// Cutting planes `(d, h_𝔼(d))` of the tube, reused across steps.
    cuts: Vec<(Vector, f64)>,
    warm: Option<Vector>,
    pub qp_tol: f64,
    pub separation_tol: f64,
    pub max_cut_rounds: usize,
}

impl Controller {
    pub fn new(ctrl: TubeController) -> Result<Self> {
        let maps = StageMaps::new(&ctrl);
        let h = hessian(&ctrl, &maps);
        let (static_a, static_b) = static_rows(&ctrl, &maps);
        let nx = ctrl.lifted.state_dim();
        let mut cuts = Vec::with_capacity(2 * nx);
        for i in 0..nx {
            for s in [1.0, -1.0] {
                let mut d = Vector::zeros(nx);
                d[i] = s;
                let hd = ctrl.e.set.support(&d)?;
                cuts.push((d, hd));
            }
        }
        Ok(Controller {
            ctrl,
            maps,
            h,
            static_a,
            static_b,
            cuts,
            warm: None,
            qp_tol: 1e-10,
            separation_tol: 1e-9,
            max_cut_rounds: 500,
        })
    }

    pub fn num_cuts(&self) -> usize {
        self.cuts.len()
    }

    pub fn cost(&self, decision: &Vector) -> f64 {
        0.5 * decision.dot(&(&self.h * decision))
    }

    /// QP at `x_now` with the current cut pool.
    pub fn problem(&self, x_now: &Vector) -> Result<QpProblem> {
        with_cuts(self.h.clone(), &self.static_a, &self.static_b, x_now, &self.cuts)
    }

    /// Constraint violation, tube separation value and cost of a decision vector.
    pub fn check(&self, x_now: &Vector, decision: &Vector) -> Result<CandidateCheck> {
        let nx = self.ctrl.lifted.state_dim();
        let row_violation = (&self.static_a * decision - &self.static_b).iter().copied().fold(0.0, f64::max);
        let e = x_now - decision.rows(0, nx);
        let (tube_violation, _) = self.ctrl.e.set.separate(&e)?;
        Ok(CandidateCheck { row_violation, tube_violation, cost: self.cost(decision) })
    }

    /// Shifted decision for the next long step: drop the first input, append `K X̄(j+Np)`.
    pub fn shifted_candidate(&self, sol: &MpcSolution) -> Vector {
        let nx = self.ctrl.lifted.state_dim();
        let pb = self.ctrl.lifted.p_bar;
        let np = self.ctrl.np;
        let mut c = Vector::zeros(self.maps.dim());
        c.rows_mut(0, nx).copy_from(&(&self.maps.x[1] * &sol.decision));
        for i in 1..np {
            c.rows_mut(nx + (i - 1) * pb, pb).copy_from(&sol.u_bar[i]);
        }
        let xn = &self.maps.x[np] * &sol.decision;
        c.rows_mut(nx + (np - 1) * pb, pb).copy_from(&(&self.ctrl.k * xn));
        c
    }

    /// Uses `candidate` as the warm start of the next solve.
    pub fn set_warm_start(&mut self, candidate: Option<Vector>) {
        self.warm = candidate;
    }

    pub fn step(&mut self, x_now: &Vector) -> Result<MpcSolution> {
        let nx = self.ctrl.lifted.state_dim();
        if x_now.len() != nx {
            return Err(Error::DimensionMismatch { what: "lifted state", expected: nx, found: x_now.len() });
        }
        let mut warm = self.warm.take();
        let mut iterations = 0;
        for round in 0..self.max_cut_rounds {
            let qp = self.problem(x_now)?;
            let sol = solve_qp(&qp, self.qp_tol, warm.as_ref())?;
            iterations += sol.iterations;
            let x_bar = sol.x.rows(0, nx).into_owned();
            let e = x_now - &x_bar;
            let (viol, d) = self.ctrl.e.set.separate(&e)?;
            let scale = 1.0 + e.amax();
            // A cut already in the pool leaves only the QP feasibility tolerance.
            let known = self.cuts.iter().any(|(c, _)| (c - &d).amax() <= 1e-12);
            if viol <= self.separation_tol * scale || known {
                return Ok(self.package(x_now, sol.x, viol, round + 1, iterations, sol.kkt_residual));
            }
            let hd = self.ctrl.e.set.support(&d)?;
            self.cuts.push((d, hd));
            warm = Some(sol.x);
        }
        Err(Error::NonConvergence { what: "tube cutting planes", iterations: self.max_cut_rounds })
    }

    fn package(&self, x_now: &Vector, z: Vector, viol: f64, rounds: usize, iterations: usize, kkt: f64) -> MpcSolution {
        let nx = self.ctrl.lifted.state_dim();
        let pb = self.ctrl.lifted.p_bar;
        let x_bar = z.rows(0, nx).into_owned();
        let u_bar: Vec<Vector> = (0..self.ctrl.np).map(|i| z.rows(nx + i * pb, pb).into_owned()).collect();
        let z_bar: Vec<Vector> = self.maps.z.iter().map(|m| m * &z).collect();
        let applied_u = &u_bar[0] + &self.ctrl.k * (x_now - &x_bar);
        let stage_cost = weighted(&z_bar[0], &self.ctrl.q) + weighted(&u_bar[0], &self.ctrl.r);
        MpcSolution {
            j_star: self.cost(&z),
            decision: z,
            x_bar,
            u_bar,
            z_bar,
            applied_u,
            stage_cost,
            tube_violation: viol,
            cut_rounds: rounds,
            qp_iterations: iterations,
            kkt_residual: kkt,
        }
    }
}

pub(crate) fn weighted(v: &Vector, w: &[f64]) -> f64 {
    v.iter().zip(w).map(|(x, q)| q * x * x).sum()
}

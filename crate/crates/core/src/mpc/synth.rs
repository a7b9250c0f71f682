//! Tube controller synthesis: LQ gain, terminal weight, RPI tube, tightened
//! constraints and terminal set.

use alloc::format;
use alloc::vec::Vec;

use super::{lift, LiftedModel};
use crate::error::{Error, Result};
use crate::geometry::{
    compute_rpi, compute_terminal_set, invariance_slack, linear_map, pontryagin_diff_box, HPolytope, Hyperbox,
    RpiOptions, RpiSet, Support, TerminalOptions, Zonotope,
};
use crate::ident::PredictorBank;
use crate::linalg::{diag, norm2, spectral_radius, vstack, Mat, Vector};
use crate::optim::{dlqr, dlyap_residual, solve_dlyap, LqrOptions};

#[derive(Debug, Clone)]
pub struct SynthOptions {
    /// Diagonal of the output weight.
    pub q: Vec<f64>,
    /// Diagonal of the input weight.
    pub r: Vec<f64>,
    pub np: usize,
    pub u_max: f64,
    pub z_max: f64,
    /// State weight for the LQ gain; `None` uses `C̄'QC̄`.
    pub lq_q: Option<Mat>,
    /// Input weight for the LQ gain; `None` uses `R`.
    pub lq_r: Option<Mat>,
    pub eps_ball: f64,
    pub rpi: RpiOptions,
    pub terminal: TerminalOptions,
    pub lqr: LqrOptions,
}

impl SynthOptions {
    /// Uniform weights `q I`, `r I`, symmetric boxes.
    pub fn uniform(p_bar: usize, q: f64, r: f64, np: usize, u_max: f64, z_max: f64) -> Self {
        SynthOptions {
            q: alloc::vec![q; p_bar],
            r: alloc::vec![r; p_bar],
            np,
            u_max,
            z_max,
            lq_q: None,
            lq_r: None,
            eps_ball: 1e-3,
            rpi: RpiOptions::default(),
            terminal: TerminalOptions::default(),
            lqr: LqrOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthReport {
    pub rho_closed: f64,
    pub norm_closed: f64,
    pub rho_open: f64,
    /// Short-step closed loop of the one-step model under an LQ gain with weights `q[0]`, `r[0]`.
    pub rho_one_step: f64,
    pub norm_one_step: f64,
    pub riccati_residual: f64,
    pub lyapunov_residual: f64,
    pub lyapunov_scale: f64,
    pub rpi_slack: f64,
    pub rpi_terms: usize,
    pub rpi_generators: usize,
    pub terminal_constraints: usize,
    pub terminal_invariance_slack: f64,
    /// Smallest margin of `K𝔼 ⊕ ball ⊆ 𝐔` over canonical directions.
    pub input_margin: f64,
    /// Smallest margin of `Ḡ𝔼 ⊕ ball ⊆ 𝐙̂` over canonical directions.
    pub output_margin: f64,
}

#[derive(Debug, Clone)]
pub struct TubeController {
    pub lifted: LiftedModel,
    pub k: Mat,
    pub p: Mat,
    pub e: RpiSet,
    pub u_box: Hyperbox,
    pub z_box: Hyperbox,
    pub z_hat: Hyperbox,
    pub u_tight: Hyperbox,
    pub z_tight: Hyperbox,
    pub xf: HPolytope,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub np: usize,
    pub w_bar: Vec<f64>,
    pub tau_hat: Vec<f64>,
    pub report: SynthReport,
}

impl TubeController {
    pub fn closed_loop(&self) -> Mat {
        &self.lifted.a + &self.lifted.b * &self.k
    }

    /// `Ḡ = C̄ + D̄K`.
    pub fn g_bar(&self) -> Mat {
        &self.lifted.c + &self.lifted.d * &self.k
    }
}

/// State-space form of the one-step predictor on `[y(k)..y(k-o+1), u(k-1)..u(k-o+1)]`.
pub fn one_step_model(bank: &PredictorBank) -> Result<(Mat, Mat)> {
    let o = bank.o;
    let theta = &bank.model(1).theta;
    let nx = 2 * o - 1;
    let mut a = Mat::zeros(nx, nx);
    let mut b = Mat::zeros(nx, 1);
    for j in 0..nx {
        a[(0, j)] = theta[j];
    }
    b[(0, 0)] = theta[nx];
    for i in 1..o {
        a[(i, i - 1)] = 1.0;
    }
    if o > 1 {
        b[(o, 0)] = 1.0;
        for i in o + 1..nx {
            a[(i, i - 1)] = 1.0;
        }
    }
    Ok((a, b))
}

/// Spectral radius and norm of `A + B₁K` for the one-step model, with the LQ state
/// weight `q` on the newest output and input weight `r`.
pub fn one_step_closed_loop(bank: &PredictorBank, q: f64, r: f64, opts: LqrOptions) -> Result<(f64, f64)> {
    let (a, b) = one_step_model(bank)?;
    let mut qx = Mat::zeros(a.nrows(), a.nrows());
    qx[(0, 0)] = q;
    let lqr = dlqr(&a, &b, &qx, &Mat::from_element(1, 1, r), opts)?;
    let f = &a + &b * &lqr.gain;
    Ok((spectral_radius(&f), norm2(&f)))
}

fn canonical_margin(outer: &Hyperbox, inner: &dyn Support, eps: f64) -> Result<f64> {
    let n = outer.dim();
    let mut worst = f64::INFINITY;
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = Vector::zeros(n);
            e[i] = s;
            worst = worst.min(outer.support(&e)? - inner.support(&e)? - eps);
        }
    }
    Ok(worst)
}

pub fn synth(bank: &PredictorBank, opts: &SynthOptions) -> Result<TubeController> {
    let lifted = lift(bank)?;
    let pb = lifted.p_bar;
    if opts.q.len() != pb || opts.r.len() != pb {
        return Err(Error::DimensionMismatch { what: "cost weights", expected: pb, found: opts.q.len() });
    }
    if opts.q.iter().chain(&opts.r).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput("cost weights must be positive".into()));
    }
    if opts.np == 0 || !(opts.u_max > 0.0) || !(opts.z_max > 0.0) || !(opts.eps_ball > 0.0) {
        return Err(Error::InvalidInput("need a positive horizon, boxes and ball radius".into()));
    }
    let q = diag(&opts.q);
    let r = diag(&opts.r);
    let lq_q = opts.lq_q.clone().unwrap_or_else(|| lifted.c.transpose() * &q * &lifted.c);
    let lq_r = opts.lq_r.clone().unwrap_or_else(|| r.clone());
    let lqr = dlqr(&lifted.a, &lifted.b, &lq_q, &lq_r, opts.lqr)?;
    let k = lqr.gain;
    let f = &lifted.a + &lifted.b * &k;
    let rho_closed = spectral_radius(&f);
    if rho_closed >= 1.0 {
        return Err(Error::NotStable { rho: rho_closed });
    }
    let g_bar = &lifted.c + &lifted.d * &k;
    let s = g_bar.transpose() * &q * &g_bar + k.transpose() * &r * &k;
    let p = solve_dlyap(&f, &s)?;
    let lyapunov_residual = dlyap_residual(&f, &s, &p);
    let lyapunov_scale = 1.0 + norm2(&s);

    let tau_hat: Vec<f64> = bank.models.iter().map(|m| m.tau_hat).collect();
    let w_bar = bank.w_bar();
    let w = Hyperbox::symmetric(&w_bar)?;
    let e = compute_rpi(&f, &lifted.m, &w, opts.rpi)?;

    let u_box = Hyperbox::symmetric(&alloc::vec![opts.u_max; pb])?;
    let z_box = Hyperbox::symmetric(&alloc::vec![opts.z_max; pb])?;
    let ke = linear_map(&k, &e.set)?;
    let ge = linear_map(&g_bar, &e.set)?;
    let u_tight = pontryagin_diff_box(&u_box, &ke).map_err(|err| match err {
        Error::EmptyDifference { coord, .. } => {
            Error::InclusionViolated(format!("K𝔼 does not fit inside the input box (coordinate {coord})"))
        }
        other => other,
    })?;
    let t_box = Hyperbox::symmetric(&tau_hat)?;
    let z_hat = pontryagin_diff_box(&z_box, &t_box)?;
    let z_tight = pontryagin_diff_box(&z_hat, &ge).map_err(|err| match err {
        Error::EmptyDifference { coord, .. } => Error::InclusionViolated(format!(
            "(C̄+D̄K)𝔼 does not fit inside the tightened output box (coordinate {coord})"
        )),
        other => other,
    })?;
    let input_margin = canonical_margin(&u_box, &ke, opts.eps_ball)?;
    if input_margin < 0.0 {
        return Err(Error::InclusionViolated(format!(
            "K𝔼 plus a ball of radius {} leaves the input box (margin {input_margin:e})",
            opts.eps_ball
        )));
    }
    let output_margin = canonical_margin(&z_hat, &ge, opts.eps_ball)?;
    if output_margin < 0.0 {
        return Err(Error::InclusionViolated(format!(
            "(C̄+D̄K)𝔼 plus a ball of radius {} leaves 𝐙̂ (margin {output_margin:e})",
            opts.eps_ball
        )));
    }

    let g_rows = vstack(&[&g_bar, &(-&g_bar), &k, &(-&k)]);
    let mut g = Vector::zeros(4 * pb);
    for i in 0..pb {
        g[i] = z_tight.upper()[i];
        g[pb + i] = -z_tight.lower()[i];
        g[2 * pb + i] = u_tight.upper()[i];
        g[3 * pb + i] = -u_tight.lower()[i];
    }
    let xf = compute_terminal_set(&f, &g_rows, &g, opts.terminal)?;
    let terminal_invariance_slack = invariance_slack(&f, &xf)?;
    if terminal_invariance_slack > opts.terminal.redundancy_tol * 10.0 {
        return Err(Error::InclusionViolated(format!(
            "terminal set not invariant (slack {terminal_invariance_slack:e})"
        )));
    }
    let dirs: Vec<Vector> = g_rows.row_iter().map(|row| row.transpose()).collect();
    let h = xf.supports(&dirs)?;
    if let Some(i) = (0..h.len()).find(|&i| h[i] > g[i] + 1e-8) {
        return Err(Error::InclusionViolated(format!("terminal set violates constraint row {i}")));
    }
    let rho_open = spectral_radius(&lifted.a);
    let (rho_one_step, norm_one_step) = one_step_closed_loop(bank, opts.q[0], opts.r[0], opts.lqr)?;
    let report = SynthReport {
        rho_one_step,
        norm_one_step,
        rho_closed,
        norm_closed: norm2(&f),
        rho_open,
        riccati_residual: lqr.residual,
        lyapunov_residual,
        lyapunov_scale,
        rpi_slack: e.slack,
        rpi_terms: e.terms,
        rpi_generators: e.set.num_generators(),
        terminal_constraints: xf.num_constraints(),
        terminal_invariance_slack,
        input_margin,
        output_margin,
    };
    Ok(TubeController {
        lifted,
        k,
        p,
        e,
        u_box,
        z_box,
        z_hat,
        u_tight,
        z_tight,
        xf,
        q: opts.q.clone(),
        r: opts.r.clone(),
        np: opts.np,
        w_bar,
        tau_hat,
        report,
    })
}

impl TubeController {
    /// Tube set as a zonotope.
    pub fn tube(&self) -> &Zonotope {
        &self.e.set
    }
}

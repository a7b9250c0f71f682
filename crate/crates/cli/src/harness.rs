//! Pipeline stages and the end-to-end experiment.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use msmpc_core::geometry::RpiMethod;
use msmpc_core::ident::{build_regressors, identify, iterated_bounds, verify_thm1, Identification, PredictorBank};
use msmpc_core::mpc::{
    run_closed_loop, settling_index, simulate_open_loop, synth, Audits, ClosedLoopTrace, Controller, ShortRecord,
    TubeController,
};
use msmpc_core::linalg::{ar_companion, spectral_radius, Vector};
use msmpc_core::plant::{generate_dataset, ArxPlant, Dataset};
use msmpc_core::Error as CoreError;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::formats::{self, DatasetMeta, Thm1Line, ValidationLine};

/// Slack allowed in the optimality comparison of the min-max and iterated predictors.
pub const THM1_TOL: f64 = 1e-9;
pub const LYAPUNOV_TOL: f64 = 1e-8;
pub const RPI_TOL: f64 = 1e-8;

pub fn generate(cfg: &ExperimentConfig, seed: u64) -> Result<(ArxPlant, Dataset, DatasetMeta)> {
    let plant = cfg.plant()?;
    let ds = generate_dataset(&plant, &cfg.data_config(seed)).map_err(|e| HarnessError::stage("generate-data", e))?;
    let meta = DatasetMeta {
        seed,
        v_bar: plant.v_bar,
        d_bar: plant.d_bar,
        ts: cfg.plant.ts,
        n: plant.n,
        n_pairs: ds.n_pairs,
        theta_bar: plant.theta_bar.clone(),
    };
    Ok((plant, ds, meta))
}

pub fn identify_stage(cfg: &ExperimentConfig, ds: &Dataset, d_bar: f64) -> Result<Identification> {
    let opts = msmpc_core::ident::IdentOptions { d_bar, ..cfg.ident_options() };
    identify(&ds.y, &ds.u, &opts).map_err(|e| HarnessError::stage("identify", e))
}

/// Per-horizon comparison of the min-max predictor with the iterated one-step model.
pub fn thm1_stage(id: &Identification) -> Result<Vec<Thm1Line>> {
    let theta1 = &id.bank.model(1).theta;
    let rows = verify_thm1(&id.fits, theta1, f64::INFINITY).map_err(|e| HarnessError::stage("verify-thm1", e))?;
    Ok(rows
        .iter()
        .map(|r| Thm1Line {
            p: r.p,
            tau_star: r.tau_star,
            tau_iterated: r.tau_iterated,
            gap: r.gap,
            iterated_in_fps: r.iterated_in_fps,
        })
        .collect())
}

pub fn thm1_ok(rows: &[Thm1Line]) -> bool {
    rows.iter().all(|r| r.tau_star <= r.tau_iterated + THM1_TOL)
}

/// `(w̄ₚ from the bank, bound from iterating w̄₁ through the one-step model)`.
pub fn compare_bounds(bank: &PredictorBank) -> (Vec<f64>, Vec<f64>) {
    let multi = bank.w_bar();
    let iterated = iterated_bounds(bank.model(1).theta_ar(), multi[0], bank.p_bar);
    (multi, iterated)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsShape {
    /// Smallest `iterated - multi` over `p >= 3`.
    pub min_gap_from_p3: f64,
    pub dominates: bool,
    /// Gap strictly increasing over `p = 5..10` (or the available tail).
    pub gap_increasing: bool,
}

pub fn bounds_shape(multi: &[f64], iterated: &[f64]) -> BoundsShape {
    let gap: Vec<f64> = iterated.iter().zip(multi).map(|(i, m)| i - m).collect();
    let min_gap_from_p3 = gap.iter().skip(2).copied().fold(f64::INFINITY, f64::min);
    let tail = &gap[gap.len().min(4)..gap.len().min(10)];
    BoundsShape {
        min_gap_from_p3,
        dominates: gap.len() < 3 || min_gap_from_p3 >= 0.0,
        gap_increasing: tail.windows(2).all(|w| w[1] > w[0]),
    }
}

pub fn synth_stage(cfg: &ExperimentConfig, bank: &PredictorBank) -> Result<TubeController> {
    synth(bank, &cfg.synth_options()).map_err(|e| HarnessError::stage("synth", e))
}

/// Checks `|z(k+p) - ẑ(k+p)| <= τ̂ₚ` on a dataset not used for identification.
pub fn validate_bounds(bank: &PredictorBank, ds: &Dataset) -> Result<Vec<ValidationLine>> {
    let mut out = Vec::with_capacity(bank.p_bar);
    for m in &bank.models {
        let t = build_regressors(&ds.y, &ds.u, bank.o, m.p, bank.p_bar).map_err(|e| HarnessError::stage("validate", e))?;
        let theta = Vector::from_column_slice(&m.theta);
        let pred = &t.rows * &theta;
        let mut max_error: f64 = 0.0;
        let mut violations = 0;
        for r in 0..t.len() {
            let err = (ds.z[t.first_k + r + m.p] - pred[r]).abs();
            max_error = max_error.max(err);
            if err > m.tau_hat {
                violations += 1;
            }
        }
        out.push(ValidationLine { p: m.p, tau_hat: m.tau_hat, max_error, violations, samples: t.len() });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Settling {
    /// Short steps after the controller takes over until `|z| < band` for good.
    pub closed_loop: Option<usize>,
    pub open_loop: Option<usize>,
    /// Record length after the excursion; an unsettled response counts as at least this.
    pub horizon: usize,
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub trace: ClosedLoopTrace,
    pub open_loop: Vec<ShortRecord>,
    pub settling: Settling,
}

pub fn simulate_stage(cfg: &ExperimentConfig, plant: &ArxPlant, ctrl: &TubeController, seed: u64) -> Result<Simulation> {
    let mut controller = Controller::new(ctrl.clone()).map_err(|e| HarnessError::stage("simulate", e))?;
    let opts = cfg.closed_loop_options(seed);
    let trace = run_closed_loop(plant, &mut controller, &opts).map_err(|e| HarnessError::stage("simulate", e))?;
    let horizon = opts.long_steps * ctrl.lifted.p_bar;
    let open_loop = simulate_open_loop(plant, opts.excursion, seed, opts.noise, horizon)
        .map_err(|e| HarnessError::stage("simulate", e))?;
    let band = cfg.sim.settle_band;
    let start = trace.start;
    let settle = |z: Vec<f64>| settling_index(&z, start, band).map(|i| i - start);
    let closed = settle(trace.short.iter().map(|r| r.z).collect());
    let open = settle(open_loop.iter().map(|r| r.z).collect());
    let ok = match (closed, open) {
        (Some(c), Some(o)) => 2 * c < o,
        (Some(c), None) => 2 * c < horizon,
        (None, _) => false,
    };
    Ok(Simulation { trace, open_loop, settling: Settling { closed_loop: closed, open_loop: open, horizon, ok } })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    /// `None` when the run lost feasibility or failed; the message is kept.
    pub audits: Option<AuditsDoc>,
    pub error: Option<String>,
}

impl RunSummary {
    pub fn ok(&self) -> bool {
        self.audits.as_ref().is_some_and(|a| a.all_ok)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub runs: usize,
    pub feasible_runs: usize,
    pub passed_runs: usize,
    pub max_abs_u: f64,
    pub max_abs_z: f64,
    pub max_cost_slack: f64,
    pub max_tube_violation: f64,
    pub ok: bool,
    pub per_run: Vec<RunSummary>,
}

/// Independent closed-loop runs with seeds `seed_base..seed_base + runs`, in parallel.
/// Traces go to `out/monte_carlo/seed_<seed>/` when `out` is given.
pub fn monte_carlo(cfg: &ExperimentConfig, plant: &ArxPlant, ctrl: &TubeController, out: Option<&Path>) -> Result<MonteCarloSummary> {
    let mc = &cfg.monte_carlo;
    let seeds: Vec<u64> = (0..mc.runs as u64).map(|i| mc.seed_base + i).collect();
    let threads = if mc.threads > 0 {
        mc.threads
    } else {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    }
    .min(seeds.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<(RunSummary, Option<Simulation>)>>> = Mutex::new(vec![None; seeds.len()]);
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= seeds.len() {
                    break;
                }
                let seed = seeds[i];
                let entry = match simulate_stage(cfg, plant, ctrl, seed) {
                    Ok(sim) => (RunSummary { seed, audits: Some((&sim.trace.audits).into()), error: None }, Some(sim)),
                    Err(e) => (RunSummary { seed, audits: None, error: Some(e.to_string()) }, None),
                };
                results.lock().expect("no worker panicked")[i] = Some(entry);
            });
        }
    });
    let results: Vec<(RunSummary, Option<Simulation>)> =
        results.into_inner().expect("no worker panicked").into_iter().map(|r| r.expect("every run finished")).collect();
    if let Some(dir) = out {
        let base = dir.join("monte_carlo");
        for (run, sim) in &results {
            if let Some(sim) = sim {
                write_traces(&base.join(format!("seed_{}", run.seed)), sim)?;
            }
        }
        let rows = results.iter().map(|(r, _)| {
            let a = r.audits.as_ref();
            let f = |g: fn(&AuditsDoc) -> f64| a.map(|a| formats::num(g(a))).unwrap_or_default();
            vec![
                r.seed.to_string(),
                u8::from(a.is_some()).to_string(),
                u8::from(r.ok()).to_string(),
                f(|a| a.max_abs_u),
                f(|a| a.max_abs_z),
                f(|a| a.max_cost_slack),
                f(|a| a.max_tube_violation),
            ]
        });
        let header = ["seed", "feasible", "audits_ok", "max_abs_u", "max_abs_z", "max_cost_slack", "max_tube_violation"];
        formats::write_csv(&base.join("summary.csv"), &header, rows)?;
    }
    let per_run: Vec<RunSummary> = results.into_iter().map(|(r, _)| r).collect();
    let audits: Vec<&AuditsDoc> = per_run.iter().filter_map(|r| r.audits.as_ref()).collect();
    let fold = |g: fn(&AuditsDoc) -> f64| audits.iter().map(|a| g(a)).fold(f64::NEG_INFINITY, f64::max);
    let passed_runs = per_run.iter().filter(|r| r.ok()).count();
    Ok(MonteCarloSummary {
        runs: per_run.len(),
        feasible_runs: audits.len(),
        passed_runs,
        max_abs_u: fold(|a| a.max_abs_u),
        max_abs_z: fold(|a| a.max_abs_z),
        max_cost_slack: fold(|a| a.max_cost_slack),
        max_tube_violation: fold(|a| a.max_tube_violation),
        ok: passed_runs == per_run.len(),
        per_run,
    })
}

pub fn write_traces(dir: &Path, sim: &Simulation) -> Result<()> {
    formats::write_short_trace(&dir.join("trace_short.csv"), &sim.trace.short)?;
    formats::write_long_trace(&dir.join("trace_long.csv"), &sim.trace.long, 1e-8)?;
    formats::write_short_trace(&dir.join("trace_open_loop.csv"), &sim.open_loop)
}

// ---------------------------------------------------------------- audits

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditsDoc {
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
    pub z_bar_final_ratio: f64,
    pub convergence_ok: bool,
    pub distance_trend: f64,
    pub distance_trend_ok: bool,
    pub all_ok: bool,
}

impl From<&Audits> for AuditsDoc {
    fn from(a: &Audits) -> Self {
        AuditsDoc {
            max_cost_slack: a.max_cost_slack,
            max_tube_violation: a.max_tube_violation,
            min_candidate_margin: a.min_candidate_margin,
            max_abs_u: a.max_abs_u,
            max_abs_z: a.max_abs_z,
            cost_ok: a.cost_ok,
            tube_ok: a.tube_ok,
            candidates_ok: a.candidates_ok,
            input_ok: a.input_ok,
            output_ok: a.output_ok,
            z_bar_final_ratio: a.z_bar_final_ratio,
            convergence_ok: a.convergence_ok,
            distance_trend: a.distance_trend,
            distance_trend_ok: a.distance_trend_ok,
            all_ok: a.all_ok(),
        }
    }
}

/// One assumption or guarantee check surfaced in `audits.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub ok: bool,
    /// Informational checks are reported but do not affect the exit code.
    pub informational: bool,
    pub value: Option<f64>,
    pub limit: Option<f64>,
    pub detail: String,
}

impl Check {
    fn hard(name: &'static str, ok: bool, value: Option<f64>, limit: Option<f64>, detail: impl Into<String>) -> Self {
        Check { name, ok, informational: false, value, limit, detail: detail.into() }
    }
}

pub fn plant_checks(plant: &ArxPlant) -> Check {
    let rho = spectral_radius(&ar_companion(plant.ar()));
    Check::hard("plant_schur_stable", rho < 1.0, Some(rho), Some(1.0), "spectral radius of the plant AR part")
}

pub fn identification_checks(id: &Identification) -> Vec<Check> {
    let widest = id
        .fits
        .iter()
        .flat_map(|f| f.fps.bounds.iter().map(|(lo, hi)| lo.abs().max(hi.abs())))
        .fold(0.0, f64::max);
    let worst_fit = id.bank.models.iter().map(|m| m.fps_residual).fold(f64::NEG_INFINITY, f64::max);
    vec![
        Check::hard(
            "fps_compact",
            widest.is_finite(),
            Some(widest),
            None,
            "largest coordinate bound over all feasible parameter sets",
        ),
        Check::hard(
            "nominal_predictors_in_fps",
            worst_fit <= 1e-7,
            Some(worst_fit),
            Some(1e-7),
            "largest FPS constraint violation of a fitted predictor",
        ),
    ]
}

pub fn synth_checks(ctrl: &TubeController, eps_ball: f64) -> Vec<Check> {
    let r = &ctrl.report;
    let lyap_bound = LYAPUNOV_TOL * r.lyapunov_scale;
    let rpi_bound = RPI_TOL * (1.0 + ctrl.e.set.interval_hull().upper().amax());
    let method = match ctrl.e.method {
        RpiMethod::Exact => "exact",
        RpiMethod::ModalTail => "modal_tail",
        RpiMethod::ScaledSum => "scaled_sum",
    };
    vec![
        Check::hard("lifted_closed_loop_schur_stable", r.rho_closed < 1.0, Some(r.rho_closed), Some(1.0), "spectral radius of A+BK"),
        Check::hard(
            "multirate_faster_than_one_step",
            r.rho_closed < r.rho_one_step,
            Some(r.rho_closed),
            Some(r.rho_one_step),
            "spectral radius of the lifted loop against the one-step LQ loop",
        ),
        Check::hard(
            "lyapunov_residual",
            r.lyapunov_residual <= lyap_bound,
            Some(r.lyapunov_residual),
            Some(lyap_bound),
            "terminal weight equation residual",
        ),
        Check::hard(
            "rpi_inclusion",
            r.rpi_slack <= rpi_bound,
            Some(r.rpi_slack),
            Some(rpi_bound),
            format!("{method}, {} terms, {} generators", r.rpi_terms, r.rpi_generators),
        ),
        Check::hard(
            "input_tightening_margin",
            r.input_margin >= 0.0,
            Some(r.input_margin),
            Some(0.0),
            format!("K·E plus a ball of radius {eps_ball} inside the input box"),
        ),
        Check::hard(
            "output_tightening_margin",
            r.output_margin >= 0.0,
            Some(r.output_margin),
            Some(0.0),
            format!("(C+DK)·E plus a ball of radius {eps_ball} inside the tightened output box"),
        ),
        Check::hard(
            "terminal_set_invariant",
            r.terminal_invariance_slack <= 1e-8,
            Some(r.terminal_invariance_slack),
            Some(1e-8),
            format!("{} constraints", r.terminal_constraints),
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub all_pass: bool,
    pub checks: Vec<Check>,
    pub thm1: Vec<Thm1Line>,
    pub bounds_shape: BoundsShape,
    pub validation: Vec<ValidationLine>,
    pub table1: formats::ReportDoc,
    pub closed_loop: AuditsDoc,
    pub settling: Settling,
    pub monte_carlo: Option<MonteCarloSummary>,
}

#[derive(Debug, Clone)]
pub struct EndToEnd {
    pub plant: ArxPlant,
    pub dataset: Dataset,
    pub identification: Identification,
    pub controller: TubeController,
    pub simulation: Simulation,
    pub report: AuditReport,
    pub out_dir: PathBuf,
}

/// generate → identify → verify-thm1 → synth → simulate → report, plus bound
/// validation on fresh data and the Monte Carlo campaign when `runs > 0`.
pub fn end_to_end(cfg: &ExperimentConfig) -> Result<EndToEnd> {
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    let (plant, ds, meta) = generate(cfg, cfg.data.seed)?;
    formats::write_dataset(&out.join("dataset.csv"), &ds, &meta)?;
    formats::write_text(&out.join("config.toml"), &cfg.to_toml())?;

    let id = identify_stage(cfg, &ds, plant.d_bar)?;
    formats::write_bank(&out.join("bank.json"), &id.bank)?;
    let thm1 = thm1_stage(&id)?;
    formats::write_thm1(&out.join("thm1.csv"), &thm1)?;
    let (multi, iterated) = compare_bounds(&id.bank);
    formats::write_bounds(&out.join("bounds.csv"), &multi, &iterated)?;

    let (_, vds, _) = generate(cfg, cfg.validation.seed)?;
    let validation = validate_bounds(&id.bank, &vds)?;
    formats::write_validation(&out.join("validation.csv"), &validation)?;

    let ctrl = synth_stage(cfg, &id.bank)?;
    formats::write_controller(&out.join("controller.json"), &ctrl)?;
    formats::write_table1(&out.join("table1.csv"), &ctrl.report)?;
    formats::write_tightening(&out.join("tightening.csv"), &ctrl)?;

    let sim = simulate_stage(cfg, &plant, &ctrl, cfg.sim.seed)?;
    write_traces(&out, &sim)?;
    let mc = if cfg.monte_carlo.runs > 0 { Some(monte_carlo(cfg, &plant, &ctrl, Some(&out))?) } else { None };

    let mut checks = vec![plant_checks(&plant)];
    checks.extend(identification_checks(&id));
    let worst_thm1 = thm1.iter().map(|r| r.tau_star - r.tau_iterated).fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::hard(
        "thm1_min_max_not_worse",
        thm1_ok(&thm1),
        Some(worst_thm1),
        Some(THM1_TOL),
        "largest tau_star - tau_iterated over p",
    ));
    let outside = thm1.iter().filter(|r| !r.iterated_in_fps).count();
    checks.push(Check {
        name: "iterated_one_step_in_fps",
        ok: outside == 0,
        informational: true,
        value: Some(outside as f64),
        limit: None,
        detail: "horizons whose FPS excludes the iterated one-step model".into(),
    });
    let shape = bounds_shape(&multi, &iterated);
    checks.push(Check::hard(
        "iterated_bound_dominates",
        shape.dominates,
        Some(shape.min_gap_from_p3),
        Some(0.0),
        "smallest iterated - multi-step bound for p >= 3",
    ));
    checks.push(Check::hard("bound_gap_increasing", shape.gap_increasing, None, None, "gap over p = 5..10"));
    let violations: usize = validation.iter().map(|v| v.violations).sum();
    checks.push(Check::hard(
        "validation_bound_containment",
        violations == 0,
        Some(violations as f64),
        Some(0.0),
        format!("fresh dataset, seed {}", cfg.validation.seed),
    ));
    checks.extend(synth_checks(&ctrl, cfg.control.eps_ball));
    let a = &sim.trace.audits;
    checks.push(Check::hard("closed_loop_cost_decrease", a.cost_ok, Some(a.max_cost_slack), None, "largest J*(j) - J*(j-1) + l(j-1)"));
    checks.push(Check::hard("closed_loop_tube_membership", a.tube_ok, Some(a.max_tube_violation), Some(1e-8), ""));
    checks.push(Check::hard(
        "closed_loop_shifted_candidate",
        a.candidates_ok,
        Some(a.min_candidate_margin),
        None,
        "smallest margin of the shifted previous solution",
    ));
    checks.push(Check::hard("closed_loop_input_box", a.input_ok, Some(a.max_abs_u), Some(cfg.control.u_max), ""));
    checks.push(Check::hard("closed_loop_output_box", a.output_ok, Some(a.max_abs_z), Some(cfg.control.z_max), ""));
    checks.push(Check::hard(
        "closed_loop_nominal_convergence",
        a.convergence_ok,
        Some(a.z_bar_final_ratio),
        Some(1e-3),
        "final-quarter nominal output magnitude relative to the first step",
    ));
    checks.push(Check::hard(
        "closed_loop_tube_distance_trend",
        a.distance_trend_ok,
        Some(a.distance_trend),
        None,
        "last-quarter minus third-quarter mean distance to (C+DK)·E",
    ));
    checks.push(Check::hard(
        "settling_faster_than_open_loop",
        sim.settling.ok,
        sim.settling.closed_loop.map(|v| v as f64),
        sim.settling.open_loop.map(|v| v as f64 / 2.0),
        format!("short steps to |z| < {}", cfg.sim.settle_band),
    ));
    if let Some(mc) = &mc {
        checks.push(Check::hard(
            "monte_carlo_all_runs_pass",
            mc.ok,
            Some(mc.passed_runs as f64),
            Some(mc.runs as f64),
            "runs with every closed-loop audit passing",
        ));
    }
    let all_pass = checks.iter().all(|c| c.ok || c.informational);
    let report = AuditReport {
        all_pass,
        checks,
        thm1,
        bounds_shape: shape,
        validation,
        table1: (&ctrl.report).into(),
        closed_loop: a.into(),
        settling: sim.settling,
        monte_carlo: mc,
    };
    formats::write_json(&out.join("audits.json"), &report)?;
    Ok(EndToEnd { plant, dataset: ds, identification: id, controller: ctrl, simulation: sim, report, out_dir: out })
}

/// Core error of a failed stage, if any.
pub fn core_error(e: &HarnessError) -> Option<&CoreError> {
    match e {
        HarnessError::Stage { error, .. } => Some(error),
        _ => None,
    }
}

//! On-disk formats: CSV tables and JSON documents.
//!
//! Every writer is deterministic: floats use the shortest round-trip representation
//! and JSON fields keep declaration order.

use std::fs;
use std::path::{Path, PathBuf};

use msmpc_core::geometry::{HPolytope, Hyperbox, RpiMethod, RpiSet, Zonotope};
use msmpc_core::ident::{PredictorBank, PredictorModel};
use msmpc_core::linalg::{Mat, Vector};
use msmpc_core::mpc::{LiftedModel, LongStepRecord, ShortRecord, SynthReport, TubeController};
use msmpc_core::plant::Dataset;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::format(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::format(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Rows of string cells; the first row is the header.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| HarnessError::format(path, e);
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(&row).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::format(path, e))?;
    write_text(path, &String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Shortest round-trip text; exponent form outside `[1e-5, 1e16)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) || !a.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

// ---------------------------------------------------------------- dataset

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub seed: u64,
    pub v_bar: f64,
    pub d_bar: f64,
    #[serde(rename = "Ts")]
    pub ts: f64,
    /// Plant order.
    pub n: usize,
    pub n_pairs: usize,
    pub theta_bar: Vec<f64>,
}

/// Sidecar path `name.meta.json` next to `name.csv`.
pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

pub fn write_dataset(path: &Path, ds: &Dataset, meta: &DatasetMeta) -> Result<()> {
    let rows = (0..ds.len()).map(|k| vec![k.to_string(), num(ds.u[k]), num(ds.y[k]), num(ds.z[k])]);
    write_csv(path, &["k", "u", "y", "z"], rows)?;
    write_json(&meta_path(path), meta)
}

pub fn read_dataset(path: &Path) -> Result<(Dataset, DatasetMeta)> {
    let meta: DatasetMeta = read_json(&meta_path(path))?;
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::format(path, e))?;
    let header = r.headers().map_err(|e| HarnessError::format(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["k", "u", "y", "z"] {
        return Err(HarnessError::format(path, "expected header k,u,y,z"));
    }
    let (mut u, mut y, mut z) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::format(path, e))?;
        let parse = |c: usize| -> Result<f64> {
            rec[c].parse().map_err(|_| HarnessError::format(path, format!("bad number on data row {}", i + 1)))
        };
        if rec[0].parse::<usize>().ok() != Some(i) {
            return Err(HarnessError::format(path, format!("row {} has k = {}", i + 1, &rec[0])));
        }
        u.push(parse(1)?);
        y.push(parse(2)?);
        z.push(parse(3)?);
    }
    Ok((Dataset { u, y, z, n_pairs: meta.n_pairs, seed: meta.seed }, meta))
}

// ---------------------------------------------------------------- matrices and sets

/// Row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatDoc {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&Mat> for MatDoc {
    fn from(m: &Mat) -> Self {
        let data = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
        MatDoc { rows: m.nrows(), cols: m.ncols(), data }
    }
}

impl MatDoc {
    pub fn to_mat(&self) -> std::result::Result<Mat, String> {
        if self.data.len() != self.rows * self.cols {
            return Err(format!("matrix data has {} entries for {}x{}", self.data.len(), self.rows, self.cols));
        }
        Ok(Mat::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetDoc {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Zonotope { center: Vec<f64>, generators: MatDoc },
    Hpolytope { a: MatDoc, b: Vec<f64> },
}

impl From<&Hyperbox> for SetDoc {
    fn from(b: &Hyperbox) -> Self {
        SetDoc::Box { lower: b.lower().iter().copied().collect(), upper: b.upper().iter().copied().collect() }
    }
}

impl From<&Zonotope> for SetDoc {
    fn from(z: &Zonotope) -> Self {
        SetDoc::Zonotope { center: z.center.iter().copied().collect(), generators: (&z.generators).into() }
    }
}

impl From<&HPolytope> for SetDoc {
    fn from(p: &HPolytope) -> Self {
        SetDoc::Hpolytope { a: (&p.a).into(), b: p.b.iter().copied().collect() }
    }
}

impl SetDoc {
    pub fn to_box(&self) -> std::result::Result<Hyperbox, String> {
        match self {
            SetDoc::Box { lower, upper } => {
                Hyperbox::new(Vector::from_column_slice(lower), Vector::from_column_slice(upper)).map_err(|e| e.to_string())
            }
            _ => Err("expected a set of kind box".into()),
        }
    }

    pub fn to_zonotope(&self) -> std::result::Result<Zonotope, String> {
        match self {
            SetDoc::Zonotope { center, generators } => {
                Zonotope::new(Vector::from_column_slice(center), generators.to_mat()?).map_err(|e| e.to_string())
            }
            _ => Err("expected a set of kind zonotope".into()),
        }
    }

    pub fn to_hpolytope(&self) -> std::result::Result<HPolytope, String> {
        match self {
            SetDoc::Hpolytope { a, b } => HPolytope::new(a.to_mat()?, Vector::from_column_slice(b)).map_err(|e| e.to_string()),
            _ => Err("expected a set of kind hpolytope".into()),
        }
    }
}

// ---------------------------------------------------------------- predictor bank

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub p: usize,
    pub theta: Vec<f64>,
    pub lambda: f64,
    pub eps_hat: f64,
    pub tau_lower: f64,
    pub tau_hat: f64,
    pub fps_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankDoc {
    pub o: usize,
    pub p_bar: usize,
    pub d_bar: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Hex digest of the identification data.
    pub fingerprint: String,
    pub models: Vec<ModelDoc>,
}

impl From<&PredictorBank> for BankDoc {
    fn from(b: &PredictorBank) -> Self {
        BankDoc {
            o: b.o,
            p_bar: b.p_bar,
            d_bar: b.d_bar,
            alpha: b.alpha,
            gamma: b.gamma,
            fingerprint: format!("{:016x}", b.fingerprint),
            models: b
                .models
                .iter()
                .map(|m| ModelDoc {
                    p: m.p,
                    theta: m.theta.clone(),
                    lambda: m.lambda,
                    eps_hat: m.eps_hat,
                    tau_lower: m.tau_lower,
                    tau_hat: m.tau_hat,
                    fps_residual: m.fps_residual,
                })
                .collect(),
        }
    }
}

impl BankDoc {
    pub fn to_bank(&self) -> std::result::Result<PredictorBank, String> {
        let fingerprint = u64::from_str_radix(&self.fingerprint, 16).map_err(|e| format!("fingerprint: {e}"))?;
        if self.models.len() != self.p_bar {
            return Err(format!("bank has {} models for p_bar = {}", self.models.len(), self.p_bar));
        }
        let mut models = Vec::with_capacity(self.p_bar);
        for (i, m) in self.models.iter().enumerate() {
            let width = 2 * self.o - 1 + m.p;
            if m.p != i + 1 || m.theta.len() != width {
                return Err(format!("model {} has p = {} and {} coefficients", i + 1, m.p, m.theta.len()));
            }
            models.push(PredictorModel {
                p: m.p,
                o: self.o,
                theta: m.theta.clone(),
                lambda: m.lambda,
                eps_hat: m.eps_hat,
                tau_lower: m.tau_lower,
                tau_hat: m.tau_hat,
                fps_residual: m.fps_residual,
            });
        }
        Ok(PredictorBank {
            o: self.o,
            p_bar: self.p_bar,
            d_bar: self.d_bar,
            alpha: self.alpha,
            gamma: self.gamma,
            models,
            fingerprint,
        })
    }
}

pub fn write_bank(path: &Path, bank: &PredictorBank) -> Result<()> {
    write_json(path, &BankDoc::from(bank))
}

pub fn read_bank(path: &Path) -> Result<PredictorBank> {
    read_json::<BankDoc>(path)?.to_bank().map_err(|e| HarnessError::format(path, e))
}

// ---------------------------------------------------------------- controller

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftedDoc {
    pub o: usize,
    pub p_bar: usize,
    pub a: MatDoc,
    pub b: MatDoc,
    pub m: MatDoc,
    pub c: MatDoc,
    pub d: MatDoc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RpiMethodDoc {
    Exact,
    ModalTail,
    ScaledSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeDoc {
    pub set: SetDoc,
    pub terms: usize,
    pub method: RpiMethodDoc,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDoc {
    pub rho_closed: f64,
    pub norm_closed: f64,
    pub rho_open: f64,
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
    pub input_margin: f64,
    pub output_margin: f64,
}

impl From<&SynthReport> for ReportDoc {
    fn from(r: &SynthReport) -> Self {
        ReportDoc {
            rho_closed: r.rho_closed,
            norm_closed: r.norm_closed,
            rho_open: r.rho_open,
            rho_one_step: r.rho_one_step,
            norm_one_step: r.norm_one_step,
            riccati_residual: r.riccati_residual,
            lyapunov_residual: r.lyapunov_residual,
            lyapunov_scale: r.lyapunov_scale,
            rpi_slack: r.rpi_slack,
            rpi_terms: r.rpi_terms,
            rpi_generators: r.rpi_generators,
            terminal_constraints: r.terminal_constraints,
            terminal_invariance_slack: r.terminal_invariance_slack,
            input_margin: r.input_margin,
            output_margin: r.output_margin,
        }
    }
}

impl From<&ReportDoc> for SynthReport {
    fn from(r: &ReportDoc) -> Self {
        SynthReport {
            rho_closed: r.rho_closed,
            norm_closed: r.norm_closed,
            rho_open: r.rho_open,
            rho_one_step: r.rho_one_step,
            norm_one_step: r.norm_one_step,
            riccati_residual: r.riccati_residual,
            lyapunov_residual: r.lyapunov_residual,
            lyapunov_scale: r.lyapunov_scale,
            rpi_slack: r.rpi_slack,
            rpi_terms: r.rpi_terms,
            rpi_generators: r.rpi_generators,
            terminal_constraints: r.terminal_constraints,
            terminal_invariance_slack: r.terminal_invariance_slack,
            input_margin: r.input_margin,
            output_margin: r.output_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerDoc {
    pub lifted: LiftedDoc,
    pub k: MatDoc,
    pub p: MatDoc,
    pub tube: TubeDoc,
    pub u_box: SetDoc,
    pub z_box: SetDoc,
    pub z_hat: SetDoc,
    pub u_tight: SetDoc,
    pub z_tight: SetDoc,
    pub terminal_set: SetDoc,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub np: usize,
    pub w_bar: Vec<f64>,
    pub tau_hat: Vec<f64>,
    pub report: ReportDoc,
}

impl From<&TubeController> for ControllerDoc {
    fn from(c: &TubeController) -> Self {
        let l = &c.lifted;
        ControllerDoc {
            lifted: LiftedDoc {
                o: l.o,
                p_bar: l.p_bar,
                a: (&l.a).into(),
                b: (&l.b).into(),
                m: (&l.m).into(),
                c: (&l.c).into(),
                d: (&l.d).into(),
            },
            k: (&c.k).into(),
            p: (&c.p).into(),
            tube: TubeDoc {
                set: (&c.e.set).into(),
                terms: c.e.terms,
                method: match c.e.method {
                    RpiMethod::Exact => RpiMethodDoc::Exact,
                    RpiMethod::ModalTail => RpiMethodDoc::ModalTail,
                    RpiMethod::ScaledSum => RpiMethodDoc::ScaledSum,
                },
                slack: c.e.slack,
            },
            u_box: (&c.u_box).into(),
            z_box: (&c.z_box).into(),
            z_hat: (&c.z_hat).into(),
            u_tight: (&c.u_tight).into(),
            z_tight: (&c.z_tight).into(),
            terminal_set: (&c.xf).into(),
            q: c.q.clone(),
            r: c.r.clone(),
            np: c.np,
            w_bar: c.w_bar.clone(),
            tau_hat: c.tau_hat.clone(),
            report: (&c.report).into(),
        }
    }
}

impl ControllerDoc {
    pub fn to_controller(&self) -> std::result::Result<TubeController, String> {
        let l = &self.lifted;
        let lifted = LiftedModel {
            a: l.a.to_mat()?,
            b: l.b.to_mat()?,
            m: l.m.to_mat()?,
            c: l.c.to_mat()?,
            d: l.d.to_mat()?,
            o: l.o,
            p_bar: l.p_bar,
        };
        let nx = lifted.state_dim();
        let pb = lifted.p_bar;
        let shapes = [
            ("A", &lifted.a, nx, nx),
            ("B", &lifted.b, nx, pb),
            ("M", &lifted.m, nx, pb),
            ("C", &lifted.c, pb, nx),
            ("D", &lifted.d, pb, pb),
        ];
        for (name, m, r, c) in shapes {
            if m.shape() != (r, c) {
                return Err(format!("lifted {name} is {:?}, expected ({r}, {c})", m.shape()));
            }
        }
        let k = self.k.to_mat()?;
        let p = self.p.to_mat()?;
        if k.shape() != (pb, nx) || p.shape() != (nx, nx) {
            return Err("gain or terminal weight has the wrong shape".into());
        }
        let e = RpiSet {
            set: self.tube.set.to_zonotope()?,
            terms: self.tube.terms,
            method: match self.tube.method {
                RpiMethodDoc::Exact => RpiMethod::Exact,
                RpiMethodDoc::ModalTail => RpiMethod::ModalTail,
                RpiMethodDoc::ScaledSum => RpiMethod::ScaledSum,
            },
            slack: self.tube.slack,
        };
        let xf = self.terminal_set.to_hpolytope()?;
        if e.set.center.len() != nx || xf.a.ncols() != nx {
            return Err("tube or terminal set has the wrong dimension".into());
        }
        if [self.q.len(), self.r.len(), self.w_bar.len(), self.tau_hat.len()].iter().any(|&n| n != pb) {
            return Err(format!("weights and bounds need {pb} entries"));
        }
        Ok(TubeController {
            lifted,
            k,
            p,
            e,
            u_box: self.u_box.to_box()?,
            z_box: self.z_box.to_box()?,
            z_hat: self.z_hat.to_box()?,
            u_tight: self.u_tight.to_box()?,
            z_tight: self.z_tight.to_box()?,
            xf,
            q: self.q.clone(),
            r: self.r.clone(),
            np: self.np,
            w_bar: self.w_bar.clone(),
            tau_hat: self.tau_hat.clone(),
            report: (&self.report).into(),
        })
    }
}

pub fn write_controller(path: &Path, c: &TubeController) -> Result<()> {
    write_json(path, &ControllerDoc::from(c))
}

pub fn read_controller(path: &Path) -> Result<TubeController> {
    read_json::<ControllerDoc>(path)?.to_controller().map_err(|e| HarnessError::format(path, e))
}

// ---------------------------------------------------------------- tables

pub fn write_short_trace(path: &Path, short: &[ShortRecord]) -> Result<()> {
    let rows = short.iter().map(|r| vec![r.k.to_string(), num(r.u), num(r.z), num(r.y)]);
    write_csv(path, &["k", "u", "z", "y"], rows)
}

pub fn write_long_trace(path: &Path, long: &[LongStepRecord], tube_tol: f64) -> Result<()> {
    let rows = long.iter().map(|r| {
        vec![
            r.j.to_string(),
            num(r.j_star),
            flag(r.candidate.is_none_or(|c| c.feasible(tube_tol))),
            opt_num(r.cost_slack),
            flag(r.tube_violation <= tube_tol),
        ]
    });
    write_csv(path, &["j", "Jstar", "feasible", "cost_slack", "tube_ok"], rows)
}

pub fn write_bounds(path: &Path, multi: &[f64], iterated: &[f64]) -> Result<()> {
    let rows = multi.iter().zip(iterated).enumerate().map(|(i, (m, it))| vec![(i + 1).to_string(), num(*m), num(*it)]);
    write_csv(path, &["p", "w_multi", "w_iterated"], rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thm1Line {
    pub p: usize,
    pub tau_star: f64,
    pub tau_iterated: f64,
    pub gap: f64,
    pub iterated_in_fps: bool,
}

pub fn write_thm1(path: &Path, rows: &[Thm1Line]) -> Result<()> {
    let rows = rows.iter().map(|r| {
        vec![r.p.to_string(), num(r.tau_star), num(r.tau_iterated), num(r.gap), flag(r.iterated_in_fps)]
    });
    write_csv(path, &["p", "tau_star", "tau_iterated", "gap", "iterated_in_fps"], rows)
}

pub fn write_table1(path: &Path, r: &SynthReport) -> Result<()> {
    let rows = [
        vec!["one_step_closed_loop".to_string(), num(r.rho_one_step), num(r.norm_one_step)],
        vec!["multirate_closed_loop".to_string(), num(r.rho_closed), num(r.norm_closed)],
        vec!["multirate_open_loop".to_string(), num(r.rho_open), String::new()],
    ];
    write_csv(path, &["model", "rho", "norm"], rows)
}

pub fn write_tightening(path: &Path, c: &TubeController) -> Result<()> {
    let pb = c.lifted.p_bar;
    let rows = (0..pb).map(|i| {
        vec![
            (i + 1).to_string(),
            num(c.u_box.upper()[i]),
            num(c.u_tight.lower()[i]),
            num(c.u_tight.upper()[i]),
            num(c.z_box.upper()[i]),
            num(c.tau_hat[i]),
            num(c.z_hat.upper()[i]),
            num(c.z_tight.lower()[i]),
            num(c.z_tight.upper()[i]),
        ]
    });
    let header = ["p", "u_max", "u_tight_lower", "u_tight_upper", "z_max", "tau_hat", "z_hat_upper", "z_tight_lower", "z_tight_upper"];
    write_csv(path, &header, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationLine {
    pub p: usize,
    pub tau_hat: f64,
    pub max_error: f64,
    pub violations: usize,
    pub samples: usize,
}

pub fn write_validation(path: &Path, rows: &[ValidationLine]) -> Result<()> {
    let rows = rows.iter().map(|r| {
        vec![r.p.to_string(), num(r.tau_hat), num(r.max_error), r.violations.to_string(), r.samples.to_string()]
    });
    write_csv(path, &["p", "tau_hat", "max_error", "violations", "samples"], rows)
}

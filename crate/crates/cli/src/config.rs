//! Experiment configuration read from TOML.

use std::path::{Path, PathBuf};

use msmpc_core::mpc::{ClosedLoopOptions, Excursion, NoiseMode, SynthOptions};
use msmpc_core::plant::{discretize_zoh, ArxPlant, DataConfig};
use msmpc_core::ident::IdentOptions;
use msmpc_core::linalg::diag;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferFunction {
    /// Numerator coefficients in descending powers of `s`.
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArxSpec {
    pub order: usize,
    /// `[a_1..a_n, b_2..b_n, b_1]`.
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer_function: Option<TransferFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arx: Option<ArxSpec>,
    pub ts: f64,
    pub v_bar: f64,
    pub d_bar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub seed: u64,
    pub n_pairs: usize,
    pub hold: usize,
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentSection {
    pub order: usize,
    pub p_bar: usize,
    pub alpha: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub q: f64,
    pub r: f64,
    pub np: usize,
    pub u_max: f64,
    pub z_max: f64,
    pub eps_ball: f64,
    /// Diagonal LQ state weight over the lifted state; the output-weighted default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lq_state_weight: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lq_input_weight: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Uniform,
    Extreme,
}

impl From<NoiseKind> for NoiseMode {
    fn from(k: NoiseKind) -> Self {
        match k {
            NoiseKind::Uniform => NoiseMode::Uniform,
            NoiseKind::Extreme => NoiseMode::Extreme,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub seed: u64,
    pub long_steps: usize,
    pub noise: NoiseKind,
    pub excursion_level: f64,
    pub excursion_steps: usize,
    pub settle_band: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    pub runs: usize,
    pub seed_base: u64,
    /// Worker threads; 0 uses the available parallelism.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub output_dir: PathBuf,
    pub plant: PlantConfig,
    pub data: DataSection,
    pub ident: IdentSection,
    pub control: ControlSection,
    pub sim: SimSection,
    pub monte_carlo: MonteCarloSection,
    pub validation: ValidationSection,
}

impl Default for ExperimentConfig {
    /// Third-order reference plant `160 / ((s + 10)(s² + 1.6 s + 16))` at `Ts = 0.1`.
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            output_dir: PathBuf::from("out"),
            plant: PlantConfig {
                transfer_function: Some(TransferFunction { num: vec![160.0], den: vec![1.0, 11.6, 32.0, 160.0] }),
                arx: None,
                ts: 0.1,
                v_bar: 0.01,
                d_bar: 0.1,
            },
            data: DataSection { seed: 1, n_pairs: 1000, hold: 50, levels: vec![-1.0, 0.0, 1.0] },
            ident: IdentSection { order: 4, p_bar: 10, alpha: 1.05, gamma: 1.2 },
            control: ControlSection {
                q: 100.0,
                r: 1.0,
                np: 3,
                u_max: 10.0,
                z_max: 10.0,
                eps_ball: 1e-3,
                lq_state_weight: None,
                lq_input_weight: None,
            },
            sim: SimSection {
                seed: 7,
                long_steps: 30,
                noise: NoiseKind::Uniform,
                excursion_level: 1.5,
                excursion_steps: 20,
                settle_band: 0.5,
            },
            monte_carlo: MonteCarloSection { runs: 20, seed_base: 1001, threads: 0 },
            validation: ValidationSection { seed: 2 },
        }
    }
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let p = &self.plant;
        match (&p.transfer_function, &p.arx) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(invalid("plant needs exactly one of transfer_function or arx")),
        }
        if !(p.ts > 0.0) || !(p.v_bar >= 0.0) || !(p.d_bar >= 0.0) {
            return Err(invalid("plant.ts must be positive and noise bounds nonnegative"));
        }
        let d = &self.data;
        if d.n_pairs == 0 || d.hold == 0 || d.levels.is_empty() {
            return Err(invalid("data needs n_pairs >= 1, hold >= 1 and at least one level"));
        }
        let i = &self.ident;
        if i.order == 0 || i.p_bar <= i.order {
            return Err(invalid("ident needs order >= 1 and p_bar > order"));
        }
        if !(i.alpha >= 1.0) || !(i.gamma >= 1.0) {
            return Err(invalid("ident.alpha and ident.gamma must be at least 1"));
        }
        let c = &self.control;
        if !(c.q > 0.0 && c.r > 0.0 && c.u_max > 0.0 && c.z_max > 0.0 && c.eps_ball > 0.0) || c.np == 0 {
            return Err(invalid("control weights, boxes, eps_ball and np must be positive"));
        }
        let nx = 2 * i.order - 1;
        if let Some(w) = &c.lq_state_weight {
            if w.len() != nx || w.iter().any(|v| !(*v >= 0.0)) {
                return Err(invalid(format!("control.lq_state_weight needs {nx} nonnegative entries")));
            }
        }
        if let Some(w) = &c.lq_input_weight {
            if w.len() != i.p_bar || w.iter().any(|v| !(*v > 0.0)) {
                return Err(invalid(format!("control.lq_input_weight needs {} positive entries", i.p_bar)));
            }
        }
        let s = &self.sim;
        if s.long_steps < 4 || !(s.settle_band > 0.0) || !s.excursion_level.is_finite() {
            return Err(invalid("sim needs long_steps >= 4, a positive settle_band and a finite excursion"));
        }
        // Closed-loop noise must not replay the identification noise.
        let mc_seeds = self.monte_carlo.seed_base..self.monte_carlo.seed_base + self.monte_carlo.runs as u64;
        if s.seed == d.seed || mc_seeds.contains(&d.seed) {
            return Err(invalid("closed-loop seeds must differ from data.seed"));
        }
        if self.validation.seed == d.seed {
            return Err(invalid("validation.seed must differ from data.seed"));
        }
        Ok(())
    }

    pub fn plant(&self) -> Result<ArxPlant, HarnessError> {
        let p = &self.plant;
        let base = match (&p.transfer_function, &p.arx) {
            (Some(tf), _) => discretize_zoh(&tf.num, &tf.den, p.ts),
            (None, Some(arx)) => ArxPlant::new(arx.order, arx.theta.clone(), 0.0, 0.0),
            (None, None) => return Err(invalid("no plant given")),
        }
        .map_err(|e| HarnessError::stage("plant", e))?;
        ArxPlant::new(base.n, base.theta_bar, p.v_bar, p.d_bar).map_err(|e| HarnessError::stage("plant", e))
    }

    pub fn data_config(&self, seed: u64) -> DataConfig {
        DataConfig {
            seed,
            n_pairs: self.data.n_pairs,
            p_bar: self.ident.p_bar,
            order: self.ident.order,
            hold: self.data.hold,
            levels: self.data.levels.clone(),
        }
    }

    pub fn ident_options(&self) -> IdentOptions {
        IdentOptions {
            o: self.ident.order,
            p_bar: self.ident.p_bar,
            d_bar: self.plant.d_bar,
            alpha: self.ident.alpha,
            gamma: self.ident.gamma,
        }
    }

    pub fn synth_options(&self) -> SynthOptions {
        let c = &self.control;
        let mut opts = SynthOptions::uniform(self.ident.p_bar, c.q, c.r, c.np, c.u_max, c.z_max);
        opts.eps_ball = c.eps_ball;
        opts.lq_q = c.lq_state_weight.as_deref().map(diag);
        opts.lq_r = c.lq_input_weight.as_deref().map(diag);
        opts
    }

    pub fn excursion(&self) -> Excursion {
        Excursion { level: self.sim.excursion_level, steps: self.sim.excursion_steps }
    }

    pub fn closed_loop_options(&self, seed: u64) -> ClosedLoopOptions {
        ClosedLoopOptions {
            long_steps: self.sim.long_steps,
            seed,
            noise: self.sim.noise.into(),
            excursion: self.excursion(),
            ..ClosedLoopOptions::default()
        }
    }
}

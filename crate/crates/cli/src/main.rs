use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use msmpc::config::NoiseKind;
use msmpc::formats;
use msmpc::harness::{self, Check};
use msmpc::{ExperimentConfig, HarnessError, Result};

#[derive(Parser)]
#[command(name = "msmpc", version, about = "Set-membership multi-step predictors and multirate tube MPC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Uniform,
    Extreme,
}

/// Config file plus per-field overrides.
#[derive(Args, Clone, Default)]
struct Common {
    /// TOML experiment config; the built-in reference experiment when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Dataset seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    v_bar: Option<f64>,
    #[arg(long)]
    d_bar: Option<f64>,
    #[arg(long)]
    n_pairs: Option<usize>,
    #[arg(long)]
    hold: Option<usize>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    pbar: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    np: Option<usize>,
    #[arg(long)]
    u_max: Option<f64>,
    #[arg(long)]
    z_max: Option<f64>,
    #[arg(long)]
    eps_ball: Option<f64>,
    /// Closed-loop noise seed.
    #[arg(long)]
    sim_seed: Option<u64>,
    #[arg(long)]
    long_steps: Option<usize>,
    #[arg(long, value_enum)]
    noise: Option<NoiseArg>,
    #[arg(long, allow_hyphen_values = true)]
    excursion_level: Option<f64>,
    #[arg(long)]
    excursion_steps: Option<usize>,
    #[arg(long)]
    settle_band: Option<f64>,
    /// Monte Carlo runs (0 disables the campaign in end-to-end).
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed_base: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    validation_seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        set! {
            output_dir => c.output_dir,
            seed => c.data.seed,
            v_bar => c.plant.v_bar,
            d_bar => c.plant.d_bar,
            n_pairs => c.data.n_pairs,
            hold => c.data.hold,
            order => c.ident.order,
            pbar => c.ident.p_bar,
            alpha => c.ident.alpha,
            gamma => c.ident.gamma,
            q => c.control.q,
            r => c.control.r,
            np => c.control.np,
            u_max => c.control.u_max,
            z_max => c.control.z_max,
            eps_ball => c.control.eps_ball,
            sim_seed => c.sim.seed,
            long_steps => c.sim.long_steps,
            excursion_level => c.sim.excursion_level,
            excursion_steps => c.sim.excursion_steps,
            settle_band => c.sim.settle_band,
            runs => c.monte_carlo.runs,
            seed_base => c.monte_carlo.seed_base,
            threads => c.monte_carlo.threads,
            validation_seed => c.validation.seed,
        }
        if let Some(n) = self.noise {
            c.sim.noise = match n {
                NoiseArg::Uniform => NoiseKind::Uniform,
                NoiseArg::Extreme => NoiseKind::Extreme,
            };
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the plant under the excitation and write the dataset CSV plus its sidecar.
    GenerateData {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<output_dir>/dataset.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the predictor bank from a dataset.
    Identify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare min-max predictors with the iterated one-step model on every horizon.
    VerifyThm1 {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize the tube controller from a predictor bank.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the closed loop and the open-loop comparison.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        controller: Option<PathBuf>,
    },
    /// Multi-step bounds against the bound obtained by iterating the one-step model.
    CompareBounds {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the controller summary and write the closed-loop and tightening tables.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        controller: Option<PathBuf>,
    },
    /// Run every stage and write all artifacts plus audits.json.
    EndToEnd {
        #[command(flatten)]
        common: Common,
    },
    /// Closed-loop campaign over consecutive noise seeds.
    MonteCarlo {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        controller: Option<PathBuf>,
    },
    /// Print the built-in experiment config as TOML.
    DefaultConfig,
}

fn or_default(path: &Option<PathBuf>, cfg: &ExperimentConfig, name: &str) -> PathBuf {
    path.clone().unwrap_or_else(|| cfg.output_dir.join(name))
}

fn print_checks(checks: &[Check]) {
    for c in checks {
        let status = match (c.ok, c.informational) {
            (true, _) => "ok  ",
            (false, true) => "info",
            (false, false) => "FAIL",
        };
        let value = c.value.map(|v| format!(" {v:.6e}")).unwrap_or_default();
        println!("[{status}] {}{value} {}", c.name, c.detail);
    }
}

fn identification(common: &Common, data: &Option<PathBuf>) -> Result<(ExperimentConfig, msmpc_core::ident::Identification)> {
    let cfg = common.load()?;
    let path = or_default(data, &cfg, "dataset.csv");
    let (ds, meta) = formats::read_dataset(&path)?;
    let d_bar = common.d_bar.unwrap_or(meta.d_bar);
    let id = harness::identify_stage(&cfg, &ds, d_bar)?;
    Ok((cfg, id))
}

fn report(controller: &Path, cfg: &ExperimentConfig) -> Result<bool> {
    let ctrl = formats::read_controller(controller)?;
    formats::write_table1(&cfg.output_dir.join("table1.csv"), &ctrl.report)?;
    formats::write_tightening(&cfg.output_dir.join("tightening.csv"), &ctrl)?;
    let r = &ctrl.report;
    println!("lifted closed loop: rho {:.4}, norm {:.4}", r.rho_closed, r.norm_closed);
    println!("one-step closed loop: rho {:.4}, norm {:.4}", r.rho_one_step, r.norm_one_step);
    println!("lifted open loop: rho {:.4}", r.rho_open);
    println!(
        "tube: {} terms, {} generators; terminal set: {} constraints",
        r.rpi_terms, r.rpi_generators, r.terminal_constraints
    );
    let checks = harness::synth_checks(&ctrl, cfg.control.eps_ball);
    print_checks(&checks);
    Ok(checks.iter().all(|c| c.ok))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenerateData { common, out } => {
            let cfg = common.load()?;
            let path = or_default(&out, &cfg, "dataset.csv");
            let (_, ds, meta) = harness::generate(&cfg, cfg.data.seed)?;
            formats::write_dataset(&path, &ds, &meta)?;
            println!("wrote {} samples to {}", ds.len(), path.display());
            Ok(true)
        }
        Command::Identify { common, data, out } => {
            let (cfg, id) = identification(&common, &data)?;
            let path = or_default(&out, &cfg, "bank.json");
            formats::write_bank(&path, &id.bank)?;
            for m in &id.bank.models {
                println!("p={:2} eps_hat {:.5} tau_hat {:.5}", m.p, m.eps_hat, m.tau_hat);
            }
            let checks = harness::identification_checks(&id);
            print_checks(&checks);
            Ok(checks.iter().all(|c| c.ok))
        }
        Command::VerifyThm1 { common, data, out } => {
            let (cfg, id) = identification(&common, &data)?;
            let rows = harness::thm1_stage(&id)?;
            formats::write_thm1(&or_default(&out, &cfg, "thm1.csv"), &rows)?;
            for r in &rows {
                println!("p={:2} tau_star {:.6} tau_iterated {:.6} gap {:.3e}", r.p, r.tau_star, r.tau_iterated, r.gap);
            }
            Ok(harness::thm1_ok(&rows))
        }
        Command::Synth { common, bank, out } => {
            let cfg = common.load()?;
            let b = formats::read_bank(&or_default(&bank, &cfg, "bank.json"))?;
            let ctrl = harness::synth_stage(&cfg, &b)?;
            formats::write_controller(&or_default(&out, &cfg, "controller.json"), &ctrl)?;
            let checks = harness::synth_checks(&ctrl, cfg.control.eps_ball);
            print_checks(&checks);
            Ok(checks.iter().all(|c| c.ok))
        }
        Command::Simulate { common, controller } => {
            let cfg = common.load()?;
            let ctrl = formats::read_controller(&or_default(&controller, &cfg, "controller.json"))?;
            let plant = cfg.plant()?;
            let sim = harness::simulate_stage(&cfg, &plant, &ctrl, cfg.sim.seed)?;
            harness::write_traces(&cfg.output_dir, &sim)?;
            let audits = harness::AuditsDoc::from(&sim.trace.audits);
            formats::write_json(&cfg.output_dir.join("closed_loop_audits.json"), &(&audits, &sim.settling))?;
            println!("closed-loop audits: {}", if audits.all_ok { "pass" } else { "FAIL" });
            println!("settling (short steps): closed {:?}, open {:?}", sim.settling.closed_loop, sim.settling.open_loop);
            Ok(audits.all_ok && sim.settling.ok)
        }
        Command::CompareBounds { common, bank, out } => {
            let cfg = common.load()?;
            let b = formats::read_bank(&or_default(&bank, &cfg, "bank.json"))?;
            let (multi, iterated) = harness::compare_bounds(&b);
            formats::write_bounds(&or_default(&out, &cfg, "bounds.csv"), &multi, &iterated)?;
            for (p, (m, i)) in multi.iter().zip(&iterated).enumerate() {
                println!("p={:2} multi-step {:.5} iterated {:.5}", p + 1, m, i);
            }
            let shape = harness::bounds_shape(&multi, &iterated);
            Ok(shape.dominates)
        }
        Command::Report { common, controller } => {
            let cfg = common.load()?;
            report(&or_default(&controller, &cfg, "controller.json"), &cfg)
        }
        Command::EndToEnd { common } => {
            let cfg = common.load()?;
            let e2e = harness::end_to_end(&cfg)?;
            print_checks(&e2e.report.checks);
            println!("artifacts in {}", e2e.out_dir.display());
            Ok(e2e.report.all_pass)
        }
        Command::MonteCarlo { common, controller } => {
            let cfg = common.load()?;
            let ctrl = formats::read_controller(&or_default(&controller, &cfg, "controller.json"))?;
            let plant = cfg.plant()?;
            let mc = harness::monte_carlo(&cfg, &plant, &ctrl, Some(&cfg.output_dir))?;
            formats::write_json(&cfg.output_dir.join("monte_carlo").join("summary.json"), &mc)?;
            println!("{}/{} runs passed every audit ({} feasible)", mc.passed_runs, mc.runs, mc.feasible_runs);
            Ok(mc.ok)
        }
        Command::DefaultConfig => {
            print!("{}", ExperimentConfig::default().to_toml());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            if let HarnessError::Stage { stage, .. } = &e {
                eprintln!("stage: {stage}");
            }
            ExitCode::from(2)
        }
    }
}

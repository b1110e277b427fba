//! Command-line front end: run one scenario, sweep an axis, or emit
//! diagnostics. All outputs are deterministic in (config, seed).

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::PathBuf;
use swarm_mfg::config::ScenarioConfig;
use swarm_mfg::diagnostics::{correlation_matrix, msd_closed_form, spectral_report};
use swarm_mfg::orchestrator::{fpk_regressor_samples, run, sweep, Algo, SweepAxis};

#[derive(Parser)]
#[command(
    name = "swarm-mfg",
    about = "Deterministic UAV-swarm mean-field-game simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Scenario config file (TOML); defaults are the baseline scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set dynamics.sigma_wind=0.2
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Override the simulation horizon in steps.
    #[arg(long)]
    steps: Option<u64>,
}

impl CommonOpts {
    fn load(&self) -> anyhow::Result<ScenarioConfig> {
        let base = match &self.config {
            Some(path) => ScenarioConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => ScenarioConfig::default(),
        };
        let mut cfg = base.with_overrides(&self.sets)?;
        if let Some(steps) = self.steps {
            cfg.max_steps = steps;
            cfg.validate()?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm and write trajectories.csv, metrics.csv,
    /// summary.json, rounds.jsonl.
    Run {
        #[command(flatten)]
        common: CommonOpts,
        /// Control algorithm.
        #[arg(long, default_value = "mfgfl-hf")]
        algo: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Run the cross product of an axis sweep and write sweep.csv.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Sweep axis: n, n0, or sigma_wind.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        /// Comma-separated algorithms (default: the five learning methods).
        #[arg(long, value_delimiter = ',')]
        algos: Vec<String>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Diagnostics.
    Diag {
        #[command(subcommand)]
        what: DiagCommand,
    },
}

#[derive(Subcommand)]
enum DiagCommand {
    /// Describe the polynomial basis: size, ordering, fingerprint.
    Basis {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Fit the initial swarm density and report grid statistics.
    Density {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Estimate the FPK regressor correlation spectrum and the stable
    /// step-size bound from a short run.
    Spectral {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Steps of the sampling run.
        #[arg(long, default_value_t = 50)]
        steps: u64,
    },
    /// Closed-form steady-state MSD on a reduced (degree-2) instance.
    Msd {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        steps: u64,
        /// Step size; defaults to half the estimated stable bound.
        #[arg(long)]
        mu: Option<f64>,
        /// Residual power epsilon.
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
    },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            common,
            algo,
            seed,
            out_dir,
        } => {
            let cfg = common.load()?;
            let algo: Algo = algo.parse()?;
            let report = run(&cfg, algo, seed)?;
            report.write_dir(&out_dir)?;
            println!("{}", report.summary_line());
        }
        Command::Sweep {
            common,
            axis,
            values,
            seeds,
            algos,
            out_dir,
        } => {
            if values.is_empty() {
                bail!("--values must be non-empty");
            }
            let cfg = common.load()?;
            let axis: SweepAxis = axis.parse()?;
            let algos: Vec<Algo> = if algos.is_empty() {
                Algo::LEARNING.to_vec()
            } else {
                algos
                    .iter()
                    .map(|a| a.parse())
                    .collect::<Result<_, _>>()?
            };
            let cells = sweep(&cfg, axis, &values, &seeds, &algos);
            std::fs::create_dir_all(&out_dir)?;
            let mut f = std::io::BufWriter::new(std::fs::File::create(out_dir.join("sweep.csv"))?);
            writeln!(
                f,
                "axis,value,seed,algo,t_avg,t_max,energy_mean,phi_a,phi_c,collisions,bits,error"
            )?;
            let mut failures = 0usize;
            for c in &cells {
                match (&c.summary, &c.error) {
                    (Some(s), _) => writeln!(
                        f,
                        "{},{},{},{},{},{},{},{},{},{},{},",
                        c.axis,
                        c.value,
                        c.seed,
                        c.algo,
                        s.t_avg,
                        s.t_max,
                        s.energy_mean,
                        s.phi_a_at_t_avg,
                        s.phi_c_at_t_avg,
                        s.collision_events,
                        s.payload.bits
                    )?,
                    (None, err) => {
                        failures += 1;
                        writeln!(
                            f,
                            "{},{},{},{},,,,,,,,{}",
                            c.axis,
                            c.value,
                            c.seed,
                            c.algo,
                            err.as_deref().unwrap_or("unknown")
                        )?
                    }
                }
            }
            f.flush()?;
            println!("{} cells written to {}", cells.len(), out_dir.display());
            if failures > 0 {
                bail!("{failures} sweep cell(s) failed");
            }
        }
        Command::Diag { what } => diag(what)?,
    }
    Ok(())
}

fn diag(cmd: DiagCommand) -> anyhow::Result<()> {
    match cmd {
        DiagCommand::Basis { common } => {
            let cfg = common.load()?;
            let basis = swarm_mfg::basis::Basis::new(cfg.basis);
            let terms: Vec<String> = basis.terms().iter().map(|t| t.describe()).collect();
            let out = serde_json::json!({
                "degree": cfg.basis.degree,
                "terms_per_model": basis.len(),
                "fingerprint": format!("{:016x}", basis.fingerprint()),
                "pos_scale": cfg.basis.pos_scale,
                "vel_scale": cfg.basis.vel_scale,
                "terms": terms,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        DiagCommand::Density { common } => {
            let cfg = common.load()?;
            let basis = swarm_mfg::basis::Basis::new(cfg.basis);
            let mf = swarm_mfg::fpk::MeanField::new(basis, cfg.quadrature);
            let states = cfg.swarm.positions(cfg.n_agents);
            let model = mf.fit_from_swarm(&states, cfg.fpk.bandwidth, cfg.fpk.ridge);
            let dens = mf.raw_densities(&model.w0);
            let raw_min = dens.iter().cloned().fold(f64::INFINITY, f64::min);
            let raw_max = dens.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let positive = dens.iter().filter(|d| **d > 0.0).count();
            let mass: f64 = dens.iter().map(|d| d.max(0.0)).sum::<f64>() * mf.cell_weight();
            let inter = mf.interaction(&states[0], &model.w0, &cfg.cost);
            let out = serde_json::json!({
                "nodes": mf.node_count(),
                "raw_min": raw_min,
                "raw_max": raw_max,
                "positive_node_fraction": positive as f64 / dens.len() as f64,
                "clamped_mass": mass,
                "interaction_at_first_agent": inter.value,
                "degenerate": inter.degenerate,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        DiagCommand::Spectral {
            common,
            seed,
            steps,
        } => {
            let cfg = common.load()?;
            let samples = fpk_regressor_samples(&cfg, seed, steps)?;
            let rep = spectral_report(&samples)?;
            println!("{}", serde_json::to_string_pretty(&rep)?);
        }
        DiagCommand::Msd {
            common,
            seed,
            steps,
            mu,
            eps,
        } => {
            let mut cfg = common.load()?;
            // reduced basis keeps the Kronecker system desk-sized
            cfg.basis.degree = cfg.basis.degree.min(2);
            cfg.validate()?;
            let samples = fpk_regressor_samples(&cfg, seed, steps)?;
            let r = correlation_matrix(&samples)?;
            let rep = spectral_report(&samples)?;
            let mu = mu.unwrap_or(0.5 * rep.mu_bound);
            let msd = msd_closed_form(&r, mu, eps)?;
            let out = serde_json::json!({
                "dim": rep.dim,
                "samples": rep.samples,
                "lambda_max": rep.lambda_max,
                "mu_bound": rep.mu_bound,
                "mu": mu,
                "eps": eps,
                "msd": msd,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
    }
    Ok(())
}

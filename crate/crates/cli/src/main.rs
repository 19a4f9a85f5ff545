//! `pnp-lab`: simulate Poisson observations, run plug-and-play Langevin
//! chains and compare runs.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error, 3 chain
//! divergence, 4 bridge protocol error, 5 no samples retained.

// `!(v > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod bridge_cmd;
mod compare;
mod config;
mod problem;
mod run;

use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pnp_core::bridge::ProtocolError;
use pnp_core::samplers::KernelChoice;
use pnp_core::Shape;

use crate::bridge_cmd::{BridgeMismatch, CheckOptions, ServeMode};
use crate::config::{parse_override, ExperimentConfig};
use crate::run::RunStatus;

#[derive(Parser)]
#[command(
    name = "pnp-lab",
    version,
    about = "Constrained plug-and-play Langevin sampling for Poisson inverse problems"
)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a Poisson observation and write it with the ground truth.
    Simulate(ConfigArgs),
    /// Run a chain and write the posterior mean, std maps and diagnostics.
    Sample(ConfigArgs),
    /// Tabulate PSNR, SSIM and NFE-to-98%-peak over completed runs.
    Compare {
        /// Run directories written by `sample`.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Launch a denoiser bridge and send it test tensors.
    BridgeCheck {
        /// Shell command that starts the bridge.
        #[arg(long)]
        command: String,
        /// Tensor shape as CxHxW.
        #[arg(long, default_value = "1x16x16", value_parser = parse_shape)]
        shape: Shape,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        #[arg(long, default_value_t = 3)]
        trials: usize,
        #[arg(long, default_value_t = 60.0)]
        timeout_secs: f64,
        /// Compare against the in-process Gaussian denoiser with this mean.
        #[arg(long, requires = "gaussian_variance")]
        gaussian_mean: Option<f64>,
        #[arg(long, requires = "gaussian_mean")]
        gaussian_variance: Option<f64>,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Reference bridge process speaking the protocol on stdin/stdout.
    #[command(hide = true)]
    BridgeServe {
        #[arg(long, value_enum, default_value = "identity")]
        mode: ServeMode,
        #[arg(long, default_value_t = 0.0)]
        mean: f64,
        #[arg(long, default_value_t = 1.0)]
        variance: f64,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Generic override, e.g. `--set sampler.n_iter=2000` (repeatable).
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (outputs.dir).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Directory written by `simulate` (problem.data).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Ground-truth image file (problem.image).
    #[arg(long)]
    image: Option<PathBuf>,
    /// Blur kernel spec or file (problem.kernel).
    #[arg(long)]
    blur: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Sampler kernel (sampler.kernel).
    #[arg(long)]
    kernel: Option<KernelChoice>,
    /// Absolute step size; replaces any `c` from the file.
    #[arg(long, conflicts_with = "c")]
    delta: Option<f64>,
    /// Step multiplier; replaces any `delta` from the file.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    n_iter: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// Chain seed (sampler.seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Simulation seed (problem.seed).
    #[arg(long)]
    sim_seed: Option<u64>,
    #[arg(long, conflicts_with = "gamma")]
    epsilon: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Vec<(String, toml::Value)>> {
        let mut out = Vec::new();
        for s in &self.set {
            out.push(parse_override(s)?);
        }
        let path = |p: &PathBuf| toml::Value::String(p.display().to_string());
        let mut push = |key: &str, v: Option<toml::Value>| {
            if let Some(v) = v {
                out.push((key.to_string(), v));
            }
        };
        push("outputs.dir", self.out.as_ref().map(path));
        push("problem.data", self.data.as_ref().map(path));
        push("problem.image", self.image.as_ref().map(path));
        push("problem.kernel", self.blur.clone().map(toml::Value::String));
        push("problem.alpha", self.alpha.map(toml::Value::Float));
        push("problem.beta", self.beta.map(toml::Value::Float));
        push("problem.seed", self.sim_seed.map(|v| toml::Value::Integer(v as i64)));
        push(
            "sampler.kernel",
            self.kernel.map(|k| toml::Value::String(k.name().into())),
        );
        push("sampler.delta", self.delta.map(toml::Value::Float));
        push("sampler.c", self.c.map(toml::Value::Float));
        push("sampler.n_iter", self.n_iter.map(|v| toml::Value::Integer(v as i64)));
        push("sampler.burn_in", self.burn_in.map(|v| toml::Value::Integer(v as i64)));
        push("sampler.thin", self.thin.map(|v| toml::Value::Integer(v as i64)));
        push("sampler.seed", self.seed.map(|v| toml::Value::Integer(v as i64)));
        push("prior.epsilon", self.epsilon.map(toml::Value::Float));
        push("prior.gamma", self.gamma.map(toml::Value::Float));
        push("prior.rho", self.rho.map(toml::Value::Float));
        Ok(out)
    }

    fn load(&self) -> Result<ExperimentConfig> {
        let overrides = self.overrides().map_err(ConfigError::wrap)?;
        ExperimentConfig::load(self.config.as_deref(), &overrides).map_err(ConfigError::wrap)
    }
}

fn parse_shape(s: &str) -> Result<Shape, String> {
    let dims: Vec<usize> = s
        .split(['x', ','])
        .map(|d| d.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("shape {s:?}: {e}"))?;
    match dims.as_slice() {
        [c, h, w] if c * h * w > 0 => Ok(Shape::new(*c, *h, *w)),
        [h, w] if h * w > 0 => Ok(Shape::new(1, *h, *w)),
        _ => Err(format!("shape {s:?} must be CxHxW or HxW with positive sizes")),
    }
}

/// Marks errors in configuration loading.
#[derive(Debug)]
struct ConfigError(anyhow::Error);

impl ConfigError {
    fn wrap(e: anyhow::Error) -> anyhow::Error {
        anyhow::Error::new(ConfigError(e))
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration error: {:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if cause.is::<ProtocolError>() || cause.is::<BridgeMismatch>() {
            return 4;
        }
        if let Some(core) = cause.downcast_ref::<pnp_core::Error>() {
            return match core {
                pnp_core::Error::Diverged { .. } => 3,
                pnp_core::Error::Protocol(_) => 4,
                pnp_core::Error::InvalidParameter(_)
                | pnp_core::Error::Parse { .. }
                | pnp_core::Error::ShapeMismatch { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate(args) => {
            run::cmd_simulate(&args.load()?)?;
            Ok(0)
        }
        Command::Sample(args) => {
            let cfg = args.load()?;
            let report = run::cmd_sample(&cfg)?;
            match report.status {
                RunStatus::InsufficientSamples => {
                    log::warn!("insufficient samples: no iterations after burn-in");
                    Ok(5)
                }
                _ => {
                    if let (Some(p), Some(p0)) = (report.psnr, report.psnr_observation) {
                        log::info!("PSNR {p:.2} dB (observation {p0:.2} dB), NFE {}", report.nfe);
                    }
                    Ok(0)
                }
            }
        }
        Command::Compare { runs, out } => {
            let rows = compare::compare_rows(&runs).map_err(ConfigError::wrap)?;
            match out {
                Some(path) => compare::write_rows(
                    &rows,
                    File::create(&path).with_context(|| format!("creating {}", path.display()))?,
                )?,
                None => compare::write_rows(&rows, std::io::stdout().lock())?,
            }
            Ok(0)
        }
        Command::BridgeCheck {
            command,
            shape,
            epsilon,
            trials,
            timeout_secs,
            gaussian_mean,
            gaussian_variance,
            tolerance,
            seed,
        } => {
            bridge_cmd::cmd_bridge_check(&CheckOptions {
                command,
                shape,
                epsilon,
                trials,
                timeout: Duration::from_secs_f64(timeout_secs),
                gaussian: gaussian_mean.zip(gaussian_variance),
                tolerance,
                seed,
            })?;
            Ok(0)
        }
        Command::BridgeServe { mode, mean, variance } => {
            bridge_cmd::cmd_bridge_serve(mode, mean, variance)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

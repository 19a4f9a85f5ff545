//! The `simulate` and `sample` commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use pnp_core::diagnostics::{
    acf, log_grid, nfe_to_fraction_of_peak, psnr, select_extreme_pixels, ssim, ChainAccumulator,
};
use pnp_core::io::{normalize_for_display, save_image, save_raw};
use pnp_core::mirror::MirrorMap;
use pnp_core::samplers::{
    default_x0, delta_l, run_chain, stability_length, step_from_multiplier, BoxConstraint, ChainConfig, KernelChoice,
    Target,
};
use pnp_core::Error;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, StepRule};
use crate::problem::{build_prior, Problem};

pub const CONFIG_FILE: &str = "config.toml";
pub const REPORT_FILE: &str = "report.toml";
pub const TIMING_FILE: &str = "timing.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const ACF_FILE: &str = "acf.csv";

/// Writes the observation, ground truth and kernel to `outputs.dir`.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<()> {
    let problem = Problem::build(cfg)?;
    let dir = &cfg.outputs.dir;
    problem.save(dir)?;
    let mut resolved = cfg.clone();
    resolved.problem.beta = Some(problem.beta());
    fs::write(dir.join(CONFIG_FILE), resolved.to_toml()?)?;
    log::info!(
        "simulated {} observation (alpha {}, total counts {}) into {}",
        problem.y.shape(),
        problem.alpha,
        problem.y.sum(),
        dir.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    InsufficientSamples,
    Diverged,
    BridgeError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub status: RunStatus,
    pub error: Option<String>,
    pub kernel: KernelChoice,
    pub prior: String,
    /// `"multiplier"` or `"absolute"`.
    pub step_rule: String,
    pub c: Option<f64>,
    pub delta: f64,
    pub delta_l: f64,
    pub ell_s: Option<f64>,
    pub lipschitz_likelihood: f64,
    pub lipschitz_prior: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub rho: f64,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub chain_index: u64,
    pub samples: usize,
    pub nfe: u64,
    pub psnr_observation: Option<f64>,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub nfe_to_98_peak: Option<u64>,
    /// Flat indices of the pixels with the largest and smallest variance.
    pub max_std_pixel: Option<usize>,
    pub min_std_pixel: Option<usize>,
    /// Traced pixels with the longest and shortest integrated autocorrelation time.
    pub slow_pixel: Option<usize>,
    pub fast_pixel: Option<usize>,
    pub iat_slow: Option<f64>,
    pub iat_fast: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct TimingReport {
    seconds: f64,
    iterations_per_second: f64,
}

#[derive(Serialize)]
struct AcfRow {
    lag: usize,
    slow: f64,
    fast: f64,
}

/// Integrated autocorrelation time, summing lags until the first negative one.
pub fn integrated_time(values: &[f64]) -> f64 {
    1.0 + 2.0 * values.iter().skip(1).take_while(|&&r| r > 0.0).sum::<f64>()
}

fn trace_indices(len: usize, capacity: usize, budget: usize) -> Vec<usize> {
    let max = (budget / capacity.max(1)).max(1);
    if len <= max {
        (0..len).collect()
    } else {
        (0..max).map(|k| k * len / max).collect()
    }
}

/// Runs the configured chain and writes every artifact to `outputs.dir`.
pub fn cmd_sample(cfg: &ExperimentConfig) -> Result<RunReport> {
    let dir = cfg.outputs.dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let problem = Problem::build(cfg)?;
    let mut resolved = cfg.clone();
    resolved.problem.alpha = problem.alpha;
    resolved.problem.beta = Some(problem.beta());
    fs::write(dir.join(CONFIG_FILE), resolved.to_toml()?)?;

    let mut prior = build_prior(cfg)?;
    let s = &cfg.sampler;
    let kernel = s.kernel;
    let l_lik = problem.model.lipschitz_bound()?;
    let dl = delta_l(l_lik, prior.lipschitz);
    let ell_s = (kernel == KernelChoice::RpnpSkrock).then(|| stability_length(s.s, s.eta));
    let (delta, step_rule, c) = match cfg.step_rule() {
        StepRule::Absolute(d) => (d, "absolute", None),
        StepRule::Multiplier(c) => (step_from_multiplier(kernel, c, dl, s.s, s.eta), "multiplier", Some(c)),
    };
    let chain = ChainConfig {
        delta,
        n_iter: s.n_iter,
        rho: cfg.prior.rho,
        s: s.s,
        eta: s.eta,
        seed: s.seed,
        chain_index: s.chain_index,
        burn_in: s.burn_in,
        thin: s.thin,
        skrock_box_signs: s.skrock_box_signs,
        dual_floor: s.dual_floor,
        lipschitz: Some(l_lik + cfg.prior.rho * prior.lipschitz),
    };
    log::info!(
        "{kernel}: delta_L {dl:.4e}, delta {delta:.4e}{}, {} iterations",
        ell_s.map_or(String::new(), |l| format!(", ell_s {l:.4}")),
        s.n_iter
    );

    let shape = problem.y.shape();
    let retained = chain.retained();
    let scales: Vec<usize> = cfg
        .outputs
        .scales
        .iter()
        .copied()
        .filter(|&k| k <= shape.height.min(shape.width))
        .collect();
    let mut acc = ChainAccumulator::new(shape).with_multiscale(&scales)?;
    let capacity = retained.min(cfg.outputs.trace_capacity);
    if cfg.outputs.acf && capacity > 1 {
        acc = acc.with_trace(trace_indices(shape.len(), capacity, cfg.outputs.trace_budget), capacity)?;
    }
    if let (Some(truth), true) = (&problem.truth, cfg.outputs.metrics) {
        acc = acc.with_curve(truth.clone(), 1.0, log_grid(retained, cfg.outputs.curve_points))?;
    }

    let constraint = BoxConstraint::new(s.lower, s.upper)?;
    let x0 = default_x0(&problem.model, kernel, &constraint)?;
    let mut target = Target {
        data: &problem.model,
        prior: prior.score.as_mut(),
        constraint,
        mirror: MirrorMap::Burg,
    };
    let outcome = run_chain(kernel, &mut target, x0, &chain, &mut acc);
    let nfe = prior.score.evaluations();

    let mut report = RunReport {
        status: RunStatus::Ok,
        error: None,
        kernel,
        prior: prior.description.clone(),
        step_rule: step_rule.into(),
        c,
        delta,
        delta_l: dl,
        ell_s,
        lipschitz_likelihood: l_lik,
        lipschitz_prior: prior.lipschitz,
        alpha: problem.alpha,
        beta: problem.beta(),
        epsilon: cfg.epsilon(),
        rho: cfg.prior.rho,
        n_iter: s.n_iter,
        burn_in: s.burn_in,
        thin: s.thin,
        seed: s.seed,
        chain_index: s.chain_index,
        samples: acc.moments.count() as usize,
        nfe,
        psnr_observation: None,
        psnr: None,
        ssim: None,
        nfe_to_98_peak: None,
        max_std_pixel: None,
        min_std_pixel: None,
        slow_pixel: None,
        fast_pixel: None,
        iat_slow: None,
        iat_fast: None,
        warnings: Vec::new(),
    };
    let failure = match outcome {
        Ok(chain_report) => {
            report.warnings = chain_report.warnings.clone();
            let timing = TimingReport {
                seconds: chain_report.timing.seconds,
                iterations_per_second: chain_report.timing.iterations_per_second,
            };
            fs::write(dir.join(TIMING_FILE), toml::to_string(&timing)?)?;
            None
        }
        Err(e) => {
            report.status = match &e {
                Error::Protocol(_) => RunStatus::BridgeError,
                _ => RunStatus::Diverged,
            };
            report.error = Some(e.to_string());
            log::error!("chain failed: {e}; writing partial artifacts");
            Some(e)
        }
    };
    if report.samples == 0 && failure.is_none() {
        report.status = RunStatus::InsufficientSamples;
    }

    write_artifacts(cfg, &problem, &acc, &mut report, &dir)?;
    fs::write(dir.join(REPORT_FILE), toml::to_string(&report)?)?;
    match failure {
        Some(e) => Err(anyhow::Error::new(e).context(format!("run report in {}", dir.display()))),
        None => Ok(report),
    }
}

fn write_artifacts(
    cfg: &ExperimentConfig,
    problem: &Problem,
    acc: &ChainAccumulator,
    report: &mut RunReport,
    dir: &Path,
) -> Result<()> {
    if let Some(truth) = &problem.truth {
        report.psnr_observation = Some(psnr(&problem.normalized_observation(), truth, 1.0)?);
    }
    let n = acc.moments.count();
    if n == 0 {
        return Ok(());
    }
    let meta = |what: &str| {
        BTreeMap::from([
            ("quantity".to_string(), what.to_string()),
            ("samples".to_string(), n.to_string()),
        ])
    };
    let mean = acc.moments.mean();
    save_raw(&dir.join("mmse"), &mean, &meta("posterior mean"))?;
    if cfg.outputs.images {
        save_image(&dir.join("mmse.png"), &mean)?;
    }
    if let Some(truth) = &problem.truth {
        report.psnr = Some(psnr(&mean, truth, 1.0)?);
        report.ssim = Some(ssim(&mean, truth)?);
    }
    if !acc.curve().is_empty() {
        report.nfe_to_98_peak = nfe_to_fraction_of_peak(acc.curve(), 0.98);
        write_csv(&dir.join(METRICS_FILE), acc.curve())?;
    }
    if n < 2 {
        return Ok(());
    }
    let (hi, lo) = select_extreme_pixels(&acc.moments);
    report.max_std_pixel = Some(hi);
    report.min_std_pixel = Some(lo);
    if let Some(ms) = &acc.multiscale {
        for (scale, map) in ms.std_maps() {
            let base = dir.join(format!("std_s{scale}"));
            save_raw(&base, &map, &meta(&format!("posterior std at block scale {scale}")))?;
            if cfg.outputs.images {
                save_image(&dir.join(format!("std_s{scale}.png")), &normalize_for_display(&map))?;
            }
        }
    }
    if let Some(trace) = &acc.trace {
        write_acf(cfg, trace, report, dir)?;
    }
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_acf(
    cfg: &ExperimentConfig,
    trace: &pnp_core::diagnostics::TraceBuffer,
    report: &mut RunReport,
    dir: &Path,
) -> Result<()> {
    let len = trace.series(0).len();
    if len < 2 {
        return Ok(());
    }
    let max_lag = cfg.outputs.acf_max_lag.min(len - 1);
    // (pixel, integrated time, acf) of the slowest and fastest traced pixels
    type PixelAcf = (usize, f64, Vec<f64>);
    let mut best: Option<(PixelAcf, PixelAcf)> = None;
    for (k, &pixel) in trace.indices().iter().enumerate() {
        let a = acf(trace.series(k), max_lag)?;
        if a.degenerate {
            continue;
        }
        let tau = integrated_time(&a.values);
        let entry = (pixel, tau, a.values);
        best = Some(match best {
            None => (entry.clone(), entry),
            Some((slow, fast)) => {
                let slow = if tau > slow.1 { entry.clone() } else { slow };
                let fast = if tau < fast.1 { entry } else { fast };
                (slow, fast)
            }
        });
    }
    let Some((slow, fast)) = best else {
        return Ok(());
    };
    report.slow_pixel = Some(slow.0);
    report.fast_pixel = Some(fast.0);
    report.iat_slow = Some(slow.1);
    report.iat_fast = Some(fast.1);
    let rows: Vec<AcfRow> = (0..=max_lag)
        .map(|lag| AcfRow {
            lag,
            slow: slow.2[lag],
            fast: fast.2[lag],
        })
        .collect();
    write_csv(&dir.join(ACF_FILE), &rows)
}

pub fn read_report(dir: &Path) -> Result<RunReport> {
    let path = dir.join(REPORT_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

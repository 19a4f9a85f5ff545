//! Experiment configuration: a TOML file with `problem`, `prior`, `sampler`
//! and `outputs` sections, plus `section.key=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pnp_core::kernel::{load_kernel, Kernel};
use pnp_core::samplers::KernelChoice;
use pnp_core::synthetic::Synthetic;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    /// Directory written by `simulate`; when set, the observation, truth and
    /// blur kernel are read from it instead of being simulated.
    pub data: Option<PathBuf>,
    /// Ground-truth image file (PNG or PGM/PPM).
    pub image: Option<PathBuf>,
    /// Used when neither `data` nor `image` is given.
    pub synthetic: Synthetic,
    pub height: usize,
    pub width: usize,
    /// `delta`, `uniform:N`, `gaussian:N:SIGMA`, or a kernel file path.
    pub kernel: String,
    pub alpha: f64,
    /// Absent means one percent of the mean observed count.
    pub beta: Option<f64>,
    pub seed: u64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            data: None,
            image: None,
            synthetic: Synthetic::Bars { low: 0.05, high: 0.95 },
            height: 32,
            width: 32,
            kernel: "gaussian:5:1".into(),
            alpha: 20.0,
            beta: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    None,
    Gaussian,
    Gmm,
    Bridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub kind: PriorKind,
    /// Gaussian prior mean.
    pub mean: f64,
    /// Gaussian prior variance, and the shared component variance of a GMM.
    pub variance: f64,
    /// GMM component means.
    pub means: Vec<f64>,
    /// GMM weights; equal weights when absent.
    pub weights: Option<Vec<f64>>,
    /// Shell command that starts an external denoiser bridge.
    pub command: Option<String>,
    pub timeout_secs: f64,
    /// Euclidean noise level. Mutually exclusive with `gamma`.
    pub epsilon: Option<f64>,
    /// Bregman inverse scale, used with the mirror kernel.
    pub gamma: Option<f64>,
    pub rho: f64,
    pub equivariant: bool,
    /// Overrides the denoiser Lipschitz constant in step-size bounds.
    pub lipschitz: Option<f64>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            kind: PriorKind::Gmm,
            mean: 0.5,
            variance: 0.001,
            means: vec![0.05, 0.95],
            weights: None,
            command: None,
            timeout_secs: 60.0,
            epsilon: None,
            gamma: None,
            rho: 1.0,
            equivariant: false,
            lipschitz: None,
        }
    }
}

impl PriorConfig {
    pub const DEFAULT_EPSILON: f64 = 0.005;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub kernel: KernelChoice,
    /// Absolute step size. Mutually exclusive with `c`.
    pub delta: Option<f64>,
    /// Step multiplier: `δ = c·δ_L`, or `δ = c·ℓ_s·δ_L` for SKROCK.
    pub c: Option<f64>,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub s: usize,
    pub eta: f64,
    pub seed: u64,
    pub chain_index: u64,
    pub lower: f64,
    pub upper: f64,
    pub skrock_box_signs: bool,
    pub dual_floor: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            kernel: KernelChoice::RpnpSkrock,
            delta: None,
            c: None,
            n_iter: 5000,
            burn_in: 500,
            thin: 1,
            s: 10,
            eta: 0.05,
            seed: 0,
            chain_index: 0,
            lower: 0.0,
            upper: 1.0,
            skrock_box_signs: false,
            dual_floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Block sizes of the standard-deviation maps.
    pub scales: Vec<usize>,
    pub images: bool,
    /// Cumulative PSNR/SSIM curve against the ground truth.
    pub metrics: bool,
    pub curve_points: usize,
    pub acf: bool,
    pub acf_max_lag: usize,
    /// Longest stored trace per pixel.
    pub trace_capacity: usize,
    /// Cap on stored trace entries over all pixels.
    pub trace_budget: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("pnp-run"),
            scales: vec![1, 2, 4, 8],
            images: true,
            metrics: true,
            curve_points: 40,
            acf: true,
            acf_max_lag: 200,
            trace_capacity: 20_000,
            trace_budget: 1 << 22,
        }
    }
}

/// How the step size was chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Absolute(f64),
    Multiplier(f64),
}

/// Parses a blur kernel spec or loads a kernel file.
pub fn parse_kernel(spec: &str) -> Result<Kernel> {
    let parts: Vec<&str> = spec.split(':').collect();
    let k = match parts.as_slice() {
        ["delta"] => Kernel::delta(),
        ["uniform", n] => Kernel::uniform(n.parse().with_context(|| format!("kernel size in {spec:?}"))?),
        ["gaussian", n, sigma] => Kernel::gaussian(
            n.parse().with_context(|| format!("kernel size in {spec:?}"))?,
            sigma.parse().with_context(|| format!("kernel sigma in {spec:?}"))?,
        )?,
        _ => load_kernel(spec).with_context(|| format!("blur kernel {spec:?}"))?,
    };
    Ok(k)
}

fn is_builtin_kernel(spec: &str) -> bool {
    let head = spec.split(':').next().unwrap_or("");
    matches!(head, "delta" | "uniform" | "gaussian")
}

impl ExperimentConfig {
    /// Reads `path` (if any), applies `overrides` and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str::<toml::Table>(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        // A command-line step or noise setting replaces its file counterpart.
        for (key, _) in overrides {
            if let Some(other) = EXCLUSIVE
                .iter()
                .find_map(|&(a, b)| (key == a).then_some(b).or((key == b).then_some(a)))
            {
                remove_path(&mut table, other);
            }
        }
        for (key, value) in overrides {
            set_path(&mut table, key, value.clone())?;
        }
        let cfg: ExperimentConfig = toml::Value::Table(table).try_into().context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        if let Some(d) = &p.data {
            if !d.is_dir() {
                bail!("problem.data {} is not a directory", d.display());
            }
        } else {
            if let Some(img) = &p.image {
                if !img.is_file() {
                    bail!("problem.image {} does not exist", img.display());
                }
            }
            if !is_builtin_kernel(&p.kernel) && !Path::new(&p.kernel).is_file() {
                bail!(
                    "problem.kernel {:?} is neither a built-in kernel nor an existing file",
                    p.kernel
                );
            }
            if !(p.alpha > 0.0 && p.alpha.is_finite()) {
                bail!("problem.alpha = {} must be > 0", p.alpha);
            }
        }
        if let Some(b) = p.beta {
            if !(b > 0.0 && b.is_finite()) {
                bail!("problem.beta = {b} must be > 0");
            }
        }

        let q = &self.prior;
        if q.epsilon.is_some() && q.gamma.is_some() {
            bail!("prior.epsilon and prior.gamma are mutually exclusive");
        }
        if let Some(e) = q.epsilon.or(q.gamma) {
            if !(e > 0.0 && e.is_finite()) {
                bail!("prior noise scale {e} must be > 0");
            }
        }
        if q.gamma.is_some() && self.sampler.kernel != KernelChoice::PnpMla {
            bail!("prior.gamma (Bregman denoiser) requires sampler.kernel = \"pnp-mla\"");
        }
        match q.kind {
            PriorKind::Bridge if q.command.as_deref().is_none_or(|c| c.trim().is_empty()) => {
                bail!("prior.kind = \"bridge\" needs prior.command")
            }
            PriorKind::Gmm if q.means.is_empty() => bail!("prior.kind = \"gmm\" needs prior.means"),
            PriorKind::Gmm => {
                if let Some(w) = &q.weights {
                    if w.len() != q.means.len() {
                        bail!("prior.weights has {} entries for {} means", w.len(), q.means.len());
                    }
                }
            }
            _ => {}
        }
        if !(q.timeout_secs > 0.0 && q.timeout_secs.is_finite()) {
            bail!("prior.timeout_secs must be > 0");
        }

        let s = &self.sampler;
        match (s.delta, s.c) {
            (Some(_), Some(_)) => bail!("sampler.delta and sampler.c are mutually exclusive"),
            (Some(v), None) | (None, Some(v)) if !(v > 0.0 && v.is_finite()) => {
                bail!("sampler step parameter {v} must be > 0")
            }
            _ => {}
        }
        if !(s.lower < s.upper) {
            bail!("sampler box [{}, {}] is empty", s.lower, s.upper);
        }
        if s.thin == 0 {
            bail!("sampler.thin must be >= 1");
        }
        if s.burn_in > s.n_iter {
            bail!("sampler.burn_in {} exceeds sampler.n_iter {}", s.burn_in, s.n_iter);
        }
        if self.outputs.scales.contains(&0) {
            bail!("outputs.scales must be >= 1");
        }
        Ok(())
    }

    pub fn step_rule(&self) -> StepRule {
        match (self.sampler.delta, self.sampler.c) {
            (Some(d), _) => StepRule::Absolute(d),
            (None, Some(c)) => StepRule::Multiplier(c),
            (None, None) => StepRule::Multiplier(1.0),
        }
    }

    pub fn epsilon(&self) -> f64 {
        match (self.prior.epsilon, self.prior.gamma) {
            (Some(e), _) => e,
            (None, Some(g)) => 1.0 / g,
            (None, None) => PriorConfig::DEFAULT_EPSILON,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// Parses `section.key=value`. The value is read as a TOML literal, falling
/// back to a plain string.
pub fn parse_override(arg: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = arg
        .split_once('=')
        .with_context(|| format!("override {arg:?} is not of the form section.key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        bail!("override {arg:?} has an empty key");
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut cur = table;
    for part in parts {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .with_context(|| format!("override {key:?}: {part:?} is not a section"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

const EXCLUSIVE: [(&str, &str); 2] = [("sampler.delta", "sampler.c"), ("prior.epsilon", "prior.gamma")];

fn remove_path(table: &mut toml::Table, key: &str) {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut cur = table;
    for part in parts {
        match cur.get_mut(part).and_then(|v| v.as_table_mut()) {
            Some(t) => cur = t,
            None => return,
        }
    }
    cur.remove(last);
}

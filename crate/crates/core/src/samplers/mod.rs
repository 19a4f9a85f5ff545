//! Constrained plug-and-play Langevin kernels and chain orchestration.

mod constraint;
mod kernels;
mod skrock;

pub use constraint::BoxConstraint;
pub use kernels::{
    pnp_mla_with_noise, ppnp_ula_with_noise, rpnp_skrock_with_noise, rpnp_ula_with_noise, standard_normal,
    step_pnp_mla, step_ppnp_ula, step_rpnp_skrock, step_rpnp_ula, Target,
};
pub use skrock::{chebyshev_t, chebyshev_t_derivative, skrock_coeffs, stability_length, SkrockCoeffs};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poisson::PoissonModel;
use crate::tensor::ImageTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelChoice {
    RpnpUla,
    PpnpUla,
    RpnpSkrock,
    PnpMla,
}

impl KernelChoice {
    pub const ALL: [KernelChoice; 4] = [
        KernelChoice::RpnpUla,
        KernelChoice::PpnpUla,
        KernelChoice::RpnpSkrock,
        KernelChoice::PnpMla,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelChoice::RpnpUla => "rpnp-ula",
            KernelChoice::PpnpUla => "ppnp-ula",
            KernelChoice::RpnpSkrock => "rpnp-skrock",
            KernelChoice::PnpMla => "pnp-mla",
        }
    }

    pub fn is_mirror(self) -> bool {
        self == KernelChoice::PnpMla
    }
}

impl fmt::Display for KernelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelChoice::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase().replace('_', "-"))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown kernel {s:?}; expected rpnp-ula, ppnp-ula, rpnp-skrock or pnp-mla"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub delta: f64,
    pub n_iter: usize,
    pub rho: f64,
    pub s: usize,
    pub eta: f64,
    pub seed: u64,
    /// Selects an independent random stream under the same seed.
    pub chain_index: u64,
    pub burn_in: usize,
    pub thin: usize,
    /// Use the printed minus sign on the likelihood term of the SKROCK stages.
    pub skrock_box_signs: bool,
    /// Burg duals at or above `−dual_floor` are clamped to it.
    pub dual_floor: f64,
    /// Posterior Lipschitz bound; when set, `run_chain` warns if `δ` exceeds
    /// the stability bound of the chosen kernel.
    pub lipschitz: Option<f64>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            delta: 1e-3,
            n_iter: 1000,
            rho: 1.0,
            s: 10,
            eta: 0.05,
            seed: 0,
            chain_index: 0,
            burn_in: 0,
            thin: 1,
            skrock_box_signs: false,
            dual_floor: 1e-8,
            lipschitz: None,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self, kernel: KernelChoice) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid(format!("step size delta = {} must be > 0", self.delta)));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::invalid(format!("prior weight rho = {} must be >= 0", self.rho)));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thin must be >= 1"));
        }
        if self.burn_in > self.n_iter {
            return Err(Error::invalid(format!(
                "burn-in {} exceeds iteration count {}",
                self.burn_in, self.n_iter
            )));
        }
        if !(self.dual_floor > 0.0) {
            return Err(Error::invalid("dual_floor must be > 0"));
        }
        if kernel == KernelChoice::RpnpSkrock {
            skrock_coeffs(self.s, self.eta)?;
        }
        Ok(())
    }

    /// Number of samples `run_chain` will hand to the sink.
    pub fn retained(&self) -> usize {
        (self.n_iter - self.burn_in.min(self.n_iter)) / self.thin.max(1)
    }
}

/// The stream of a chain: `seed` picks the key, `chain_index` the stream.
pub fn chain_rng(seed: u64, chain_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain_index);
    rng
}

#[derive(Debug, Clone)]
pub struct ChainState {
    pub x: ImageTensor,
    pub k: usize,
    pub rng: ChaCha8Rng,
}

impl ChainState {
    pub fn new(x: ImageTensor, seed: u64, chain_index: u64) -> Self {
        Self {
            x,
            k: 0,
            rng: chain_rng(seed, chain_index),
        }
    }
}

/// Receives the retained (post burn-in, thinned) samples of a chain.
pub trait SampleSink {
    fn record(&mut self, iteration: usize, nfe: u64, x: &ImageTensor) -> Result<()>;
}

impl SampleSink for () {
    fn record(&mut self, _: usize, _: u64, _: &ImageTensor) -> Result<()> {
        Ok(())
    }
}

impl<A: SampleSink, B: SampleSink> SampleSink for (A, B) {
    fn record(&mut self, iteration: usize, nfe: u64, x: &ImageTensor) -> Result<()> {
        self.0.record(iteration, nfe, x)?;
        self.1.record(iteration, nfe, x)
    }
}

impl<S: SampleSink + ?Sized> SampleSink for &mut S {
    fn record(&mut self, iteration: usize, nfe: u64, x: &ImageTensor) -> Result<()> {
        (**self).record(iteration, nfe, x)
    }
}

/// Every retained sample, in order.
impl SampleSink for Vec<ImageTensor> {
    fn record(&mut self, _: usize, _: u64, x: &ImageTensor) -> Result<()> {
        self.push(x.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    pub kernel: KernelChoice,
    pub delta: f64,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub chain_index: u64,
    pub samples: usize,
    pub nfe: u64,
    #[serde(skip)]
    pub final_state: ImageTensor,
    pub warnings: Vec<String>,
    pub timing: Timing,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Timing {
    pub seconds: f64,
    pub iterations_per_second: f64,
}

impl ChainReport {
    /// Equality of everything except wall-clock timing.
    pub fn same_outcome(&self, other: &ChainReport) -> bool {
        self.kernel == other.kernel
            && self.delta == other.delta
            && self.n_iter == other.n_iter
            && self.samples == other.samples
            && self.nfe == other.nfe
            && self.final_state == other.final_state
            && self.warnings == other.warnings
    }
}

/// Largest stable step for the kernel given the posterior Lipschitz bound.
pub fn step_bound(kernel: KernelChoice, lipschitz: f64, s: usize, eta: f64) -> f64 {
    match kernel {
        KernelChoice::RpnpSkrock => stability_length(s, eta) / lipschitz,
        _ => 1.0 / lipschitz,
    }
}

/// `δ_L = 1/(L_lik + L_ε/ε)`, where `prior_lipschitz` is already `L_ε/ε`.
pub fn delta_l(likelihood_lipschitz: f64, prior_lipschitz: f64) -> f64 {
    1.0 / (likelihood_lipschitz + prior_lipschitz)
}

/// `δ = c·δ_L` for single-stage kernels and `δ = c·ℓ_s·δ_L` for SKROCK.
pub fn step_from_multiplier(kernel: KernelChoice, c: f64, delta_l: f64, s: usize, eta: f64) -> f64 {
    match kernel {
        KernelChoice::RpnpSkrock => c * stability_length(s, eta) * delta_l,
        _ => c * delta_l,
    }
}

/// `Aᵀy/(α‖A‖²)`, projected into the box for Euclidean kernels or floored at
/// `0.01` for the mirror kernel.
pub fn default_x0(model: &PoissonModel, kernel: KernelChoice, constraint: &BoxConstraint) -> Result<ImageTensor> {
    let op = model.operator();
    let norm = op.norm_sq();
    let back = op.adjoint(model.observation())?;
    let x = back.scale(1.0 / (model.alpha() * norm));
    Ok(if kernel.is_mirror() {
        x.map(|v| v.max(0.01))
    } else {
        constraint.project(&x)
    })
}

/// Runs `cfg.n_iter` iterations of `kernel` from `x0`, handing every retained
/// sample to `sink`. Kernel failures come back as [`Error::Diverged`] with
/// the iteration index; samples recorded so far stay in the sink.
pub fn run_chain(
    kernel: KernelChoice,
    target: &mut Target<'_>,
    x0: ImageTensor,
    cfg: &ChainConfig,
    sink: &mut dyn SampleSink,
) -> Result<ChainReport> {
    cfg.validate(kernel)?;
    let mut warnings = Vec::new();
    if kernel.is_mirror() {
        if let Some(i) = x0.as_slice().iter().position(|&v| !(v > 0.0)) {
            return Err(Error::Domain {
                context: "mirror chain start must be strictly positive",
                index: i,
                value: x0[i],
            });
        }
    } else if !target.constraint.contains(&x0) {
        return Err(Error::invalid("initial state lies outside the box constraint"));
    }
    if let Some(l) = cfg.lipschitz {
        let bound = step_bound(kernel, l, cfg.s, cfg.eta);
        if cfg.delta > bound {
            let msg = format!(
                "step size {:.4e} exceeds the {} stability bound {:.4e}",
                cfg.delta, kernel, bound
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    let coeffs = if kernel == KernelChoice::RpnpSkrock {
        Some(skrock_coeffs(cfg.s, cfg.eta)?)
    } else {
        None
    };

    let nfe_start = target.prior.evaluations();
    let mut state = ChainState::new(x0, cfg.seed, cfg.chain_index);
    let mut samples = 0;
    let start = Instant::now();
    for it in 1..=cfg.n_iter {
        let step = match kernel {
            KernelChoice::RpnpUla => step_rpnp_ula(&mut state, target, cfg),
            KernelChoice::PpnpUla => step_ppnp_ula(&mut state, target, cfg),
            KernelChoice::RpnpSkrock => {
                step_rpnp_skrock(&mut state, target, cfg, coeffs.as_ref().expect("coefficients"))
            }
            KernelChoice::PnpMla => step_pnp_mla(&mut state, target, cfg),
        };
        step.map_err(|e| match e {
            Error::NonFinite(reason) | Error::InvalidParameter(reason) => Error::Diverged { iteration: it, reason },
            Error::Domain { context, index, value } => Error::Diverged {
                iteration: it,
                reason: format!("{context}: entry {index} = {value}"),
            },
            other => other,
        })?;
        if it > cfg.burn_in && (it - cfg.burn_in).is_multiple_of(cfg.thin) {
            let nfe = target.prior.evaluations() - nfe_start;
            sink.record(it, nfe, &state.x)?;
            samples += 1;
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    Ok(ChainReport {
        kernel,
        delta: cfg.delta,
        n_iter: cfg.n_iter,
        burn_in: cfg.burn_in,
        thin: cfg.thin,
        seed: cfg.seed,
        chain_index: cfg.chain_index,
        samples,
        nfe: target.prior.evaluations() - nfe_start,
        final_state: state.x,
        warnings,
        timing: Timing {
            seconds,
            iterations_per_second: if seconds > 0.0 {
                cfg.n_iter as f64 / seconds
            } else {
                f64::INFINITY
            },
        },
    })
}

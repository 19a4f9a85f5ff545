//! Builds the inverse problem and the prior score from a configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use pnp_core::bridge::BridgeClient;
use pnp_core::io::{load_image, load_raw, save_image, save_raw};
use pnp_core::kernel::{load_kernel, save_kernel, Kernel};
use pnp_core::mirror::MirrorMap;
use pnp_core::operator::BlurOperator;
use pnp_core::poisson::{default_beta, simulate, PoissonModel, MIRROR_BETA};
use pnp_core::priors::{
    BregmanScore, DenoiserHandle, DenoiserKind, EquivarianceGroup, GaussianPrior, GmmPrior, MixtureComponent,
    NoiseScale, PriorScore, TweedieScore, ZeroScore,
};
use pnp_core::samplers::KernelChoice;
use pnp_core::ImageTensor;

use crate::config::{parse_kernel, ExperimentConfig, PriorKind};

pub const TRUTH: &str = "truth";
pub const OBSERVATION: &str = "observation";
pub const KERNEL_FILE: &str = "kernel.txt";

pub struct Problem {
    pub truth: Option<ImageTensor>,
    pub y: ImageTensor,
    pub kernel: Kernel,
    pub alpha: f64,
    pub model: PoissonModel,
}

impl Problem {
    /// Simulates the observation, or loads it from `problem.data`.
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let p = &cfg.problem;
        let (truth, y, kernel, alpha) = match &p.data {
            Some(dir) => load_data_dir(dir)?,
            None => {
                let truth = match &p.image {
                    Some(path) => load_image(path).with_context(|| format!("loading {}", path.display()))?,
                    None => p.synthetic.render(p.height, p.width)?,
                };
                let kernel = parse_kernel(&p.kernel)?;
                let op = BlurOperator::new(kernel.clone(), truth.shape())?;
                let y = simulate(&truth, &op, p.alpha, p.seed)?;
                (Some(truth), y, kernel, p.alpha)
            }
        };
        let op = Arc::new(BlurOperator::new(kernel.clone(), y.shape())?);
        let beta = match (p.beta, cfg.sampler.kernel) {
            (Some(b), _) => b,
            (None, KernelChoice::PnpMla) => MIRROR_BETA,
            (None, _) => default_beta(&y),
        };
        let model = PoissonModel::new(op, alpha, beta, y.clone())?;
        Ok(Self {
            truth,
            y,
            kernel,
            alpha,
            model,
        })
    }

    pub fn beta(&self) -> f64 {
        self.model.beta()
    }

    /// `y/α`, the naive intensity estimate.
    pub fn normalized_observation(&self) -> ImageTensor {
        self.y.scale(1.0 / self.alpha)
    }

    /// Writes truth, observation and kernel in the layout `load_data_dir` reads.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut meta = BTreeMap::new();
        meta.insert("alpha".to_string(), format!("{:e}", self.alpha));
        save_raw(&dir.join(OBSERVATION), &self.y, &meta)?;
        save_image(&dir.join(format!("{OBSERVATION}.png")), &self.normalized_observation())?;
        if let Some(t) = &self.truth {
            save_raw(&dir.join(TRUTH), t, &BTreeMap::new())?;
            save_image(&dir.join(format!("{TRUTH}.png")), t)?;
        }
        save_kernel(&self.kernel, dir.join(KERNEL_FILE))?;
        Ok(())
    }
}

fn load_data_dir(dir: &Path) -> Result<(Option<ImageTensor>, ImageTensor, Kernel, f64)> {
    let (y, header) = load_raw(&dir.join(OBSERVATION)).with_context(|| format!("observation in {}", dir.display()))?;
    let alpha: f64 = header
        .meta
        .get("alpha")
        .with_context(|| format!("{}/{OBSERVATION}.toml has no alpha entry", dir.display()))?
        .parse()
        .context("alpha entry is not a number")?;
    let truth = if dir.join(format!("{TRUTH}.f64")).is_file() {
        Some(load_raw(&dir.join(TRUTH))?.0)
    } else {
        None
    };
    let kernel = load_kernel(dir.join(KERNEL_FILE))?;
    Ok((truth, y, kernel, alpha))
}

/// The prior score together with the Lipschitz constant `L_ε/ε` used in `δ_L`.
pub struct PriorSetup {
    pub score: Box<dyn PriorScore>,
    pub lipschitz: f64,
    pub description: String,
}

pub fn build_prior(cfg: &ExperimentConfig) -> Result<PriorSetup> {
    let q = &cfg.prior;
    let eps = cfg.epsilon();
    let scale = match q.gamma {
        Some(g) => NoiseScale::Gamma(g),
        None => NoiseScale::Epsilon(eps),
    };
    let (handle, description) = match q.kind {
        PriorKind::None => {
            return Ok(PriorSetup {
                score: Box::new(ZeroScore),
                lipschitz: 0.0,
                description: "flat".into(),
            })
        }
        PriorKind::Gaussian => {
            let prior = GaussianPrior::new(q.mean, q.variance)?;
            (
                DenoiserHandle::new(DenoiserKind::GaussianAnalytic(prior), scale)?,
                format!("gaussian N({}, {})", q.mean, q.variance),
            )
        }
        PriorKind::Gmm => {
            let n = q.means.len();
            let weights = q.weights.clone().unwrap_or_else(|| vec![1.0 / n as f64; n]);
            let components = q
                .means
                .iter()
                .zip(&weights)
                .map(|(&mean, &weight)| MixtureComponent {
                    weight,
                    mean,
                    variance: q.variance,
                })
                .collect();
            let prior = GmmPrior::new(components)?;
            (
                DenoiserHandle::new(DenoiserKind::GmmAnalytic(prior), scale)?,
                format!("gmm means {:?} variance {}", q.means, q.variance),
            )
        }
        PriorKind::Bridge => {
            let command = q.command.as_deref().expect("validated");
            let client = BridgeClient::launch(command, Duration::from_secs_f64(q.timeout_secs))
                .map_err(pnp_core::Error::from)?;
            (DenoiserHandle::bridge(client, scale)?, format!("bridge `{command}`"))
        }
    };
    let handle = match q.lipschitz {
        Some(l) => handle.with_lipschitz(l),
        None => handle,
    };
    let lipschitz = handle.lipschitz() / handle.epsilon();
    let group = q.equivariant.then(|| EquivarianceGroup::dihedral(cfg.sampler.seed));
    let score: Box<dyn PriorScore> = if scale.is_bregman() {
        if cfg.sampler.kernel != KernelChoice::PnpMla {
            bail!("Bregman denoisers need the pnp-mla kernel");
        }
        Box::new(BregmanScore::new(handle, MirrorMap::Burg, group)?)
    } else {
        Box::new(TweedieScore::new(handle, group)?)
    };
    Ok(PriorSetup {
        score,
        lipschitz,
        description,
    })
}

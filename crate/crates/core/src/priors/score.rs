//! Prior scores from denoisers.
//!
//! Euclidean: `∇log p_ε(x) ≈ (D_ε(x) − x)/ε`.
//! Bregman:   `∇log p_γ(z) ≈ −γ ∇²φ(z)(z − B_γ(z))`.
//!
//! The regularization weight `ρ` is applied by the samplers, not here.

use crate::error::{Error, Result};
use crate::mirror::MirrorMap;
use crate::priors::{DenoiserHandle, EquivarianceGroup, NoiseScale};
use crate::tensor::ImageTensor;

/// Anything a sampler can query for `∇log p(x)` of the prior.
pub trait PriorScore {
    fn score(&mut self, x: &ImageTensor) -> Result<ImageTensor>;

    /// Denoiser evaluations performed so far.
    fn evaluations(&self) -> u64 {
        0
    }

    /// Lipschitz constant of the score, when known.
    fn lipschitz(&self) -> Option<f64> {
        None
    }
}

/// `(denoise(d, x) − x)/ε`.
pub fn tweedie_score(d: &mut DenoiserHandle, x: &ImageTensor) -> Result<ImageTensor> {
    let eps = match d.scale() {
        NoiseScale::Epsilon(e) => e,
        NoiseScale::Gamma(_) => {
            return Err(Error::invalid(
                "tweedie_score called with a Bregman denoiser; use bregman_score",
            ))
        }
    };
    let dx = d.denoise(x)?;
    Ok(dx.zip_map(x, |a, b| (a - b) / eps))
}

/// `−γ ∇²φ(z)(z − b)` for a precomputed denoiser output `b = B_γ(z)`.
pub fn bregman_score_from_output(
    mirror: MirrorMap,
    z: &ImageTensor,
    denoised: &ImageTensor,
    gamma: f64,
) -> Result<ImageTensor> {
    denoised.ensure_shape(z.shape(), "bregman score")?;
    let residual = z.sub(denoised);
    Ok(mirror.hessian_apply(z, &residual)?.scale(-gamma))
}

pub fn bregman_score(d: &mut DenoiserHandle, mirror: MirrorMap, z: &ImageTensor) -> Result<ImageTensor> {
    let gamma = match d.scale() {
        NoiseScale::Gamma(g) => g,
        NoiseScale::Epsilon(_) => {
            return Err(Error::invalid(
                "bregman_score needs a Bregman (gamma) denoiser; use tweedie_score",
            ))
        }
    };
    if let Some(index) = z.as_slice().iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Domain {
            context: "bregman score input must be strictly positive",
            index,
            value: z[index],
        });
    }
    let b = d.denoise(z)?;
    bregman_score_from_output(mirror, z, &b, gamma)
}

/// Euclidean Tweedie score, optionally randomized over an equivariance group.
#[derive(Debug)]
pub struct TweedieScore {
    denoiser: DenoiserHandle,
    group: Option<EquivarianceGroup>,
    evaluations: u64,
}

impl TweedieScore {
    pub fn new(denoiser: DenoiserHandle, group: Option<EquivarianceGroup>) -> Result<Self> {
        if denoiser.scale().is_bregman() {
            return Err(Error::invalid("TweedieScore needs a Euclidean (epsilon) denoiser"));
        }
        Ok(Self {
            denoiser,
            group,
            evaluations: 0,
        })
    }

    pub fn denoiser(&self) -> &DenoiserHandle {
        &self.denoiser
    }
}

impl PriorScore for TweedieScore {
    fn score(&mut self, x: &ImageTensor) -> Result<ImageTensor> {
        self.evaluations += 1;
        match &mut self.group {
            None => tweedie_score(&mut self.denoiser, x),
            Some(g) => {
                let eps = self.denoiser.epsilon();
                let dx = g.equivariant_denoise(&mut self.denoiser, x)?;
                Ok(dx.zip_map(x, |a, b| (a - b) / eps))
            }
        }
    }

    fn evaluations(&self) -> u64 {
        self.evaluations
    }

    /// `L_ε/ε`, the prior's share of the step-size bound.
    fn lipschitz(&self) -> Option<f64> {
        Some(self.denoiser.lipschitz() / self.denoiser.epsilon())
    }
}

/// Bregman score for mirror samplers.
#[derive(Debug)]
pub struct BregmanScore {
    denoiser: DenoiserHandle,
    mirror: MirrorMap,
    group: Option<EquivarianceGroup>,
    evaluations: u64,
}

impl BregmanScore {
    pub fn new(denoiser: DenoiserHandle, mirror: MirrorMap, group: Option<EquivarianceGroup>) -> Result<Self> {
        if !denoiser.scale().is_bregman() {
            return Err(Error::invalid("BregmanScore needs a Bregman (gamma) denoiser"));
        }
        Ok(Self {
            denoiser,
            mirror,
            group,
            evaluations: 0,
        })
    }
}

impl PriorScore for BregmanScore {
    fn score(&mut self, z: &ImageTensor) -> Result<ImageTensor> {
        self.evaluations += 1;
        match &mut self.group {
            None => bregman_score(&mut self.denoiser, self.mirror, z),
            Some(g) => {
                let gamma = 1.0 / self.denoiser.epsilon();
                let b = g.equivariant_denoise(&mut self.denoiser, z)?;
                bregman_score_from_output(self.mirror, z, &b, gamma)
            }
        }
    }

    fn evaluations(&self) -> u64 {
        self.evaluations
    }
}

/// A flat prior.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroScore;

impl PriorScore for ZeroScore {
    fn score(&mut self, x: &ImageTensor) -> Result<ImageTensor> {
        Ok(ImageTensor::zeros(x.shape()))
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(0.0)
    }
}

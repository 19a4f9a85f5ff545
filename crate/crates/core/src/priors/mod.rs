//! Denoisers and the prior scores derived from them.

mod analytic;
mod equivariance;
mod score;

pub use analytic::{GaussianPrior, GmmPrior, MixtureComponent};
pub use equivariance::{Dihedral, EquivarianceGroup};
pub use score::{
    bregman_score, bregman_score_from_output, tweedie_score, BregmanScore, PriorScore, TweedieScore, ZeroScore,
};

use serde::{Deserialize, Serialize};

use crate::bridge::BridgeClient;
use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

/// Noise parameterization of a denoiser.
///
/// Euclidean (MMSE under additive Gaussian noise of variance `ε`) or
/// Bregman (inverse scale `γ`, paired with a mirror map).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseScale {
    Epsilon(f64),
    Gamma(f64),
}

impl NoiseScale {
    /// The equivalent Gaussian variance; `1/γ` for Bregman denoisers.
    pub fn epsilon(&self) -> f64 {
        match *self {
            NoiseScale::Epsilon(e) => e,
            NoiseScale::Gamma(g) => 1.0 / g,
        }
    }

    pub fn is_bregman(&self) -> bool {
        matches!(self, NoiseScale::Gamma(_))
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            NoiseScale::Epsilon(v) | NoiseScale::Gamma(v) => v,
        };
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!("noise scale {self:?} must be > 0")))
        }
    }
}

pub enum DenoiserKind {
    GaussianAnalytic(GaussianPrior),
    GmmAnalytic(GmmPrior),
    ExternalBridge(BridgeClient),
}

impl std::fmt::Debug for DenoiserKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DenoiserKind::GaussianAnalytic(p) => f.debug_tuple("GaussianAnalytic").field(p).finish(),
            DenoiserKind::GmmAnalytic(p) => f.debug_tuple("GmmAnalytic").field(p).finish(),
            DenoiserKind::ExternalBridge(b) => f.debug_tuple("ExternalBridge").field(b).finish(),
        }
    }
}

#[derive(Debug)]
pub struct DenoiserHandle {
    kind: DenoiserKind,
    scale: NoiseScale,
    lipschitz: Option<f64>,
}

impl DenoiserHandle {
    pub fn new(kind: DenoiserKind, scale: NoiseScale) -> Result<Self> {
        scale.validate()?;
        Ok(Self {
            kind,
            scale,
            lipschitz: None,
        })
    }

    /// Panics on a non-positive scale; use [`DenoiserHandle::new`] for
    /// untrusted input.
    pub fn gaussian(prior: GaussianPrior, scale: NoiseScale) -> Self {
        Self::new(DenoiserKind::GaussianAnalytic(prior), scale).expect("valid noise scale")
    }

    pub fn gmm(prior: GmmPrior, scale: NoiseScale) -> Self {
        Self::new(DenoiserKind::GmmAnalytic(prior), scale).expect("valid noise scale")
    }

    pub fn bridge(client: BridgeClient, scale: NoiseScale) -> Result<Self> {
        Self::new(DenoiserKind::ExternalBridge(client), scale)
    }

    /// Overrides the Lipschitz constant used in step-size bounds.
    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn kind(&self) -> &DenoiserKind {
        &self.kind
    }

    pub fn scale(&self) -> NoiseScale {
        self.scale
    }

    pub fn epsilon(&self) -> f64 {
        self.scale.epsilon()
    }

    /// `D_ε(x)` (or `B_γ(x)` for Bregman handles).
    pub fn denoise(&mut self, x: &ImageTensor) -> Result<ImageTensor> {
        let eps = self.scale.epsilon();
        match &mut self.kind {
            DenoiserKind::GaussianAnalytic(p) => Ok(p.denoise(x, eps)),
            DenoiserKind::GmmAnalytic(p) => Ok(p.denoise(x, eps)),
            DenoiserKind::ExternalBridge(b) => Ok(b.denoise(x, eps)?),
        }
    }

    /// Lipschitz constant `L_ε` of the denoiser. Analytic kinds compute it;
    /// external denoisers are assumed non-expansive (`1`) unless overridden.
    pub fn lipschitz(&self) -> f64 {
        if let Some(l) = self.lipschitz {
            return l;
        }
        let eps = self.scale.epsilon();
        match &self.kind {
            DenoiserKind::GaussianAnalytic(p) => p.lipschitz(eps),
            DenoiserKind::GmmAnalytic(p) => p.lipschitz(eps),
            DenoiserKind::ExternalBridge(_) => 1.0,
        }
    }

    /// `log p_ε(x)` in closed form, for analytic kinds only.
    pub fn log_smoothed_prior(&self, x: &ImageTensor) -> Option<f64> {
        let eps = self.scale.epsilon();
        match &self.kind {
            DenoiserKind::GaussianAnalytic(p) => Some(p.log_smoothed(x, eps)),
            DenoiserKind::GmmAnalytic(p) => Some(p.log_smoothed(x, eps)),
            DenoiserKind::ExternalBridge(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_scale() {
        let p = GaussianPrior::new(0.0, 1.0).unwrap();
        assert!(DenoiserHandle::new(DenoiserKind::GaussianAnalytic(p), NoiseScale::Epsilon(0.0)).is_err());
        assert!(DenoiserHandle::new(DenoiserKind::GaussianAnalytic(p), NoiseScale::Gamma(-1.0)).is_err());
    }

    #[test]
    fn gamma_scale_uses_reciprocal_epsilon() {
        let p = GaussianPrior::new(0.0, 1.0).unwrap();
        let mut a = DenoiserHandle::gaussian(p, NoiseScale::Gamma(4.0));
        let mut b = DenoiserHandle::gaussian(p, NoiseScale::Epsilon(0.25));
        let x = ImageTensor::vector(&[1.0, -2.0]);
        assert_eq!(a.denoise(&x).unwrap(), b.denoise(&x).unwrap());
    }
}

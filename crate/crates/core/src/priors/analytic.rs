//! Closed-form MMSE denoisers for Gaussian and Gaussian-mixture priors.
//!
//! Both priors act independently on every entry of the tensor. Under
//! Gaussian noise of variance `ε`, the smoothed prior `p_ε` is available in
//! closed form by inflating every component variance by `ε`, which makes
//! these denoisers exact Tweedie references.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `N(mean, variance)` per entry. `variance = 0` is a point mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianPrior {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !(variance >= 0.0 && variance.is_finite()) {
            return Err(Error::invalid(format!("gaussian prior N({mean}, {variance})")));
        }
        Ok(Self { mean, variance })
    }

    /// `(σ²x + εμ)/(σ² + ε)`
    pub fn denoise(&self, x: &ImageTensor, eps: f64) -> ImageTensor {
        let (m, v) = (self.mean, self.variance);
        let denom = v + eps;
        x.map(|xi| (v * xi + eps * m) / denom)
    }

    /// `log p_ε(x)` with `p_ε = N(μ, σ² + ε)` per entry.
    pub fn log_smoothed(&self, x: &ImageTensor, eps: f64) -> f64 {
        let s = self.variance + eps;
        x.as_slice()
            .iter()
            .map(|&xi| -0.5 * ((xi - self.mean).powi(2) / s + LN_2PI + s.ln()))
            .sum()
    }

    /// Lipschitz constant of the denoiser, `σ²/(σ² + ε)`.
    pub fn lipschitz(&self, eps: f64) -> f64 {
        self.variance / (self.variance + eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

/// `Σ wₖ N(mₖ, vₖ)` per entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmPrior {
    components: Vec<MixtureComponent>,
}

impl GmmPrior {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        for c in &components {
            if !(c.weight >= 0.0) || !c.mean.is_finite() || !(c.variance >= 0.0 && c.variance.is_finite()) {
                return Err(Error::invalid(format!("bad mixture component {c:?}")));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Self { components })
    }

    /// Equal-weight mixture with a shared variance.
    pub fn uniform(means: &[f64], variance: f64) -> Result<Self> {
        let w = 1.0 / means.len().max(1) as f64;
        Self::new(
            means
                .iter()
                .map(|&mean| MixtureComponent {
                    weight: w,
                    mean,
                    variance,
                })
                .collect(),
        )
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    /// Per-component `(log wₖ − ½ log 2π(vₖ + ε), 1/(vₖ + ε))`.
    fn constants(&self, eps: f64) -> Vec<(f64, f64)> {
        self.components
            .iter()
            .map(|c| {
                let s = c.variance + eps;
                let offset = if c.weight == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    c.weight.ln() - 0.5 * (LN_2PI + s.ln())
                };
                (offset, 1.0 / s)
            })
            .collect()
    }

    /// Log of `wₖ N(x; mₖ, vₖ + ε)` for each component.
    fn log_joint(&self, xi: f64, consts: &[(f64, f64)], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.components
                .iter()
                .zip(consts)
                .map(|(c, &(offset, inv))| offset - 0.5 * (xi - c.mean).powi(2) * inv),
        );
    }

    fn denoise_scalar(&self, xi: f64, eps: f64, consts: &[(f64, f64)], buf: &mut Vec<f64>) -> f64 {
        self.log_joint(xi, consts, buf);
        let peak = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut norm = 0.0;
        let mut acc = 0.0;
        for ((c, &lj), &(_, inv)) in self.components.iter().zip(buf.iter()).zip(consts) {
            let r = (lj - peak).exp();
            norm += r;
            acc += r * (c.variance * xi + eps * c.mean) * inv;
        }
        acc / norm
    }

    /// Responsibility-weighted average of the per-component affine denoisers.
    pub fn denoise(&self, x: &ImageTensor, eps: f64) -> ImageTensor {
        let consts = self.constants(eps);
        let mut buf = Vec::with_capacity(self.components.len());
        x.map(|xi| self.denoise_scalar(xi, eps, &consts, &mut buf))
    }

    pub fn log_smoothed(&self, x: &ImageTensor, eps: f64) -> f64 {
        let consts = self.constants(eps);
        let mut buf = Vec::with_capacity(self.components.len());
        x.as_slice()
            .iter()
            .map(|&xi| {
                self.log_joint(xi, &consts, &mut buf);
                let peak = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                peak + buf.iter().map(|l| (l - peak).exp()).sum::<f64>().ln()
            })
            .sum()
    }

    /// Numerical estimate of `sup |D'(x)|` where `D'(x) = Var[x₀ | x]/ε`,
    /// scanned on a fine grid around the component means.
    pub fn lipschitz(&self, eps: f64) -> f64 {
        let lo = self
            .components
            .iter()
            .map(|c| c.mean - 8.0 * (c.variance + eps).sqrt())
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .components
            .iter()
            .map(|c| c.mean + 8.0 * (c.variance + eps).sqrt())
            .fold(f64::NEG_INFINITY, f64::max);
        let n = 4096;
        let h = (hi - lo) / n as f64;
        let consts = self.constants(eps);
        let mut buf = Vec::new();
        let mut best = 0.0f64;
        for i in 0..=n {
            let xi = lo + i as f64 * h;
            self.log_joint(xi, &consts, &mut buf);
            let peak = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (mut norm, mut m1, mut m2) = (0.0, 0.0, 0.0);
            for (c, &lj) in self.components.iter().zip(buf.iter()) {
                let r = (lj - peak).exp();
                let s = c.variance + eps;
                let post_mean = (c.variance * xi + eps * c.mean) / s;
                let post_var = c.variance * eps / s;
                norm += r;
                m1 += r * post_mean;
                m2 += r * (post_var + post_mean * post_mean);
            }
            let var = m2 / norm - (m1 / norm).powi(2);
            best = best.max(var / eps);
        }
        best
    }
}

//! Poisson observation model `y ~ Poisson(αAx)` with the β-regularized
//! log-likelihood used by the Euclidean samplers.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::operator::ForwardOperator;
use crate::potential::DataTerm;
use crate::tensor::ImageTensor;

/// Smallest β returned by [`default_beta`].
pub const BETA_FLOOR: f64 = 1e-12;

#[derive(Clone)]
pub struct PoissonModel {
    operator: Arc<dyn ForwardOperator>,
    alpha: f64,
    beta: f64,
    y: ImageTensor,
}

impl std::fmt::Debug for PoissonModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PoissonModel")
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .field("shape", &self.y.shape())
            .finish_non_exhaustive()
    }
}

impl PoissonModel {
    pub fn new(operator: Arc<dyn ForwardOperator>, alpha: f64, beta: f64, y: ImageTensor) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("photon level alpha = {alpha} must be > 0")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::invalid(format!("beta = {beta} must be >= 0")));
        }
        y.ensure_shape(operator.output_shape(), "poisson observation")?;
        if let Some(i) = y.as_slice().iter().position(|&v| v < 0.0 || v.fract() != 0.0) {
            return Err(Error::Domain {
                context: "poisson counts must be non-negative integers",
                index: i,
                value: y[i],
            });
        }
        Ok(Self {
            operator,
            alpha,
            beta,
            y,
        })
    }

    /// Same operator and data, different β.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(self.operator.clone(), self.alpha, beta, self.y.clone())
    }

    pub fn operator(&self) -> &Arc<dyn ForwardOperator> {
        &self.operator
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn observation(&self) -> &ImageTensor {
        &self.y
    }

    /// `Σ yᵢ log(α(Ax)ᵢ + β) − α(Ax)ᵢ − β`, or `−∞` outside the positive
    /// orthant or where the logarithm's argument vanishes under a positive count.
    pub fn log_lik(&self, x: &ImageTensor) -> Result<f64> {
        x.ensure_shape(self.operator.input_shape(), "poisson log-likelihood")?;
        if x.as_slice().iter().any(|&v| v < 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        let ax = self.operator.apply(x)?;
        let mut total = 0.0;
        for (&yi, &axi) in self.y.as_slice().iter().zip(ax.as_slice()) {
            let rate = self.alpha * axi + self.beta;
            if yi > 0.0 {
                if rate <= 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                total += yi * rate.ln();
            }
            total -= rate;
        }
        Ok(total)
    }

    /// `Aᵀ[α y ⊘ (αAx + β) − α]`.
    pub fn grad_log_lik(&self, x: &ImageTensor) -> Result<ImageTensor> {
        x.ensure_shape(self.operator.input_shape(), "poisson gradient")?;
        let mut r = self.operator.apply(x)?;
        for (i, (ri, &yi)) in r.as_mut_slice().iter_mut().zip(self.y.as_slice()).enumerate() {
            let rate = self.alpha * *ri + self.beta;
            *ri = if yi == 0.0 {
                -self.alpha
            } else if rate > 0.0 {
                self.alpha * yi / rate - self.alpha
            } else {
                return Err(Error::Domain {
                    context: "poisson gradient rate alpha*Ax+beta",
                    index: i,
                    value: rate,
                });
            };
        }
        self.operator.adjoint(&r)
    }

    /// `α² max(y) / β² · ‖AAᵀ‖`, the Lipschitz constant of the regularized
    /// log-likelihood gradient on the positive orthant.
    pub fn lipschitz_bound(&self) -> Result<f64> {
        if self.beta <= 0.0 {
            return Err(Error::invalid("Lipschitz bound undefined for beta = 0"));
        }
        let max_y = self.y.max().max(0.0);
        Ok(self.alpha * self.alpha * max_y / (self.beta * self.beta) * self.operator.norm_sq())
    }
}

impl DataTerm for PoissonModel {
    fn grad_log(&self, x: &ImageTensor) -> Result<ImageTensor> {
        self.grad_log_lik(x)
    }

    fn log_density(&self, x: &ImageTensor) -> Result<f64> {
        self.log_lik(x)
    }
}

/// Background used with the mirror kernel, which needs the likelihood to
/// stay steep near zero for numerical stability.
pub const MIRROR_BETA: f64 = 1e-8;

/// One percent of the mean observed intensity, floored at [`BETA_FLOOR`].
pub fn default_beta(y: &ImageTensor) -> f64 {
    (0.01 * y.mean()).max(BETA_FLOOR)
}

/// Draws `y ~ Poisson(α A x)` independently per entry.
///
/// Means within rounding noise of zero (as produced by FFT convolution) are
/// treated as zero; clearly negative means are an error.
pub fn simulate(x_true: &ImageTensor, operator: &dyn ForwardOperator, alpha: f64, seed: u64) -> Result<ImageTensor> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("photon level alpha = {alpha} must be > 0")));
    }
    let ax = operator.apply(x_true)?;
    let scale = ax.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale.max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(ax.len());
    for (i, &v) in ax.as_slice().iter().enumerate() {
        if v < -tol {
            return Err(Error::Domain {
                context: "negative Poisson mean alpha*Ax",
                index: i,
                value: alpha * v,
            });
        }
        let mean = alpha * v.max(0.0);
        let draw = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|e| Error::invalid(format!("poisson mean {mean}: {e}")))?
                .sample(&mut rng)
        } else {
            0.0
        };
        out.push(draw);
    }
    ImageTensor::new(out, ax.shape())
}

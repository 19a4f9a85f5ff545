//! The data-fidelity side of a posterior, as seen by the samplers.
//!
//! Samplers only need `∇ log p(y|x)`. [`PoissonModel`](crate::poisson::PoissonModel)
//! is the production implementation; the analytic targets here exist so that
//! every kernel can be checked against a law with known moments.

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

pub trait DataTerm: Send + Sync {
    fn grad_log(&self, x: &ImageTensor) -> Result<ImageTensor>;

    /// Log-density up to a constant; `−∞` outside the support.
    fn log_density(&self, x: &ImageTensor) -> Result<f64>;
}

/// Independent `N(mean, variance)` in every coordinate.
#[derive(Debug, Clone, Copy)]
pub struct GaussianTarget {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianTarget {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::invalid(format!("variance {variance} must be > 0")));
        }
        Ok(Self { mean, variance })
    }
}

impl DataTerm for GaussianTarget {
    fn grad_log(&self, x: &ImageTensor) -> Result<ImageTensor> {
        Ok(x.map(|v| (self.mean - v) / self.variance))
    }

    fn log_density(&self, x: &ImageTensor) -> Result<f64> {
        Ok(x.as_slice()
            .iter()
            .map(|v| -0.5 * (v - self.mean).powi(2) / self.variance)
            .sum())
    }
}

/// Independent `Gamma(shape, rate)` in every coordinate, supported on `x > 0`.
#[derive(Debug, Clone, Copy)]
pub struct GammaTarget {
    pub shape: f64,
    pub rate: f64,
}

impl GammaTarget {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && rate > 0.0) {
            return Err(Error::invalid(format!("gamma({shape}, {rate}) parameters must be > 0")));
        }
        Ok(Self { shape, rate })
    }
}

impl DataTerm for GammaTarget {
    fn grad_log(&self, x: &ImageTensor) -> Result<ImageTensor> {
        if let Some(i) = x.as_slice().iter().position(|&v| v <= 0.0) {
            return Err(Error::Domain {
                context: "gamma target gradient",
                index: i,
                value: x[i],
            });
        }
        Ok(x.map(|v| (self.shape - 1.0) / v - self.rate))
    }

    fn log_density(&self, x: &ImageTensor) -> Result<f64> {
        if x.as_slice().iter().any(|&v| v <= 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(x.as_slice()
            .iter()
            .map(|&v| (self.shape - 1.0) * v.ln() - self.rate * v)
            .sum())
    }
}

/// No data: a flat likelihood.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlatTarget;

impl DataTerm for FlatTarget {
    fn grad_log(&self, x: &ImageTensor) -> Result<ImageTensor> {
        Ok(ImageTensor::zeros(x.shape()))
    }

    fn log_density(&self, _x: &ImageTensor) -> Result<f64> {
        Ok(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::fd_gradient;

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let x = ImageTensor::vector(&[0.7, 1.3, 2.9]);
        let g = GaussianTarget::new(0.5, 2.0).unwrap();
        let gm = GammaTarget::new(3.0, 2.0).unwrap();
        for t in [&g as &dyn DataTerm, &gm] {
            let fd = fd_gradient(|z| t.log_density(z).unwrap(), &x, 1e-6).unwrap();
            let an = t.grad_log(&x).unwrap();
            assert!(an.sub(&fd).norm() < 1e-7 * an.norm().max(1.0));
        }
    }

    #[test]
    fn gamma_rejects_non_positive() {
        let gm = GammaTarget::new(3.0, 2.0).unwrap();
        assert!(gm.grad_log(&ImageTensor::vector(&[0.0])).is_err());
        assert_eq!(
            gm.log_density(&ImageTensor::vector(&[-1.0])).unwrap(),
            f64::NEG_INFINITY
        );
    }
}

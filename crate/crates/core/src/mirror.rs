//! Separable Legendre-type mirror maps.
//!
//! [`MirrorMap::Burg`] is `φ(x) = −Σ log xᵢ` on the open positive orthant:
//! `∇φ(x) = −1/x`, `∇φ*(y) = −1/y` on the negative orthant, and
//! `∇²φ(x) = diag(1/x²)`. [`MirrorMap::Quadratic`] is `φ(x) = ½‖x‖²`, which
//! reduces every mirror scheme to its Euclidean counterpart.
//!
//! Hessians are only ever applied as diagonal actions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MirrorMap {
    Burg,
    Quadratic,
}

fn require_positive(x: &ImageTensor, context: &'static str) -> Result<()> {
    match x.as_slice().iter().position(|&v| !(v > 0.0)) {
        Some(index) => Err(Error::Domain {
            context,
            index,
            value: x[index],
        }),
        None => Ok(()),
    }
}

impl MirrorMap {
    /// `φ(x)`.
    pub fn potential(&self, x: &ImageTensor) -> Result<f64> {
        match self {
            MirrorMap::Burg => {
                require_positive(x, "burg potential")?;
                Ok(-x.as_slice().iter().map(|v| v.ln()).sum::<f64>())
            }
            MirrorMap::Quadratic => Ok(0.5 * x.dot(x)),
        }
    }

    /// Primal to dual, `∇φ(x)`.
    pub fn grad(&self, x: &ImageTensor) -> Result<ImageTensor> {
        match self {
            MirrorMap::Burg => {
                require_positive(x, "burg mirror_grad")?;
                Ok(x.map(|v| -1.0 / v))
            }
            MirrorMap::Quadratic => Ok(x.clone()),
        }
    }

    /// Dual to primal, `∇φ*(y)`.
    pub fn grad_conj(&self, y: &ImageTensor) -> Result<ImageTensor> {
        match self {
            MirrorMap::Burg => {
                if let Some(index) = y.as_slice().iter().position(|&v| !(v < 0.0)) {
                    return Err(Error::Domain {
                        context: "burg mirror_grad_conj (dual point must be < 0)",
                        index,
                        value: y[index],
                    });
                }
                Ok(y.map(|v| -1.0 / v))
            }
            MirrorMap::Quadratic => Ok(y.clone()),
        }
    }

    /// Diagonal of `∇²φ(x)`.
    pub fn hessian_diag(&self, x: &ImageTensor) -> Result<ImageTensor> {
        match self {
            MirrorMap::Burg => {
                require_positive(x, "burg hessian")?;
                Ok(x.map(|v| 1.0 / (v * v)))
            }
            MirrorMap::Quadratic => Ok(ImageTensor::filled(x.shape(), 1.0)),
        }
    }

    /// `[∇²φ(x)]^{1/2} ξ`.
    pub fn hess_sqrt_noise(&self, x: &ImageTensor, xi: &ImageTensor) -> Result<ImageTensor> {
        xi.ensure_shape(x.shape(), "hess_sqrt_noise")?;
        match self {
            MirrorMap::Burg => {
                require_positive(x, "burg hess_sqrt_noise")?;
                Ok(xi.zip_map(x, |n, v| n / v))
            }
            MirrorMap::Quadratic => Ok(xi.clone()),
        }
    }

    /// `∇²φ(x) v`.
    pub fn hessian_apply(&self, x: &ImageTensor, v: &ImageTensor) -> Result<ImageTensor> {
        v.ensure_shape(x.shape(), "hessian_apply")?;
        Ok(self.hessian_diag(x)?.zip_map(v, |h, w| h * w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::fd_gradient;
    use crate::tensor::Shape;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn burg_examples() {
        let m = MirrorMap::Burg;
        assert_eq!(m.grad(&ImageTensor::vector(&[2.0])).unwrap()[0], -0.5);
        assert_eq!(
            m.grad(&ImageTensor::vector(&[1.0, 1.0, 1.0])).unwrap().as_slice(),
            &[-1.0, -1.0, -1.0]
        );
        assert_eq!(m.grad_conj(&ImageTensor::vector(&[-0.5])).unwrap()[0], 2.0);
        let noise = m
            .hess_sqrt_noise(&ImageTensor::vector(&[2.0]), &ImageTensor::vector(&[1.0]))
            .unwrap();
        assert_eq!(noise[0], 0.5);
        let xi = ImageTensor::vector(&[0.3, -1.2]);
        assert_eq!(
            m.hess_sqrt_noise(&ImageTensor::filled(xi.shape(), 1.0), &xi).unwrap(),
            xi
        );
    }

    #[test]
    fn domain_violations() {
        let m = MirrorMap::Burg;
        assert!(m.grad(&ImageTensor::vector(&[1.0, 0.0])).is_err());
        assert!(m.grad_conj(&ImageTensor::vector(&[-1.0, 0.0])).is_err());
        assert!(m.grad_conj(&ImageTensor::vector(&[0.1])).is_err());
        assert!(m
            .hess_sqrt_noise(&ImageTensor::vector(&[-1.0]), &ImageTensor::vector(&[1.0]))
            .is_err());
    }

    #[test]
    fn quadratic_is_identity() {
        let m = MirrorMap::Quadratic;
        let x = ImageTensor::vector(&[-3.0, 0.0, 2.5]);
        assert_eq!(m.grad(&x).unwrap(), x);
        assert_eq!(m.grad_conj(&x).unwrap(), x);
        assert_eq!(m.hess_sqrt_noise(&x, &x).unwrap(), x);
    }

    #[test]
    fn hessian_matches_jacobian_of_gradient() {
        let x = ImageTensor::vector(&[0.2, 1.0, 3.7]);
        let m = MirrorMap::Burg;
        let ones = ImageTensor::filled(x.shape(), 1.0);
        let sq = m.hess_sqrt_noise(&x, &ones).unwrap().map(|v| v * v);
        for i in 0..x.len() {
            // d/dx_i of (∇φ)_i
            let fd = fd_gradient(|z| m.grad(z).unwrap()[i], &x, 1e-6).unwrap();
            assert!((fd[i] - sq[i]).abs() < 1e-6 * sq[i]);
            // and ∇φ is the gradient of φ
            let gphi = fd_gradient(|z| m.potential(z).unwrap(), &x, 1e-6).unwrap();
            assert!((gphi[i] - m.grad(&x).unwrap()[i]).abs() < 1e-6 * sq[i].sqrt());
        }
    }

    #[test]
    fn noise_covariance_matches_inverse_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = ImageTensor::vector(&[0.5, 2.0]);
        let m = MirrorMap::Burg;
        let n = 100_000;
        let mut acc = [0.0; 3];
        for _ in 0..n {
            let xi = ImageTensor::from_fn(Shape::vector(2), |_| StandardNormal.sample(&mut rng));
            let v = m.hess_sqrt_noise(&x, &xi).unwrap();
            acc[0] += v[0] * v[0];
            acc[1] += v[1] * v[1];
            acc[2] += v[0] * v[1];
        }
        let n = n as f64;
        assert!((acc[0] / n / 4.0 - 1.0).abs() < 0.03);
        assert!((acc[1] / n / 0.25 - 1.0).abs() < 0.03);
        assert!((acc[2] / n).abs() < 0.03);
    }

    proptest! {
        #[test]
        fn burg_round_trip(v in prop::collection::vec(1e-6f64..1e6, 1..16)) {
            let m = MirrorMap::Burg;
            let x = ImageTensor::vector(&v);
            let back = m.grad_conj(&m.grad(&x).unwrap()).unwrap();
            for (a, b) in back.as_slice().iter().zip(&v) {
                prop_assert!((a - b).abs() <= 1e-12 * b);
            }
        }

        #[test]
        fn burg_conjugate_is_positive(v in prop::collection::vec(-1e6f64..-1e-9, 1..16)) {
            let x = MirrorMap::Burg.grad_conj(&ImageTensor::vector(&v)).unwrap();
            prop_assert!(x.as_slice().iter().all(|&p| p > 0.0));
        }
    }
}

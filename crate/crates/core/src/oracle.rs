//! Brute-force references: tensor-grid quadrature of low-dimensional
//! densities and central finite-difference gradients.
//!
//! Nothing here shares code with the samplers or the analytic scores it is
//! used to check.

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

pub const MIN_POINTS: usize = 64;
pub const MAX_DIMS: usize = 3;
/// Largest allowed ratio of density on an open grid edge to the peak density.
pub const EDGE_RATIO: f64 = 1e-6;

/// One axis of a quadrature grid.
///
/// A `hard` edge is a genuine support boundary (the density is truncated
/// there), so it is exempt from the edge-mass check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAxis {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
    pub hard_lower: bool,
    pub hard_upper: bool,
}

impl GridAxis {
    pub fn new(lower: f64, upper: f64, points: usize) -> Self {
        Self {
            lower,
            upper,
            points,
            hard_lower: false,
            hard_upper: false,
        }
    }

    pub fn hard_lower(mut self) -> Self {
        self.hard_lower = true;
        self
    }

    pub fn hard_upper(mut self) -> Self {
        self.hard_upper = true;
        self
    }

    fn step(&self) -> f64 {
        (self.upper - self.lower) / (self.points - 1) as f64
    }

    fn node(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.upper
        } else {
            self.lower + i as f64 * self.step()
        }
    }

    fn weight(&self, i: usize) -> f64 {
        let h = self.step();
        if i == 0 || i + 1 == self.points {
            0.5 * h
        } else {
            h
        }
    }

    /// This axis with twice the resolution on the same interval.
    pub fn refined(&self) -> Self {
        Self {
            points: 2 * self.points - 1,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureMoments {
    pub mean: Vec<f64>,
    /// Row-major `d × d`.
    pub covariance: Vec<f64>,
    pub log_normalizer: f64,
}

impl QuadratureMoments {
    pub fn variance(&self, i: usize) -> f64 {
        let d = self.mean.len();
        self.covariance[i * d + i]
    }
}

/// Trapezoidal tensor-grid moments of `exp(log_density)`.
///
/// `−∞` nodes carry zero mass. The log-density is max-shifted before
/// exponentiation; the shift is folded back into `log_normalizer`.
pub fn quadrature_moments(axes: &[GridAxis], log_density: impl Fn(&[f64]) -> f64) -> Result<QuadratureMoments> {
    let d = axes.len();
    if d == 0 || d > MAX_DIMS {
        return Err(Error::invalid(format!(
            "quadrature supports 1..={MAX_DIMS} dims, got {d}"
        )));
    }
    for (k, a) in axes.iter().enumerate() {
        if a.points < MIN_POINTS || !(a.upper > a.lower) {
            return Err(Error::invalid(format!(
                "axis {k}: need >= {MIN_POINTS} points on a non-empty interval, got {a:?}"
            )));
        }
    }
    let total: usize = axes.iter().map(|a| a.points).product();
    let mut nodes = vec![0.0; d];
    let mut logs = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        for (k, a) in axes.iter().enumerate().rev() {
            nodes[k] = a.node(rem % a.points);
            rem /= a.points;
        }
        let v = log_density(&nodes);
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::NonFinite(format!("log-density at {nodes:?}")));
        }
        logs.push(v);
    }
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return Err(Error::MassUnderflow);
    }

    let mut z = 0.0;
    let mut first = vec![0.0; d];
    let mut second = vec![0.0; d * d];
    let mut edge_max = 0.0f64;
    let mut idx = vec![0usize; d];
    for (flat, &lv) in logs.iter().enumerate() {
        let mut rem = flat;
        for (k, a) in axes.iter().enumerate().rev() {
            idx[k] = rem % a.points;
            nodes[k] = a.node(idx[k]);
            rem /= a.points;
        }
        let p = (lv - peak).exp();
        let on_open_edge = axes
            .iter()
            .zip(&idx)
            .any(|(a, &i)| (i == 0 && !a.hard_lower) || (i + 1 == a.points && !a.hard_upper));
        if on_open_edge {
            edge_max = edge_max.max(p);
        }
        let w: f64 = axes.iter().zip(&idx).map(|(a, &i)| a.weight(i)).product();
        let wp = w * p;
        z += wp;
        for i in 0..d {
            first[i] += wp * nodes[i];
            for j in 0..d {
                second[i * d + j] += wp * nodes[i] * nodes[j];
            }
        }
    }
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::MassUnderflow);
    }
    if edge_max > EDGE_RATIO {
        return Err(Error::invalid(format!(
            "grid truncates mass: open-edge density is {edge_max:.3e} of the peak"
        )));
    }
    let mean: Vec<f64> = first.iter().map(|m| m / z).collect();
    let mut covariance = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            covariance[i * d + j] = second[i * d + j] / z - mean[i] * mean[j];
        }
    }
    Ok(QuadratureMoments {
        mean,
        covariance,
        log_normalizer: peak + z.ln(),
    })
}

/// Central differences `(f(x + h eᵢ) − f(x − h eᵢ)) / 2h` per coordinate.
pub fn fd_gradient(f: impl Fn(&ImageTensor) -> f64, x: &ImageTensor, h: f64) -> Result<ImageTensor> {
    if !(h > 0.0) {
        return Err(Error::invalid(format!("finite-difference step {h}")));
    }
    let mut probe = x.clone();
    let mut grad = ImageTensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!(
                "finite-difference stencil at coordinate {i}: f(+h) = {fp}, f(-h) = {fm}"
            )));
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_moments() {
        let m = quadrature_moments(&[GridAxis::new(-8.0, 8.0, 512)], |x| -0.5 * x[0] * x[0]).unwrap();
        assert!(m.mean[0].abs() < 1e-10);
        assert!((m.variance(0) - 1.0).abs() < 1e-8);
        let expected = (2.0 * std::f64::consts::PI).sqrt().ln();
        assert!((m.log_normalizer - expected).abs() < 1e-8);
    }

    #[test]
    fn gamma_moments() {
        let axis = GridAxis::new(0.0, 12.0, 512).hard_lower();
        let m = quadrature_moments(&[axis], |x| {
            if x[0] <= 0.0 {
                f64::NEG_INFINITY
            } else {
                2.0 * x[0].ln() - 2.0 * x[0]
            }
        })
        .unwrap();
        assert!((m.mean[0] - 1.5).abs() < 1e-6);
        assert!((m.variance(0) - 0.75).abs() < 1e-5);
    }

    #[test]
    fn narrow_density_concentrates_at_mode() {
        let axis = GridAxis::new(0.4, 0.6, 2001);
        let m = quadrature_moments(&[axis], |x| -0.5 * ((x[0] - 0.5) / 1e-3).powi(2)).unwrap();
        assert!((m.mean[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn correlated_gaussian_2d() {
        // precision [[2, 0.5], [0.5, 1]] -> covariance = inv / det 1.75
        let axes = [GridAxis::new(-10.0, 12.0, 256), GridAxis::new(-9.0, 11.0, 256)];
        let m = quadrature_moments(&axes, |x| {
            let (a, b) = (x[0] - 1.0, x[1] - 0.5);
            -0.5 * (2.0 * a * a + a * b + b * b)
        })
        .unwrap();
        assert!((m.mean[0] - 1.0).abs() < 1e-8);
        assert!((m.mean[1] - 0.5).abs() < 1e-8);
        assert!((m.covariance[0] - 1.0 / 1.75).abs() < 1e-8);
        assert!((m.covariance[1] + 0.5 / 1.75).abs() < 1e-8);
        assert!((m.covariance[3] - 2.0 / 1.75).abs() < 1e-8);
    }

    #[test]
    fn refinement_changes_little() {
        let axis = GridAxis::new(0.0, 10.0, 200).hard_lower();
        let f = |x: &[f64]| {
            if x[0] <= 0.0 {
                f64::NEG_INFINITY
            } else {
                4.0 * x[0].ln() - 1.5 * x[0]
            }
        };
        let a = quadrature_moments(&[axis], f).unwrap_err();
        assert!(matches!(a, Error::InvalidParameter(_)), "upper edge should be flagged");
        let axis = GridAxis::new(0.0, 30.0, 400).hard_lower();
        let a = quadrature_moments(&[axis], f).unwrap();
        let b = quadrature_moments(&[axis.refined()], f).unwrap();
        assert!((a.mean[0] - b.mean[0]).abs() < 1e-6 * b.mean[0]);
        assert!((a.variance(0) - b.variance(0)).abs() < 1e-6 * b.variance(0));
    }

    #[test]
    fn rejects_coarse_grid_and_empty_mass() {
        assert!(quadrature_moments(&[GridAxis::new(0.0, 1.0, 10)], |_| 0.0).is_err());
        let err = quadrature_moments(&[GridAxis::new(0.0, 1.0, 64)], |_| f64::NEG_INFINITY).unwrap_err();
        assert!(matches!(err, Error::MassUnderflow));
    }

    #[test]
    fn fd_on_quadratic_and_linear() {
        let x = ImageTensor::vector(&[1.0, 2.0]);
        let g = fd_gradient(|z| z.dot(z), &x, 1e-4).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 4.0).abs() < 1e-8);
        let lin = |z: &ImageTensor| 3.0 * z[0] - 0.5 * z[1];
        for h in [1e-1, 1e-3] {
            let g = fd_gradient(lin, &x, h).unwrap();
            assert!((g[0] - 3.0).abs() < 1e-12 && (g[1] + 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn fd_error_is_second_order() {
        let x = ImageTensor::vector(&[0.3]);
        let f = |z: &ImageTensor| z[0].sin();
        let exact = 0.3f64.cos();
        let e1 = (fd_gradient(f, &x, 1e-2).unwrap()[0] - exact).abs();
        let e2 = (fd_gradient(f, &x, 5e-3).unwrap()[0] - exact).abs();
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn fd_rejects_non_finite_stencil() {
        let x = ImageTensor::vector(&[0.0]);
        assert!(fd_gradient(|z| z[0].ln(), &x, 1e-3).is_err());
    }
}

//! Box constraints `C = [a, b]^d` with projection and folded reflection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxConstraint {
    lower: f64,
    upper: f64,
}

impl BoxConstraint {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::invalid(format!("box [{lower}, {upper}] needs finite a < b")));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn contains(&self, x: &ImageTensor) -> bool {
        x.as_slice().iter().all(|&v| v >= self.lower && v <= self.upper)
    }

    pub fn project_scalar(&self, v: f64) -> f64 {
        v.max(self.lower).min(self.upper)
    }

    /// `2Π(v) − v`, repeated until the value lands in `[a, b]`.
    pub fn reflect_scalar(&self, v: f64) -> f64 {
        let (a, b) = (self.lower, self.upper);
        if v >= a && v <= b {
            return v;
        }
        let width = b - a;
        // A long excursion folds back and forth many times; reduce it modulo
        // the period 2(b − a) first, then finish with explicit reflections.
        let mut r = if (v - a).abs() > 4.0 * width {
            let t = (v - a).rem_euclid(2.0 * width);
            a + t
        } else {
            v
        };
        while r < a || r > b {
            r = 2.0 * self.project_scalar(r) - r;
        }
        r
    }

    pub fn project(&self, x: &ImageTensor) -> ImageTensor {
        x.map(|v| self.project_scalar(v))
    }

    pub fn reflect(&self, x: &ImageTensor) -> ImageTensor {
        x.map(|v| self.reflect_scalar(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> BoxConstraint {
        BoxConstraint::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn projection_examples() {
        let p = unit().project(&ImageTensor::vector(&[-0.5, 0.5, 1.5]));
        assert_eq!(p.as_slice(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn reflection_examples() {
        let c = unit();
        assert!((c.reflect_scalar(-0.3) - 0.3).abs() < 1e-15);
        assert!((c.reflect_scalar(1.2) - 0.8).abs() < 1e-15);
        assert_eq!(c.reflect_scalar(0.4), 0.4);
        // Beyond one box width: -1.3 -> 1.3 -> 0.7
        assert!((c.reflect_scalar(-1.3) - 0.7).abs() < 1e-12);
        assert!((c.reflect_scalar(2.25) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rejects_empty_box() {
        assert!(BoxConstraint::new(1.0, 1.0).is_err());
        assert!(BoxConstraint::new(0.0, f64::INFINITY).is_err());
    }

    fn fold_reference(c: &BoxConstraint, mut v: f64) -> f64 {
        while v < c.lower() || v > c.upper() {
            v = 2.0 * c.project_scalar(v) - v;
        }
        v
    }

    proptest! {
        #[test]
        fn both_operators_land_in_box(v in -1e3f64..1e3, a in -5.0f64..5.0, w in 0.01f64..10.0) {
            let c = BoxConstraint::new(a, a + w).unwrap();
            let r = c.reflect_scalar(v);
            let p = c.project_scalar(v);
            prop_assert!(r >= c.lower() && r <= c.upper());
            prop_assert!(p >= c.lower() && p <= c.upper());
            prop_assert_eq!(c.project_scalar(p), p);
        }

        #[test]
        fn modular_shortcut_matches_plain_folding(v in -50.0f64..50.0) {
            let c = BoxConstraint::new(-0.5, 1.5).unwrap();
            prop_assert!((c.reflect_scalar(v) - fold_reference(&c, v)).abs() < 1e-9);
        }
    }
}

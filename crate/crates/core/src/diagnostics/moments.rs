//! Streaming moments: pixel-wise Welford accumulators and block-mean
//! (multi-scale) variants.

use crate::error::{Error, Result};
use crate::samplers::SampleSink;
use crate::tensor::{ImageTensor, Shape};

#[derive(Debug, Clone, PartialEq)]
pub struct WelfordAccumulator {
    shape: Shape,
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl WelfordAccumulator {
    pub fn new(shape: Shape) -> Self {
        Self {
            shape,
            count: 0,
            mean: vec![0.0; shape.len()],
            m2: vec![0.0; shape.len()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn update(&mut self, x: &ImageTensor) -> Result<()> {
        x.ensure_shape(self.shape, "welford update")?;
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x.as_slice()) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
        Ok(())
    }

    /// Pairwise combination of two accumulators over disjoint streams.
    pub fn merge(&mut self, other: &WelfordAccumulator) -> Result<()> {
        if other.shape != self.shape {
            return Err(Error::ShapeMismatch {
                context: "welford merge",
                expected: self.shape,
                found: other.shape,
            });
        }
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            *self = other.clone();
            return Ok(());
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.count += other.count;
        Ok(())
    }

    pub fn mean(&self) -> ImageTensor {
        ImageTensor::from_raw(self.mean.clone(), self.shape)
    }

    /// Unbiased variance `M2/(n − 1)`; zero with fewer than two samples.
    pub fn variance(&self) -> ImageTensor {
        let denom = self.count.saturating_sub(1) as f64;
        let data = if self.count < 2 {
            vec![0.0; self.m2.len()]
        } else {
            self.m2.iter().map(|&s| s / denom).collect()
        };
        ImageTensor::from_raw(data, self.shape)
    }

    pub fn std(&self) -> ImageTensor {
        self.variance().map(f64::sqrt)
    }
}

impl SampleSink for WelfordAccumulator {
    fn record(&mut self, _: usize, _: u64, x: &ImageTensor) -> Result<()> {
        self.update(x)
    }
}

/// Averages non-overlapping `s × s` blocks of every channel. Trailing rows
/// and columns that do not fill a block are dropped.
pub fn block_mean(x: &ImageTensor, s: usize) -> ImageTensor {
    let shape = x.shape();
    if s <= 1 {
        return x.clone();
    }
    let out_shape = Shape::new(shape.channels, shape.height / s, shape.width / s);
    let inv = 1.0 / (s * s) as f64;
    let mut out = vec![0.0; out_shape.len()];
    for c in 0..shape.channels {
        for br in 0..out_shape.height {
            for bc in 0..out_shape.width {
                let mut acc = 0.0;
                for r in br * s..(br + 1) * s {
                    for col in bc * s..(bc + 1) * s {
                        acc += x.at(c, r, col);
                    }
                }
                out[out_shape.flat_index(c, br, bc)] = acc * inv;
            }
        }
    }
    ImageTensor::from_raw(out, out_shape)
}

/// One Welford accumulator per block scale, fed with block-mean images.
#[derive(Debug, Clone)]
pub struct MultiscaleStd {
    scales: Vec<usize>,
    accs: Vec<WelfordAccumulator>,
    cropped: Vec<bool>,
}

impl MultiscaleStd {
    pub const DEFAULT_SCALES: [usize; 4] = [1, 2, 4, 8];

    pub fn new(shape: Shape, scales: &[usize]) -> Result<Self> {
        let mut accs = Vec::new();
        let mut cropped = Vec::new();
        for &s in scales {
            if s == 0 || s > shape.height || s > shape.width {
                return Err(Error::invalid(format!("block scale {s} does not fit image {shape}")));
            }
            let crop = !shape.height.is_multiple_of(s) || !shape.width.is_multiple_of(s);
            if crop {
                log::info!("scale {s}: image {shape} cropped to whole blocks");
            }
            cropped.push(crop);
            accs.push(WelfordAccumulator::new(Shape::new(
                shape.channels,
                shape.height / s,
                shape.width / s,
            )));
        }
        Ok(Self {
            scales: scales.to_vec(),
            accs,
            cropped,
        })
    }

    pub fn update(&mut self, x: &ImageTensor) -> Result<()> {
        for (&s, acc) in self.scales.iter().zip(self.accs.iter_mut()) {
            acc.update(&block_mean(x, s))?;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &MultiscaleStd) -> Result<()> {
        if self.scales != other.scales {
            return Err(Error::invalid("merging multiscale accumulators with different scales"));
        }
        for (a, b) in self.accs.iter_mut().zip(&other.accs) {
            a.merge(b)?;
        }
        Ok(())
    }

    pub fn scales(&self) -> &[usize] {
        &self.scales
    }

    /// Whether the image had to be cropped to whole blocks at each scale.
    pub fn cropped(&self) -> &[bool] {
        &self.cropped
    }

    pub fn accumulator(&self, scale: usize) -> Option<&WelfordAccumulator> {
        self.scales.iter().position(|&s| s == scale).map(|i| &self.accs[i])
    }

    /// `(scale, std map)` per scale.
    pub fn std_maps(&self) -> Vec<(usize, ImageTensor)> {
        self.scales
            .iter()
            .copied()
            .zip(self.accs.iter().map(|a| a.std()))
            .collect()
    }
}

impl SampleSink for MultiscaleStd {
    fn record(&mut self, _: usize, _: u64, x: &ImageTensor) -> Result<()> {
        self.update(x)
    }
}

/// `(argmax, argmin)` of the pixel-wise variance, lowest index on ties.
/// The first is the slowest-mixing pixel, the second the fastest.
pub fn select_extreme_pixels(acc: &WelfordAccumulator) -> (usize, usize) {
    let v = acc.variance();
    let (mut hi, mut lo) = (0, 0);
    for (i, &x) in v.as_slice().iter().enumerate() {
        if x > v[hi] {
            hi = i;
        }
        if x < v[lo] {
            lo = i;
        }
    }
    (hi, lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn one_two_three() {
        let mut a = WelfordAccumulator::new(Shape::vector(2));
        for v in [1.0, 2.0, 3.0] {
            a.update(&ImageTensor::vector(&[v, 5.0])).unwrap();
        }
        assert_eq!(a.mean().as_slice(), &[2.0, 5.0]);
        assert_eq!(a.variance().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn standard_normal_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = WelfordAccumulator::new(Shape::vector(1));
        for _ in 0..10_000 {
            a.update(&ImageTensor::vector(&[rng.sample(StandardNormal)])).unwrap();
        }
        assert!(a.mean()[0].abs() < 0.04);
        assert!((a.variance()[0] - 1.0).abs() < 0.06);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut a = WelfordAccumulator::new(Shape::vector(2));
        assert!(a.update(&ImageTensor::vector(&[1.0])).is_err());
    }

    #[test]
    fn extremes_and_ties() {
        let mut a = WelfordAccumulator::new(Shape::vector(10));
        for k in 0..4 {
            let x = ImageTensor::from_fn(Shape::vector(10), |i| match i {
                7 => 10.0 * k as f64,
                3 => 0.0,
                _ => k as f64 * (1.0 + i as f64 * 0.1),
            });
            a.update(&x).unwrap();
        }
        assert_eq!(select_extreme_pixels(&a), (7, 3));

        let mut flat = WelfordAccumulator::new(Shape::vector(5));
        flat.update(&ImageTensor::vector(&[1.0; 5])).unwrap();
        flat.update(&ImageTensor::vector(&[2.0; 5])).unwrap();
        assert_eq!(select_extreme_pixels(&flat), (0, 0));
    }

    #[test]
    fn block_mean_example() {
        let x = ImageTensor::from_fn(Shape::new(1, 4, 4), |i| i as f64);
        let b = block_mean(&x, 2);
        assert_eq!(b.as_slice(), &[2.5, 4.5, 10.5, 12.5]);
        let odd = ImageTensor::from_fn(Shape::new(1, 5, 5), |i| i as f64);
        assert_eq!(block_mean(&odd, 2).shape(), Shape::new(1, 2, 2));
    }

    #[test]
    fn correlated_pixels_keep_their_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let shape = Shape::new(1, 8, 8);
        let mut m = MultiscaleStd::new(shape, &MultiscaleStd::DEFAULT_SCALES).unwrap();
        for _ in 0..500 {
            let v: f64 = rng.sample(StandardNormal);
            m.update(&ImageTensor::filled(shape, v)).unwrap();
        }
        let maps = m.std_maps();
        let base = maps[0].1[0];
        for (_, map) in &maps {
            for &s in map.as_slice() {
                assert!((s - base).abs() < 1e-12 * base);
            }
        }
    }

    #[test]
    fn unit_scale_is_the_pixel_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shape = Shape::new(2, 6, 6);
        let mut m = MultiscaleStd::new(shape, &[1, 2, 4]).unwrap();
        let mut a = WelfordAccumulator::new(shape);
        for _ in 0..50 {
            let x = ImageTensor::from_fn(shape, |_| rng.random());
            m.update(&x).unwrap();
            a.update(&x).unwrap();
        }
        assert_eq!(m.std_maps()[0].1, a.std());
        assert_eq!(m.cropped(), &[false, false, true]);
    }

    fn two_pass(stream: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let n = stream.len() as f64;
        let d = stream[0].len();
        let mean: Vec<f64> = (0..d).map(|i| stream.iter().map(|s| s[i]).sum::<f64>() / n).collect();
        let var = (0..d)
            .map(|i| stream.iter().map(|s| (s[i] - mean[i]).powi(2)).sum::<f64>() / (n - 1.0))
            .collect();
        (mean, var)
    }

    proptest! {
        #[test]
        fn merge_is_associative(
            data in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 3), 3..60),
            cut1 in 0usize..100,
            cut2 in 0usize..100,
        ) {
            let n = data.len();
            let (i, j) = { let mut c = [cut1 % n, cut2 % n]; c.sort(); (c[0], c[1]) };
            let acc = |range: &[Vec<f64>]| {
                let mut a = WelfordAccumulator::new(Shape::vector(3));
                for v in range { a.update(&ImageTensor::vector(v)).unwrap(); }
                a
            };
            let (a, b, c) = (acc(&data[..i]), acc(&data[i..j]), acc(&data[j..]));
            let mut left = a.clone(); left.merge(&b).unwrap(); left.merge(&c).unwrap();
            let mut bc = b.clone(); bc.merge(&c).unwrap();
            let mut right = a.clone(); right.merge(&bc).unwrap();
            let (mean, var) = two_pass(&data);
            for k in 0..3 {
                for acc in [&left, &right] {
                    prop_assert!((acc.mean()[k] - mean[k]).abs() <= 1e-10 * mean[k].abs().max(1.0));
                    prop_assert!((acc.variance()[k] - var[k]).abs() <= 1e-9 * var[k].abs().max(1.0));
                }
            }
        }
    }
}

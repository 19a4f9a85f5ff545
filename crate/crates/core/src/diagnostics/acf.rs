//! Scalar traces and their autocorrelation.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::samplers::SampleSink;
use crate::tensor::ImageTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Acf {
    /// `ρ̂(0), …, ρ̂(max_lag)`.
    pub values: Vec<f64>,
    /// The series had zero variance; every lag beyond 0 is reported as 0.
    pub degenerate: bool,
}

/// Biased autocorrelation `c(ℓ)/c(0)` with `c(ℓ) = (1/n) Σ (x_t − x̄)(x_{t+ℓ} − x̄)`,
/// computed through a zero-padded FFT.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Acf> {
    let n = series.len();
    if n <= max_lag {
        return Err(Error::invalid(format!(
            "series of length {n} is too short for lag {max_lag}"
        )));
    }
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("acf input entry {i}")));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let padded = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|&v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(padded)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(padded).process(&mut buf);
    for v in buf.iter_mut() {
        *v = Complex::new(v.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(padded).process(&mut buf);
    let c0 = buf[0].re;
    if c0 <= f64::EPSILON * padded as f64 * series.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max) {
        let mut values = vec![0.0; max_lag + 1];
        values[0] = 1.0;
        return Ok(Acf {
            values,
            degenerate: true,
        });
    }
    let mut values: Vec<f64> = buf[..=max_lag].iter().map(|c| c.re / c0).collect();
    values[0] = 1.0;
    Ok(Acf {
        values,
        degenerate: false,
    })
}

/// Standard error of a series mean by non-overlapping batch means.
/// Leftover samples at the end are dropped.
pub fn batch_means_se(series: &[f64], batches: usize) -> Result<f64> {
    if batches < 2 || series.len() < 2 * batches {
        return Err(Error::invalid(format!(
            "{} samples cannot form {batches} batches",
            series.len()
        )));
    }
    let size = series.len() / batches;
    let means: Vec<f64> = series
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Ok((var / batches as f64).sqrt())
}

/// Scalar series of a fixed set of flat pixel indices.
#[derive(Debug, Clone)]
pub struct TraceBuffer {
    indices: Vec<usize>,
    capacity: usize,
    series: Vec<Vec<f64>>,
}

impl TraceBuffer {
    pub fn new(indices: Vec<usize>, capacity: usize, len: usize) -> Result<Self> {
        if let Some(&i) = indices.iter().find(|&&i| i >= len) {
            return Err(Error::invalid(format!(
                "traced pixel {i} outside an image of {len} entries"
            )));
        }
        let series = vec![Vec::with_capacity(capacity.min(1 << 20)); indices.len()];
        Ok(Self {
            indices,
            capacity,
            series,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends one value per traced pixel; further samples are ignored once full.
    pub fn push(&mut self, x: &ImageTensor) {
        for (s, &i) in self.series.iter_mut().zip(&self.indices) {
            if s.len() < self.capacity {
                s.push(x[i]);
            }
        }
    }

    pub fn series(&self, k: usize) -> &[f64] {
        &self.series[k]
    }

    /// Series of the traced pixel with flat index `pixel`, if traced.
    pub fn series_for(&self, pixel: usize) -> Option<&[f64]> {
        self.indices
            .iter()
            .position(|&i| i == pixel)
            .map(|k| self.series[k].as_slice())
    }
}

impl SampleSink for TraceBuffer {
    fn record(&mut self, _: usize, _: u64, x: &ImageTensor) -> Result<()> {
        self.push(x);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn direct(series: &[f64], max_lag: usize) -> Vec<f64> {
        let n = series.len();
        let m = series.iter().sum::<f64>() / n as f64;
        let c = |l: usize| (0..n - l).map(|t| (series[t] - m) * (series[t + l] - m)).sum::<f64>() / n as f64;
        let c0 = c(0);
        (0..=max_lag).map(|l| c(l) / c0).collect()
    }

    #[test]
    fn fft_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x = 0.0;
        let series: Vec<f64> = (0..3000)
            .map(|_| {
                x = 0.7 * x + rng.sample::<f64, _>(StandardNormal);
                x + 3.0
            })
            .collect();
        let a = acf(&series, 100).unwrap();
        let d = direct(&series, 100);
        for (fast, slow) in a.values.iter().zip(&d) {
            assert!((fast - slow).abs() < 1e-10);
        }
        assert_eq!(a.values[0], 1.0);
    }

    #[test]
    fn white_noise_is_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let series: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let a = acf(&series, 50).unwrap();
        assert!(a.values[1..].iter().all(|v| v.abs() < 0.02));
    }

    #[test]
    fn constant_series_is_degenerate() {
        let a = acf(&[2.5; 100], 5).unwrap();
        assert!(a.degenerate);
        assert_eq!(a.values, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(acf(&[1.0, 2.0], 2).is_err());
        assert!(acf(&[1.0, f64::NAN, 0.0], 1).is_err());
    }

    #[test]
    fn batch_means_of_iid_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let series: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let se = batch_means_se(&series, 50).unwrap();
        let expect = 1.0 / (series.len() as f64).sqrt();
        assert!((se / expect - 1.0).abs() < 0.3, "{se} vs {expect}");
    }

    #[test]
    fn trace_buffer_caps_length() {
        let mut t = TraceBuffer::new(vec![1, 3], 3, 4).unwrap();
        for k in 0..5 {
            t.push(&ImageTensor::from_fn(crate::tensor::Shape::vector(4), |i| {
                (i * 10 + k) as f64
            }));
        }
        assert_eq!(t.series(0), &[10.0, 11.0, 12.0]);
        assert_eq!(t.series_for(3).unwrap(), &[30.0, 31.0, 32.0]);
        assert!(TraceBuffer::new(vec![4], 3, 4).is_err());
    }
}

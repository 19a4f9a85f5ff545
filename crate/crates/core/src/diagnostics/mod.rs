//! Posterior statistics, mixing diagnostics and image quality metrics.

mod acf;
mod curves;
mod moments;
mod quality;

pub use acf::{acf, batch_means_se, Acf, TraceBuffer};
pub use curves::{log_grid, nfe_to_fraction_of_peak, MetricPoint};
pub use moments::{block_mean, select_extreme_pixels, MultiscaleStd, WelfordAccumulator};
pub use quality::{mse, psnr, ssim};

use crate::error::Result;
use crate::samplers::SampleSink;
use crate::tensor::{ImageTensor, Shape};

#[derive(Debug, Clone)]
struct Curve {
    reference: ImageTensor,
    max_val: f64,
    grid: Vec<usize>,
    next: usize,
    points: Vec<MetricPoint>,
}

/// Everything a chain run streams its samples into: pixel moments, optional
/// block-scale moments, optional pixel traces and an optional quality curve
/// of the running mean against a reference image.
#[derive(Debug, Clone)]
pub struct ChainAccumulator {
    pub moments: WelfordAccumulator,
    pub multiscale: Option<MultiscaleStd>,
    pub trace: Option<TraceBuffer>,
    curve: Option<Curve>,
}

impl ChainAccumulator {
    pub fn new(shape: Shape) -> Self {
        Self {
            moments: WelfordAccumulator::new(shape),
            multiscale: None,
            trace: None,
            curve: None,
        }
    }

    pub fn with_multiscale(mut self, scales: &[usize]) -> Result<Self> {
        self.multiscale = Some(MultiscaleStd::new(self.moments.shape(), scales)?);
        Ok(self)
    }

    pub fn with_trace(mut self, indices: Vec<usize>, capacity: usize) -> Result<Self> {
        self.trace = Some(TraceBuffer::new(indices, capacity, self.moments.shape().len())?);
        Ok(self)
    }

    /// Evaluates PSNR and SSIM of the running mean after each retained-sample
    /// count in `grid`.
    pub fn with_curve(mut self, reference: ImageTensor, max_val: f64, grid: Vec<usize>) -> Result<Self> {
        reference.ensure_shape(self.moments.shape(), "metric reference")?;
        self.curve = Some(Curve {
            reference,
            max_val,
            grid,
            next: 0,
            points: Vec::new(),
        });
        Ok(self)
    }

    pub fn curve(&self) -> &[MetricPoint] {
        self.curve.as_ref().map_or(&[], |c| c.points.as_slice())
    }
}

impl SampleSink for ChainAccumulator {
    fn record(&mut self, iteration: usize, nfe: u64, x: &ImageTensor) -> Result<()> {
        self.moments.update(x)?;
        if let Some(m) = &mut self.multiscale {
            m.update(x)?;
        }
        if let Some(t) = &mut self.trace {
            t.push(x);
        }
        if let Some(c) = &mut self.curve {
            let n = self.moments.count() as usize;
            if c.grid.get(c.next) == Some(&n) {
                c.next += 1;
                let mean = self.moments.mean();
                c.points.push(MetricPoint {
                    iteration,
                    nfe,
                    samples: n,
                    psnr: psnr(&mean, &c.reference, c.max_val)?,
                    ssim: ssim(&mean, &c.reference)?,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulator_fans_out() {
        let shape = Shape::new(1, 4, 4);
        let reference = ImageTensor::filled(shape, 0.5);
        let mut acc = ChainAccumulator::new(shape)
            .with_multiscale(&[1, 2])
            .unwrap()
            .with_trace(vec![0, 5], 100)
            .unwrap()
            .with_curve(reference, 1.0, log_grid(10, 4))
            .unwrap();
        for k in 0..10 {
            let x = ImageTensor::filled(shape, 0.5 + if k % 2 == 0 { 0.1 } else { -0.1 });
            acc.record(k + 1, 2 * (k as u64 + 1), &x).unwrap();
        }
        assert_eq!(acc.moments.count(), 10);
        assert_eq!(acc.trace.as_ref().unwrap().series(1).len(), 10);
        let curve = acc.curve();
        assert_eq!(curve.iter().map(|p| p.samples).collect::<Vec<_>>(), log_grid(10, 4));
        assert!(curve.last().unwrap().psnr > 200.0);
        assert_eq!(curve[0].nfe, 2);
    }
}

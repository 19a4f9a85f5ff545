//! Quality of the running posterior mean as a chain progresses.

use serde::Serialize;

/// Up to `points` distinct integers in `[1, max]`, roughly geometric, always
/// including `1` and `max`.
pub fn log_grid(max: usize, points: usize) -> Vec<usize> {
    if max == 0 || points == 0 {
        return Vec::new();
    }
    let top = (max as f64).ln();
    let steps = points.max(2) - 1;
    let mut grid: Vec<usize> = (0..=steps)
        .map(|i| (top * i as f64 / steps as f64).exp().round() as usize)
        .map(|v| v.clamp(1, max))
        .collect();
    grid.push(max);
    grid.sort_unstable();
    grid.dedup();
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricPoint {
    pub iteration: usize,
    pub nfe: u64,
    pub samples: usize,
    pub psnr: f64,
    pub ssim: f64,
}

/// NFE at which the curve first reaches `fraction` of its peak PSNR.
pub fn nfe_to_fraction_of_peak(curve: &[MetricPoint], fraction: f64) -> Option<u64> {
    let peak = curve
        .iter()
        .map(|p| p.psnr)
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return None;
    }
    let threshold = if peak >= 0.0 { fraction * peak } else { peak / fraction };
    curve.iter().find(|p| p.psnr >= threshold).map(|p| p.nfe)
}

//! Image quality metrics.

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_RANGE: f64 = 1.0;

fn same_shape(a: &ImageTensor, b: &ImageTensor, context: &'static str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            context,
            expected: b.shape(),
            found: a.shape(),
        });
    }
    Ok(())
}

pub fn mse(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    same_shape(a, b, "mse")?;
    let n = a.len().max(1) as f64;
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / n)
}

/// `20 log₁₀(max_val/√MSE)`; `+∞` when the images coincide.
pub fn psnr(xhat: &ImageTensor, x: &ImageTensor, max_val: f64) -> Result<f64> {
    let m = mse(xhat, x)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (max_val / m.sqrt()).log10())
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = g.iter().sum();
    g.into_iter().map(|v| v / total).collect()
}

fn ssim_formula(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64) -> f64 {
    let c1 = (SSIM_K1 * SSIM_RANGE).powi(2);
    let c2 = (SSIM_K2 * SSIM_RANGE).powi(2);
    ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

fn ssim_plane_global(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let va = a.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / n;
    let vb = b.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / n;
    let cab = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
    ssim_formula(ma, mb, va, vb, cab)
}

/// Separable Gaussian filter over the valid region of an `h × w` plane.
fn filter_valid(p: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..k).map(|t| g[t] * p[r * w + c + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..k).map(|t| g[t] * rows[(r + t) * ow + c]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return ssim_plane_global(a, b);
    }
    let g = gaussian_window();
    let prod = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..a.len()).map(f).collect() };
    let mu_a = filter_valid(a, h, w, &g);
    let mu_b = filter_valid(b, h, w, &g);
    let aa = filter_valid(&prod(&|i| a[i] * a[i]), h, w, &g);
    let bb = filter_valid(&prod(&|i| b[i] * b[i]), h, w, &g);
    let ab = filter_valid(&prod(&|i| a[i] * b[i]), h, w, &g);
    let n = mu_a.len();
    (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            ssim_formula(ma, mb, aa[i] - ma * ma, bb[i] - mb * mb, ab[i] - ma * mb)
        })
        .sum::<f64>()
        / n as f64
}

/// Mean SSIM with an 11×11 Gaussian window (σ = 1.5), `K₁ = 0.01`,
/// `K₂ = 0.03` and dynamic range 1, averaged over channels. Planes smaller
/// than the window use global statistics.
pub fn ssim(xhat: &ImageTensor, x: &ImageTensor) -> Result<f64> {
    same_shape(xhat, x, "ssim")?;
    let s = x.shape();
    if s.is_empty() {
        return Err(Error::invalid("ssim of an empty image"));
    }
    let total: f64 = (0..s.channels)
        .map(|c| ssim_plane(xhat.channel(c), x.channel(c), s.height, s.width))
        .sum();
    Ok(total / s.channels as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, shape: Shape) -> ImageTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageTensor::from_fn(shape, |_| rng.random())
    }

    #[test]
    fn psnr_examples() {
        let x = ImageTensor::filled(Shape::new(1, 4, 4), 0.3);
        assert_eq!(psnr(&x, &x, 1.0).unwrap(), f64::INFINITY);
        let y = x.map(|v| v + 0.1);
        assert!((psnr(&y, &x, 1.0).unwrap() - 20.0).abs() < 1e-10);
        assert_eq!(psnr(&y, &x, 1.0).unwrap(), psnr(&x, &y, 1.0).unwrap());
    }

    #[test]
    fn ssim_identity_and_negative() {
        let x = random_image(1, Shape::new(1, 16, 16));
        assert_eq!(ssim(&x, &x).unwrap(), 1.0);
        let neg = x.map(|v| 1.0 - v);
        assert!(ssim(&neg, &x).unwrap() < 0.0);
        let small = random_image(2, Shape::new(3, 5, 5));
        assert_eq!(ssim(&small, &small).unwrap(), 1.0);
        assert!(ssim(&small.map(|v| 1.0 - v), &small).unwrap() < 0.0);
    }

    /// Direct weighted sums over every window position.
    fn reference_ssim(a: &ImageTensor, b: &ImageTensor) -> f64 {
        let s = a.shape();
        let half = 5.0;
        let mut w = [[0.0; 11]; 11];
        let mut total = 0.0;
        for (i, row) in w.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (-((i as f64 - half).powi(2) + (j as f64 - half).powi(2)) / 4.5).exp();
                total += *v;
            }
        }
        let (c1, c2) = (1e-4, 9e-4);
        let mut acc = 0.0;
        let mut count = 0;
        for r0 in 0..=s.height - 11 {
            for c0 in 0..=s.width - 11 {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (i, row) in w.iter().enumerate() {
                    for (j, wij) in row.iter().enumerate() {
                        let k = wij / total;
                        let (x, y) = (a.at(0, r0 + i, c0 + j), b.at(0, r0 + i, c0 + j));
                        ma += k * x;
                        mb += k * y;
                        saa += k * x * x;
                        sbb += k * y * y;
                        sab += k * x * y;
                    }
                }
                let (va, vb, cab) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                acc += ((2.0 * ma * mb + c1) * (2.0 * cab + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        acc / count as f64
    }

    #[test]
    fn ssim_matches_direct_windows() {
        let shape = Shape::new(1, 16, 16);
        let x = random_image(3, shape);
        let noise = random_image(4, shape);
        let y = x.zip_map(&noise, |a, n| 0.8 * a + 0.2 * n);
        let s = ssim(&y, &x).unwrap();
        assert!((s - reference_ssim(&y, &x)).abs() < 1e-6);
        assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn shape_mismatch() {
        let a = ImageTensor::zeros(Shape::new(1, 4, 4));
        let b = ImageTensor::zeros(Shape::new(1, 4, 5));
        assert!(psnr(&a, &b, 1.0).is_err());
        assert!(ssim(&a, &b).is_err());
    }
}

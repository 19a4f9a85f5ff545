use pnp_core::diagnostics::{acf, batch_means_se, block_mean, log_grid, psnr, ssim, WelfordAccumulator};
use pnp_core::{ImageTensor, Shape};
use proptest::prelude::*;

proptest! {
    #[test]
    fn merged_welford_equals_sequential(data in prop::collection::vec(-1e3f64..1e3, 2..200), split in 0usize..200) {
        let split = split.min(data.len());
        let shape = Shape::vector(1);
        let mut all = WelfordAccumulator::new(shape);
        let mut left = WelfordAccumulator::new(shape);
        let mut right = WelfordAccumulator::new(shape);
        for (i, &v) in data.iter().enumerate() {
            let x = ImageTensor::vector(&[v]);
            all.update(&x).unwrap();
            if i < split { left.update(&x).unwrap() } else { right.update(&x).unwrap() }
        }
        left.merge(&right).unwrap();
        prop_assert_eq!(left.count(), all.count());
        prop_assert!((left.mean()[0] - all.mean()[0]).abs() <= 1e-9 * (1.0 + all.mean()[0].abs()));
        prop_assert!((left.variance()[0] - all.variance()[0]).abs() <= 1e-8 * (1.0 + all.variance()[0]));
    }

    #[test]
    fn acf_starts_at_one_and_is_bounded(data in prop::collection::vec(-5f64..5.0, 3..300)) {
        let a = acf(&data, data.len() - 1).unwrap();
        if !a.degenerate {
            prop_assert!((a.values[0] - 1.0).abs() < 1e-12);
            prop_assert!(a.values.iter().all(|v| v.abs() <= 1.0 + 1e-9));
        }
    }

    #[test]
    fn psnr_and_ssim_are_symmetric_in_the_error(seed in any::<u32>(), noise in 0.01f64..0.2) {
        let shape = Shape::new(1, 16, 16);
        let x = ImageTensor::from_fn(shape, |i| ((i as u32).wrapping_mul(seed | 1) % 100) as f64 / 100.0);
        let e = ImageTensor::from_fn(shape, |i| if (i as u32 ^ seed).is_multiple_of(2) { noise } else { -noise });
        let y = x.add(&e);
        let p = psnr(&y, &x, 1.0).unwrap();
        prop_assert!((p - (-10.0 * (noise * noise).log10())).abs() < 1e-9);
        prop_assert!(ssim(&y, &x).unwrap() < 1.0);
        prop_assert!((ssim(&y, &x).unwrap() - ssim(&x, &y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn log_grid_is_increasing_and_ends_at_max(max in 1usize..100_000, points in 2usize..60) {
        let g = log_grid(max, points);
        prop_assert!(g.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(*g.last().unwrap(), max);
        prop_assert!(g[0] >= 1);
    }
}

#[test]
fn block_mean_of_constant_blocks() {
    let x = ImageTensor::from_fn(Shape::new(1, 4, 4), |i| ((i / 4) / 2 * 2 + (i % 4) / 2) as f64);
    let b = block_mean(&x, 2);
    assert_eq!(b.shape(), Shape::new(1, 2, 2));
    assert_eq!(b.as_slice(), &[0.0, 1.0, 2.0, 3.0]);
}

#[test]
fn batch_means_se_of_iid_noise() {
    // Weyl sequence with an irrational step: mean 0.5, variance 1/12.
    let n = 100_000;
    let series: Vec<f64> = (0..n).map(|i| (i as f64 * 0.618_033_988_749_895).fract()).collect();
    let se = batch_means_se(&series, 50).unwrap();
    assert!(se < (1.0f64 / 12.0 / n as f64).sqrt() * 3.0, "{se}");
}

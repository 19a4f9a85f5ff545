use pnp_core::diagnostics::WelfordAccumulator;
use pnp_core::mirror::MirrorMap;
use pnp_core::oracle::{quadrature_moments, GridAxis};
use pnp_core::potential::{DataTerm, GammaTarget, GaussianTarget};
use pnp_core::priors::{DenoiserHandle, GaussianPrior, NoiseScale, TweedieScore, ZeroScore};
use pnp_core::samplers::{run_chain, skrock_coeffs, BoxConstraint, ChainConfig, KernelChoice, SampleSink, Target};
use pnp_core::{ImageTensor, Shape};
use proptest::prelude::*;

fn chain(
    kernel: KernelChoice,
    data: &dyn DataTerm,
    prior: &mut dyn pnp_core::priors::PriorScore,
    constraint: BoxConstraint,
    x0: ImageTensor,
    cfg: &ChainConfig,
    sink: &mut dyn SampleSink,
) -> pnp_core::samplers::ChainReport {
    let mut target = Target {
        data,
        prior,
        constraint,
        mirror: MirrorMap::Burg,
    };
    run_chain(kernel, &mut target, x0, cfg, sink).unwrap()
}

fn moments(kernel: KernelChoice, data: &dyn DataTerm, lo: f64, hi: f64, x0: f64, delta: f64, n: usize) -> (f64, f64) {
    let cfg = ChainConfig {
        delta,
        n_iter: n,
        burn_in: n / 50,
        seed: 17,
        ..ChainConfig::default()
    };
    let mut acc = WelfordAccumulator::new(Shape::vector(1));
    chain(
        kernel,
        data,
        &mut ZeroScore,
        BoxConstraint::new(lo, hi).unwrap(),
        ImageTensor::vector(&[x0]),
        &cfg,
        &mut acc,
    );
    (acc.mean()[0], acc.variance()[0])
}

/// On a Gaussian target one SKROCK step is linear, `X' = aX + bZ`, so its
/// stationary variance is exactly `b²/(1 − a²)`.
fn skrock_linear_variance(s: usize, eta: f64, delta: f64, precision: f64) -> f64 {
    let c = skrock_coeffs(s, eta).unwrap();
    let n = (2.0 * delta).sqrt();
    let drift = |(a, b): (f64, f64), mu: f64| (-mu * delta * precision * a, -mu * delta * precision * b);
    let w1 = (1.0, c.nu[1] * n);
    let d1 = drift(w1, c.mu[1]);
    let mut prev = (1.0, 0.0);
    let mut cur = (1.0 + d1.0, d1.1 + c.k[1] * n);
    for j in 2..=s {
        let d = drift(cur, c.mu[j]);
        let next = (
            d.0 + c.nu[j] * cur.0 + c.k[j] * prev.0,
            d.1 + c.nu[j] * cur.1 + c.k[j] * prev.1,
        );
        prev = cur;
        cur = next;
    }
    cur.1 * cur.1 / (1.0 - cur.0 * cur.0)
}

#[test]
fn skrock_samples_a_gaussian_with_a_large_step() {
    // δ·L = 10, far beyond the ULA stability limit of 2.
    let target = GaussianTarget::new(1.0, 0.5).unwrap();
    let (m, v) = moments(KernelChoice::RpnpSkrock, &target, -1e6, 1e6, 0.0, 5.0, 200_000);
    let expected = skrock_linear_variance(10, 0.05, 5.0, 2.0);
    assert!((expected / 0.5 - 1.0).abs() < 0.15, "{expected}");
    assert!((m - 1.0).abs() < 0.03, "mean {m}");
    assert!((v / expected - 1.0).abs() < 0.05, "variance {v} vs {expected}");
}

#[test]
fn mla_gamma_moments_at_small_scale() {
    let target = GammaTarget::new(4.0, 4.0).unwrap();
    let (m, v) = moments(KernelChoice::PnpMla, &target, 0.0, 1e6, 1.0, 2e-3, 300_000);
    assert!((m - 1.0).abs() < 0.05, "mean {m}");
    assert!((v / 0.25 - 1.0).abs() < 0.12, "variance {v}");
}

#[test]
fn reflected_ula_matches_truncated_gaussian() {
    let target = GaussianTarget::new(0.2, 1.0).unwrap();
    let quad = quadrature_moments(&[GridAxis::new(0.0, 1.0, 2001).hard_lower().hard_upper()], |p| {
        -0.5 * (p[0] - 0.2).powi(2)
    })
    .unwrap();
    let (m, v) = moments(KernelChoice::RpnpUla, &target, 0.0, 1.0, 0.5, 0.01, 300_000);
    assert!((m - quad.mean[0]).abs() < 0.01, "mean {m} vs {}", quad.mean[0]);
    assert!(
        (v - quad.covariance[0]).abs() < 0.01,
        "variance {v} vs {}",
        quad.covariance[0]
    );
}

#[test]
fn plug_and_play_score_shifts_the_posterior() {
    // Flat data term plus a Gaussian prior smoothed by ε: N(0.3, v + ε).
    let (mean, var, eps) = (0.3, 0.04, 0.01);
    let prior = GaussianPrior::new(mean, var).unwrap();
    let mut score = TweedieScore::new(DenoiserHandle::gaussian(prior, NoiseScale::Epsilon(eps)), None).unwrap();
    let flat = GaussianTarget::new(0.0, 1e12).unwrap();
    let cfg = ChainConfig {
        delta: 0.005,
        n_iter: 200_000,
        burn_in: 2_000,
        seed: 3,
        ..ChainConfig::default()
    };
    let mut acc = WelfordAccumulator::new(Shape::vector(3));
    chain(
        KernelChoice::RpnpUla,
        &flat,
        &mut score,
        BoxConstraint::new(-10.0, 10.0).unwrap(),
        ImageTensor::vector(&[0.0, 0.5, 1.0]),
        &cfg,
        &mut acc,
    );
    for i in 0..3 {
        assert!((acc.mean()[i] - mean).abs() < 0.02, "{}", acc.mean()[i]);
        assert!(
            (acc.variance()[i] / (var + eps) - 1.0).abs() < 0.1,
            "{}",
            acc.variance()[i]
        );
    }
}

struct Bounds {
    lo: f64,
    hi: f64,
}

impl SampleSink for Bounds {
    fn record(&mut self, _: usize, _: u64, x: &ImageTensor) -> pnp_core::Result<()> {
        self.lo = self.lo.min(x.min());
        self.hi = self.hi.max(x.max());
        Ok(())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn box_kernels_stay_feasible(
        k in prop::sample::select(vec![KernelChoice::RpnpUla, KernelChoice::PpnpUla, KernelChoice::RpnpSkrock]),
        delta in 1e-3f64..0.5,
        seed in any::<u64>(),
    ) {
        let target = GaussianTarget::new(2.0, 0.1).unwrap();
        let cfg = ChainConfig { delta, n_iter: 500, seed, ..ChainConfig::default() };
        let mut b = Bounds { lo: f64::INFINITY, hi: f64::NEG_INFINITY };
        chain(k, &target, &mut ZeroScore, BoxConstraint::new(0.0, 1.0).unwrap(),
              ImageTensor::vector(&[0.5, 0.1]), &cfg, &mut b);
        prop_assert!(b.lo >= 0.0 && b.hi <= 1.0, "{k}: [{}, {}]", b.lo, b.hi);
    }

    #[test]
    fn same_seed_same_chain(k in prop::sample::select(vec![KernelChoice::RpnpUla, KernelChoice::PnpMla]), seed in any::<u64>()) {
        let target = GammaTarget::new(3.0, 2.0).unwrap();
        let run = |index: u64| {
            let cfg = ChainConfig { delta: 1e-2, n_iter: 200, seed, chain_index: index, ..ChainConfig::default() };
            let mut samples: Vec<ImageTensor> = Vec::new();
            let r = chain(k, &target, &mut ZeroScore, BoxConstraint::new(0.0, 50.0).unwrap(),
                          ImageTensor::vector(&[1.0]), &cfg, &mut samples);
            (r, samples)
        };
        let (a, sa) = run(0);
        let (b, sb) = run(0);
        let (_, sc) = run(1);
        prop_assert!(a.same_outcome(&b));
        prop_assert_eq!(&sa, &sb);
        prop_assert_ne!(&sa, &sc);
    }
}

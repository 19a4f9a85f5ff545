//! One iteration of each chain kernel.
//!
//! Every step has a `*_with_noise` form that takes the Gaussian draw
//! explicitly, which is what the fixed-point tests use, and a plain form
//! that draws it from the chain state.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mirror::MirrorMap;
use crate::potential::DataTerm;
use crate::priors::PriorScore;
use crate::samplers::{BoxConstraint, ChainConfig, ChainState, SkrockCoeffs};
use crate::tensor::ImageTensor;

/// The posterior seen by a kernel: likelihood, prior score and geometry.
pub struct Target<'a> {
    pub data: &'a dyn DataTerm,
    pub prior: &'a mut dyn PriorScore,
    pub constraint: BoxConstraint,
    pub mirror: MirrorMap,
}

impl Target<'_> {
    /// `(∇log p(y|x), ∇log p(x))` with the prior score unweighted.
    fn parts(&mut self, x: &ImageTensor) -> Result<(ImageTensor, ImageTensor)> {
        let g = self.data.grad_log(x)?;
        let s = self.prior.score(x)?;
        s.ensure_shape(x.shape(), "prior score")?;
        check_finite(&g, "likelihood gradient")?;
        check_finite(&s, "prior score")?;
        Ok((g, s))
    }
}

fn check_finite(x: &ImageTensor, what: &str) -> Result<()> {
    match x.first_non_finite() {
        None => Ok(()),
        Some(i) => Err(Error::NonFinite(format!("{what} (entry {i} = {})", x[i]))),
    }
}

pub fn standard_normal(rng: &mut ChaCha8Rng, like: &ImageTensor) -> ImageTensor {
    ImageTensor::from_fn(like.shape(), |_| rng.sample(StandardNormal))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Boundary {
    Reflect,
    Project,
}

fn ula_update(
    x: &ImageTensor,
    z: &ImageTensor,
    target: &mut Target<'_>,
    cfg: &ChainConfig,
    boundary: Boundary,
) -> Result<ImageTensor> {
    let (g, s) = target.parts(x)?;
    let delta = cfg.delta;
    let noise = (2.0 * delta).sqrt();
    let mut proposal = x.clone();
    proposal.axpy(delta, &g);
    proposal.axpy(delta * cfg.rho, &s);
    proposal.axpy(noise, z);
    check_finite(&proposal, "proposal")?;
    Ok(match boundary {
        Boundary::Reflect => target.constraint.reflect(&proposal),
        Boundary::Project => target.constraint.project(&proposal),
    })
}

pub fn rpnp_ula_with_noise(
    x: &ImageTensor,
    z: &ImageTensor,
    target: &mut Target<'_>,
    cfg: &ChainConfig,
) -> Result<ImageTensor> {
    ula_update(x, z, target, cfg, Boundary::Reflect)
}

pub fn ppnp_ula_with_noise(
    x: &ImageTensor,
    z: &ImageTensor,
    target: &mut Target<'_>,
    cfg: &ChainConfig,
) -> Result<ImageTensor> {
    ula_update(x, z, target, cfg, Boundary::Project)
}

pub fn step_rpnp_ula(state: &mut ChainState, target: &mut Target<'_>, cfg: &ChainConfig) -> Result<()> {
    let z = standard_normal(&mut state.rng, &state.x);
    state.x = rpnp_ula_with_noise(&state.x, &z, target, cfg)?;
    state.k += 1;
    Ok(())
}

pub fn step_ppnp_ula(state: &mut ChainState, target: &mut Target<'_>, cfg: &ChainConfig) -> Result<()> {
    let z = standard_normal(&mut state.rng, &state.x);
    state.x = ppnp_ula_with_noise(&state.x, &z, target, cfg)?;
    state.k += 1;
    Ok(())
}

/// `μδ(σ∇log p(y|x) + ρ∇log p(x))`, with `σ = −1` when replicating the
/// printed stage signs instead of ascending the log-density.
fn stage_drift(x: &ImageTensor, target: &mut Target<'_>, cfg: &ChainConfig, mu: f64) -> Result<ImageTensor> {
    let (g, s) = target.parts(x)?;
    let lik_sign = if cfg.skrock_box_signs { -1.0 } else { 1.0 };
    let mut out = g.scale(lik_sign * mu * cfg.delta);
    out.axpy(mu * cfg.delta * cfg.rho, &s);
    Ok(out)
}

pub fn rpnp_skrock_with_noise(
    x: &ImageTensor,
    z: &ImageTensor,
    target: &mut Target<'_>,
    cfg: &ChainConfig,
    coeffs: &SkrockCoeffs,
) -> Result<ImageTensor> {
    let c = target.constraint;
    let noise = (2.0 * cfg.delta).sqrt();
    let stage_error = |j: usize, e: Error| match e {
        Error::NonFinite(m) => Error::NonFinite(format!("SKROCK stage {j}: {m}")),
        other => other,
    };

    let mut w1 = x.clone();
    w1.axpy(coeffs.nu[1] * noise, z);
    let w1 = c.reflect(&w1);
    let mut y1 = stage_drift(&w1, target, cfg, coeffs.mu[1]).map_err(|e| stage_error(1, e))?;
    y1.axpy(1.0, x);
    y1.axpy(coeffs.k[1] * noise, z);
    check_finite(&y1, "stage value").map_err(|e| stage_error(1, e))?;

    let mut prev = x.clone();
    let mut cur = c.reflect(&y1);
    for j in 2..=coeffs.s {
        let mut next = stage_drift(&cur, target, cfg, coeffs.mu[j]).map_err(|e| stage_error(j, e))?;
        next.axpy(coeffs.nu[j], &cur);
        next.axpy(coeffs.k[j], &prev);
        check_finite(&next, "stage value").map_err(|e| stage_error(j, e))?;
        prev = cur;
        cur = c.reflect(&next);
    }
    Ok(cur)
}

pub fn step_rpnp_skrock(
    state: &mut ChainState,
    target: &mut Target<'_>,
    cfg: &ChainConfig,
    coeffs: &SkrockCoeffs,
) -> Result<()> {
    let z = standard_normal(&mut state.rng, &state.x);
    state.x = rpnp_skrock_with_noise(&state.x, &z, target, cfg, coeffs)?;
    state.k += 1;
    Ok(())
}

pub fn pnp_mla_with_noise(
    x: &ImageTensor,
    z: &ImageTensor,
    target: &mut Target<'_>,
    cfg: &ChainConfig,
) -> Result<ImageTensor> {
    let mirror = target.mirror;
    let (g, s) = target.parts(x)?;
    let mut dual = mirror.grad(x)?;
    dual.axpy(cfg.delta, &g);
    dual.axpy(cfg.delta * cfg.rho, &s);
    dual.axpy((2.0 * cfg.delta).sqrt(), &mirror.hess_sqrt_noise(x, z)?);
    check_finite(&dual, "dual update")?;
    if mirror == MirrorMap::Burg {
        let floor = -cfg.dual_floor;
        dual.map_inplace(|v| if v >= floor { floor } else { v });
    }
    mirror.grad_conj(&dual)
}

pub fn step_pnp_mla(state: &mut ChainState, target: &mut Target<'_>, cfg: &ChainConfig) -> Result<()> {
    let z = standard_normal(&mut state.rng, &state.x);
    state.x = pnp_mla_with_noise(&state.x, &z, target, cfg)?;
    state.k += 1;
    Ok(())
}

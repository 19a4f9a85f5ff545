//! Chebyshev coefficients of the s-stage stochastic Runge-Kutta-Chebyshev scheme.

use serde::Serialize;

use crate::error::{Error, Result};

/// `T_0(x), …, T_n(x)` by the three-term recurrence.
pub fn chebyshev_t(n: usize, x: f64) -> Vec<f64> {
    let mut t = Vec::with_capacity(n + 1);
    t.push(1.0);
    if n >= 1 {
        t.push(x);
    }
    for j in 2..=n {
        t.push(2.0 * x * t[j - 1] - t[j - 2]);
    }
    t
}

/// `T'_n(x)` via `T'_n = n U_{n−1}`, with `U` from its own recurrence.
pub fn chebyshev_t_derivative(n: usize, x: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let (mut u_prev, mut u) = (1.0, 2.0 * x);
    if n == 1 {
        return 1.0;
    }
    for _ in 2..n {
        let next = 2.0 * x * u - u_prev;
        u_prev = u;
        u = next;
    }
    n as f64 * u
}

/// Stage coefficients; index `j` of `mu`, `nu`, `k` is stage `j` (entry 0 unused).
#[derive(Debug, Clone, Serialize)]
pub struct SkrockCoeffs {
    pub s: usize,
    pub eta: f64,
    /// Stability length `ℓ_s`.
    pub ell_s: f64,
    pub omega0: f64,
    pub omega1: f64,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub k: Vec<f64>,
}

/// `ℓ_s = (s − 0.5)²(2 − 4η/3) − 1.5`
pub fn stability_length(s: usize, eta: f64) -> f64 {
    let s = s as f64;
    (s - 0.5).powi(2) * (2.0 - 4.0 / 3.0 * eta) - 1.5
}

pub fn skrock_coeffs(s: usize, eta: f64) -> Result<SkrockCoeffs> {
    if s < 2 {
        return Err(Error::invalid(format!("SKROCK needs s >= 2 stages, got {s}")));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!("SKROCK damping eta = {eta} must be > 0")));
    }
    let sf = s as f64;
    let omega0 = 1.0 + eta / (sf * sf);
    let t = chebyshev_t(s, omega0);
    let omega1 = t[s] / chebyshev_t_derivative(s, omega0);

    let mut mu = vec![0.0; s + 1];
    let mut nu = vec![0.0; s + 1];
    let mut k = vec![0.0; s + 1];
    mu[1] = omega1 / omega0;
    nu[1] = sf * omega1 / 2.0;
    k[1] = sf * omega1 / omega0;
    for j in 2..=s {
        mu[j] = 2.0 * omega1 * t[j - 1] / t[j];
        nu[j] = 2.0 * omega0 * t[j - 1] / t[j];
        k[j] = 1.0 - nu[j];
    }
    Ok(SkrockCoeffs {
        s,
        eta,
        ell_s: stability_length(s, eta),
        omega0,
        omega1,
        mu,
        nu,
        k,
    })
}

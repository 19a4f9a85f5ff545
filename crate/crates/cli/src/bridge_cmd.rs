//! `bridge-check` exercises an external denoiser; `bridge-serve` is a
//! built-in reference bridge used for testing.

use std::io::{self, BufReader, BufWriter, Write};
use std::time::{Duration, Instant};

use anyhow::{bail, Result};
use clap::ValueEnum;
use pnp_core::bridge::{decode_request, encode_hello, serve, BridgeClient};
use pnp_core::priors::GaussianPrior;
use pnp_core::{ImageTensor, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ServeMode {
    /// Echo the payload.
    Identity,
    /// Closed-form Gaussian-prior MMSE denoiser.
    Gaussian,
    /// Answer with a wrong response magic.
    Corrupt,
    /// Accept requests and never answer.
    Stall,
}

pub fn cmd_bridge_serve(mode: ServeMode, mean: f64, variance: f64) -> Result<()> {
    let stdin = io::stdin();
    let stdout = io::stdout();
    let mut input = BufReader::new(stdin.lock());
    let mut output = BufWriter::new(stdout.lock());
    let prior = GaussianPrior::new(mean, variance)?;
    match mode {
        ServeMode::Identity => serve(&mut input, &mut output, |_, x| Ok(x))?,
        ServeMode::Gaussian => serve(&mut input, &mut output, |eps, x| {
            if eps > 0.0 {
                Ok(prior.denoise(&x, eps))
            } else {
                Err(2)
            }
        })?,
        ServeMode::Corrupt | ServeMode::Stall => {
            output.write_all(&encode_hello())?;
            output.flush()?;
            while let Some((_, x)) = decode_request(&mut input)? {
                if mode == ServeMode::Stall {
                    loop {
                        std::thread::sleep(Duration::from_secs(3600));
                    }
                }
                let mut frame = pnp_core::bridge::encode_response(0, &x);
                frame[..4].copy_from_slice(b"JUNK");
                output.write_all(&frame)?;
                output.flush()?;
            }
        }
    }
    Ok(())
}

pub struct CheckOptions {
    pub command: String,
    pub shape: Shape,
    pub epsilon: f64,
    pub trials: usize,
    pub timeout: Duration,
    pub gaussian: Option<(f64, f64)>,
    pub tolerance: f64,
    pub seed: u64,
}

/// `max|b − a| / max|a|`.
pub fn relative_error(a: &ImageTensor, b: &ImageTensor) -> f64 {
    let scale = a.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.sub(b).as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Sends random tensors through the bridge and checks shape, finiteness and
/// (optionally) agreement with the in-process Gaussian denoiser.
pub fn cmd_bridge_check(opts: &CheckOptions) -> Result<()> {
    let start = Instant::now();
    let mut client = BridgeClient::launch(&opts.command, opts.timeout).map_err(pnp_core::Error::from)?;
    println!("handshake ok in {:.3} s", start.elapsed().as_secs_f64());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let reference = opts.gaussian.map(|(m, v)| GaussianPrior::new(m, v)).transpose()?;
    let mut worst = 0.0f64;
    for trial in 0..opts.trials {
        let x = ImageTensor::from_fn(opts.shape, |_| rng.random::<f64>());
        let t0 = Instant::now();
        let y = client.denoise(&x, opts.epsilon).map_err(pnp_core::Error::from)?;
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        match &reference {
            Some(p) => {
                let err = relative_error(&p.denoise(&x, opts.epsilon), &y);
                worst = worst.max(err);
                println!("trial {trial}: {ms:.2} ms, relative error vs in-process gaussian {err:.3e}");
            }
            None => println!(
                "trial {trial}: {ms:.2} ms, output range [{:.4}, {:.4}]",
                y.min(),
                y.max()
            ),
        }
    }
    if reference.is_some() && worst > opts.tolerance {
        bail!(BridgeMismatch(worst, opts.tolerance));
    }
    println!("bridge ok: {} requests", client.requests());
    Ok(())
}

#[derive(Debug)]
pub struct BridgeMismatch(pub f64, pub f64);

impl std::fmt::Display for BridgeMismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "bridge output differs from the reference by {:.3e} (tolerance {:.1e})",
            self.0, self.1
        )
    }
}

impl std::error::Error for BridgeMismatch {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_is_sup_norm_ratio() {
        let a = ImageTensor::vector(&[1.0, -2.0]);
        let b = ImageTensor::vector(&[1.5, -2.0]);
        assert_eq!(relative_error(&a, &b), 0.25);
        assert_eq!(relative_error(&a, &a), 0.0);
    }
}

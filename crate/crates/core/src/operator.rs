//! Linear forward operators `A` with their adjoints and spectral norms.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::tensor::{ImageTensor, Shape};

/// A linear map between image spaces.
///
/// Implementations are read-only after construction and may be shared
/// across threads.
pub trait ForwardOperator: Send + Sync {
    fn input_shape(&self) -> Shape;

    fn output_shape(&self) -> Shape;

    /// `A x`
    fn apply(&self, x: &ImageTensor) -> Result<ImageTensor>;

    /// `Aᵀ y`
    fn adjoint(&self, y: &ImageTensor) -> Result<ImageTensor>;

    /// `‖AAᵀ‖ = ‖A‖₂²`. The default runs power iteration on `AᵀA`.
    fn norm_sq(&self) -> f64 {
        let est = power_iteration(self, 1e-9, 10_000);
        if !est.converged {
            log::warn!(
                "power iteration hit its cap after {} iterations; norm estimate {}",
                est.iterations,
                est.value
            );
        }
        est.value
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest eigenvalue of `AᵀA` by power iteration, stopping once the
/// relative change drops below `rel_tol` or after `max_iter` rounds.
pub fn power_iteration<A: ForwardOperator + ?Sized>(op: &A, rel_tol: f64, max_iter: usize) -> NormEstimate {
    let shape = op.input_shape();
    // Deterministic, non-degenerate start vector.
    let mut v = ImageTensor::from_fn(shape, |i| 1.0 + 0.5 * ((i as f64) * 0.754_877_666).sin());
    let n0 = v.norm();
    if n0 == 0.0 {
        return NormEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    v = v.scale(1.0 / n0);
    let mut value = 0.0;
    for it in 1..=max_iter {
        let w = match op.apply(&v).and_then(|av| op.adjoint(&av)) {
            Ok(w) => w,
            Err(_) => break,
        };
        let next = w.norm();
        if next == 0.0 {
            return NormEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
            };
        }
        let rel = (next - value).abs() / next;
        value = next;
        v = w.scale(1.0 / next);
        if rel < rel_tol {
            return NormEstimate {
                value,
                iterations: it,
                converged: true,
            };
        }
    }
    NormEstimate {
        value,
        iterations: max_iter,
        converged: false,
    }
}

/// Channel-wise 2D circular convolution, evaluated in the frequency domain.
///
/// The transfer function is computed once for the configured image shape.
pub struct BlurOperator {
    kernel: Kernel,
    shape: Shape,
    transfer: Vec<Complex<f64>>,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for BlurOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlurOperator")
            .field("kernel", &self.kernel)
            .field("shape", &self.shape)
            .finish_non_exhaustive()
    }
}

impl BlurOperator {
    pub fn new(kernel: Kernel, shape: Shape) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::invalid(format!("empty image shape {shape}")));
        }
        let mut planner = FftPlanner::new();
        let row_fwd = planner.plan_fft_forward(shape.width);
        let row_inv = planner.plan_fft_inverse(shape.width);
        let col_fwd = planner.plan_fft_forward(shape.height);
        let col_inv = planner.plan_fft_inverse(shape.height);
        let mut op = Self {
            kernel,
            shape,
            transfer: Vec::new(),
            row_fwd,
            row_inv,
            col_fwd,
            col_inv,
        };
        let mut psf = vec![Complex::new(0.0, 0.0); shape.plane()];
        let (kh, kw) = (op.kernel.height(), op.kernel.width());
        let (ch, cw) = (kh / 2, kw / 2);
        for i in 0..kh {
            for j in 0..kw {
                let r = (i as isize - ch as isize).rem_euclid(shape.height as isize) as usize;
                let c = (j as isize - cw as isize).rem_euclid(shape.width as isize) as usize;
                psf[r * shape.width + c].re += op.kernel.get(i, j);
            }
        }
        op.fft2(&mut psf, false);
        op.transfer = psf;
        Ok(op)
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn transfer(&self) -> &[Complex<f64>] {
        &self.transfer
    }

    fn fft2(&self, buf: &mut [Complex<f64>], inverse: bool) {
        let (h, w) = (self.shape.height, self.shape.width);
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        row.process(buf);
        let mut t = vec![Complex::new(0.0, 0.0); h * w];
        for r in 0..h {
            for c in 0..w {
                t[c * h + r] = buf[r * w + c];
            }
        }
        col.process(&mut t);
        for r in 0..h {
            for c in 0..w {
                buf[r * w + c] = t[c * h + r];
            }
        }
        if inverse {
            let scale = 1.0 / (h * w) as f64;
            buf.iter_mut().for_each(|z| *z *= scale);
        }
    }

    fn filter(&self, x: &ImageTensor, conjugate: bool) -> ImageTensor {
        let plane = self.shape.plane();
        let mut out = Vec::with_capacity(x.len());
        let mut buf = vec![Complex::new(0.0, 0.0); plane];
        for c in 0..self.shape.channels {
            for (b, &v) in buf.iter_mut().zip(x.channel(c)) {
                *b = Complex::new(v, 0.0);
            }
            self.fft2(&mut buf, false);
            for (b, k) in buf.iter_mut().zip(&self.transfer) {
                *b *= if conjugate { k.conj() } else { *k };
            }
            self.fft2(&mut buf, true);
            out.extend(buf.iter().map(|z| z.re));
        }
        ImageTensor::from_raw(out, self.shape)
    }
}

impl ForwardOperator for BlurOperator {
    fn input_shape(&self) -> Shape {
        self.shape
    }

    fn output_shape(&self) -> Shape {
        self.shape
    }

    fn apply(&self, x: &ImageTensor) -> Result<ImageTensor> {
        x.ensure_shape(self.shape, "blur apply")?;
        Ok(self.filter(x, false))
    }

    fn adjoint(&self, y: &ImageTensor) -> Result<ImageTensor> {
        y.ensure_shape(self.shape, "blur adjoint")?;
        Ok(self.filter(y, true))
    }

    /// Exact: the largest squared magnitude of the transfer function.
    fn norm_sq(&self) -> f64 {
        self.transfer.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max)
    }
}

/// `A = I` on a fixed shape.
#[derive(Debug, Clone, Copy)]
pub struct IdentityOperator(Shape);

impl IdentityOperator {
    pub fn new(shape: Shape) -> Self {
        Self(shape)
    }
}

impl ForwardOperator for IdentityOperator {
    fn input_shape(&self) -> Shape {
        self.0
    }

    fn output_shape(&self) -> Shape {
        self.0
    }

    fn apply(&self, x: &ImageTensor) -> Result<ImageTensor> {
        x.ensure_shape(self.0, "identity apply")?;
        Ok(x.clone())
    }

    fn adjoint(&self, y: &ImageTensor) -> Result<ImageTensor> {
        y.ensure_shape(self.0, "identity adjoint")?;
        Ok(y.clone())
    }

    fn norm_sq(&self) -> f64 {
        1.0
    }
}

/// A dense matrix acting on flattened tensors. Useful for tiny problems
/// where a convolution structure is not wanted.
#[derive(Debug, Clone)]
pub struct MatrixOperator {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    input: Shape,
    output: Shape,
}

impl MatrixOperator {
    /// `entries` is row-major with `output.len()` rows and `input.len()` columns.
    pub fn new(entries: Vec<f64>, input: Shape, output: Shape) -> Result<Self> {
        let (rows, cols) = (output.len(), input.len());
        if entries.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix has {} entries, expected {rows}x{cols}",
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix operator entries".into()));
        }
        Ok(Self {
            rows,
            cols,
            entries,
            input,
            output,
        })
    }

    pub fn identity(shape: Shape) -> Self {
        let n = shape.len();
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self {
            rows: n,
            cols: n,
            entries,
            input: shape,
            output: shape,
        }
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.cols + col]
    }
}

impl ForwardOperator for MatrixOperator {
    fn input_shape(&self) -> Shape {
        self.input
    }

    fn output_shape(&self) -> Shape {
        self.output
    }

    fn apply(&self, x: &ImageTensor) -> Result<ImageTensor> {
        x.ensure_shape(self.input, "matrix apply")?;
        let xs = x.as_slice();
        let out = self
            .entries
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(xs).map(|(a, b)| a * b).sum())
            .collect();
        Ok(ImageTensor::from_raw(out, self.output))
    }

    fn adjoint(&self, y: &ImageTensor) -> Result<ImageTensor> {
        y.ensure_shape(self.output, "matrix adjoint")?;
        let mut out = vec![0.0; self.cols];
        for (row, &yi) in self.entries.chunks_exact(self.cols).zip(y.as_slice()) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
        debug_assert_eq!(self.rows, y.len());
        Ok(ImageTensor::from_raw(out, self.input))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: Shape, rng: &mut ChaCha8Rng) -> ImageTensor {
        ImageTensor::from_fn(shape, |_| rng.random::<f64>())
    }

    fn random_kernel(n: usize, rng: &mut ChaCha8Rng) -> Kernel {
        let data = (0..n * n).map(|_| rng.random::<f64>()).collect();
        Kernel::new(data, n, n).unwrap().normalized().unwrap()
    }

    /// Direct spatial circular convolution.
    fn convolve_direct(k: &Kernel, x: &ImageTensor) -> ImageTensor {
        let s = x.shape();
        let (h, w) = (s.height as isize, s.width as isize);
        let (ch, cw) = ((k.height() / 2) as isize, (k.width() / 2) as isize);
        let mut out = ImageTensor::zeros(s);
        for c in 0..s.channels {
            for r in 0..h {
                for q in 0..w {
                    let mut acc = 0.0;
                    for i in 0..k.height() as isize {
                        for j in 0..k.width() as isize {
                            let rr = (r - (i - ch)).rem_euclid(h) as usize;
                            let qq = (q - (j - cw)).rem_euclid(w) as usize;
                            acc += k.get(i as usize, j as usize) * x.at(c, rr, qq);
                        }
                    }
                    out[s.flat_index(c, r as usize, q as usize)] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shape = Shape::new(2, 6, 7);
        let op = BlurOperator::new(Kernel::delta(), shape).unwrap();
        let x = random_tensor(shape, &mut rng);
        let ax = op.apply(&x).unwrap();
        let aty = op.adjoint(&x).unwrap();
        for i in 0..x.len() {
            assert!((ax[i] - x[i]).abs() < 1e-12);
            assert!((aty[i] - x[i]).abs() < 1e-12);
        }
        assert!((op.norm_sq() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_kernel_preserves_constants() {
        let shape = Shape::new(1, 8, 8);
        let op = BlurOperator::new(Kernel::uniform(3), shape).unwrap();
        let x = ImageTensor::filled(shape, 0.37);
        let ax = op.apply(&x).unwrap();
        assert!(ax.as_slice().iter().all(|v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn fft_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (h, w, c, kn) in [(8, 8, 1, 3), (5, 7, 2, 3), (16, 16, 3, 5), (4, 4, 1, 7), (1, 9, 1, 3)] {
            let shape = Shape::new(c, h, w);
            let k = random_kernel(kn, &mut rng);
            let op = BlurOperator::new(k.clone(), shape).unwrap();
            let x = random_tensor(shape, &mut rng);
            let fast = op.apply(&x).unwrap();
            let slow = convolve_direct(&k, &x);
            for i in 0..x.len() {
                assert!((fast[i] - slow[i]).abs() < 1e-10, "{h}x{w} k{kn}");
            }
            let adj_direct = convolve_direct(&k.flipped(), &x);
            let adj = op.adjoint(&x).unwrap();
            for i in 0..x.len() {
                assert!((adj[i] - adj_direct[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn symmetric_kernel_is_self_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shape = Shape::new(1, 8, 8);
        let op = BlurOperator::new(Kernel::gaussian(5, 1.2).unwrap(), shape).unwrap();
        let x = random_tensor(shape, &mut rng);
        let a = op.apply(&x).unwrap();
        let b = op.adjoint(&x).unwrap();
        for i in 0..x.len() {
            assert!((a[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoint_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for shape in [Shape::new(1, 8, 8), Shape::new(3, 16, 16)] {
            for _ in 0..100 {
                let op = BlurOperator::new(random_kernel(3, &mut rng), shape).unwrap();
                let x = random_tensor(shape, &mut rng);
                let y = random_tensor(shape, &mut rng);
                let lhs = op.apply(&x).unwrap().dot(&y);
                let rhs = x.dot(&op.adjoint(&y).unwrap());
                assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()));
            }
        }
    }

    #[test]
    fn norm_of_normalized_kernel_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shape = Shape::new(1, 12, 10);
        let k = random_kernel(5, &mut rng);
        let op = BlurOperator::new(k.clone(), shape).unwrap();
        assert!((op.norm_sq() - 1.0).abs() < 1e-12);
        let flipped = BlurOperator::new(k.flipped(), shape).unwrap();
        assert!((op.norm_sq() - flipped.norm_sq()).abs() < 1e-12);
        let doubled = BlurOperator::new(k.scaled(2.0), shape).unwrap();
        assert!((doubled.norm_sq() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_agrees_with_spectral_norm() {
        let shape = Shape::new(1, 8, 8);
        let op = BlurOperator::new(Kernel::gaussian(3, 0.8).unwrap(), shape).unwrap();
        let est = power_iteration(&op, 1e-12, 10_000);
        assert!(est.converged);
        assert!((est.value - op.norm_sq()).abs() < 1e-8);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let op = BlurOperator::new(Kernel::delta(), Shape::new(1, 4, 4)).unwrap();
        let err = op.apply(&ImageTensor::zeros(Shape::new(1, 4, 5))).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(1, 4, 4)") && msg.contains("(1, 4, 5)"), "{msg}");
    }

    #[test]
    fn matrix_operator_adjoint_and_norm() {
        let op = MatrixOperator::new(vec![0.7, 0.3, 0.2, 0.8], Shape::vector(2), Shape::vector(2)).unwrap();
        let x = ImageTensor::vector(&[1.0, 2.0]);
        let y = ImageTensor::vector(&[-0.5, 3.0]);
        let lhs = op.apply(&x).unwrap().dot(&y);
        let rhs = x.dot(&op.adjoint(&y).unwrap());
        assert!((lhs - rhs).abs() < 1e-14);
        // AᵀA = [[0.53, 0.37], [0.37, 0.73]]; top eigenvalue 0.63 + sqrt(0.01 + 0.1369)
        let expected = 0.63 + (0.01f64 + 0.1369).sqrt();
        assert!((op.norm_sq() - expected).abs() < 1e-7);
    }
}

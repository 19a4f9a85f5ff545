//! Point-spread functions: construction, normalization and file loading.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// A 2D center-anchored kernel with odd support.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    data: Vec<f64>,
    height: usize,
    width: usize,
}

impl Kernel {
    /// Builds a kernel from row-major entries. Even dimensions are zero-padded
    /// at the bottom/right to odd support.
    pub fn new(data: Vec<f64>, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::invalid(format!(
                "kernel of {} entries cannot be {height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel entries".into()));
        }
        let ph = height | 1;
        let pw = width | 1;
        if ph == height && pw == width {
            return Ok(Self { data, height, width });
        }
        let mut padded = vec![0.0; ph * pw];
        for r in 0..height {
            padded[r * pw..r * pw + width].copy_from_slice(&data[r * width..(r + 1) * width]);
        }
        Ok(Self {
            data: padded,
            height: ph,
            width: pw,
        })
    }

    pub fn delta() -> Self {
        Self {
            data: vec![1.0],
            height: 1,
            width: 1,
        }
    }

    /// `n×n` box filter with entries `1/n²`.
    pub fn uniform(n: usize) -> Self {
        let n = n.max(1) | 1;
        Self {
            data: vec![1.0 / (n * n) as f64; n * n],
            height: n,
            width: n,
        }
    }

    /// Normalized isotropic Gaussian on an `n×n` grid.
    pub fn gaussian(n: usize, sigma: f64) -> Result<Self> {
        if sigma <= 0.0 || !sigma.is_finite() {
            return Err(Error::invalid(format!("gaussian kernel sigma {sigma}")));
        }
        let n = n.max(1) | 1;
        let c = (n / 2) as f64;
        let data = (0..n * n)
            .map(|i| {
                let (r, q) = ((i / n) as f64 - c, (i % n) as f64 - c);
                (-(r * r + q * q) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        Self::new(data, n, n)?.normalized()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_normalized(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0) && (self.sum() - 1.0).abs() < 1e-12
    }

    /// Rescales to unit sum. Negative entries are rejected.
    pub fn normalized(&self) -> Result<Self> {
        if let Some(v) = self.data.iter().find(|&&v| v < 0.0) {
            return Err(Error::invalid(format!("negative kernel entry {v}")));
        }
        let total = self.sum();
        if total <= 0.0 {
            return Err(Error::invalid("kernel has zero total mass"));
        }
        Ok(self.scaled(1.0 / total))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * factor).collect(),
            height: self.height,
            width: self.width,
        }
    }

    /// Spatial flip in both axes; the adjoint kernel.
    pub fn flipped(&self) -> Self {
        Self {
            data: self.data.iter().rev().copied().collect(),
            height: self.height,
            width: self.width,
        }
    }
}

/// Reads a kernel from a delimited text grid or an 8-bit grayscale image,
/// normalized to unit sum.
pub fn load_kernel(path: impl AsRef<Path>) -> Result<Kernel> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let kernel = match parse_text_grid(&bytes) {
        Some(grid) => grid.map_err(|reason| Error::Parse {
            path: path.to_path_buf(),
            reason,
        })?,
        None => {
            let img = image::load_from_memory(&bytes)?.into_luma8();
            let (w, h) = img.dimensions();
            let data = img.pixels().map(|p| f64::from(p.0[0])).collect();
            Kernel::new(data, h as usize, w as usize)?
        }
    };
    if kernel.sum() == 0.0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            reason: "kernel is all zeros".into(),
        });
    }
    kernel.normalized()
}

/// Writes the kernel as a whitespace-delimited grid.
pub fn save_kernel(kernel: &Kernel, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for r in 0..kernel.height {
        let row: Vec<String> = (0..kernel.width).map(|c| format!("{:e}", kernel.get(r, c))).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// `None` when the bytes are not text at all (probably an image).
fn parse_text_grid(bytes: &[u8]) -> Option<std::result::Result<Kernel, String>> {
    let text = std::str::from_utf8(bytes).ok()?;
    // PGM headers are ASCII too; leave them to the image decoder.
    if text.starts_with("P2") || text.starts_with("P5") {
        return None;
    }
    let rows: Vec<Vec<&str>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .collect()
        })
        .collect();
    if rows.is_empty() {
        return Some(Err("no rows".into()));
    }
    let width = rows[0].len();
    let mut data = Vec::with_capacity(rows.len() * width);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Some(Err(format!("row {i} has {} entries, expected {width}", row.len())));
        }
        for tok in row {
            match tok.parse::<f64>() {
                Ok(v) => data.push(v),
                Err(_) => return Some(Err(format!("bad number {tok:?} on row {i}"))),
            }
        }
    }
    Some(Kernel::new(data, rows.len(), width).map_err(|e| e.to_string()))
}

//! Piecewise-constant test images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ImageTensor, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Synthetic {
    Constant {
        value: f64,
    },
    /// Two-pixel-wide bars on a dark background: three horizontal and two
    /// vertical, laid out on a 32-pixel reference grid and rescaled.
    Bars {
        low: f64,
        high: f64,
    },
    Checkerboard {
        low: f64,
        high: f64,
        block: usize,
    },
    /// A bright square with a dark square hole.
    Squares {
        low: f64,
        high: f64,
    },
}

impl Synthetic {
    /// Pixel levels the image is built from, in ascending order.
    pub fn levels(&self) -> Vec<f64> {
        match *self {
            Synthetic::Constant { value } => vec![value],
            Synthetic::Bars { low, high }
            | Synthetic::Checkerboard { low, high, .. }
            | Synthetic::Squares { low, high } => vec![low.min(high), low.max(high)],
        }
    }

    pub fn render(&self, height: usize, width: usize) -> Result<ImageTensor> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!("synthetic image size {height}x{width}")));
        }
        if self.levels().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite level in {self:?}")));
        }
        let shape = Shape::new(1, height, width);
        // Reference coordinates on a 32x32 grid.
        let rr = |r: usize| r * 32 / height;
        let cc = |c: usize| c * 32 / width;
        Ok(match *self {
            Synthetic::Constant { value } => ImageTensor::filled(shape, value),
            Synthetic::Bars { low, high } => ImageTensor::from_fn(shape, |i| {
                let (r, c) = (rr(i / width), cc(i % width));
                let hbar = [4, 5, 14, 15, 24, 25].contains(&r) && (3..29).contains(&c);
                let vbar = [8, 9, 20, 21].contains(&c) && (3..29).contains(&r);
                if hbar || vbar {
                    high
                } else {
                    low
                }
            }),
            Synthetic::Checkerboard { low, high, block } => {
                if block == 0 {
                    return Err(Error::invalid("checkerboard block must be >= 1"));
                }
                ImageTensor::from_fn(shape, |i| {
                    if ((i / width) / block + (i % width) / block).is_multiple_of(2) {
                        low
                    } else {
                        high
                    }
                })
            }
            Synthetic::Squares { low, high } => ImageTensor::from_fn(shape, |i| {
                let (r, c) = (rr(i / width), cc(i % width));
                let outer = (8..24).contains(&r) && (8..24).contains(&c);
                let hole = (13..19).contains(&r) && (13..19).contains(&c);
                if outer && !hole {
                    high
                } else {
                    low
                }
            }),
        })
    }
}

/// Pixels whose 8-neighbourhood (clipped at the border) contains a different
/// value.
pub fn edge_mask(x: &ImageTensor) -> Vec<bool> {
    let s = x.shape();
    let mut mask = vec![false; s.len()];
    for ch in 0..s.channels {
        for r in 0..s.height {
            for c in 0..s.width {
                let v = x.at(ch, r, c);
                let rows = r.saturating_sub(1)..(r + 2).min(s.height);
                mask[s.flat_index(ch, r, c)] = rows
                    .into_iter()
                    .any(|r2| (c.saturating_sub(1)..(c + 2).min(s.width)).any(|c2| x.at(ch, r2, c2) != v));
            }
        }
    }
    mask
}

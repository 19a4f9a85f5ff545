//! Random dihedral transforms for equivariant denoising.
//!
//! Each call to [`EquivarianceGroup::equivariant_denoise`] draws one element
//! `g` of the symmetry group of the square and returns `T_g⁻¹ D(T_g x)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::priors::DenoiserHandle;
use crate::tensor::{ImageTensor, Shape};

/// Elements of the dihedral group of the square acting on image planes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dihedral {
    Identity,
    /// Counter-clockwise quarter turn.
    Rot90,
    Rot180,
    Rot270,
    /// Mirror left-right.
    FlipH,
    /// Mirror top-bottom.
    FlipV,
    Transpose,
    AntiTranspose,
}

impl Dihedral {
    pub const ALL: [Dihedral; 8] = [
        Dihedral::Identity,
        Dihedral::Rot90,
        Dihedral::Rot180,
        Dihedral::Rot270,
        Dihedral::FlipH,
        Dihedral::FlipV,
        Dihedral::Transpose,
        Dihedral::AntiTranspose,
    ];

    /// Elements that map any `h × w` grid onto itself.
    pub const FLIPS: [Dihedral; 4] = [Dihedral::Identity, Dihedral::FlipH, Dihedral::FlipV, Dihedral::Rot180];

    pub fn inverse(self) -> Self {
        match self {
            Dihedral::Rot90 => Dihedral::Rot270,
            Dihedral::Rot270 => Dihedral::Rot90,
            other => other,
        }
    }

    pub fn swaps_axes(self) -> bool {
        matches!(
            self,
            Dihedral::Rot90 | Dihedral::Rot270 | Dihedral::Transpose | Dihedral::AntiTranspose
        )
    }

    pub fn output_shape(self, s: Shape) -> Shape {
        if self.swaps_axes() {
            Shape::new(s.channels, s.width, s.height)
        } else {
            s
        }
    }

    /// Destination of pixel `(r, c)` on an `h × w` plane.
    fn target(self, r: usize, c: usize, h: usize, w: usize) -> (usize, usize) {
        match self {
            Dihedral::Identity => (r, c),
            Dihedral::Rot90 => (w - 1 - c, r),
            Dihedral::Rot180 => (h - 1 - r, w - 1 - c),
            Dihedral::Rot270 => (c, h - 1 - r),
            Dihedral::FlipH => (r, w - 1 - c),
            Dihedral::FlipV => (h - 1 - r, c),
            Dihedral::Transpose => (c, r),
            Dihedral::AntiTranspose => (w - 1 - c, h - 1 - r),
        }
    }

    /// `T_g x`, a pure permutation of entries applied to every channel.
    pub fn apply(self, x: &ImageTensor) -> ImageTensor {
        let s = x.shape();
        let out_shape = self.output_shape(s);
        let mut out = vec![0.0; s.len()];
        for ch in 0..s.channels {
            for r in 0..s.height {
                for c in 0..s.width {
                    let (rr, cc) = self.target(r, c, s.height, s.width);
                    out[out_shape.flat_index(ch, rr, cc)] = x.at(ch, r, c);
                }
            }
        }
        ImageTensor::from_raw(out, out_shape)
    }

    /// Group product: `(self ∘ other)`, i.e. apply `other` first.
    pub fn compose(self, other: Dihedral) -> Dihedral {
        // Compose by tracking a 2×3 probe plane; small and exact.
        let probe = ImageTensor::from_fn(Shape::new(1, 2, 3), |i| i as f64);
        let result = self.apply(&other.apply(&probe));
        Dihedral::ALL
            .into_iter()
            .find(|g| g.apply(&probe) == result)
            .expect("dihedral group is closed")
    }
}

#[derive(Debug, Clone)]
pub struct EquivarianceGroup {
    elements: Vec<Dihedral>,
    rng: ChaCha8Rng,
}

impl EquivarianceGroup {
    /// The full eight-element group.
    pub fn dihedral(seed: u64) -> Self {
        Self::with_elements(Dihedral::ALL.to_vec(), seed)
    }

    pub fn with_elements(elements: Vec<Dihedral>, seed: u64) -> Self {
        let elements = if elements.is_empty() {
            vec![Dihedral::Identity]
        } else {
            elements
        };
        Self {
            elements,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn elements(&self) -> &[Dihedral] {
        &self.elements
    }

    /// Draws uniformly from the elements usable on `shape`. On non-square
    /// grids only the axis-preserving elements are eligible.
    pub fn draw(&mut self, shape: Shape) -> Dihedral {
        if shape.is_square() {
            self.elements[self.rng.random_range(0..self.elements.len())]
        } else {
            let eligible: Vec<Dihedral> = self.elements.iter().copied().filter(|g| !g.swaps_axes()).collect();
            if eligible.is_empty() {
                Dihedral::Identity
            } else {
                eligible[self.rng.random_range(0..eligible.len())]
            }
        }
    }

    /// One-sample Monte Carlo estimate of the group-averaged denoiser.
    pub fn equivariant_denoise(&mut self, denoiser: &mut DenoiserHandle, x: &ImageTensor) -> Result<ImageTensor> {
        let g = self.draw(x.shape());
        let out = denoiser.denoise(&g.apply(x))?;
        Ok(g.inverse().apply(&out))
    }
}

//! Tensor persistence: 8-bit images for viewing, raw `f64` dumps with a
//! TOML sidecar for lossless round trips.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ImageTensor, Shape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawHeader {
    pub shape: Shape,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

fn with_ext(base: &Path, ext: &str) -> PathBuf {
    let mut name = base.as_os_str().to_owned();
    name.push(".");
    name.push(ext);
    PathBuf::from(name)
}

/// Writes `<base>.f64` (little-endian reals) and `<base>.toml` (shape and
/// free-form metadata).
pub fn save_raw(base: &Path, tensor: &ImageTensor, meta: &BTreeMap<String, String>) -> Result<()> {
    let bytes: Vec<u8> = tensor.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(with_ext(base, "f64"), bytes)?;
    let header = RawHeader {
        shape: tensor.shape(),
        meta: meta.clone(),
    };
    let text = toml::to_string(&header).map_err(|e| Error::invalid(e.to_string()))?;
    fs::write(with_ext(base, "toml"), text)?;
    Ok(())
}

pub fn load_raw(base: &Path) -> Result<(ImageTensor, RawHeader)> {
    let header_path = with_ext(base, "toml");
    let text = fs::read_to_string(&header_path)?;
    let header: RawHeader = toml::from_str(&text).map_err(|e| Error::Parse {
        path: header_path.clone(),
        reason: e.to_string(),
    })?;
    let data_path = with_ext(base, "f64");
    let bytes = fs::read(&data_path)?;
    if bytes.len() != header.shape.len() * 8 {
        return Err(Error::Parse {
            path: data_path,
            reason: format!(
                "{} bytes for shape {} ({} expected)",
                bytes.len(),
                header.shape,
                header.shape.len() * 8
            ),
        });
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((ImageTensor::new(data, header.shape)?, header))
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Saves a 1- or 3-channel tensor as an 8-bit image (format from the
/// extension, PNG or PGM/PPM). Values are clipped to `[0, 1]`.
pub fn save_image(path: &Path, tensor: &ImageTensor) -> Result<()> {
    let s = tensor.shape();
    let (w, h) = (s.width as u32, s.height as u32);
    match s.channels {
        1 => {
            let img = image::GrayImage::from_fn(w, h, |x, y| {
                image::Luma([to_byte(tensor.at(0, y as usize, x as usize))])
            });
            img.save(path)?;
        }
        3 => {
            let img = image::RgbImage::from_fn(w, h, |x, y| {
                let (r, c) = (y as usize, x as usize);
                image::Rgb([
                    to_byte(tensor.at(0, r, c)),
                    to_byte(tensor.at(1, r, c)),
                    to_byte(tensor.at(2, r, c)),
                ])
            });
            img.save(path)?;
        }
        n => return Err(Error::invalid(format!("cannot write {n}-channel tensor as an image"))),
    }
    Ok(())
}

/// Loads an image as a tensor with values in `[0, 1]`. Grayscale inputs give
/// one channel, everything else three.
pub fn load_image(path: &Path) -> Result<ImageTensor> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = matches!(
        img.color(),
        image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8 | image::ColorType::La16
    );
    if gray {
        let g = img.into_luma8();
        let data = g.pixels().map(|p| f64::from(p.0[0]) / 255.0).collect();
        ImageTensor::new(data, Shape::new(1, h, w))
    } else {
        let rgb = img.into_rgb8();
        let shape = Shape::new(3, h, w);
        Ok(ImageTensor::from_fn(shape, |i| {
            let (c, r, q) = shape.unflatten(i);
            f64::from(rgb.get_pixel(q as u32, r as u32).0[c]) / 255.0
        }))
    }
}

/// Affine rescale of a map to `[0, 1]` for display; constant maps become 0.
pub fn normalize_for_display(t: &ImageTensor) -> ImageTensor {
    let (lo, hi) = (t.min(), t.max());
    if hi > lo {
        t.map(|v| (v - lo) / (hi - lo))
    } else {
        ImageTensor::zeros(t.shape())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("x");
        let t = ImageTensor::from_fn(Shape::new(2, 3, 4), |i| (i as f64).sqrt() * 1e-7 + 1.0 / 3.0);
        let mut meta = BTreeMap::new();
        meta.insert("alpha".to_string(), "20".to_string());
        save_raw(&base, &t, &meta).unwrap();
        let (back, header) = load_raw(&base).unwrap();
        assert_eq!(back, t);
        assert_eq!(header.meta["alpha"], "20");
    }

    #[test]
    fn truncated_dump_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("x");
        save_raw(&base, &ImageTensor::zeros(Shape::vector(4)), &BTreeMap::new()).unwrap();
        fs::write(with_ext(&base, "f64"), [0u8; 12]).unwrap();
        assert!(matches!(load_raw(&base), Err(Error::Parse { .. })));
    }

    #[test]
    fn png_clips_and_scales() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let t = ImageTensor::vector(&[-1.0, 0.0, 0.5, 1.0, 2.0]);
        save_image(&path, &t).unwrap();
        let back = load_image(&path).unwrap();
        let expect = [0.0, 0.0, 128.0 / 255.0, 1.0, 1.0];
        for (a, b) in back.as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

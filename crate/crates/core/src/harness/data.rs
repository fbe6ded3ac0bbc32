//! Samples, directory loading and size normalization.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::pnm;
use crate::mask::Mask;
use crate::tensor::{Shape, Tensor};

pub const SIDE_MULTIPLE: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `(1, 3, h, w)` with values in [0, 1].
    pub image: Tensor,
    pub mask: Mask,
    pub id: String,
}

impl Sample {
    pub fn size(&self) -> (usize, usize) {
        (self.mask.height(), self.mask.width())
    }
}

/// Nearest positive multiple of 32 (ties round up).
pub fn nearest_multiple(n: usize) -> usize {
    ((n + SIDE_MULTIPLE / 2) / SIDE_MULTIPLE).max(1) * SIDE_MULTIPLE
}

/// Source offset for center crop (`target <= n`) or destination offset for
/// center padding (`target > n`).
pub fn center_offset(n: usize, target: usize) -> usize {
    n.abs_diff(target) / 2
}

/// Maps target coordinate `t` on an axis of length `n` fitted to `target`;
/// `None` inside the padding.
fn fit_index(t: usize, n: usize, target: usize) -> Option<usize> {
    let off = center_offset(n, target);
    if target <= n {
        Some(t + off)
    } else {
        t.checked_sub(off).filter(|&s| s < n)
    }
}

/// Center-crops or zero-pads a sample to `(h, w)`.
pub fn fit_to(sample: &Sample, h: usize, w: usize) -> Sample {
    let (sh, sw) = sample.size();
    let img = &sample.image;
    let image = Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| {
        match (fit_index(y, sh, h), fit_index(x, sw, w)) {
            (Some(sy), Some(sx)) => img.get(0, c, sy, sx),
            _ => 0.0,
        }
    });
    let mask = Mask::from_fn(h, w, |y, x| match (fit_index(y, sh, h), fit_index(x, sw, w)) {
        (Some(sy), Some(sx)) => sample.mask.get(sy, sx),
        _ => false,
    });
    Sample {
        image,
        mask,
        id: sample.id.clone(),
    }
}

/// Fits both sides to their nearest multiple of 32.
pub fn fit_to_multiple(sample: &Sample) -> Sample {
    let (h, w) = sample.size();
    let (th, tw) = (nearest_multiple(h), nearest_multiple(w));
    if (th, tw) == (h, w) {
        return sample.clone();
    }
    fit_to(sample, th, tw)
}

pub fn image_from_pnm(p: &pnm::Pnm) -> Result<Tensor> {
    if p.channels != 3 {
        return Err(Error::invalid("load image", "expected an RGB (P6) image"));
    }
    Ok(Tensor::from_fn(Shape::new(1, 3, p.height, p.width), |_, c, y, x| {
        p.unit(y, x, c)
    }))
}

/// Grayscale map thresholded at 128 (on the 8-bit scale).
pub fn mask_from_pnm(p: &pnm::Pnm) -> Result<Mask> {
    if p.channels != 1 {
        return Err(Error::invalid("load mask", "expected a grayscale (P5) mask"));
    }
    let cut = 128.0 / 255.0;
    Ok(Mask::from_fn(p.height, p.width, |y, x| p.unit(y, x, 0) >= cut))
}

fn stems(dir: &Path) -> Result<BTreeMap<String, std::path::PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if !path.is_file() {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            if !stem.starts_with('.') {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

/// Images (P6) and masks (P5) paired by basename, sorted by identifier.
pub fn load_samples(image_dir: &Path, mask_dir: &Path) -> Result<Vec<Sample>> {
    let images = stems(image_dir)?;
    let masks = stems(mask_dir)?;
    if let Some(id) = images.keys().find(|k| !masks.contains_key(*k)) {
        return Err(Error::MissingPair(format!("{id} (no mask in {})", mask_dir.display())));
    }
    if let Some(id) = masks.keys().find(|k| !images.contains_key(*k)) {
        return Err(Error::MissingPair(format!(
            "{id} (no image in {})",
            image_dir.display()
        )));
    }
    images
        .iter()
        .map(|(id, path)| {
            let img = pnm::read(path)?;
            let msk = pnm::read(&masks[id])?;
            if (img.width, img.height) != (msk.width, msk.height) {
                return Err(Error::invalid(
                    "load samples",
                    format!(
                        "{id}: image {}x{} vs mask {}x{}",
                        img.width, img.height, msk.width, msk.height
                    ),
                ));
            }
            let sample = Sample {
                image: image_from_pnm(&img)?,
                mask: mask_from_pnm(&msk)?,
                id: id.clone(),
            };
            Ok(fit_to_multiple(&sample))
        })
        .collect()
}

/// Images only (for prediction), sorted by identifier, fitted to 32-multiples.
pub fn load_images(image_dir: &Path) -> Result<Vec<(String, Tensor)>> {
    stems(image_dir)?
        .into_iter()
        .map(|(id, path)| {
            let image = image_from_pnm(&pnm::read(&path)?)?;
            let s = image.shape();
            let sample = Sample {
                image,
                mask: Mask::filled(s.h, s.w, false),
                id: id.clone(),
            };
            Ok((id, fit_to_multiple(&sample).image))
        })
        .collect()
}

/// Saliency map read back from disk: values in [0, 1], fitted like masks.
#[derive(Clone, Debug, PartialEq)]
pub struct SavedMap {
    pub id: String,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

/// Grayscale (P5) maps sorted by identifier, fitted to 32-multiples.
pub fn load_maps(map_dir: &Path) -> Result<Vec<SavedMap>> {
    stems(map_dir)?
        .into_iter()
        .map(|(id, path)| {
            let p = pnm::read(&path)?;
            if p.channels != 1 {
                return Err(Error::invalid(
                    "load map",
                    format!("{id}: expected a grayscale (P5) map"),
                ));
            }
            let (h, w) = (nearest_multiple(p.height), nearest_multiple(p.width));
            let mut data = Vec::with_capacity(h * w);
            for y in 0..h {
                for x in 0..w {
                    data.push(match (fit_index(y, p.height, h), fit_index(x, p.width, w)) {
                        (Some(sy), Some(sx)) => p.data[sy * p.width + sx] as f64 / p.maxval as f64,
                        _ => 0.0,
                    });
                }
            }
            Ok(SavedMap {
                id,
                height: h,
                width: w,
                data,
            })
        })
        .collect()
}

pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes `images/<id>.ppm` and `masks/<id>.pgm` under `dir`.
pub fn save_samples(dir: &Path, samples: &[Sample]) -> Result<()> {
    let (img_dir, mask_dir) = (dir.join("images"), dir.join("masks"));
    fs::create_dir_all(&img_dir)?;
    fs::create_dir_all(&mask_dir)?;
    for s in samples {
        let (h, w) = s.size();
        let mut rgb = Vec::with_capacity(h * w * 3);
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    rgb.push(quantize(s.image.get(0, c, y, x)));
                }
            }
        }
        pnm::write(&img_dir.join(format!("{}.ppm", s.id)), w, h, 3, &rgb)?;
        let gray: Vec<u8> = s.mask.data().iter().map(|&v| v * 255).collect();
        pnm::write(&mask_dir.join(format!("{}.pgm", s.id)), w, h, 1, &gray)?;
    }
    Ok(())
}

/// Writes a saliency map as P5 with values `round(255 * p)`.
pub fn save_map(path: &Path, map: &[f32], h: usize, w: usize) -> Result<()> {
    let gray: Vec<u8> = map.iter().map(|&v| quantize(v)).collect();
    pnm::write(path, w, h, 1, &gray)
}

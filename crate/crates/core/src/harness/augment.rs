use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::harness::data::{fit_to, nearest_multiple, Sample};
use crate::mask::Mask;
use crate::ops::resize;
use crate::tensor::Tensor;

pub const DEFAULT_SCALES: [f64; 5] = [0.8, 0.9, 1.0, 1.1, 1.2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub flip: bool,
    pub scales: Vec<f64>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            flip: true,
            scales: DEFAULT_SCALES.to_vec(),
        }
    }
}

pub fn flip_horizontal(sample: &Sample) -> Sample {
    let s = sample.image.shape();
    let img = &sample.image;
    Sample {
        image: Tensor::from_fn(s, |n, c, y, x| img.get(n, c, y, s.w - 1 - x)),
        mask: Mask::from_fn(s.h, s.w, |y, x| sample.mask.get(y, s.w - 1 - x)),
        id: sample.id.clone(),
    }
}

/// Bilinear image / nearest-neighbor mask scaling, then center crop or pad
/// to the nearest multiple of 32 of the scaled size.
pub fn rescale(sample: &Sample, scale: f64) -> Sample {
    let (h, w) = sample.size();
    let nh = ((h as f64 * scale).round() as usize).max(1);
    let nw = ((w as f64 * scale).round() as usize).max(1);
    if (nh, nw) == (h, w) {
        return sample.clone();
    }
    let shape = sample.image.shape();
    let data = resize::forward(sample.image.data(), shape, nh, nw);
    let image = Tensor::from_vec(shape.with_spatial(nh, nw), data).expect("sized");
    let near = |t: usize, n: usize, m: usize| (((t as f64 + 0.5) * n as f64 / m as f64) as usize).min(n - 1);
    let mask = Mask::from_fn(nh, nw, |y, x| sample.mask.get(near(y, h, nh), near(x, w, nw)));
    let scaled = Sample {
        image,
        mask,
        id: sample.id.clone(),
    };
    fit_to(&scaled, nearest_multiple(nh), nearest_multiple(nw))
}

/// Random flip (p = 0.5) and a scale drawn uniformly from the configured set.
pub fn augment(sample: &Sample, cfg: &AugmentConfig, rng: &mut impl Rng) -> Sample {
    let flipped = cfg.flip && rng.gen_bool(0.5);
    let scale = if cfg.scales.is_empty() {
        1.0
    } else {
        cfg.scales[rng.gen_range(0..cfg.scales.len())]
    };
    let base = if flipped {
        flip_horizontal(sample)
    } else {
        sample.clone()
    };
    rescale(&base, scale)
}

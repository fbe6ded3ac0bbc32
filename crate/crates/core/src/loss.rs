//! Edge-weighted binary cross entropy.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensor::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub gamma: f64,
    /// Window radius: the weight window is `(2*delta+1)^2`.
    pub delta: usize,
    pub eps: f64,
    /// Divide by the total weight instead of summing.
    pub normalized: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            gamma: 3.0,
            delta: 10,
            eps: 1e-6,
            normalized: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if self.delta == 0 {
            return Err(Error::Config("delta must be >= 1".into()));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(Error::Config(format!("eps must lie in (0, 0.5), got {}", self.eps)));
        }
        Ok(())
    }
}

/// Source index for padded coordinate `i` on an axis of length `n`:
/// reflection without repeating the border when the pad fits, else clamping.
fn mirror(i: isize, n: usize, pad: usize) -> usize {
    let last = n as isize - 1;
    if pad < n {
        let r = if i < 0 {
            -i
        } else if i > last {
            2 * last - i
        } else {
            i
        };
        r as usize
    } else {
        i.clamp(0, last) as usize
    }
}

/// `alpha = |window mean of Y - Y|` over a mirror-padded `(2*delta+1)^2` window.
pub fn edge_weight_alpha(mask: &Mask, delta: usize) -> Vec<f64> {
    let (h, w) = (mask.height(), mask.width());
    if h == 0 || w == 0 {
        return Vec::new();
    }
    let (ph, pw) = (h + 2 * delta, w + 2 * delta);
    // summed-area table over the padded mask, (ph + 1) x (pw + 1)
    let mut sat = vec![0u64; (ph + 1) * (pw + 1)];
    for py in 0..ph {
        let sy = mirror(py as isize - delta as isize, h, delta);
        let mut row = 0u64;
        for px in 0..pw {
            let sx = mirror(px as isize - delta as isize, w, delta);
            row += mask.get(sy, sx) as u64;
            sat[(py + 1) * (pw + 1) + px + 1] = sat[py * (pw + 1) + px + 1] + row;
        }
    }
    let k = 2 * delta + 1;
    let area = (k * k) as f64;
    let mut alpha = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (y1, x1) = (y + k, x + k);
            let s = sat[y1 * (pw + 1) + x1] + sat[y * (pw + 1) + x] - sat[y * (pw + 1) + x1] - sat[y1 * (pw + 1) + x];
            let center = mask.get(y, x) as u8 as f64;
            alpha.push((s as f64 / area - center).abs());
        }
    }
    alpha
}

/// Per-pixel weights `1 + gamma * alpha` for a batch of masks, concatenated.
pub fn loss_weights(masks: &[Mask], cfg: &LossConfig) -> Vec<f64> {
    masks
        .iter()
        .flat_map(|m| edge_weight_alpha(m, cfg.delta))
        .map(|a| 1.0 + cfg.gamma * a)
        .collect()
}

/// Records the loss of prediction `pred` (shape `(n, 1, h, w)`) against one
/// mask per batch item.
pub fn weighted_bce<T: Scalar>(g: &mut Graph<T>, pred: Var, masks: &[Mask], cfg: &LossConfig) -> Result<Var> {
    cfg.validate()?;
    let s = g.shape(pred);
    if s.c != 1 || s.n != masks.len() || masks.iter().any(|m| (m.height(), m.width()) != (s.h, s.w)) {
        return Err(Error::invalid(
            "weighted_bce",
            format!("prediction {s} does not match {} masks", masks.len()),
        ));
    }
    let weights = loss_weights(masks, cfg);
    let normalizer = if cfg.normalized { weights.iter().sum() } else { 1.0 };
    let target: Vec<T> = masks.iter().flat_map(|m| m.values::<T>()).collect();
    let weight: Vec<T> = weights.into_iter().map(T::of).collect();
    g.weighted_bce(
        pred,
        Arc::new(target),
        Arc::new(weight),
        T::of(cfg.eps),
        T::of(normalizer),
    )
}

/// Loss value without a graph, in 64-bit arithmetic.
pub fn weighted_bce_value(pred: &[f64], mask: &Mask, cfg: &LossConfig) -> Result<f64> {
    if pred.len() != mask.len() {
        return Err(Error::DimMismatch {
            op: "weighted_bce",
            dim: "pixel count",
            expected: mask.len(),
            actual: pred.len(),
        });
    }
    let weights = loss_weights(std::slice::from_ref(mask), cfg);
    let mut total = 0.0;
    for ((&p, &y), &wt) in pred.iter().zip(mask.data()).zip(&weights) {
        let p = p.clamp(cfg.eps, 1.0 - cfg.eps);
        total -= wt * if y == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(if cfg.normalized {
        total / weights.iter().sum::<f64>()
    } else {
        total
    })
}

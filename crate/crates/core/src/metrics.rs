//! Saliency metrics: maximum F-measure with PR curve, MAE and S-measure.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;

pub const THRESHOLDS: usize = 256;
pub const BETA2: f64 = 0.3;
/// MATLAB `eps`, used by the structure-measure reference formulas.
pub const MATLAB_EPS: f64 = f64::EPSILON;

fn check_len(op: &'static str, pred: &[f64], mask: &Mask) -> Result<()> {
    if pred.len() != mask.len() {
        return Err(Error::DimMismatch {
            op,
            dim: "pixel count",
            expected: mask.len(),
            actual: pred.len(),
        });
    }
    Ok(())
}

/// `t_k = k / 255`.
pub fn threshold(k: usize) -> f64 {
    k as f64 / 255.0
}

/// Number of thresholds `t_k` strictly below `p`.
fn thresholds_below(p: f64) -> usize {
    let mut b = (p * 255.0).ceil().clamp(0.0, THRESHOLDS as f64) as usize;
    while b > 0 && p <= threshold(b - 1) {
        b -= 1;
    }
    while b < THRESHOLDS && p > threshold(b) {
        b += 1;
    }
    b
}

/// True/false positives and false negatives at each threshold (`P > t`).
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PrCounts {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
}

impl PrCounts {
    pub fn new(pred: &[f64], mask: &Mask) -> Result<Self> {
        check_len("f_measure", pred, mask)?;
        let mut pos_hist = [0u64; THRESHOLDS + 1];
        let mut neg_hist = [0u64; THRESHOLDS + 1];
        for (&p, &y) in pred.iter().zip(mask.data()) {
            let b = thresholds_below(p);
            if y == 1 {
                pos_hist[b] += 1;
            } else {
                neg_hist[b] += 1;
            }
        }
        let positives = mask.foreground() as u64;
        let (mut tp, mut fp) = (vec![0; THRESHOLDS], vec![0; THRESHOLDS]);
        // pixels with b > k exceed t_k
        let (mut pos_above, mut neg_above) = (0, 0);
        for k in (0..THRESHOLDS).rev() {
            pos_above += pos_hist[k + 1];
            neg_above += neg_hist[k + 1];
            tp[k] = pos_above;
            fp[k] = neg_above;
        }
        let fn_ = tp.iter().map(|&t| positives - t).collect();
        Ok(PrCounts { tp, fp, fn_ })
    }

    pub fn accumulate(&mut self, other: &PrCounts) {
        if self.tp.is_empty() {
            *self = other.clone();
            return;
        }
        for k in 0..THRESHOLDS {
            self.tp[k] += other.tp[k];
            self.fp[k] += other.fp[k];
            self.fn_[k] += other.fn_[k];
        }
    }

    /// `(precision, recall)` per threshold; precision is 1 with no predicted
    /// positives, recall is 1 with no actual positives.
    pub fn curve(&self) -> Vec<(f64, f64)> {
        (0..THRESHOLDS)
            .map(|k| {
                let (tp, fp, fn_) = (self.tp[k] as f64, self.fp[k] as f64, self.fn_[k] as f64);
                let prec = if tp + fp == 0.0 { 1.0 } else { tp / (tp + fp) };
                let rec = if tp + fn_ == 0.0 { 1.0 } else { tp / (tp + fn_) };
                (prec, rec)
            })
            .collect()
    }
}

pub fn f_beta(precision: f64, recall: f64) -> f64 {
    let den = BETA2 * precision + recall;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + BETA2) * precision * recall / den
    }
}

/// Maximum F-measure over the 256 thresholds and the PR samples.
pub fn f_measure_max(pred: &[f64], mask: &Mask) -> Result<(f64, Vec<(f64, f64)>)> {
    let curve = PrCounts::new(pred, mask)?.curve();
    let f = curve.iter().map(|&(p, r)| f_beta(p, r)).fold(0.0, f64::max);
    Ok((f, curve))
}

pub fn mae(pred: &[f64], mask: &Mask) -> Result<f64> {
    check_len("mae", pred, mask)?;
    let total: f64 = pred.iter().zip(mask.data()).map(|(&p, &y)| (p - y as f64).abs()).sum();
    Ok(total / pred.len() as f64)
}

fn mean(xs: impl Iterator<Item = f64>) -> (f64, usize) {
    let (mut s, mut n) = (0.0, 0);
    for x in xs {
        s += x;
        n += 1;
    }
    (s / n as f64, n)
}

/// Object similarity of the values in a region.
fn object_score(values: &[f64]) -> f64 {
    let (x, n) = mean(values.iter().copied());
    let var = if n > 1 {
        values.iter().map(|v| (v - x) * (v - x)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    2.0 * x / (x * x + 1.0 + var.sqrt() + MATLAB_EPS)
}

fn s_object(pred: &[f64], mask: &Mask) -> f64 {
    let fg: Vec<f64> = pred
        .iter()
        .zip(mask.data())
        .filter(|(_, &y)| y == 1)
        .map(|(&p, _)| p)
        .collect();
    let bg: Vec<f64> = pred
        .iter()
        .zip(mask.data())
        .filter(|(_, &y)| y == 0)
        .map(|(&p, _)| 1.0 - p)
        .collect();
    let u = mask.foreground() as f64 / mask.len() as f64;
    u * object_score(&fg) + (1.0 - u) * object_score(&bg)
}

/// Structural similarity of a block, per the reference formula.
fn block_ssim(pred: &[f64], gt: &[f64]) -> f64 {
    let n = pred.len() as f64;
    let x = pred.iter().sum::<f64>() / n;
    let y = gt.iter().sum::<f64>() / n;
    let mut sx2 = 0.0;
    let mut sy2 = 0.0;
    let mut sxy = 0.0;
    for (&p, &g) in pred.iter().zip(gt) {
        sx2 += (p - x) * (p - x);
        sy2 += (g - y) * (g - y);
        sxy += (p - x) * (g - y);
    }
    let den = n - 1.0 + MATLAB_EPS;
    let (sx2, sy2, sxy) = (sx2 / den, sy2 / den, sxy / den);
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sx2 + sy2);
    if alpha != 0.0 {
        alpha / (beta + MATLAB_EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// MATLAB `round` (half away from zero) of a non-negative value.
fn round_half_away(v: f64) -> usize {
    v.round() as usize
}

/// 1-based centroid `(x, y)` of the mask, or the image center when empty.
fn centroid(mask: &Mask) -> (usize, usize) {
    let (h, w) = (mask.height(), mask.width());
    let total = mask.foreground();
    if total == 0 {
        return (round_half_away(w as f64 / 2.0), round_half_away(h as f64 / 2.0));
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if mask.get(y, x) {
                sx += (x + 1) as f64;
                sy += (y + 1) as f64;
            }
        }
    }
    (round_half_away(sx / total as f64), round_half_away(sy / total as f64))
}

fn s_region(pred: &[f64], mask: &Mask) -> f64 {
    let (h, w) = (mask.height(), mask.width());
    let (cx, cy) = centroid(mask);
    let area = (h * w) as f64;
    let w1 = (cx * cy) as f64 / area;
    let w2 = ((w - cx) * cy) as f64 / area;
    let w3 = (cx * (h - cy)) as f64 / area;
    let w4 = 1.0 - w1 - w2 - w3;
    let blocks = [
        (0, cy, 0, cx, w1),
        (0, cy, cx, w, w2),
        (cy, h, 0, cx, w3),
        (cy, h, cx, w, w4),
    ];
    let mut q = 0.0;
    for (y0, y1, x0, x1, weight) in blocks {
        if y1 <= y0 || x1 <= x0 {
            continue;
        }
        let mut p = Vec::with_capacity((y1 - y0) * (x1 - x0));
        let mut g = Vec::with_capacity(p.capacity());
        for y in y0..y1 {
            for x in x0..x1 {
                p.push(pred[y * w + x]);
                g.push(mask.get(y, x) as u8 as f64);
            }
        }
        q += weight * block_ssim(&p, &g);
    }
    q
}

/// Structure measure `0.5 * S_object + 0.5 * S_region`, clipped at 0.
pub fn s_measure(pred: &[f64], mask: &Mask) -> Result<f64> {
    check_len("s_measure", pred, mask)?;
    if mask.is_empty() {
        return Err(Error::invalid("s_measure", "empty map"));
    }
    let y = mask.foreground() as f64 / mask.len() as f64;
    let (mean_p, _) = mean(pred.iter().copied());
    let q = if y == 0.0 {
        1.0 - mean_p
    } else if y == 1.0 {
        mean_p
    } else {
        0.5 * s_object(pred, mask) + 0.5 * s_region(pred, mask)
    };
    Ok(q.max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FMode {
    /// F curve averaged over images, then maximized.
    #[default]
    PerImage,
    /// Counts pooled over the dataset.
    Pooled,
}

impl FMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FMode::PerImage => "per-image",
            FMode::Pooled => "pooled",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub f_max: f64,
    /// Threshold index achieving `f_max`.
    pub best_threshold: usize,
    pub mae: f64,
    pub s_measure: f64,
    pub images: usize,
    pub f_mode: FMode,
    /// `(precision, recall)` per threshold.
    pub pr: Vec<(f64, f64)>,
}

impl MetricReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "images: {}", self.images);
        let _ = writeln!(out, "f_mode: {}", self.f_mode.as_str());
        let _ = writeln!(out, "f_max: {:.6}", self.f_max);
        let _ = writeln!(out, "f_max_threshold: {:.6}", threshold(self.best_threshold));
        let _ = writeln!(out, "mae: {:.6}", self.mae);
        let _ = writeln!(out, "s_measure: {:.6}", self.s_measure);
        out
    }

    pub fn pr_csv(&self) -> String {
        let mut out = String::from("threshold,precision,recall\n");
        for (k, (p, r)) in self.pr.iter().enumerate() {
            let _ = writeln!(out, "{:.6},{p:.6},{r:.6}", threshold(k));
        }
        out
    }
}

/// Streams prediction/mask pairs into a [`MetricReport`].
#[derive(Clone, Debug, Default)]
pub struct MetricAccumulator {
    mode: FMode,
    images: usize,
    pooled: PrCounts,
    f_sum: Vec<f64>,
    prec_sum: Vec<f64>,
    rec_sum: Vec<f64>,
    mae_sum: f64,
    s_sum: f64,
}

impl MetricAccumulator {
    pub fn new(mode: FMode) -> Self {
        MetricAccumulator {
            mode,
            f_sum: vec![0.0; THRESHOLDS],
            prec_sum: vec![0.0; THRESHOLDS],
            rec_sum: vec![0.0; THRESHOLDS],
            ..Self::default()
        }
    }

    pub fn add(&mut self, pred: &[f64], mask: &Mask) -> Result<()> {
        let counts = PrCounts::new(pred, mask)?;
        for (k, (p, r)) in counts.curve().into_iter().enumerate() {
            self.f_sum[k] += f_beta(p, r);
            self.prec_sum[k] += p;
            self.rec_sum[k] += r;
        }
        self.pooled.accumulate(&counts);
        self.mae_sum += mae(pred, mask)?;
        self.s_sum += s_measure(pred, mask)?;
        self.images += 1;
        Ok(())
    }

    pub fn finish(&self) -> Result<MetricReport> {
        if self.images == 0 {
            return Err(Error::EmptyDataset);
        }
        let n = self.images as f64;
        let (f_curve, pr): (Vec<f64>, Vec<(f64, f64)>) = match self.mode {
            FMode::PerImage => (
                self.f_sum.iter().map(|f| f / n).collect(),
                self.prec_sum
                    .iter()
                    .zip(&self.rec_sum)
                    .map(|(p, r)| (p / n, r / n))
                    .collect(),
            ),
            FMode::Pooled => {
                let pr = self.pooled.curve();
                (pr.iter().map(|&(p, r)| f_beta(p, r)).collect(), pr)
            }
        };
        let (best_threshold, f_max) = f_curve.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |best, (k, f)| if f > best.1 { (k, f) } else { best },
        );
        Ok(MetricReport {
            f_max,
            best_threshold,
            mae: self.mae_sum / n,
            s_measure: self.s_sum / n,
            images: self.images,
            f_mode: self.mode,
            pr,
        })
    }
}

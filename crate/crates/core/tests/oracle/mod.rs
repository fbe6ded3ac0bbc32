//! Brute-force reference implementations shared by test targets.

#![allow(dead_code)]

use dntdf::mask::Mask;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn reflect(i: isize, n: usize, pad: usize) -> usize {
    if pad + 1 > n {
        return i.max(0).min(n as isize - 1) as usize;
    }
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n as isize {
        i = 2 * (n as isize - 1) - i;
    }
    i as usize
}

pub fn alpha(m: &Mask, d: usize) -> Vec<f64> {
    let (h, w) = (m.height(), m.width());
    let mut out = vec![];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for dy in -(d as isize)..=d as isize {
                for dx in -(d as isize)..=d as isize {
                    let sy = reflect(y as isize + dy, h, d);
                    let sx = reflect(x as isize + dx, w, d);
                    s += m.get(sy, sx) as u8 as f64;
                }
            }
            let k = (2 * d + 1) as f64;
            out.push((s / (k * k) - m.get(y, x) as u8 as f64).abs());
        }
    }
    out
}

pub fn mae(p: &[f64], m: &Mask) -> f64 {
    let mut s = 0.0;
    for (i, &v) in p.iter().enumerate() {
        s += (v - m.data()[i] as f64).abs();
    }
    s / p.len() as f64
}

pub fn f_max(p: &[f64], m: &Mask) -> f64 {
    let mut best: f64 = 0.0;
    for k in 0..256 {
        let t = k as f64 / 255.0;
        let (mut tp, mut fp, mut fn_) = (0u32, 0u32, 0u32);
        for (i, &v) in p.iter().enumerate() {
            let pos = v > t;
            match (pos, m.data()[i] == 1) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let prec = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let rec = if tp + fn_ == 0 {
            1.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f = if 0.3 * prec + rec == 0.0 {
            0.0
        } else {
            1.3 * prec * rec / (0.3 * prec + rec)
        };
        best = best.max(f);
    }
    best
}

// Structure measure written against 2-D matrices, following the
// reference MATLAB routines line by line.
type Mat = Vec<Vec<f64>>;
const EPS: f64 = 2.220446049250313e-16;

fn mean2(a: &Mat) -> f64 {
    let n: usize = a.iter().map(|r| r.len()).sum();
    a.iter().flatten().sum::<f64>() / n as f64
}

fn std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn object(pred: &Mat, gt: &Mat) -> f64 {
    let mut vals = vec![];
    for (pr, gr) in pred.iter().zip(gt) {
        for (&p, &g) in pr.iter().zip(gr) {
            if g == 1.0 {
                vals.push(p);
            }
        }
    }
    let x = vals.iter().sum::<f64>() / vals.len() as f64;
    2.0 * x / (x * x + 1.0 + std(&vals) + EPS)
}

fn s_object(pred: &Mat, gt: &Mat) -> f64 {
    let fg: Mat = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| p.iter().zip(g).map(|(&p, &g)| if g == 1.0 { p } else { 0.0 }).collect())
        .collect();
    let bg: Mat = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            p.iter()
                .zip(g)
                .map(|(&p, &g)| if g == 1.0 { 0.0 } else { 1.0 - p })
                .collect()
        })
        .collect();
    let inv: Mat = gt.iter().map(|r| r.iter().map(|g| 1.0 - g).collect()).collect();
    let u = mean2(gt);
    u * object(&fg, gt) + (1.0 - u) * object(&bg, &inv)
}

fn ssim(pred: &Mat, gt: &Mat) -> f64 {
    let n = (pred.len() * pred[0].len()) as f64;
    let x = mean2(pred);
    let y = mean2(gt);
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxy = 0.0;
    for (pr, gr) in pred.iter().zip(gt) {
        for (&p, &g) in pr.iter().zip(gr) {
            sx += (p - x).powi(2);
            sy += (g - y).powi(2);
            sxy += (p - x) * (g - y);
        }
    }
    let sx = sx / (n - 1.0 + EPS);
    let sy = sy / (n - 1.0 + EPS);
    let sxy = sxy / (n - 1.0 + EPS);
    let a = 4.0 * x * y * sxy;
    let b = (x * x + y * y) * (sx + sy);
    if a != 0.0 {
        a / (b + EPS)
    } else if b == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn block(a: &Mat, r0: usize, r1: usize, c0: usize, c1: usize) -> Mat {
    a[r0..r1].iter().map(|r| r[c0..c1].to_vec()).collect()
}

fn s_region(pred: &Mat, gt: &Mat) -> f64 {
    let (rows, cols) = (gt.len(), gt[0].len());
    let total: f64 = gt.iter().flatten().sum();
    let (x, y) = if total == 0.0 {
        (
            (cols as f64 / 2.0).round() as usize,
            (rows as f64 / 2.0).round() as usize,
        )
    } else {
        let col_weighted: f64 = (0..cols)
            .map(|c| (c + 1) as f64 * gt.iter().map(|r| r[c]).sum::<f64>())
            .sum();
        let row_weighted: f64 = (0..rows).map(|r| (r + 1) as f64 * gt[r].iter().sum::<f64>()).sum();
        (
            (col_weighted / total).round() as usize,
            (row_weighted / total).round() as usize,
        )
    };
    let area = (rows * cols) as f64;
    let w1 = (x * y) as f64 / area;
    let w2 = ((cols - x) * y) as f64 / area;
    let w3 = (x * (rows - y)) as f64 / area;
    let w4 = 1.0 - w1 - w2 - w3;
    let parts = [
        (0, y, 0, x, w1),
        (0, y, x, cols, w2),
        (y, rows, 0, x, w3),
        (y, rows, x, cols, w4),
    ];
    let mut q = 0.0;
    for (r0, r1, c0, c1, w) in parts {
        if r1 > r0 && c1 > c0 {
            q += w * ssim(&block(pred, r0, r1, c0, c1), &block(gt, r0, r1, c0, c1));
        }
    }
    q
}

pub fn s_measure(p: &[f64], m: &Mask) -> f64 {
    let (h, w) = (m.height(), m.width());
    let pred: Mat = (0..h).map(|r| p[r * w..(r + 1) * w].to_vec()).collect();
    let gt: Mat = (0..h)
        .map(|r| (0..w).map(|c| m.get(r, c) as u8 as f64).collect())
        .collect();
    let y = mean2(&gt);
    let q = if y == 0.0 {
        1.0 - mean2(&pred)
    } else if y == 1.0 {
        mean2(&pred)
    } else {
        0.5 * s_object(&pred, &gt) + 0.5 * s_region(&pred, &gt)
    };
    q.max(0.0)
}

/// Random prediction/mask pair mixing exact 0, 1, 8-bit levels and continuous values.
pub fn random_pair(rng: &mut ChaCha8Rng, h: usize, w: usize) -> (Vec<f64>, Mask) {
    let p_fg = rng.gen_range(0.0..1.0);
    let mask = Mask::from_fn(h, w, |_, _| rng.gen_bool(p_fg));
    let pred = (0..h * w)
        .map(|_| match rng.gen_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            2 => rng.gen_range(0..256) as f64 / 255.0,
            _ => rng.gen_range(0.0..1.0),
        })
        .collect();
    (pred, mask)
}

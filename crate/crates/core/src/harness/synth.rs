//! Synthetic saliency data: 1-3 saturated shapes on a dull, low-frequency
//! background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::harness::data::{Sample, SIDE_MULTIPLE};
use crate::loss::edge_weight_alpha;
use crate::mask::Mask;
use crate::ops::resize;
use crate::tensor::{Shape, Tensor};

pub const MIN_FOREGROUND: f64 = 0.05;
pub const MAX_FOREGROUND: f64 = 0.6;
/// Window radius for which every mask keeps a constant neighborhood somewhere.
pub const FLAT_RADIUS: usize = 10;
const GRID: usize = 4;

#[derive(Clone, Copy, Debug)]
enum Shape2d {
    Ellipse { cy: f64, cx: f64, ry: f64, rx: f64 },
    Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
}

impl Shape2d {
    fn random(rng: &mut ChaCha8Rng, size: f64) -> Self {
        let cy = rng.gen_range(0.15..0.85) * size;
        let cx = rng.gen_range(0.15..0.85) * size;
        let ry = rng.gen_range(0.08..0.3) * size;
        let rx = rng.gen_range(0.08..0.3) * size;
        if rng.gen_bool(0.5) {
            Shape2d::Ellipse { cy, cx, ry, rx }
        } else {
            Shape2d::Rect {
                y0: cy - ry,
                x0: cx - rx,
                y1: cy + ry,
                x1: cx + rx,
            }
        }
    }

    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape2d::Ellipse { cy, cx, ry, rx } => ((y - cy) / ry).powi(2) + ((x - cx) / rx).powi(2) <= 1.0,
            Shape2d::Rect { y0, x0, y1, x1 } => y >= y0 && y < y1 && x >= x0 && x < x1,
        }
    }
}

fn saturated_color(rng: &mut ChaCha8Rng) -> [f32; 3] {
    let mut c = [
        rng.gen_range(0.75..1.0),
        rng.gen_range(0.0..0.25),
        rng.gen_range(0.0..1.0),
    ];
    // random channel permutation
    for i in (1..3).rev() {
        c.swap(i, rng.gen_range(0..=i));
    }
    c
}

fn l1(a: [f32; 3], b: [f32; 3]) -> f32 {
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum()
}

fn background(rng: &mut ChaCha8Rng, size: usize) -> (Vec<f32>, [f32; 3]) {
    let base: f32 = rng.gen_range(0.3..0.7);
    let tint = [(); 3].map(|_| base + rng.gen_range(-0.08..0.08));
    let coarse: Vec<f32> = (0..3 * GRID * GRID)
        .map(|k| tint[k / (GRID * GRID)] + rng.gen_range(-0.12..0.12))
        .collect();
    let field = resize::forward(&coarse, Shape::new(1, 3, GRID, GRID), size, size);
    (field, tint)
}

fn generate_one(rng: &mut ChaCha8Rng, size: usize, id: String) -> Sample {
    let (field, tint) = background(rng, size);
    let s = size as f64;
    let (shapes, colors, mask) = loop {
        let count = rng.gen_range(1..=3);
        let shapes: Vec<Shape2d> = (0..count).map(|_| Shape2d::random(rng, s)).collect();
        let mask = Mask::from_fn(size, size, |y, x| {
            let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
            shapes.iter().any(|sh| sh.contains(py, px))
        });
        let fg = mask.foreground() as f64 / (size * size) as f64;
        if !(MIN_FOREGROUND..=MAX_FOREGROUND).contains(&fg) {
            continue;
        }
        if !edge_weight_alpha(&mask, FLAT_RADIUS).contains(&0.0) {
            continue;
        }
        let mut colors: Vec<[f32; 3]> = Vec::with_capacity(count);
        while colors.len() < count {
            let c = saturated_color(rng);
            if l1(c, tint) > 0.6 && colors.iter().all(|&o| l1(o, c) > 0.3) {
                colors.push(c);
            }
        }
        break (shapes, colors, mask);
    };
    let plane = size * size;
    let mut data = field;
    for y in 0..size {
        for x in 0..size {
            let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
            // later shapes are drawn on top
            let top = shapes.iter().rposition(|sh| sh.contains(py, px));
            for c in 0..3 {
                let v = &mut data[c * plane + y * size + x];
                if let Some(k) = top {
                    *v = colors[k][c];
                }
                *v = (*v + rng.gen_range(-0.03..0.03)).clamp(0.0, 1.0);
            }
        }
    }
    Sample {
        image: Tensor::from_vec(Shape::new(1, 3, size, size), data).expect("sized"),
        mask,
        id,
    }
}

/// `n` samples of `size x size`, deterministic in `seed`. Sample `k` depends
/// only on `(seed, k)`.
pub fn synth_generate(n: usize, size: usize, seed: u64) -> Result<Vec<Sample>> {
    if size == 0 || !size.is_multiple_of(SIDE_MULTIPLE) {
        return Err(Error::Config(format!(
            "synthetic size {size} is not a positive multiple of 32"
        )));
    }
    Ok((0..n)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            generate_one(&mut rng, size, format!("synth_{k:05}"))
        })
        .collect())
}

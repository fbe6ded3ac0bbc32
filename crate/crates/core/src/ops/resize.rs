//! Bilinear resampling with half-pixel centers and edge clamping.

use crate::tensor::{Scalar, Shape};

/// Source taps for one output coordinate: `(lo, hi, frac)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tap {
    pub lo: usize,
    pub hi: usize,
    pub frac: f64,
}

pub fn axis_taps(in_len: usize, out_len: usize) -> Vec<Tap> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(in_len - 1);
            let hi = (lo + 1).min(in_len - 1);
            let frac = if hi == lo { 0.0 } else { src - lo as f64 };
            Tap { lo, hi, frac }
        })
        .collect()
}

#[inline]
fn lerp<T: Scalar>(a: T, b: T, t: T) -> T {
    a + t * (b - a)
}

pub fn forward<T: Scalar>(input: &[T], shape: Shape, out_h: usize, out_w: usize) -> Vec<T> {
    if out_h == shape.h && out_w == shape.w {
        return input.to_vec();
    }
    let ty = axis_taps(shape.h, out_h);
    let tx = axis_taps(shape.w, out_w);
    let fx: Vec<T> = tx.iter().map(|t| T::of(t.frac)).collect();
    let mut out = Vec::with_capacity(shape.n * shape.c * out_h * out_w);
    for plane in input.chunks(shape.plane()) {
        for t in &ty {
            let fy = T::of(t.frac);
            let top = &plane[t.lo * shape.w..(t.lo + 1) * shape.w];
            let bottom = &plane[t.hi * shape.w..(t.hi + 1) * shape.w];
            for (s, &f) in tx.iter().zip(&fx) {
                let upper = lerp(top[s.lo], top[s.hi], f);
                let lower = lerp(bottom[s.lo], bottom[s.hi], f);
                out.push(lerp(upper, lower, fy));
            }
        }
    }
    out
}

pub fn backward<T: Scalar>(grad_out: &[T], shape: Shape, out_h: usize, out_w: usize) -> Vec<T> {
    if out_h == shape.h && out_w == shape.w {
        return grad_out.to_vec();
    }
    let ty = axis_taps(shape.h, out_h);
    let tx = axis_taps(shape.w, out_w);
    let mut grad = vec![T::zero(); shape.numel()];
    let one = T::one();
    for (plane, g_plane) in grad.chunks_mut(shape.plane()).zip(grad_out.chunks(out_h * out_w)) {
        for (oy, t) in ty.iter().enumerate() {
            let fy = T::of(t.frac);
            for (ox, s) in tx.iter().enumerate() {
                let fx = T::of(s.frac);
                let g = g_plane[oy * out_w + ox];
                let (gt, gb) = (g * (one - fy), g * fy);
                let w = shape.w;
                plane[t.lo * w + s.lo] = plane[t.lo * w + s.lo] + gt * (one - fx);
                plane[t.lo * w + s.hi] = plane[t.lo * w + s.hi] + gt * fx;
                plane[t.hi * w + s.lo] = plane[t.hi * w + s.lo] + gb * (one - fx);
                plane[t.hi * w + s.hi] = plane[t.hi * w + s.hi] + gb * fx;
            }
        }
    }
    grad
}

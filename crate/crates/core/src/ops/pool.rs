//! Adaptive average pooling over a `bins x bins` partition.

use std::ops::Range;

use crate::tensor::{Scalar, Shape};

/// Bin `i` of `bins` over `len` covers `[floor(i*len/bins), floor((i+1)*len/bins))`.
pub fn bin_range(i: usize, bins: usize, len: usize) -> Range<usize> {
    (i * len / bins)..((i + 1) * len / bins)
}

pub fn forward<T: Scalar>(input: &[T], shape: Shape, bins: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(shape.n * shape.c * bins * bins);
    for plane in input.chunks(shape.plane()) {
        for by in 0..bins {
            for bx in 0..bins {
                // Running mean keeps constant windows exact.
                let mut mean = T::zero();
                let mut count = 0usize;
                for y in bin_range(by, bins, shape.h) {
                    for x in bin_range(bx, bins, shape.w) {
                        count += 1;
                        let v = plane[y * shape.w + x];
                        mean = if count == 1 {
                            v
                        } else {
                            mean + (v - mean) / T::of(count as f64)
                        };
                    }
                }
                out.push(mean);
            }
        }
    }
    out
}

pub fn backward<T: Scalar>(grad_out: &[T], shape: Shape, bins: usize) -> Vec<T> {
    let mut grad = vec![T::zero(); shape.numel()];
    for (plane, g) in grad.chunks_mut(shape.plane()).zip(grad_out.chunks(bins * bins)) {
        for by in 0..bins {
            let rows = bin_range(by, bins, shape.h);
            for bx in 0..bins {
                let cols = bin_range(bx, bins, shape.w);
                let share = g[by * bins + bx] / T::of((rows.len() * cols.len()) as f64);
                for y in rows.clone() {
                    for x in cols.clone() {
                        plane[y * shape.w + x] = plane[y * shape.w + x] + share;
                    }
                }
            }
        }
    }
    grad
}

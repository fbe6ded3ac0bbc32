//! Direct 2-D convolution kernels (im2col + row-major matmul).

use crate::tensor::{Scalar, Shape};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub input: Shape,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn out_extent(extent: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
        let padded = extent + 2 * padding;
        (padded >= kernel && stride > 0).then(|| (padded - kernel) / stride + 1)
    }

    pub fn output(&self) -> Shape {
        let h = Self::out_extent(self.input.h, self.kernel, self.stride, self.padding).unwrap_or(0);
        let w = Self::out_extent(self.input.w, self.kernel, self.stride, self.padding).unwrap_or(0);
        Shape::new(self.input.n, self.c_out, h, w)
    }

    fn patch_len(&self) -> usize {
        self.input.c * self.kernel * self.kernel
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }
}

/// Unrolls one batch item into a `(c_in*k*k) x (h_out*w_out)` matrix.
fn im2col<T: Scalar>(geo: &ConvGeometry, input: &[T], col: &mut [T]) {
    let s = geo.input;
    let out = geo.output();
    let (k, stride, pad) = (geo.kernel, geo.stride, geo.padding as isize);
    let cols = out.h * out.w;
    for c in 0..s.c {
        let plane = &input[c * s.h * s.w..(c + 1) * s.h * s.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..out.h {
                    let iy = (oy * stride + ky) as isize - pad;
                    let dst_row = &mut dst[oy * out.w..(oy + 1) * out.w];
                    if iy < 0 || iy >= s.h as isize {
                        dst_row.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[iy as usize * s.w..(iy as usize + 1) * s.w];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad;
                        *d = if ix < 0 || ix >= s.w as isize {
                            T::zero()
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Scalar>(geo: &ConvGeometry, col: &[T], grad_input: &mut [T]) {
    let s = geo.input;
    let out = geo.output();
    let (k, stride, pad) = (geo.kernel, geo.stride, geo.padding as isize);
    let cols = out.h * out.w;
    for c in 0..s.c {
        let plane = &mut grad_input[c * s.h * s.w..(c + 1) * s.h * s.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &col[row * cols..(row + 1) * cols];
                for oy in 0..out.h {
                    let iy = (oy * stride + ky) as isize - pad;
                    if iy < 0 || iy >= s.h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * s.w..(iy as usize + 1) * s.w];
                    for ox in 0..out.w {
                        let ix = (ox * stride + kx) as isize - pad;
                        if ix >= 0 && ix < s.w as isize {
                            dst_row[ix as usize] = dst_row[ix as usize] + src[oy * out.w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `out[m x n] += a[m x k] * b[k x n]`
fn matmul_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
}

/// `out[m x k] += a[m x n] * b[k x n]^T`
fn matmul_bt_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            let dot: T = a_row.iter().zip(b_row).map(|(&x, &y)| x * y).sum();
            out[i * k + p] = out[i * k + p] + dot;
        }
    }
}

/// `out[k x n] += a[m x k]^T * b[m x n]`
fn matmul_at_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let b_row = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
}

pub fn forward<T: Scalar>(geo: &ConvGeometry, input: &[T], weight: &[T], bias: Option<&[T]>) -> Vec<T> {
    let s = geo.input;
    let out = geo.output();
    let cols = out.h * out.w;
    let klen = geo.patch_len();
    let mut result = vec![T::zero(); out.numel()];
    let mut col = if geo.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); klen * cols]
    };
    for n in 0..s.n {
        let x = &input[n * s.c * s.plane()..(n + 1) * s.c * s.plane()];
        let y = &mut result[n * out.c * cols..(n + 1) * out.c * cols];
        if let Some(b) = bias {
            for (co, chunk) in y.chunks_mut(cols).enumerate() {
                chunk.fill(b[co]);
            }
        }
        let b_mat = if geo.is_pointwise() {
            x
        } else {
            im2col(geo, x, &mut col);
            &col
        };
        matmul_acc(weight, b_mat, y, out.c, klen, cols);
    }
    result
}

pub struct ConvGrads<T> {
    pub input: Vec<T>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

pub fn backward<T: Scalar>(geo: &ConvGeometry, input: &[T], weight: &[T], grad_out: &[T]) -> ConvGrads<T> {
    let s = geo.input;
    let out = geo.output();
    let cols = out.h * out.w;
    let klen = geo.patch_len();
    let mut g_in = vec![T::zero(); s.numel()];
    let mut g_w = vec![T::zero(); weight.len()];
    let mut g_b = vec![T::zero(); out.c];
    let pointwise = geo.is_pointwise();
    let mut col = if pointwise {
        Vec::new()
    } else {
        vec![T::zero(); klen * cols]
    };
    let mut g_col = if pointwise {
        Vec::new()
    } else {
        vec![T::zero(); klen * cols]
    };
    let in_stride = s.c * s.plane();
    for n in 0..s.n {
        let x = &input[n * in_stride..(n + 1) * in_stride];
        let gy = &grad_out[n * out.c * cols..(n + 1) * out.c * cols];
        for (co, chunk) in gy.chunks(cols).enumerate() {
            g_b[co] = g_b[co] + chunk.iter().copied().sum::<T>();
        }
        if pointwise {
            matmul_bt_acc(gy, x, &mut g_w, out.c, cols, klen);
            let gx = &mut g_in[n * in_stride..(n + 1) * in_stride];
            matmul_at_acc(weight, gy, gx, out.c, klen, cols);
        } else {
            im2col(geo, x, &mut col);
            matmul_bt_acc(gy, &col, &mut g_w, out.c, cols, klen);
            g_col.fill(T::zero());
            matmul_at_acc(weight, gy, &mut g_col, out.c, klen, cols);
            col2im_add(geo, &g_col, &mut g_in[n * in_stride..(n + 1) * in_stride]);
        }
    }
    ConvGrads {
        input: g_in,
        weight: g_w,
        bias: g_b,
    }
}

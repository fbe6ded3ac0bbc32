//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is an append-only list of nodes. Every operation appends one
//! node whose inputs already exist, so append order is a topological order and
//! [`Graph::backward`] only has to walk the list in reverse once.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ops::conv::{self, ConvGeometry};
use crate::ops::{pool, resize};
use crate::tensor::{Scalar, Shape, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T: Scalar> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geo: ConvGeometry,
    },
    Bilinear {
        input: Var,
    },
    AvgPool {
        input: Var,
        bins: usize,
    },
    Relu(Var),
    Sigmoid(Var),
    Concat(Vec<Var>),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
    Mean(Var),
    WeightedBce {
        pred: Var,
        target: Arc<Vec<T>>,
        weight: Arc<Vec<T>>,
        eps: T,
        normalizer: T,
    },
}

impl<T: Scalar> Op<T> {
    fn tag(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::Bilinear { .. } => "bilinear",
            Op::AvgPool { .. } => "avg_pool",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Concat(_) => "concat",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::WeightedBce { .. } => "weighted_bce",
        }
    }
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
}

#[derive(Default)]
pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    /// Operation tag of a node, e.g. `"conv2d"` or `"relu"`.
    pub fn op_tag(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.tag()
    }

    /// Direct inputs of a node, in operand order.
    pub fn inputs(&self, v: Var) -> Vec<Var> {
        match &self.nodes[v.0].op {
            Op::Leaf => vec![],
            Op::Conv2d {
                input, weight, bias, ..
            } => {
                let mut out = vec![*input, *weight];
                out.extend(bias);
                out
            }
            Op::Bilinear { input } | Op::AvgPool { input, .. } => vec![*input],
            Op::Relu(x) | Op::Sigmoid(x) | Op::Scale(x, _) | Op::Sum(x) | Op::Mean(x) => vec![*x],
            Op::Concat(xs) => xs.clone(),
            Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::WeightedBce { pred, .. } => vec![*pred],
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let xs = self.shape(input);
        let ws = self.shape(weight);
        if ws.h != ws.w {
            return Err(Error::invalid("conv2d", format!("kernel must be square, got {ws}")));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d", "stride must be positive"));
        }
        if ws.c != xs.c {
            return Err(Error::DimMismatch {
                op: "conv2d",
                dim: "input channels",
                expected: ws.c,
                actual: xs.c,
            });
        }
        if let Some(b) = bias {
            let bs = self.shape(b);
            if bs.numel() != ws.n {
                return Err(Error::DimMismatch {
                    op: "conv2d",
                    dim: "bias length",
                    expected: ws.n,
                    actual: bs.numel(),
                });
            }
        }
        let geo = ConvGeometry {
            input: xs,
            c_out: ws.n,
            kernel: ws.h,
            stride,
            padding,
        };
        for (extent, dim) in [(xs.h, "height"), (xs.w, "width")] {
            if ConvGeometry::out_extent(extent, ws.h, stride, padding).is_none() {
                return Err(Error::invalid(
                    "conv2d",
                    format!("{dim} {extent} with padding {padding} is smaller than kernel {}", ws.h),
                ));
            }
        }
        let data = conv::forward(
            &geo,
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.nodes[b.0].value.data()),
        );
        let value = Tensor::from_vec(geo.output(), data)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                bias,
                geo,
            },
        ))
    }

    pub fn bilinear_resize(&mut self, input: Var, out_h: usize, out_w: usize) -> Result<Var> {
        if out_h == 0 || out_w == 0 {
            return Err(Error::invalid(
                "bilinear_resize",
                format!("output size {out_h}x{out_w}"),
            ));
        }
        let s = self.shape(input);
        if s.h == 0 || s.w == 0 {
            return Err(Error::invalid("bilinear_resize", format!("empty input {s}")));
        }
        let data = resize::forward(self.value(input).data(), s, out_h, out_w);
        let value = Tensor::from_vec(s.with_spatial(out_h, out_w), data)?;
        Ok(self.push(value, Op::Bilinear { input }))
    }

    pub fn adaptive_avg_pool(&mut self, input: Var, bins: usize) -> Result<Var> {
        let s = self.shape(input);
        if bins == 0 || bins > s.h || bins > s.w {
            return Err(Error::invalid(
                "adaptive_avg_pool",
                format!("{bins} bins do not fit a {}x{} map", s.h, s.w),
            ));
        }
        let data = pool::forward(self.value(input).data(), s, bins);
        let value = Tensor::from_vec(s.with_spatial(bins, bins), data)?;
        Ok(self.push(value, Op::AvgPool { input, bins }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(value, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        self.push(value, Op::Sigmoid(x))
    }

    /// Stacks inputs along the channel axis in operand order.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::invalid("concat", "no operands"))?;
        if xs.len() == 1 {
            return Ok(first);
        }
        let s0 = self.shape(first);
        for &x in &xs[1..] {
            let s = self.shape(x);
            if s.n != s0.n || s.h != s0.h || s.w != s0.w {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: s0,
                    rhs: s,
                });
            }
        }
        let channels: usize = xs.iter().map(|&x| self.shape(x).c).sum();
        let out_shape = s0.with_channels(channels);
        let mut data = Vec::with_capacity(out_shape.numel());
        for n in 0..s0.n {
            for &x in xs {
                let s = self.shape(x);
                let per = s.c * s.plane();
                data.extend_from_slice(&self.value(x).data()[n * per..(n + 1) * per]);
            }
        }
        let value = Tensor::from_vec(out_shape, data)?;
        Ok(self.push(value, Op::Concat(xs.to_vec())))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::ShapeMismatch { op, lhs: sa, rhs: sb });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let value = Tensor::from_vec(self.shape(a), data)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let value = Tensor::from_vec(self.shape(a), data)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let value = self.value(x).map(|v| v * factor);
        self.push(value, Op::Scale(x, factor))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total: T = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(total), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let n = T::of(t.shape().numel() as f64);
        let total: T = t.data().iter().copied().sum();
        self.push(Tensor::scalar(total / n), Op::Mean(x))
    }

    /// `sum_i w_i * BCE(clamp(p_i), y_i) / normalizer`, a scalar.
    ///
    /// `target` and `weight` are constants with one entry per element of `pred`.
    pub fn weighted_bce(
        &mut self,
        pred: Var,
        target: Arc<Vec<T>>,
        weight: Arc<Vec<T>>,
        eps: T,
        normalizer: T,
    ) -> Result<Var> {
        let n = self.shape(pred).numel();
        for (len, dim) in [(target.len(), "target length"), (weight.len(), "weight length")] {
            if len != n {
                return Err(Error::DimMismatch {
                    op: "weighted_bce",
                    dim,
                    expected: n,
                    actual: len,
                });
            }
        }
        let one = T::one();
        let total: T = self
            .value(pred)
            .data()
            .iter()
            .zip(target.iter())
            .zip(weight.iter())
            .map(|((&p, &y), &w)| {
                let p = p.max(eps).min(one - eps);
                -w * (y * p.ln() + (one - y) * (one - p).ln())
            })
            .sum();
        Ok(self.push(
            Tensor::scalar(total / normalizer),
            Op::WeightedBce {
                pred,
                target,
                weight,
                eps,
                normalizer,
            },
        ))
    }

    /// Reverse pass from a scalar node. Consumes the graph.
    pub fn backward(self, loss: Var) -> Result<Gradients<T>> {
        let ls = self.shape(loss);
        if ls.numel() != 1 {
            return Err(Error::NonScalarLoss(ls));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);

        fn acc<T: Scalar>(slot: &mut Option<Vec<T>>, g: Vec<T>) {
            match slot {
                Some(existing) => {
                    for (e, v) in existing.iter_mut().zip(g) {
                        *e = *e + v;
                    }
                }
                None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    geo,
                } => {
                    let cg = conv::backward(geo, self.value(*input).data(), self.value(*weight).data(), &g);
                    acc(&mut grads[input.0], cg.input);
                    acc(&mut grads[weight.0], cg.weight);
                    if let Some(b) = bias {
                        acc(&mut grads[b.0], cg.bias);
                    }
                }
                Op::Bilinear { input } => {
                    let s = self.shape(*input);
                    let out = node.value.shape();
                    acc(&mut grads[input.0], resize::backward(&g, s, out.h, out.w));
                }
                Op::AvgPool { input, bins } => {
                    let s = self.shape(*input);
                    acc(&mut grads[input.0], pool::backward(&g, s, *bins));
                }
                Op::Relu(x) => {
                    let gx = self
                        .value(*x)
                        .data()
                        .iter()
                        .zip(&g)
                        .map(|(&v, &gv)| if v > T::zero() { gv } else { T::zero() })
                        .collect();
                    acc(&mut grads[x.0], gx);
                }
                Op::Sigmoid(x) => {
                    let gx = node
                        .value
                        .data()
                        .iter()
                        .zip(&g)
                        .map(|(&s, &gv)| gv * s * (T::one() - s))
                        .collect();
                    acc(&mut grads[x.0], gx);
                }
                Op::Concat(xs) => {
                    let s0 = node.value.shape();
                    let per_out = s0.c * s0.plane();
                    let mut offset = 0;
                    for x in xs {
                        let s = self.shape(*x);
                        let per = s.c * s.plane();
                        let mut gx = Vec::with_capacity(s.numel());
                        for n in 0..s.n {
                            let start = n * per_out + offset;
                            gx.extend_from_slice(&g[start..start + per]);
                        }
                        acc(&mut grads[x.0], gx);
                        offset += per;
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut grads[a.0], g.clone());
                    acc(&mut grads[b.0], g.clone());
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    let ga = g.iter().zip(vb).map(|(&gv, &y)| gv * y).collect();
                    let gb = g.iter().zip(va).map(|(&gv, &x)| gv * x).collect();
                    acc(&mut grads[a.0], ga);
                    acc(&mut grads[b.0], gb);
                }
                Op::Scale(x, f) => {
                    acc(&mut grads[x.0], g.iter().map(|&v| v * *f).collect());
                }
                Op::Sum(x) => {
                    let n = self.shape(*x).numel();
                    acc(&mut grads[x.0], vec![g[0]; n]);
                }
                Op::Mean(x) => {
                    let n = self.shape(*x).numel();
                    acc(&mut grads[x.0], vec![g[0] / T::of(n as f64); n]);
                }
                Op::WeightedBce {
                    pred,
                    target,
                    weight,
                    eps,
                    normalizer,
                } => {
                    let one = T::one();
                    let scale = g[0] / *normalizer;
                    let gp = self
                        .value(*pred)
                        .data()
                        .iter()
                        .zip(target.iter())
                        .zip(weight.iter())
                        .map(|((&p, &y), &w)| {
                            if p < *eps || p > one - *eps {
                                T::zero()
                            } else {
                                scale * w * (p - y) / (p * (one - p))
                            }
                        })
                        .collect();
                    acc(&mut grads[pred.0], gp);
                }
            }
            grads[idx] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| g.map(|g| Tensor::from_vec(node.value.shape(), g).expect("gradient shape")))
            .collect();
        Ok(Gradients { grads })
    }
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Result of [`Graph::backward`]: one optional gradient per node.
pub struct Gradients<T: Scalar = f32> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to `v`, or `None` if `v` does not reach the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`] but unreachable nodes yield zeros of the given shape.
    pub fn get_or_zeros(&self, v: Var, shape: Shape) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Shape, data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn identity_pointwise_conv_reproduces_input() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_fn(Shape::new(2, 3, 4, 5), |n, c, y, x| {
            (n * 60 + c * 20 + y * 5 + x) as f64 * 0.1 - 3.0
        }));
        let w = g.leaf(Tensor::from_fn(
            Shape::new(3, 3, 1, 1),
            |o, i, _, _| {
                if o == i {
                    1.0
                } else {
                    0.0
                }
            },
        ));
        let y = g.conv2d(x, w, None, 1, 0).unwrap();
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn three_by_three_ones_with_padding() {
        let mut g = Graph::<f32>::new();
        let x = g.leaf(Tensor::full(Shape::new(1, 1, 3, 3), 1.0));
        let w = g.leaf(Tensor::full(Shape::new(1, 1, 3, 3), 1.0));
        let y = g.conv2d(x, w, None, 1, 1).unwrap();
        assert_eq!(g.value(y).data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn strided_pointwise_conv_samples_even_positions() {
        let mut g = Graph::<f32>::new();
        let x = g.leaf(Tensor::from_fn(Shape::new(1, 1, 4, 4), |_, _, y, x| (y * 4 + x) as f32));
        let w = g.leaf(Tensor::full(Shape::new(1, 1, 1, 1), 1.0));
        let y = g.conv2d(x, w, None, 2, 0).unwrap();
        assert_eq!(g.shape(y), Shape::new(1, 1, 2, 2));
        // positions (0,0), (0,2), (2,0), (2,2)
        assert_eq!(g.value(y).data(), &[0.0, 2.0, 8.0, 10.0]);
    }

    #[test]
    fn conv_channel_mismatch_names_dimension() {
        let mut g = Graph::<f32>::new();
        let x = g.leaf(Tensor::zeros(Shape::new(1, 2, 4, 4)));
        let w = g.leaf(Tensor::zeros(Shape::new(1, 3, 1, 1)));
        let err = g.conv2d(x, w, None, 1, 0).unwrap_err();
        assert!(err.to_string().contains("input channels"), "{err}");
    }

    #[test]
    fn bilinear_examples() {
        let mut g = Graph::<f32>::new();
        let x = g.leaf(Tensor::full(Shape::new(1, 1, 1, 1), 0.7));
        let y = g.bilinear_resize(x, 2, 2).unwrap();
        assert_eq!(g.value(y).data(), &[0.7; 4]);

        let row = g.leaf(t(Shape::new(1, 1, 1, 2), &[0.0, 2.0]).cast());
        let wide = g.bilinear_resize(row, 1, 4).unwrap();
        assert_eq!(g.value(wide).data(), &[0.0, 0.5, 1.5, 2.0]);

        let m = g.leaf(Tensor::from_fn(Shape::new(1, 2, 3, 5), |_, c, y, x| {
            (c as f32 + 0.3) * (y as f32).sin() + x as f32 / 7.0
        }));
        let same = g.bilinear_resize(m, 3, 5).unwrap();
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(g.value(same)), bits(g.value(m)));
    }

    #[test]
    fn pooling_examples() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_fn(Shape::new(1, 1, 4, 4), |_, _, y, _| y as f64));
        let p = g.adaptive_avg_pool(x, 2).unwrap();
        assert_eq!(g.value(p).data(), &[0.5, 0.5, 2.5, 2.5]);
        let global = g.adaptive_avg_pool(x, 1).unwrap();
        assert_eq!(g.value(global).data(), &[1.5]);
        let ident = g.adaptive_avg_pool(x, 4).unwrap();
        assert_eq!(g.value(ident), g.value(x));
        assert!(g.adaptive_avg_pool(x, 5).is_err());
    }

    #[test]
    fn pointwise_examples() {
        let mut g = Graph::<f32>::new();
        let x = g.leaf(Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![-1.0, 2.0, 0.0]).unwrap());
        let r = g.relu(x);
        assert_eq!(g.value(r).data(), &[0.0, 2.0, 0.0]);
        let s = g.sigmoid(x);
        assert_eq!(g.value(s).data()[2], 0.5);
    }

    #[test]
    fn concat_places_operands_in_order() {
        let mut g = Graph::<f32>::new();
        let a = g.leaf(Tensor::from_fn(Shape::new(1, 2, 4, 4), |_, c, y, x| {
            (c * 100 + y * 4 + x) as f32
        }));
        let b = g.leaf(Tensor::from_fn(Shape::new(1, 3, 4, 4), |_, c, y, x| {
            -((c * 100 + y * 4 + x) as f32)
        }));
        let ab = g.concat(&[a, b]).unwrap();
        assert_eq!(g.shape(ab), Shape::new(1, 5, 4, 4));
        let v = g.value(ab).clone();
        for y in 0..4 {
            for x in 0..4 {
                for c in 0..2 {
                    assert_eq!(v.get(0, c, y, x), g.value(a).get(0, c, y, x));
                }
                for c in 0..3 {
                    assert_eq!(v.get(0, c + 2, y, x), g.value(b).get(0, c, y, x));
                }
            }
        }
        let small = g.leaf(Tensor::zeros(Shape::new(1, 1, 2, 4)));
        let err = g.concat(&[a, small]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("1x2x4x4") && msg.contains("1x1x2x4"), "{msg}");
    }

    #[test]
    fn relu_sum_gradient() {
        let mut g = Graph::<f32>::new();
        let x = g.leaf(Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![-1.0, 3.0]).unwrap());
        let r = g.relu(x);
        let loss = g.sum(r);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn unreachable_leaves_get_no_gradient() {
        let mut g = Graph::<f32>::new();
        let a = g.leaf(Tensor::full(Shape::new(1, 1, 2, 2), 1.0));
        let b = g.leaf(Tensor::full(Shape::new(1, 1, 2, 2), 2.0));
        let loss = g.sum(a);
        let _unused = g.sum(b);
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(b).is_none());
        assert_eq!(grads.get_or_zeros(b, Shape::new(1, 1, 2, 2)).data(), &[0.0; 4]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::<f32>::new();
        let a = g.leaf(Tensor::zeros(Shape::new(1, 1, 2, 2)));
        assert!(matches!(g.backward(a), Err(Error::NonScalarLoss(_))));
    }
}

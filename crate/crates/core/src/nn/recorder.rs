//! One architecture description, two interpretations: static shape tracing
//! ([`crate::graph::ShapeTracer`]) and differentiable execution ([`Executor`]).

use crate::autograd::{Gradients, Graph, Var};
use crate::error::{Error, Result};
use crate::graph::Component;
use crate::nn::layers::ConvLayer;
use crate::nn::params::{ParamId, ParamStore};
use crate::tensor::{Scalar, Shape, Tensor};

pub trait Recorder {
    type Value: Clone;

    fn shape_of(&self, v: &Self::Value) -> Shape;

    /// Component tag applied to subsequently recorded operations.
    fn set_component(&mut self, component: Component);

    fn conv2d(&mut self, name: &str, x: &Self::Value, layer: &ConvLayer) -> Result<Self::Value>;
    fn batch_norm(&mut self, name: &str, x: &Self::Value) -> Result<Self::Value>;
    fn relu(&mut self, name: &str, x: &Self::Value) -> Result<Self::Value>;
    fn sigmoid(&mut self, name: &str, x: &Self::Value) -> Result<Self::Value>;
    fn swish(&mut self, name: &str, x: &Self::Value) -> Result<Self::Value>;
    fn bilinear_resize(&mut self, name: &str, x: &Self::Value, out_h: usize, out_w: usize) -> Result<Self::Value>;
    fn adaptive_avg_pool(&mut self, name: &str, x: &Self::Value, bins: usize) -> Result<Self::Value>;
    fn max_pool(
        &mut self,
        name: &str,
        x: &Self::Value,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self::Value>;
    fn concat(&mut self, name: &str, xs: &[Self::Value]) -> Result<Self::Value>;
    fn add(&mut self, name: &str, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    /// Multiplies each channel of `x` by the matching entry of a `(n, c, 1, 1)` gate.
    fn channel_scale(&mut self, name: &str, x: &Self::Value, gate: &Self::Value) -> Result<Self::Value>;
}

/// Runs recorded operations on an autograd [`Graph`] with parameter values
/// from a [`ParamStore`].
pub struct Executor<'p, T: Scalar = f32> {
    pub graph: Graph<T>,
    params: &'p ParamStore<T>,
    param_vars: Vec<Option<Var>>,
    trace: Vec<(String, Shape)>,
}

impl<'p, T: Scalar> Executor<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Executor {
            graph: Graph::new(),
            params,
            param_vars: vec![None; params.len()],
            trace: Vec::new(),
        }
    }

    pub fn input(&mut self, name: &str, value: Tensor<T>) -> Var {
        self.trace.push((name.to_string(), value.shape()));
        self.graph.leaf(value)
    }

    /// Graph variable holding parameter `id` (created on first use).
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let v = self.graph.leaf(self.params.get(id).clone());
        self.param_vars[id.0] = Some(v);
        v
    }

    /// `(name, runtime shape)` of every recorded operation, in order.
    pub fn trace(&self) -> &[(String, Shape)] {
        &self.trace
    }

    fn record(&mut self, name: &str, v: Var) -> Var {
        self.trace.push((name.to_string(), self.graph.shape(v)));
        v
    }

    /// Reverse pass; returns one gradient slot per parameter.
    pub fn backward(self, loss: Var) -> Result<ParamGrads<T>> {
        let param_vars = self.param_vars;
        let grads = self.graph.backward(loss)?;
        let shapes: Vec<Shape> = self.params.values().iter().map(Tensor::shape).collect();
        Ok(ParamGrads::collect(&grads, &param_vars, &shapes))
    }

    /// Reverse pass that also returns node-level gradients.
    pub fn backward_full(self, loss: Var) -> Result<(ParamGrads<T>, Gradients<T>)> {
        let param_vars = self.param_vars;
        let grads = self.graph.backward(loss)?;
        let shapes: Vec<Shape> = self.params.values().iter().map(Tensor::shape).collect();
        Ok((ParamGrads::collect(&grads, &param_vars, &shapes), grads))
    }

    fn unsupported(what: &str, name: &str) -> Error {
        Error::Unsupported(format!("{what} ({name})"))
    }
}

/// Per-parameter gradients. `None` marks parameters the loss does not reach.
pub struct ParamGrads<T: Scalar = f32> {
    slots: Vec<Option<Tensor<T>>>,
    shapes: Vec<Shape>,
}

impl<T: Scalar> ParamGrads<T> {
    fn collect(grads: &Gradients<T>, vars: &[Option<Var>], shapes: &[Shape]) -> Self {
        let slots = vars.iter().map(|v| v.and_then(|v| grads.get(v).cloned())).collect();
        ParamGrads {
            slots,
            shapes: shapes.to_vec(),
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.slots[id.0].as_ref()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Dense gradients with zeros for unreachable parameters.
    pub fn dense(&self) -> Vec<Tensor<T>> {
        self.slots
            .iter()
            .zip(&self.shapes)
            .map(|(g, s)| g.clone().unwrap_or_else(|| Tensor::zeros(*s)))
            .collect()
    }

    /// Elementwise `self += other`, treating missing slots as zero.
    pub fn accumulate(&mut self, other: &ParamGrads<T>) {
        for (mine, theirs) in self.slots.iter_mut().zip(&other.slots) {
            match (mine.as_mut(), theirs) {
                (_, None) => {}
                (None, Some(t)) => *mine = Some(t.clone()),
                (Some(m), Some(t)) => {
                    let sum = m.data().iter().zip(t.data()).map(|(&a, &b)| a + b).collect();
                    *m = Tensor::from_vec(m.shape(), sum).expect("same shape");
                }
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for slot in self.slots.iter_mut().flatten() {
            *slot = slot.map(|v| v * factor);
        }
    }
}

impl<T: Scalar> Recorder for Executor<'_, T> {
    type Value = Var;

    fn shape_of(&self, v: &Var) -> Shape {
        self.graph.shape(*v)
    }

    fn set_component(&mut self, _component: Component) {}

    fn conv2d(&mut self, name: &str, x: &Var, layer: &ConvLayer) -> Result<Var> {
        if layer.spec.groups != 1 {
            return Err(Self::unsupported("grouped convolution", name));
        }
        let w = self.param(layer.weight);
        let b = layer.bias.map(|id| self.param(id));
        let v = self.graph.conv2d(*x, w, b, layer.spec.stride, layer.spec.padding)?;
        Ok(self.record(name, v))
    }

    fn batch_norm(&mut self, name: &str, _x: &Var) -> Result<Var> {
        Err(Self::unsupported("batch normalization", name))
    }

    fn relu(&mut self, name: &str, x: &Var) -> Result<Var> {
        let v = self.graph.relu(*x);
        Ok(self.record(name, v))
    }

    fn sigmoid(&mut self, name: &str, x: &Var) -> Result<Var> {
        let v = self.graph.sigmoid(*x);
        Ok(self.record(name, v))
    }

    fn swish(&mut self, name: &str, _x: &Var) -> Result<Var> {
        Err(Self::unsupported("swish", name))
    }

    fn bilinear_resize(&mut self, name: &str, x: &Var, out_h: usize, out_w: usize) -> Result<Var> {
        let v = self.graph.bilinear_resize(*x, out_h, out_w)?;
        Ok(self.record(name, v))
    }

    fn adaptive_avg_pool(&mut self, name: &str, x: &Var, bins: usize) -> Result<Var> {
        let v = self.graph.adaptive_avg_pool(*x, bins)?;
        Ok(self.record(name, v))
    }

    fn max_pool(&mut self, name: &str, _x: &Var, _k: usize, _s: usize, _p: usize) -> Result<Var> {
        Err(Self::unsupported("max pooling", name))
    }

    fn concat(&mut self, name: &str, xs: &[Var]) -> Result<Var> {
        let v = self.graph.concat(xs)?;
        if xs.len() == 1 {
            return Ok(v);
        }
        Ok(self.record(name, v))
    }

    fn add(&mut self, name: &str, a: &Var, b: &Var) -> Result<Var> {
        let v = self.graph.add(*a, *b)?;
        Ok(self.record(name, v))
    }

    fn channel_scale(&mut self, name: &str, _x: &Var, _gate: &Var) -> Result<Var> {
        Err(Self::unsupported("channel scaling", name))
    }
}

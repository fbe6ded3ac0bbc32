//! Parameter declaration (shapes only) and parameter storage (values).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    /// Convolution kernel, He-initialized.
    Weight { fan_in: usize },
    /// Zero-initialized.
    Bias,
    /// Normalization affine parameters of structural backbones.
    Norm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Shape,
    pub kind: ParamKind,
}

/// Declared parameters of a model, without values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamRegistry {
    specs: Vec<ParamSpec>,
}

impl ParamRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, shape: Shape, kind: ParamKind) -> ParamId {
        self.specs.push(ParamSpec {
            name: name.into(),
            shape,
            kind,
        });
        ParamId(self.specs.len() - 1)
    }

    pub fn spec(&self, id: ParamId) -> &ParamSpec {
        &self.specs[id.0]
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamSpec)> {
        self.specs.iter().enumerate().map(|(i, s)| (ParamId(i), s))
    }

    /// Total number of scalars across all declared tensors.
    pub fn scalar_count(&self) -> u64 {
        self.specs.iter().map(|s| s.shape.numel() as u64).sum()
    }
}

/// He (Kaiming) normal initialization: `N(0, 2 / fan_in)`.
pub fn he_init<T: Scalar>(shape: Shape, fan_in: usize, rng: &mut impl rand::Rng) -> Tensor<T> {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let data = (0..shape.numel()).map(|_| T::of(normal.sample(rng))).collect();
    Tensor::from_vec(shape, data).expect("sized by shape")
}

/// Parameter values, indexed by [`ParamId`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T: Scalar = f32> {
    values: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    /// He-normal kernels and zero biases, deterministic under `seed`.
    pub fn init(registry: &ParamRegistry, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = registry
            .specs
            .iter()
            .map(|spec| match spec.kind {
                ParamKind::Weight { fan_in } => he_init(spec.shape, fan_in, &mut rng),
                ParamKind::Bias => Tensor::zeros(spec.shape),
                ParamKind::Norm => Tensor::full(spec.shape, T::one()),
            })
            .collect();
        ParamStore { values }
    }

    pub fn from_values(registry: &ParamRegistry, values: Vec<Tensor<T>>) -> Result<Self> {
        if values.len() != registry.len() {
            return Err(Error::DimMismatch {
                op: "param store",
                dim: "tensor count",
                expected: registry.len(),
                actual: values.len(),
            });
        }
        for ((_, spec), v) in registry.iter().zip(&values) {
            if spec.shape != v.shape() {
                return Err(Error::ShapeMismatch {
                    op: "param store",
                    lhs: spec.shape,
                    rhs: v.shape(),
                });
            }
        }
        Ok(ParamStore { values })
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let current = self.values[id.0].shape();
        if current != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "param store",
                lhs: current,
                rhs: value.shape(),
            });
        }
        self.values[id.0] = value;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    pub fn scalar_count(&self) -> u64 {
        self.values.iter().map(|t| t.shape().numel() as u64).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            values: self.values.iter().map(Tensor::cast).collect(),
        }
    }
}

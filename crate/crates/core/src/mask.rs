use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Binary ground-truth map, row-major, values in {0, 1}.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    h: usize,
    w: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(h: usize, w: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != h * w {
            return Err(Error::DimMismatch {
                op: "mask",
                dim: "pixel count",
                expected: h * w,
                actual: data.len(),
            });
        }
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::invalid("mask", format!("value {v} is not 0 or 1")));
        }
        Ok(Mask { h, w, data })
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                data.push(f(y, x) as u8);
            }
        }
        Mask { h, w, data }
    }

    pub fn filled(h: usize, w: usize, value: bool) -> Self {
        Mask {
            h,
            w,
            data: vec![value as u8; h * w],
        }
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.w + x] == 1
    }

    pub fn foreground(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn complement(&self) -> Mask {
        Mask {
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&v| 1 - v).collect(),
        }
    }

    pub fn values<T: Scalar>(&self) -> Vec<T> {
        self.data
            .iter()
            .map(|&v| if v == 1 { T::one() } else { T::zero() })
            .collect()
    }

    /// `(1, 1, h, w)` tensor of 0/1 values.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_vec(Shape::new(1, 1, self.h, self.w), self.values()).expect("sized")
    }
}

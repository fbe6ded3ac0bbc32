use crate::error::{Error, Result};
use crate::nn::params::{ParamId, ParamStore};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug)]
pub struct AdamState<T: Scalar = f32> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. `grads[i]` belongs to parameter `i`.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Tensor<T>]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::DimMismatch {
                op: "adam_step",
                dim: "parameter count",
                expected: params.len(),
                actual: grads.len(),
            });
        }
        for (i, g) in grads.iter().enumerate() {
            let p = params.get(ParamId(i)).shape();
            if p != g.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    lhs: p,
                    rhs: g.shape(),
                });
            }
        }
        if self.first.is_empty() {
            self.first = params
                .values()
                .iter()
                .map(|t| vec![T::zero(); t.data().len()])
                .collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let one = T::one();
        let corr1 = T::of(1.0 - self.beta1.powi(self.step as i32));
        let corr2 = T::of(1.0 - self.beta2.powi(self.step as i32));
        let (lr, eps) = (T::of(self.lr), T::of(self.epsilon));

        for (i, g) in grads.iter().enumerate() {
            let id = ParamId(i);
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            let updated: Vec<T> = params
                .get(id)
                .data()
                .iter()
                .zip(g.data())
                .zip(m.iter_mut().zip(v.iter_mut()))
                .map(|((&p, &g), (m, v))| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let m_hat = *m / corr1;
                    let v_hat = *v / corr2;
                    p - lr * m_hat / (v_hat.sqrt() + eps)
                })
                .collect();
            let shape = g.shape();
            params.set(id, Tensor::from_vec(shape, updated)?)?;
        }
        Ok(())
    }
}

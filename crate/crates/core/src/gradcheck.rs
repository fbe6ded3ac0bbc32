//! Central-difference gradient checking in 64-bit arithmetic.

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-3;

fn evaluate<F>(f: &F, point: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = point.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.value(out).item().ok_or_else(|| Error::NonScalarLoss(g.shape(out)))
}

/// Largest `|analytic - numeric| / max(1, |numeric|)` over every coordinate of
/// every input tensor, where `numeric` is the central difference with step `eps`.
pub fn grad_check<F>(f: F, point: &[Tensor<f64>], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = point.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut worst = 0.0f64;
    for (k, (tensor, var)) in point.iter().zip(&vars).enumerate() {
        let analytic = grads.get_or_zeros(*var, tensor.shape());
        for i in 0..tensor.data().len() {
            let mut shifted = point.to_vec();
            let mut bump = |delta: f64| -> Result<f64> {
                let mut data = tensor.data().to_vec();
                data[i] += delta;
                shifted[k] = Tensor::from_vec(tensor.shape(), data)?;
                evaluate(&f, &shifted)
            };
            let numeric = (bump(eps)? - bump(-eps)?) / (2.0 * eps);
            let err = (analytic.data()[i] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

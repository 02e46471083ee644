//! Bias-corrected adaptive-moment optimizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Tensor;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter tensor, plus the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T: Scalar = f64> {
    pub first: Vec<Tensor<T>>,
    pub second: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let first: Vec<Tensor<T>> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            second: first.clone(),
            first,
            step: 0,
        }
    }
}

/// One update of every tensor in `params` from the matching entry of `grads`.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut OptimizerState<T>,
    config: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::dim(
            "adam_step",
            &[params.len(), state.first.len()],
            &[grads.len()],
        ));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.first) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::dim("adam_step", p.shape(), g.shape()));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(config.beta1), T::lit(config.beta2));
    let lr = T::lit(config.learning_rate);
    let eps = T::lit(config.eps);
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);

    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let mut m = state.first[i].data().to_vec();
        let mut v = state.second[i].data().to_vec();
        let mut values = p.data().to_vec();
        for k in 0..values.len() {
            m[k] = b1 * m[k] + (T::one() - b1) * g[k];
            v[k] = b2 * v[k] + (T::one() - b2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            values[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        let shape = p.shape().to_vec();
        **p = Tensor::new(shape.clone(), values)?;
        state.first[i] = Tensor::new(shape.clone(), m)?;
        state.second[i] = Tensor::new(shape, v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = Tensor::vector(vec![1.0, -2.0]);
        let before = p.clone();
        let mut state = OptimizerState::new([&p]);
        let grads = vec![Tensor::zeros(&[2])];
        for _ in 0..3 {
            adam_step(&mut [&mut p], &grads, &mut state, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn descends_on_square() {
        let mut x = Tensor::vector(vec![1.0]);
        let mut state = OptimizerState::new([&x]);
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let g = vec![x.scale(2.0)];
        adam_step(&mut [&mut x], &g, &mut state, &cfg).unwrap();
        assert!(x.data()[0] < 1.0);
    }

    #[test]
    fn shape_mismatch() {
        let mut x = Tensor::vector(vec![1.0]);
        let mut state = OptimizerState::new([&x]);
        let g = vec![Tensor::zeros(&[2])];
        assert!(adam_step(&mut [&mut x], &g, &mut state, &AdamConfig::default()).is_err());
    }
}

//! Central finite-difference gradient checking.

use crate::error::Result;
use crate::numeric::graph::{Graph, Var};
use crate::numeric::tensor::Tensor;
use crate::scalar::Scalar;

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor of the relative error.
pub const REL_FLOOR: f64 = 1e-8;

/// Evaluates the scalar function built by `f` at `x` without recording gradients.
pub fn eval_scalar<T, F>(f: &F, x: &Tensor<T>) -> Result<T>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let v = g.constant(x.clone());
    let out = f(&mut g, v)?;
    Ok(g.value(out).item())
}

/// Gradient of `f` at `x` from the backward pass.
pub fn analytic_gradient<T, F>(f: &F, x: &Tensor<T>) -> Result<Tensor<T>>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let v = g.param(x.clone());
    let out = f(&mut g, v)?;
    let grads = g.backward(out)?;
    Ok(grads.get_or_zeros(v, x.shape()))
}

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn numeric_gradient<T, F>(f: &F, x: &Tensor<T>, h: T) -> Result<Tensor<T>>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, Var) -> Result<Var>,
{
    let base = x.data().to_vec();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += h;
        let mut minus = base.clone();
        minus[i] -= h;
        let fp = eval_scalar(f, &Tensor::new(x.shape().to_vec(), plus)?)?;
        let fm = eval_scalar(f, &Tensor::new(x.shape().to_vec(), minus)?)?;
        out.push((fp - fm) / (h + h));
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Largest coordinate-wise `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`
/// for the scalar function built by `f`, at `x`, with step [`FD_STEP`].
pub fn grad_check<T, F>(f: F, x: &Tensor<T>) -> Result<T>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, Var) -> Result<Var>,
{
    let analytic = analytic_gradient(&f, x)?;
    let numeric = numeric_gradient(&f, x, T::lit(FD_STEP))?;
    Ok(max_relative_error(analytic.data(), numeric.data()))
}

pub fn max_relative_error<T: Scalar>(analytic: &[T], numeric: &[T]) -> T {
    let floor = T::lit(REL_FLOOR);
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(T::zero(), T::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let x = Tensor::vector(vec![1.0, 2.0]);
        let err = grad_check(
            |g: &mut Graph<f64>, v| {
                let c = g.reshape(v, &[2, 1])?;
                let r = g.reshape(v, &[1, 2])?;
                let sq = g.matmul(r, c)?;
                Ok(g.sum(sq))
            },
            &x,
        )
        .unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // relu at a kink: analytic 0 on the left branch, numeric 0.5
        let x = Tensor::vector(vec![0.0]);
        let err = grad_check(
            |g: &mut Graph<f64>, v| {
                let r = g.relu(v);
                Ok(g.sum(r))
            },
            &x,
        )
        .unwrap();
        assert!(err > 0.1);
    }
}

//! Reverse-mode differentiation over a recorded computation graph.
//!
//! A [`Graph`] is an append-only list of nodes. Node creation order is a
//! topological order, so the backward pass walks the list from the end and
//! every gradient is accumulated in a fixed order.
//!
//! ```
//! use czsl::numeric::{Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.param(Tensor::vector(vec![1.0, -2.0, 3.0]));
//! let s = g.sum(x);
//! let grads = g.backward(s).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
//! ```

use crate::error::{Error, Result};
use crate::numeric::tensor::{dot, floored_norm, softmax, Tensor, NORM_FLOOR};
use crate::scalar::Scalar;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Local-gradient rule recorded with each node.
#[derive(Clone, Debug)]
pub enum Op<T: Scalar> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Reshape(Var),
    Transpose(Var),
    Concat(Var, Var),
    Slice(Var, usize),
    AddColBias(Var, Var),
    RowSoftmax(Var),
    ColSoftmax(Var),
    ColCosine(Var, Var),
    CrossEntropy(Var, usize),
    Sum(Var),
}

impl<T: Scalar> Op<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Scale(..) => "scale",
            Op::Relu(..) => "relu",
            Op::Reshape(..) => "reshape",
            Op::Transpose(..) => "transpose",
            Op::Concat(..) => "concat",
            Op::Slice(..) => "slice",
            Op::AddColBias(..) => "add_col_bias",
            Op::RowSoftmax(..) => "row_softmax",
            Op::ColSoftmax(..) => "col_softmax",
            Op::ColCosine(..) => "col_cosine",
            Op::CrossEntropy(..) => "cross_entropy",
            Op::Sum(..) => "sum",
        }
    }

    pub fn parents(&self) -> Vec<Var> {
        match *self {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Concat(a, b)
            | Op::AddColBias(a, b)
            | Op::ColCosine(a, b) => vec![a, b],
            Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Reshape(a)
            | Op::Transpose(a)
            | Op::Slice(a, _)
            | Op::RowSoftmax(a)
            | Op::ColSoftmax(a)
            | Op::CrossEntropy(a, _)
            | Op::Sum(a) => vec![a],
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Single-use computation record. Build it forward, call
/// [`backward`](Graph::backward) once, then drop it.
#[derive(Clone, Debug, Default)]
pub struct Graph<T: Scalar = f64> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

/// Accumulated gradients, indexed by [`Var`].
#[derive(Clone, Debug)]
pub struct Gradients<T: Scalar = f64> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient of `var`, or zeros of the given shape when `var` did not
    /// influence the loss.
    pub fn get_or_zeros(&self, var: Var, shape: &[usize]) -> Tensor<T> {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn op(&self, var: Var) -> &Op<T> {
        &self.nodes[var.0].op
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let needs_grad = op.parents().iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let value = self.value(a).scale(factor);
        self.push(value, Op::Scale(a, factor))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -T::one())
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(T::zero()));
        self.push(value, Op::Relu(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        Ok(self.push(value, Op::Reshape(a)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose()?;
        Ok(self.push(value, Op::Transpose(a)))
    }

    /// Concatenates two vectors.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rank() != 1 || vb.rank() != 1 {
            return Err(Error::dim("concat", va.shape(), vb.shape()));
        }
        let mut data = va.data().to_vec();
        data.extend_from_slice(vb.data());
        Ok(self.push(Tensor::vector(data), Op::Concat(a, b)))
    }

    /// `len` consecutive elements of the flattened input, as a vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let src = self.value(a);
        if start + len > src.len() {
            return Err(Error::Index {
                index: start + len,
                len: src.len(),
            });
        }
        let value = Tensor::vector(src.data()[start..start + len].to_vec());
        Ok(self.push(value, Op::Slice(a, start)))
    }

    /// Adds the length-`r` vector `bias` to every column of the `r×c` matrix `m`.
    pub fn add_col_bias(&mut self, m: Var, bias: Var) -> Result<Var> {
        let (vm, vb) = (self.value(m), self.value(bias));
        if vm.rank() != 2 || vb.len() != vm.rows() {
            return Err(Error::dim("add_col_bias", vm.shape(), vb.shape()));
        }
        let c = vm.cols();
        let mut data = vm.data().to_vec();
        for (i, &b) in vb.data().iter().enumerate() {
            for v in &mut data[i * c..(i + 1) * c] {
                *v += b;
            }
        }
        let value = Tensor::new(vm.shape().to_vec(), data)?;
        Ok(self.push(value, Op::AddColBias(m, bias)))
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).row_softmax()?;
        Ok(self.push(value, Op::RowSoftmax(a)))
    }

    pub fn col_softmax(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).col_softmax()?;
        Ok(self.push(value, Op::ColSoftmax(a)))
    }

    /// Column-pairwise cosine of a `d×p` and a `d×q` matrix, giving `p×q`.
    pub fn col_cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).col_cosine(self.value(b))?;
        Ok(self.push(value, Op::ColCosine(a, b)))
    }

    /// Cosine of two vectors as a scalar node.
    pub fn cosine(&mut self, u: Var, v: Var) -> Result<Var> {
        let (lu, lv) = (self.value(u).len(), self.value(v).len());
        if self.value(u).rank() != 1 || self.value(v).rank() != 1 || lu != lv {
            return Err(Error::dim(
                "cosine",
                self.value(u).shape(),
                self.value(v).shape(),
            ));
        }
        let cu = self.reshape(u, &[lu, 1])?;
        let cv = self.reshape(v, &[lv, 1])?;
        let c = self.col_cosine(cu, cv)?;
        self.reshape(c, &[])
    }

    /// `−log softmax(logits)[target]` over the flattened logits.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let value = crate::numeric::tensor::cross_entropy(self.value(logits).data(), target)?;
        Ok(self.push(Tensor::scalar(value), Op::CrossEntropy(logits, target)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a))
    }

    /// Sum of scalar nodes. Returns a zero constant for an empty list.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let mut iter = terms.iter().copied();
        let Some(mut acc) = iter.next() else {
            return Ok(self.constant(Tensor::scalar(T::zero())));
        };
        for t in iter {
            acc = self.add(acc, t)?;
        }
        Ok(acc)
    }

    /// Propagates gradients from the scalar `loss` back to every node that
    /// depends on a [`param`](Graph::param) leaf.
    ///
    /// A graph can be differentiated only once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(Error::State(
                "backward already ran on this graph".to_string(),
            ));
        }
        let loss_shape = self.value(loss).shape().to_vec();
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {loss_shape:?}"
            )));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::ones(&loss_shape));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            for (parent, g) in self.local_grads(idx, &upstream)? {
                if !self.nodes[parent.0].needs_grad {
                    continue;
                }
                match &mut grads[parent.0] {
                    Some(acc) => *acc = acc.add(&g)?,
                    slot @ None => *slot = Some(g),
                }
            }
            grads[idx] = Some(upstream);
        }
        Ok(Gradients { grads })
    }

    fn local_grads(&self, idx: usize, up: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let node = &self.nodes[idx];
        let out = &node.value;
        Ok(match node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                vec![
                    (a, up.matmul(&vb.transpose()?)?),
                    (b, va.transpose()?.matmul(up)?),
                ]
            }
            Op::Add(a, b) => vec![(a, up.clone()), (b, up.clone())],
            Op::Scale(a, f) => vec![(a, up.scale(f))],
            Op::Relu(a) => {
                let g = self
                    .value(a)
                    .zip_map(up, "relu", |x, g| if x > T::zero() { g } else { T::zero() })?;
                vec![(a, g)]
            }
            Op::Reshape(a) => vec![(a, up.reshape(self.value(a).shape())?)],
            Op::Transpose(a) => vec![(a, up.transpose()?)],
            Op::Concat(a, b) => {
                let na = self.value(a).len();
                let (ga, gb) = up.data().split_at(na);
                vec![
                    (a, Tensor::vector(ga.to_vec())),
                    (b, Tensor::vector(gb.to_vec())),
                ]
            }
            Op::Slice(a, start) => {
                let src = self.value(a);
                let mut data = vec![T::zero(); src.len()];
                data[start..start + up.len()].copy_from_slice(up.data());
                vec![(a, Tensor::new(src.shape().to_vec(), data)?)]
            }
            Op::AddColBias(m, b) => {
                let c = up.cols();
                let gb: Vec<T> = (0..up.rows())
                    .map(|i| up.data()[i * c..(i + 1) * c].iter().copied().sum())
                    .collect();
                let gb = Tensor::new(self.value(b).shape().to_vec(), gb)?;
                vec![(m, up.clone()), (b, gb)]
            }
            Op::RowSoftmax(a) => vec![(a, row_softmax_vjp(out, up)?)],
            Op::ColSoftmax(a) => {
                let g = row_softmax_vjp(&out.transpose()?, &up.transpose()?)?.transpose()?;
                vec![(a, g)]
            }
            Op::ColCosine(a, b) => {
                let (ga, gb) = col_cosine_vjp(self.value(a), self.value(b), out, up)?;
                vec![(a, ga), (b, gb)]
            }
            Op::CrossEntropy(a, target) => {
                let logits = self.value(a);
                let mut p = softmax(logits.data());
                p[target] -= T::one();
                let g = up.item();
                let data = p.into_iter().map(|v| v * g).collect();
                vec![(a, Tensor::new(logits.shape().to_vec(), data)?)]
            }
            Op::Sum(a) => vec![(a, Tensor::full(self.value(a).shape(), up.item()))],
        })
    }
}

fn row_softmax_vjp<T: Scalar>(y: &Tensor<T>, up: &Tensor<T>) -> Result<Tensor<T>> {
    let c = y.cols();
    let mut data = Vec::with_capacity(y.len());
    for r in 0..y.rows() {
        let yr = y.row(r);
        let gr = up.row(r);
        let inner = dot(yr, gr);
        data.extend(yr.iter().zip(gr).map(|(&yi, &gi)| yi * (gi - inner)));
    }
    debug_assert_eq!(data.len(), y.rows() * c);
    Tensor::new(y.shape().to_vec(), data)
}

/// Gradient of `C[i,j] = ⟨a_i, b_j⟩ / (max(‖a_i‖,ε)·max(‖b_j‖,ε))`.
fn col_cosine_vjp<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    c: &Tensor<T>,
    up: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (d, p, q) = (a.rows(), a.cols(), b.cols());
    let a_cols: Vec<Vec<T>> = (0..p).map(|i| a.col(i)).collect();
    let b_cols: Vec<Vec<T>> = (0..q).map(|j| b.col(j)).collect();
    let eps = T::lit(NORM_FLOOR);
    // (floored norm, d floored_norm / d v scaled by 1/floored norm)
    let stats = |v: &[T]| {
        let raw = dot(v, v).sqrt();
        let n = floored_norm(v);
        let active = if raw > eps { T::one() / (n * raw) } else { T::zero() };
        (n, active)
    };
    let a_stats: Vec<(T, T)> = a_cols.iter().map(|v| stats(v)).collect();
    let b_stats: Vec<(T, T)> = b_cols.iter().map(|v| stats(v)).collect();

    let mut ga = vec![T::zero(); d * p];
    let mut gb = vec![T::zero(); d * q];
    for i in 0..p {
        let (na, ka) = a_stats[i];
        for j in 0..q {
            let g = up.at(i, j);
            if g == T::zero() {
                continue;
            }
            let (nb, kb) = b_stats[j];
            let cij = c.at(i, j);
            let inv = T::one() / (na * nb);
            for r in 0..d {
                let (ar, br) = (a_cols[i][r], b_cols[j][r]);
                ga[r * p + i] += g * (br * inv - cij * ar * ka);
                gb[r * q + j] += g * (ar * inv - cij * br * kb);
            }
        }
    }
    Ok((
        Tensor::new(vec![d, p], ga)?,
        Tensor::new(vec![d, q], gb)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0; 4]);
        assert_eq!(grads.get(s).unwrap().data(), &[1.0]);
    }

    #[test]
    fn self_cosine_has_zero_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::vector(vec![0.3, -1.2, 2.5]));
        let c = g.cosine(x, x).unwrap();
        assert!((g.value(c).item() - 1.0).abs() < 1e-15);
        let grads = g.backward(c).unwrap();
        assert!(grads.get(x).unwrap().data().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn second_backward_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert!(matches!(g.backward(s), Err(Error::State(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        let k = g.constant(Tensor::vector(vec![5.0, 6.0]));
        let y = g.add(x, k).unwrap();
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert!(grads.get(k).is_none());
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn shared_input_accumulates() {
        // loss = sum(x + x) → grad 2
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let y = g.add(x, x).unwrap();
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0; 3]);
    }

    #[test]
    fn op_metadata() {
        let mut g = Graph::<f64>::new();
        let a = g.param(Tensor::zeros(&[2, 2]));
        let b = g.transpose(a).unwrap();
        assert_eq!(g.op(b).name(), "transpose");
        assert_eq!(g.op(b).parents(), vec![a]);
    }
}

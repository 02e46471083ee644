use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Norm floor used by every cosine computation.
pub const NORM_FLOOR: f64 = 1e-8;

/// Dense row-major tensor.
///
/// Rank 0 is a scalar, rank 1 a vector, rank 2 a matrix. Values are never
/// mutated through the public API once constructed.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T: Scalar = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::dim("tensor", &shape, &[data.len()]));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Builds a matrix from row slices. All rows must share one length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::dim("from_rows", &[cols], &[row.len()]));
            }
            data.extend_from_slice(row);
        }
        Self::new(vec![rows.len(), cols], data)
    }

    /// Builds a `len(cols[0]) × cols.len()` matrix whose columns are the given vectors.
    pub fn from_cols(cols: &[&[T]]) -> Result<Self> {
        let rows = cols.first().map_or(0, |c| c.len());
        let n = cols.len();
        let mut data = vec![T::zero(); rows * n];
        for (j, col) in cols.iter().enumerate() {
            if col.len() != rows {
                return Err(Error::dim("from_cols", &[rows], &[col.len()]));
            }
            for (i, &v) in col.iter().enumerate() {
                data[i * n + j] = v;
            }
        }
        Self::new(vec![rows, n], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&e| e == 1)
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols() + c]
    }

    /// Column `c` of a matrix, copied out.
    pub fn col(&self, c: usize) -> Vec<T> {
        let n = self.cols();
        (0..self.rows()).map(|r| self.data[r * n + c]).collect()
    }

    pub fn row(&self, r: usize) -> &[T] {
        let n = self.cols();
        &self.data[r * n..(r + 1) * n]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::dim("reshape", &self.shape, shape));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::dim(op, &self.shape, &other.shape));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        if self.data.len() != other.data.len() {
            return Err(Error::dim("dot", &self.shape, &other.shape));
        }
        Ok(dot(&self.data, &other.data))
    }

    pub fn norm(&self) -> T {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn require_matrix(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            other => Err(Error::dim(op, other, &[0, 0])),
        }
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.require_matrix("transpose")?;
        let mut data = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Self {
            shape: vec![c, r],
            data,
        })
    }

    /// Matrix product of an `m×k` and a `k×n` matrix.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, k) = self.require_matrix("matmul")?;
        let (k2, n) = other.require_matrix("matmul")?;
        if k != k2 {
            return Err(Error::dim("matmul", &self.shape, &other.shape));
        }
        let mut data = vec![T::zero(); m * n];
        for i in 0..m {
            let out = &mut data[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == T::zero() {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in out.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            shape: vec![m, n],
            data,
        })
    }

    /// Softmax along each row, with max subtraction.
    pub fn row_softmax(&self) -> Result<Self> {
        let (r, c) = self.require_matrix("row_softmax")?;
        let mut data = self.data.clone();
        for i in 0..r {
            softmax_in_place(&mut data[i * c..(i + 1) * c]);
        }
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Softmax along each column. Bit-identical to
    /// `transpose(row_softmax(transpose(m)))`.
    pub fn col_softmax(&self) -> Result<Self> {
        self.transpose()?.row_softmax()?.transpose()
    }

    /// Column-pairwise cosine: `out[i, j] = cos(self[:, i], other[:, j])`.
    pub fn col_cosine(&self, other: &Self) -> Result<Self> {
        let (d, p) = self.require_matrix("col_cosine")?;
        let (d2, q) = other.require_matrix("col_cosine")?;
        if d != d2 {
            return Err(Error::dim("col_cosine", &self.shape, &other.shape));
        }
        let a_cols: Vec<Vec<T>> = (0..p).map(|i| self.col(i)).collect();
        let b_cols: Vec<Vec<T>> = (0..q).map(|j| other.col(j)).collect();
        let a_norms: Vec<T> = a_cols.iter().map(|v| floored_norm(v)).collect();
        let b_norms: Vec<T> = b_cols.iter().map(|v| floored_norm(v)).collect();
        let mut data = Vec::with_capacity(p * q);
        for i in 0..p {
            for j in 0..q {
                data.push(dot(&a_cols[i], &b_cols[j]) / (a_norms[i] * b_norms[j]));
            }
        }
        Ok(Self {
            shape: vec![p, q],
            data,
        })
    }
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// `max(‖v‖, ε)` with ε = [`NORM_FLOOR`].
pub(crate) fn floored_norm<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt().max(T::lit(NORM_FLOOR))
}

pub(crate) fn softmax_in_place<T: Scalar>(xs: &mut [T]) {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
}

/// `log Σ exp(xs)` with max subtraction.
pub(crate) fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let total: T = xs.iter().map(|&x| (x - max).exp()).sum();
    max + total.ln()
}

/// Cosine of two equal-length vectors with the norm floor applied.
pub fn cosine<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::dim("cosine", &[u.len()], &[v.len()]));
    }
    Ok(dot(u, v) / (floored_norm(u) * floored_norm(v)))
}

/// Numerically stable softmax of a slice.
pub fn softmax<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mut out = xs.to_vec();
    softmax_in_place(&mut out);
    out
}

/// `−log softmax(logits)[target]`.
pub fn cross_entropy<T: Scalar>(logits: &[T], target: usize) -> Result<T> {
    if target >= logits.len() {
        return Err(Error::Index {
            index: target,
            len: logits.len(),
        });
    }
    Ok(log_sum_exp(logits) - logits[target])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_data_length() {
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn identity_matmul() {
        let eye = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let m = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(eye.matmul(&m).unwrap(), m);
    }

    #[test]
    fn row_times_col() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_names_both_shapes() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[2, 3]);
        let msg = a.matmul(&b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3] vs [2, 3]"), "{msg}");
    }

    #[test]
    fn softmax_uniform_and_saturated() {
        let z = Tensor::<f64>::zeros(&[2, 2]).row_softmax().unwrap();
        assert!(z.data().iter().all(|&v| v == 0.5));
        let s = Tensor::<f64>::from_rows(&[vec![1000.0, -1000.0]])
            .unwrap()
            .row_softmax()
            .unwrap();
        assert!((s.data()[0] - 1.0).abs() < 1e-12);
        assert!(s.data()[1].abs() < 1e-12);
    }

    #[test]
    fn col_softmax_uniform_column() {
        let z = Tensor::<f64>::zeros(&[2, 1]).col_softmax().unwrap();
        assert_eq!(z.data(), &[0.5, 0.5]);
    }

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine::<f64>(&[3.0, -4.0], &[3.0, -4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
        // zero vector hits the norm floor instead of dividing by zero
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn cross_entropy_cases() {
        let uniform = cross_entropy::<f64>(&[0.3; 4], 2).unwrap();
        assert!((uniform - 4f64.ln()).abs() < 1e-12);
        assert!(cross_entropy(&[30.0, -30.0], 0).unwrap() < 1e-9);
        assert!(matches!(
            cross_entropy(&[1.0, 2.0], 2),
            Err(Error::Index { index: 2, len: 2 })
        ));
    }
}

//! Dense row-major `f64` tensors, a reverse-mode gradient tape, and Adam.
//!
//! [`Tensor`] is a plain value type: shape plus flat data. Differentiable
//! computation happens on a [`Tape`], which records every operation applied to
//! its [`Var`] handles and replays them backward. Trainable state lives in a
//! [`ParamStore`]; parameters enter a tape by reference, so building a graph
//! never copies weights.

mod optim;
mod tape;

pub use optim::{adam_step, AdamState, ParamId, ParamStore, Parameter};
pub use tape::{Gradients, Tape, Var};

use thiserror::Error;

/// Errors raised by tensor construction, tensor algebra and the optimizer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op} expects a rank-{expected} tensor, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("shape {shape:?} holds {expected} elements but {actual} were supplied")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("variable was not recorded on this tape")]
    ForeignVar,
    #[error("optimizer state error: {0}")]
    State(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Dense n-dimensional array of `f64` in row-major order.
///
/// A scalar has the empty shape `[]` and one element.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::DataLength {
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Builds a matrix from equal-length rows.
    pub fn matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(TensorError::Dimension {
                    op: "matrix",
                    lhs: vec![cols],
                    rhs: vec![row.len()],
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(vec![rows.len(), cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    /// Element at a multi-index. Panics when the index is out of bounds.
    pub fn at(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.shape.len(), "index rank");
        let mut flat = 0;
        for (i, (&ix, &ext)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < ext, "index {ix} out of range on axis {i}");
            flat = flat * ext + ix;
        }
        self.data[flat]
    }

    /// Reinterprets the data under a new shape. Moves the buffer, never copies.
    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data)
    }

    /// Rank-1 view of the same buffer (the `♭` operator).
    pub fn flatten(self) -> Self {
        Self::vector(self.data)
    }

    pub fn row(&self, r: usize) -> Result<&[f64]> {
        let (rows, cols) = self.as_matrix("row")?;
        if r >= rows {
            return Err(TensorError::Index { index: r, len: rows });
        }
        Ok(&self.data[r * cols..(r + 1) * cols])
    }

    pub(crate) fn as_matrix(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(TensorError::Rank {
                op,
                expected: 2,
                shape: self.shape.clone(),
            }),
        }
    }

    pub(crate) fn as_vector(&self, op: &'static str) -> Result<usize> {
        match self.shape.as_slice() {
            [n] => Ok(*n),
            _ => Err(TensorError::Rank {
                op,
                expected: 1,
                shape: self.shape.clone(),
            }),
        }
    }

    /// Matrix product `[m×k]·[k×n] → [m×n]` or matrix-vector `[m×k]·[k] → [m]`.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, k) = self.as_matrix("matmul")?;
        let mismatch = || TensorError::Dimension {
            op: "matmul",
            lhs: self.shape.clone(),
            rhs: rhs.shape.clone(),
        };
        match rhs.shape.as_slice() {
            [k2] => {
                if *k2 != k {
                    return Err(mismatch());
                }
                let mut out = vec![0.0; m];
                matvec_into(&self.data, m, k, &rhs.data, &mut out);
                Ok(Tensor::vector(out))
            }
            [k2, n] => {
                if *k2 != k {
                    return Err(mismatch());
                }
                let n = *n;
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    let orow = &mut out[i * n..(i + 1) * n];
                    for p in 0..k {
                        let a = self.data[i * k + p];
                        if a == 0.0 {
                            continue;
                        }
                        let brow = &rhs.data[p * n..(p + 1) * n];
                        for (o, b) in orow.iter_mut().zip(brow) {
                            *o += a * b;
                        }
                    }
                }
                Tensor::new(vec![m, n], out)
            }
            _ => Err(mismatch()),
        }
    }

    /// Generalised outer product of two vectors: `out[i][j] = a[i]·b[j]`.
    pub fn outer(&self, rhs: &Tensor) -> Result<Tensor> {
        let m = self.as_vector("outer_product")?;
        let n = rhs.as_vector("outer_product")?;
        let mut out = Vec::with_capacity(m * n);
        for &a in &self.data {
            out.extend(rhs.data.iter().map(|b| a * b));
        }
        Tensor::new(vec![m, n], out)
    }

    /// Tensor inner product over the last axis: `out[j..] = Σ_l t[j.., l]·v[l]`.
    pub fn contract_last(&self, v: &Tensor) -> Result<Tensor> {
        let n = v.as_vector("contract_last")?;
        let last = *self.shape.last().ok_or_else(|| TensorError::Rank {
            op: "contract_last",
            expected: 1,
            shape: self.shape.clone(),
        })?;
        if last != n {
            return Err(TensorError::Dimension {
                op: "contract_last",
                lhs: self.shape.clone(),
                rhs: v.shape.clone(),
            });
        }
        let rows = self.data.len() / n.max(1);
        let mut out = vec![0.0; rows];
        matvec_into(&self.data, rows, n, &v.data, &mut out);
        Tensor::new(self.shape[..self.shape.len() - 1].to_vec(), out)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = self.as_matrix("transpose")?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::new(vec![n, m], out)
    }

    fn zip_with(&self, rhs: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != rhs.shape {
            return Err(TensorError::Dimension {
                op,
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        self.zip_with(rhs, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|x| x * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add_assign(&mut self, rhs: &Tensor) -> Result<()> {
        if self.shape != rhs.shape {
            return Err(TensorError::Dimension {
                op: "add_assign",
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn dot(&self, rhs: &Tensor) -> Result<f64> {
        if self.data.len() != rhs.data.len() {
            return Err(TensorError::Dimension {
                op: "dot",
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        Ok(dot(&self.data, &rhs.data))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, rhs: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Column `j` of a matrix as a vector.
    pub fn column(&self, j: usize) -> Result<Tensor> {
        let (m, n) = self.as_matrix("column")?;
        if j >= n {
            return Err(TensorError::Index { index: j, len: n });
        }
        Ok(Tensor::vector((0..m).map(|i| self.data[i * n + j]).collect()))
    }

    /// Matrix whose columns are the given equal-length vectors.
    pub fn from_columns(columns: &[Tensor]) -> Result<Tensor> {
        let n = columns.len();
        let m = match columns.first() {
            Some(c) => c.as_vector("from_columns")?,
            None => 0,
        };
        let mut out = vec![0.0; m * n];
        for (j, c) in columns.iter().enumerate() {
            if c.as_vector("from_columns")? != m {
                return Err(TensorError::Dimension {
                    op: "from_columns",
                    lhs: vec![m],
                    rhs: c.shape.clone(),
                });
            }
            for i in 0..m {
                out[i * n + j] = c.data[i];
            }
        }
        Tensor::new(vec![m, n], out)
    }
}

/// Softmax of `logits / temperature`, stabilised by max subtraction.
pub fn softmax_with_temperature(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(TensorError::Parameter(format!(
            "softmax temperature must be positive, got {temperature}"
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| ((z - max) / temperature).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    Ok(out)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `−log softmax(logits)[target]`, computed with log-sum-exp.
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<f64> {
    if target >= logits.len() {
        return Err(TensorError::Index {
            index: target,
            len: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[target])
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators keep the dependency chain short
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub(crate) fn matvec_into(a: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate().take(rows) {
        *o = dot(&a[i * cols..(i + 1) * cols], x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity_and_hand_values() {
        let v = Tensor::vector(vec![7.0, -1.0]);
        assert_eq!(Tensor::identity(2).matmul(&v).unwrap(), v);
        let a = Tensor::matrix(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let out = a.matmul(&Tensor::vector(vec![5.0, 6.0])).unwrap();
        assert_eq!(out.data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let err = a.matmul(&Tensor::zeros(&[2, 3])).unwrap_err();
        match err {
            TensorError::Dimension { lhs, rhs, .. } => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn matrix_matrix_product() {
        let a = Tensor::matrix(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Tensor::matrix(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[2.0, 1.0, 4.0, 3.0]);
    }

    #[test]
    fn outer_product_cases() {
        let e1 = Tensor::vector(vec![1.0, 0.0]);
        let e2 = Tensor::vector(vec![0.0, 1.0]);
        assert_eq!(e1.outer(&e2).unwrap().data(), &[0.0, 1.0, 0.0, 0.0]);
        let a = Tensor::vector(vec![1.0, 2.0]);
        let b = Tensor::vector(vec![3.0, 4.0]);
        assert_eq!(a.outer(&b).unwrap().data(), &[3.0, 4.0, 6.0, 8.0]);
        let z = Tensor::zeros(&[2]);
        assert!(z.outer(&b).unwrap().data().iter().all(|&x| x == 0.0));
        assert!(matches!(
            Tensor::zeros(&[2, 2]).outer(&b),
            Err(TensorError::Rank { .. })
        ));
    }

    #[test]
    fn contract_last_cases() {
        let t = Tensor::new(vec![1, 1, 2], vec![2.0, 5.0]).unwrap();
        let out = t.contract_last(&Tensor::vector(vec![1.0, 0.0])).unwrap();
        assert_eq!(out.shape(), &[1, 1]);
        assert_eq!(out.data(), &[2.0]);
        let m = Tensor::matrix(&[vec![2.0, 0.0], vec![3.0, 3.0]]).unwrap();
        let out = m.contract_last(&Tensor::vector(vec![1.0, -1.0])).unwrap();
        assert_eq!(out.data(), &[2.0, 0.0]);
        let out = m.contract_last(&Tensor::zeros(&[2])).unwrap();
        assert!(out.data().iter().all(|&x| x == 0.0));
        assert!(m.contract_last(&Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn softmax_examples() {
        let p = softmax_with_temperature(&[1.0, 1.0], 0.1).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        let p = softmax_with_temperature(&[0.1, 0.2], 0.1).unwrap();
        assert!((p[0] - 0.26894).abs() < 1e-4 && (p[1] - 0.73106).abs() < 1e-4);
        let p = softmax_with_temperature(&[0.0; 3], 3.7).unwrap();
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        assert!(softmax_with_temperature(&[1.0], 0.0).is_err());
        assert!(softmax_with_temperature(&[1.0], -1.0).is_err());
    }

    #[test]
    fn pointwise_scalars() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(0.0f64.tanh(), 0.0);
        assert!((sigmoid(2.0) - 0.88080).abs() < 1e-4);
    }

    #[test]
    fn cross_entropy_examples() {
        assert!(cross_entropy(&[100.0, 0.0], 0).unwrap() < 1e-40);
        let u = cross_entropy(&[0.3; 4], 2).unwrap();
        assert!((u - 4f64.ln()).abs() < 1e-12);
        assert!((cross_entropy(&[1.0, 2.0], 0).unwrap() - 1.31326).abs() < 1e-4);
        assert!(cross_entropy(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn reshape_rejects_wrong_count() {
        let t = Tensor::zeros(&[2, 3]);
        assert!(t.clone().reshape(&[3, 2]).is_ok());
        assert!(t.reshape(&[4]).is_err());
    }
}

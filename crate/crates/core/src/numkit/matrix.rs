//! Dense row-major f64 matrices.
//!
//! Every constructor that accepts caller data validates it: dimensions must be
//! nonzero, the buffer length must match, and every entry must be finite. NaN
//! or infinity anywhere in the pipeline is a bug, so it is rejected at the
//! boundary instead of propagating silently.

use serde::{Deserialize, Serialize};

use super::NumError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Validating constructor. `data` is row-major, length `rows * cols`.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumError> {
        Self::checked(rows, cols, data, "matrix literal")
    }

    /// Like `new` but names the operation that produced the data, so a
    /// non-finite entry reports where it came from.
    pub(crate) fn checked(
        rows: usize,
        cols: usize,
        data: Vec<f64>,
        ctx: &'static str,
    ) -> Result<Self, NumError> {
        if rows == 0 || cols == 0 {
            return Err(NumError::ZeroDim { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(NumError::LengthMismatch { rows, cols, len: data.len() });
        }
        for (i, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(NumError::NonFinite { ctx, row: i / cols, col: i % cols });
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumError> {
        if rows.is_empty() {
            return Err(NumError::ZeroDim { rows: 0, cols: 0 });
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(NumError::LengthMismatch {
                    rows: rows.len(),
                    cols,
                    len: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "zero-dimension matrix");
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        assert!(rows > 0 && cols > 0, "zero-dimension matrix");
        assert!(v.is_finite(), "non-finite fill value");
        Self { rows, cols, data: vec![v; rows * cols] }
    }

    /// 1x1 convenience.
    pub fn scalar(v: f64) -> Self {
        Self::filled(1, 1, v)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Panics on out-of-bounds or non-finite `v`; both are caller bugs.
    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        assert!(v.is_finite(), "non-finite store at ({r}, {c})");
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Raw mutable storage. Crate-internal: callers (gradient accumulation,
    /// normalization) are responsible for keeping entries finite.
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Scalar value of a 1x1 matrix.
    pub fn item(&self) -> f64 {
        assert!(self.rows == 1 && self.cols == 1, "item() on {}", self.dims());
        self.data[0]
    }

    pub fn transposed(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Matrix { rows: self.cols, cols: self.rows, data: out }
    }

    pub fn frob_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, NumError> {
        if self.cols != other.rows {
            return Err(NumError::ShapeMismatch {
                op: "matmul",
                a: self.dims(),
                b: other.dims(),
            });
        }
        let out = matmul_nn(self, other);
        Matrix::checked(self.rows, other.cols, out, "matmul")
    }
}

/// a (m x k) * b (k x n). Inner loop walks contiguous rows of both operands;
/// the k-ascending accumulation order per output entry is relied on elsewhere
/// for bit-reproducibility, so keep it.
pub(crate) fn matmul_nn(a: &Matrix, b: &Matrix) -> Vec<f64> {
    let (m, n) = (a.rows, b.cols);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = a.row(i);
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            let brow = &b.data[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// a (m x k) * b^T where b is (n x k): rows of both sides are contiguous.
pub(crate) fn matmul_nt(a: &Matrix, b: &Matrix) -> Vec<f64> {
    debug_assert_eq!(a.cols, b.cols);
    let (m, n) = (a.rows, b.rows);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = a.row(i);
        for j in 0..n {
            let brow = b.row(j);
            out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// a^T * b where a is (k x m), b is (k x n).
pub(crate) fn matmul_tn(a: &Matrix, b: &Matrix) -> Vec<f64> {
    debug_assert_eq!(a.rows, b.rows);
    let (m, n, k) = (a.cols, b.cols, a.rows);
    let mut out = vec![0.0; m * n];
    for kk in 0..k {
        let arow = a.row(kk);
        let brow = b.row(kk);
        for (i, &av) in arow.iter().enumerate() {
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    debug_assert_eq!(out.len(), m * n);
    out
}

// Serde: deserialization funnels through the validating constructor so a
// checkpoint edited to contain NaN is rejected on load.
#[derive(Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let repr = MatrixRepr::deserialize(deserializer)?;
        Matrix::new(repr.rows, repr.cols, repr.data).map_err(serde::de::Error::custom)
    }
}

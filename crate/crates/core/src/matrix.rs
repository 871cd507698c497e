//! Dense row-major `f64` matrices and the handful of operations the model
//! needs: affine maps, sigmoid, row softmax, dropout.
//!
//! This is deliberately not a general linear-algebra layer. Matrices are
//! small (hundreds of rows, a few thousand columns), everything is `f64`,
//! and the multiply loops are ordered so the inner loop runs over contiguous
//! output rows.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::RngStream;

/// Row-major dense matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Wraps an existing row-major buffer. Fails if the length is not
    /// `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dimension(
                "from_vec",
                format!("{}x{} = {} values", rows, cols, rows * cols),
                format!("{} values", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// 1-row matrix, used for biases and score vectors.
    pub fn row_vector(values: Vec<f64>) -> Self {
        Matrix {
            rows: 1,
            cols: values.len(),
            data: values,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn shape(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `self * other`. The inner loop accumulates into a contiguous output
    /// row, which lets the compiler vectorize it.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dimension(
                "matmul",
                format!("{}x{} * {}x_", self.rows, self.cols, self.cols),
                format!("{} * {}", self.shape(), other.shape()),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for (o, &b) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self^T * other` without materializing the transpose of `other`.
    pub fn matmul_tn(&self, other: &Matrix) -> Result<Matrix> {
        self.transpose().matmul(other)
    }

    /// `self * other^T`.
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Matrix> {
        self.matmul(&other.transpose())
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::dimension("add_assign", self.shape(), other.shape()));
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale_assign(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Sums each column into a 1-row matrix.
    pub fn column_sums(&self) -> Matrix {
        let mut out = Matrix::zeros(1, self.cols);
        for i in 0..self.rows {
            for (o, &v) in out.data.iter_mut().zip(self.row(i).iter()) {
                *o += v;
            }
        }
        out
    }

    /// Copies columns `[start, end)` into a new matrix.
    pub fn slice_cols(&self, start: usize, end: usize) -> Matrix {
        debug_assert!(start <= end && end <= self.cols);
        let width = end - start;
        let mut out = Matrix::zeros(self.rows, width);
        for i in 0..self.rows {
            out.row_mut(i).copy_from_slice(&self.row(i)[start..end]);
        }
        out
    }

    /// Adds `block` into columns `[start, start + block.cols)` of `self`.
    pub fn add_into_cols(&mut self, start: usize, block: &Matrix) -> Result<()> {
        if block.rows != self.rows || start + block.cols > self.cols {
            return Err(Error::dimension(
                "add_into_cols",
                format!("{} rows, cols {}..{} in bounds", self.rows, start, start + block.cols),
                format!("{} into {}", block.shape(), self.shape()),
            ));
        }
        for i in 0..self.rows {
            let dst = &mut self.row_mut(i)[start..start + block.cols];
            for (d, &s) in dst.iter_mut().zip(block.row(i).iter()) {
                *d += s;
            }
        }
        Ok(())
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(parts: &[&Matrix]) -> Result<Matrix> {
        let cols = match parts.first() {
            Some(m) => m.cols,
            None => return Err(Error::parameter("vstack of zero matrices")),
        };
        let rows: usize = parts.iter().map(|m| m.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for part in parts {
            if part.cols != cols {
                return Err(Error::dimension(
                    "vstack",
                    format!("_x{cols}"),
                    part.shape(),
                ));
            }
            data.extend_from_slice(&part.data);
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn hcat(parts: &[&Matrix]) -> Result<Matrix> {
        let rows = match parts.first() {
            Some(m) => m.rows,
            None => return Err(Error::parameter("hcat of zero matrices")),
        };
        let cols: usize = parts.iter().map(|m| m.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for part in parts {
            if part.rows != rows {
                return Err(Error::dimension("hcat", format!("{rows}x_"), part.shape()));
            }
            for i in 0..rows {
                out.row_mut(i)[offset..offset + part.cols].copy_from_slice(part.row(i));
            }
            offset += part.cols;
        }
        Ok(out)
    }

    /// Returns a copy with rows reordered as `indices`.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(indices.len(), self.cols);
        for (r, &i) in indices.iter().enumerate() {
            out.row_mut(r).copy_from_slice(self.row(i));
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        debug_assert!(self.same_shape(other));
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + math::exp(-x))
    } else {
        let e = math::exp(x);
        e / (1.0 + e)
    }
}

/// `x * w + b` with `b` broadcast over rows. `b` must be a 1-row matrix with
/// one entry per output column.
pub fn linear_affine(x: &Matrix, w: &Matrix, b: &Matrix) -> Result<Matrix> {
    if x.cols() != w.rows() {
        return Err(Error::dimension(
            "linear_affine",
            format!("x cols = w rows = {}", w.rows()),
            format!("x {}, w {}", x.shape(), w.shape()),
        ));
    }
    if b.rows() != 1 || b.cols() != w.cols() {
        return Err(Error::dimension(
            "linear_affine",
            format!("bias 1x{}", w.cols()),
            b.shape(),
        ));
    }
    let mut out = x.matmul(w)?;
    for i in 0..out.rows() {
        for (o, &bias) in out.row_mut(i).iter_mut().zip(b.row(0).iter()) {
            *o += bias;
        }
    }
    Ok(out)
}

/// Elementwise logistic map; output values lie strictly inside (0, 1).
pub fn sigmoid_map(x: &Matrix) -> Matrix {
    x.map(sigmoid)
}

/// Softmax per row with max subtraction, so each row sums to 1 and large
/// inputs never overflow.
pub fn row_softmax(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = math::exp(*v - max);
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Multiplicative inverted-dropout mask: each entry is `0` with probability
/// `p` and `1/(1-p)` otherwise. Applying the mask during training keeps the
/// expectation of every activation unchanged, so inference needs no scaling.
pub fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut RngStream) -> Result<Matrix> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::parameter(format!(
            "dropout probability must be in [0, 1), got {p}"
        )));
    }
    if p == 0.0 {
        return Ok(Matrix::filled(rows, cols, 1.0));
    }
    let keep_scale = 1.0 / (1.0 - p);
    let mut mask = Matrix::zeros(rows, cols);
    for v in mask.data_mut() {
        *v = if rng.uniform_f64() < p { 0.0 } else { keep_scale };
    }
    Ok(mask)
}

/// Inverted dropout: identity when `training` is false, otherwise zeroes each
/// element with probability `p` and scales survivors by `1/(1-p)`.
pub fn dropout_apply(x: &Matrix, p: f64, training: bool, rng: &mut RngStream) -> Result<Matrix> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::parameter(format!(
            "dropout probability must be in [0, 1), got {p}"
        )));
    }
    if !training || p == 0.0 {
        return Ok(x.clone());
    }
    let mask = dropout_mask(x.rows(), x.cols(), p, rng)?;
    let mut out = x.clone();
    for (o, m) in out.data_mut().iter_mut().zip(mask.data().iter()) {
        *o *= m;
    }
    Ok(out)
}

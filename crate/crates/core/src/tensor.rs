//! Dense row-major `f64` matrices.
//!
//! Every numeric quantity in the crate, including scalars (`1×1`) and
//! row vectors (`1×n`), is carried as a [`Tensor`]. Tensors are plain values:
//! operations return new tensors and never alias their inputs.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor[{}x{}]", self.rows, self.cols)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::filled(1, 1, value)
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("from_vec", (rows, cols), (data.len(), 1)));
        }
        Ok(Tensor { rows, cols, data })
    }

    /// Builds a tensor from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dim("from_rows", (i, cols), (i, r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row_vector(values: &[f64]) -> Self {
        Tensor {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn column_vector(values: &[f64]) -> Self {
        Tensor {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let cols = self.cols;
        &mut self.data[r * cols..(r + 1) * cols]
    }

    /// The single value of a `1×1` tensor.
    pub fn item(&self) -> Result<f64> {
        if self.shape() != (1, 1) {
            return Err(Error::dim("item", self.shape(), (1, 1)));
        }
        Ok(self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.expect_same_shape(other, op)?;
        Ok(Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub(crate) fn expect_same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dim(op, self.shape(), other.shape()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|v| v * factor)
    }

    /// In-place `self += other`.
    pub fn accumulate(&mut self, other: &Tensor) -> Result<()> {
        self.expect_same_shape(other, "accumulate")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.cols != rhs.rows {
            return Err(Error::dim("matmul", self.shape(), rhs.shape()));
        }
        let mut out = Tensor::zeros(self.rows, rhs.cols);
        kernels::gemm_acc(
            &self.data,
            &rhs.data,
            &mut out.data,
            self.rows,
            self.cols,
            rhs.cols,
        );
        Ok(out)
    }

    /// Adds a `1×cols` row to every row.
    pub fn add_row(&self, row: &Tensor) -> Result<Tensor> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(Error::dim("add_row", self.shape(), row.shape()));
        }
        let mut out = self.clone();
        for r in 0..out.rows {
            for (v, &b) in out.row_mut(r).iter_mut().zip(&row.data) {
                *v += b;
            }
        }
        Ok(out)
    }

    /// Horizontal concatenation `[self ‖ other]`.
    pub fn concat_cols(&self, other: &Tensor) -> Result<Tensor> {
        if self.rows != other.rows {
            return Err(Error::dim("concat_cols", self.shape(), other.shape()));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Tensor {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Vertical concatenation.
    pub fn concat_rows(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.cols && !self.is_empty() && !other.is_empty() {
            return Err(Error::dim("concat_rows", self.shape(), other.shape()));
        }
        let cols = if self.is_empty() { other.cols } else { self.cols };
        let mut data = Vec::with_capacity(self.len() + other.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Tensor {
            rows: self.rows + other.rows,
            cols,
            data,
        })
    }

    /// Rows `start..end` as a new tensor.
    pub fn slice_rows(&self, start: usize, end: usize) -> Tensor {
        let end = end.min(self.rows);
        let start = start.min(end);
        Tensor {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn select_rows(&self, indices: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Tensor {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.sum() / self.data.len() as f64
    }

    /// Per-column means as a `1×cols` row.
    pub fn column_means(&self) -> Tensor {
        let mut out = Tensor::zeros(1, self.cols);
        for r in 0..self.rows {
            for (acc, &v) in out.data.iter_mut().zip(self.row(r)) {
                *acc += v;
            }
        }
        let n = self.rows.max(1) as f64;
        out.data.iter_mut().for_each(|v| *v /= n);
        out
    }

    /// Per-row means as a `rows×1` column.
    pub fn row_means(&self) -> Tensor {
        let n = self.cols.max(1) as f64;
        Tensor {
            rows: self.rows,
            cols: 1,
            data: (0..self.rows)
                .map(|r| self.row(r).iter().sum::<f64>() / n)
                .collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max)
    }
}

/// Matrix kernels. Every kernel accumulates each output element in ascending
/// order of the contracted index, starting from the existing output value,
/// so results match a naive triple loop exactly.
pub(crate) mod kernels {
    /// `c[b×m] += a[b×n] · w[n×m]`
    pub fn gemm_acc(a: &[f64], w: &[f64], c: &mut [f64], b: usize, n: usize, m: usize) {
        debug_assert_eq!(a.len(), b * n);
        debug_assert_eq!(w.len(), n * m);
        debug_assert_eq!(c.len(), b * m);
        if m == 0 || n == 0 {
            return;
        }
        let mut i = 0;
        while i + 4 <= b {
            let (c0, rest) = c[i * m..(i + 4) * m].split_at_mut(m);
            let (c1, rest) = rest.split_at_mut(m);
            let (c2, c3) = rest.split_at_mut(m);
            let a0 = &a[i * n..(i + 1) * n];
            let a1 = &a[(i + 1) * n..(i + 2) * n];
            let a2 = &a[(i + 2) * n..(i + 3) * n];
            let a3 = &a[(i + 3) * n..(i + 4) * n];
            for k in 0..n {
                let wr = &w[k * m..(k + 1) * m];
                let (x0, x1, x2, x3) = (a0[k], a1[k], a2[k], a3[k]);
                for j in 0..m {
                    let wv = wr[j];
                    c0[j] += x0 * wv;
                    c1[j] += x1 * wv;
                    c2[j] += x2 * wv;
                    c3[j] += x3 * wv;
                }
            }
            i += 4;
        }
        while i < b {
            let ci = &mut c[i * m..(i + 1) * m];
            let ai = &a[i * n..(i + 1) * n];
            for k in 0..n {
                let x = ai[k];
                let wr = &w[k * m..(k + 1) * m];
                for (cv, &wv) in ci.iter_mut().zip(wr) {
                    *cv += x * wv;
                }
            }
            i += 1;
        }
    }

    /// `g[n×m] += aᵀ · d` with `a[b×n]`, `d[b×m]`.
    pub fn gemm_tn_acc(a: &[f64], d: &[f64], g: &mut [f64], b: usize, n: usize, m: usize) {
        debug_assert_eq!(a.len(), b * n);
        debug_assert_eq!(d.len(), b * m);
        debug_assert_eq!(g.len(), n * m);
        if m == 0 || n == 0 {
            return;
        }
        let mut k = 0;
        while k + 4 <= n {
            let (g0, rest) = g[k * m..(k + 4) * m].split_at_mut(m);
            let (g1, rest) = rest.split_at_mut(m);
            let (g2, g3) = rest.split_at_mut(m);
            for i in 0..b {
                let ar = &a[i * n + k..i * n + k + 4];
                let dr = &d[i * m..(i + 1) * m];
                let (x0, x1, x2, x3) = (ar[0], ar[1], ar[2], ar[3]);
                for j in 0..m {
                    let dv = dr[j];
                    g0[j] += x0 * dv;
                    g1[j] += x1 * dv;
                    g2[j] += x2 * dv;
                    g3[j] += x3 * dv;
                }
            }
            k += 4;
        }
        while k < n {
            let gk = &mut g[k * m..(k + 1) * m];
            for i in 0..b {
                let x = a[i * n + k];
                let dr = &d[i * m..(i + 1) * m];
                for (gv, &dv) in gk.iter_mut().zip(dr) {
                    *gv += x * dv;
                }
            }
            k += 1;
        }
    }
}

//! Dense double-precision containers and the handful of kernels the solvers need.
//!
//! Matrices are stored row-major. Everything here is small enough (N ≤ a few
//! hundred) that no blocking or sparse storage is worthwhile. Factorisations
//! (Cholesky, symmetric eigendecomposition) are delegated to `nalgebra`.

use std::fmt;
use std::ops::{Deref, DerefMut, Index, IndexMut};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense real vector with finite entries.
#[derive(Clone, PartialEq, Default)]
pub struct RealVector(Vec<f64>);

impl RealVector {
    /// Wraps `data`, rejecting NaN and infinities.
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector"));
        }
        Ok(Self(data))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Self(vec![value; len])
    }

    pub fn from_slice(data: &[f64]) -> Result<Self> {
        Self::new(data.to_vec())
    }

    pub(crate) fn from_vec_unchecked(data: Vec<f64>) -> Self {
        Self(data)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm2(&self) -> f64 {
        norm2(&self.0)
    }

    pub fn norm_inf(&self) -> f64 {
        norm_inf(&self.0)
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| c * v).collect())
    }

    /// Entries at the given indices, in index order.
    pub fn select(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| self.0[i]).collect()
    }
}

impl Deref for RealVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for RealVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl fmt::Debug for RealVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl From<RealVector> for Vec<f64> {
    fn from(v: RealVector) -> Self {
        v.0
    }
}

/// Dense row-major real matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "matrix must be nonempty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "RealMatrix::new",
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(Error::DimensionMismatch {
                op: "RealMatrix::from_rows",
                expected: c,
                found: bad.len(),
            });
        }
        Self::new(r, c, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self[(i, j)] == self[(j, i)]))
    }

    /// Square submatrix / cross block with the given row and column index sets.
    pub fn submatrix(&self, row_idx: &[usize], col_idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(row_idx.len() * col_idx.len());
        for &i in row_idx {
            let row = self.row(i);
            data.extend(col_idx.iter().map(|&j| row[j]));
        }
        Self {
            rows: row_idx.len(),
            cols: col_idx.len(),
            data,
        }
    }

    /// Matrix made of the selected columns (all rows).
    pub fn select_columns(&self, col_idx: &[usize]) -> Self {
        let all: Vec<usize> = (0..self.rows).collect();
        self.submatrix(&all, col_idx)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl Index<(usize, usize)> for RealMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for RealMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for RealMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "RealMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// ‖a − b‖₂ / ‖b‖₂, falling back to the absolute distance when `b` is zero.
pub fn rel_l2_distance(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let nb = norm2(b);
    if nb > 0.0 {
        diff / nb
    } else {
        diff
    }
}

/// `A · v`.
pub fn matvec(a: &RealMatrix, v: &[f64]) -> Result<RealVector> {
    if a.cols() != v.len() {
        return Err(Error::DimensionMismatch {
            op: "matvec",
            expected: a.cols(),
            found: v.len(),
        });
    }
    Ok(RealVector((0..a.rows()).map(|i| dot(a.row(i), v)).collect()))
}

/// `Aᵀ · v`.
pub fn matvec_transpose(a: &RealMatrix, v: &[f64]) -> Result<RealVector> {
    if a.rows() != v.len() {
        return Err(Error::DimensionMismatch {
            op: "matvec_transpose",
            expected: a.rows(),
            found: v.len(),
        });
    }
    let mut out = vec![0.0; a.cols()];
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        for (o, &aij) in out.iter_mut().zip(a.row(i)) {
            *o += aij * vi;
        }
    }
    Ok(RealVector(out))
}

/// `S · v` for a symmetric `S`, skipping zero entries of `v`.
///
/// Uses rows of `S` in place of columns, so the cost is `n · nnz(v)`.
pub(crate) fn sym_matvec_sparse(s: &RealMatrix, v: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (j, &vj) in v.iter().enumerate() {
        if vj == 0.0 {
            continue;
        }
        for (o, &sjk) in out.iter_mut().zip(s.row(j)) {
            *o += sjk * vj;
        }
    }
}

/// `AᵀA`, computed on the upper triangle and mirrored so the result is exactly symmetric.
pub fn gram(a: &RealMatrix) -> RealMatrix {
    let n = a.cols();
    let mut g = RealMatrix::zeros(n, n);
    for r in 0..a.rows() {
        let row = a.row(r);
        for i in 0..n {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            let gi = &mut g.data[i * n..(i + 1) * n];
            for j in i..n {
                gi[j] += ri * row[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            g.data[i * n + j] = g.data[j * n + i];
        }
    }
    g
}

/// Scales every column to unit Euclidean norm.
pub fn normalize_columns(a: &RealMatrix) -> Result<RealMatrix> {
    let norms: Vec<f64> = (0..a.cols()).map(|j| norm2(&a.column(j))).collect();
    if let Some(j) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroColumn(j));
    }
    let mut out = a.clone();
    for i in 0..a.rows() {
        for (j, n) in norms.iter().enumerate() {
            out[(i, j)] /= n;
        }
    }
    Ok(out)
}

/// Gershgorin upper bound on the eigenvalues of a symmetric matrix.
pub fn gershgorin_upper(s: &RealMatrix) -> f64 {
    (0..s.rows())
        .map(|i| {
            let row = s.row(i);
            row[i] + row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v.abs()).sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Cholesky factor of a symmetric positive definite matrix.
pub struct Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>);

impl Cholesky {
    pub fn new(s: &RealMatrix) -> Result<Self> {
        if s.rows() != s.cols() {
            return Err(Error::DimensionMismatch {
                op: "Cholesky::new",
                expected: s.rows(),
                found: s.cols(),
            });
        }
        nalgebra::Cholesky::new(s.to_nalgebra())
            .map(Self)
            .ok_or(Error::NotPositiveDefinite)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.0.solve(&DVector::from_column_slice(b)).as_slice().to_vec()
    }
}

/// Eigendecomposition `S = V diag(λ) Vᵀ` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues, unordered.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, row-major `n × n`.
    pub vectors: RealMatrix,
}

impl SymmetricEigen {
    pub fn new(s: &RealMatrix) -> Self {
        let n = s.rows();
        let eig = nalgebra::SymmetricEigen::new(s.to_nalgebra());
        let mut vectors = RealMatrix::zeros(n, n);
        for i in 0..n {
            for k in 0..n {
                vectors[(i, k)] = eig.eigenvectors[(i, k)];
            }
        }
        Self {
            values: eig.eigenvalues.as_slice().to_vec(),
            vectors,
        }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

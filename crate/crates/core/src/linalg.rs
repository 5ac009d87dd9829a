//! Dense linear algebra substrate: matrices, orthonormal frames, SVD and
//! sin-Θ subspace distances.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng;

/// Max-entry deviation of `QᵀQ` from the identity accepted for a frame.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// A finite, real `rows × cols` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix(DMatrix<f64>);

impl DenseMatrix {
    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::contract(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, &entries))
    }

    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::contract(format!(
                "matrix dimensions must be positive, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
            // nalgebra stores column-major
            let (r, c) = (pos % m.nrows(), pos / m.nrows());
            return Err(Error::contract(format!("non-finite entry at ({r}, {c})")));
        }
        Ok(DenseMatrix(m))
    }

    /// Wraps a matrix produced by crate-internal arithmetic on finite inputs.
    pub(crate) fn from_inner(m: DMatrix<f64>) -> Self {
        debug_assert!(m.iter().all(|v| v.is_finite()));
        DenseMatrix(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        DenseMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(values: &[f64]) -> Result<Self> {
        let n = values.len();
        Self::new(DMatrix::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 }))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            out.extend(self.0.row(i).iter().copied());
        }
        out
    }

    pub fn transpose(&self) -> Self {
        DenseMatrix(self.0.transpose())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.0.column(j).iter().copied().collect()
    }
}

impl Serialize for DenseMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr {
            rows: self.rows(),
            cols: self.cols(),
            entries: self.to_row_major(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DenseMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(d)?;
        DenseMatrix::from_row_major(repr.rows, repr.cols, repr.entries).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

/// An `n × r` matrix with orthonormal columns. `r = 0` is allowed and
/// represents the trivial subspace.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthonormalFrame {
    columns: DMatrix<f64>,
}

impl OrthonormalFrame {
    /// Validates orthonormality to [`ORTHONORMAL_TOL`].
    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        if columns.ncols() > columns.nrows() {
            return Err(Error::contract(format!(
                "frame rank {} exceeds dimension {}",
                columns.ncols(),
                columns.nrows()
            )));
        }
        let dev = orthonormality_deviation(&columns);
        if !(dev <= ORTHONORMAL_TOL) {
            return Err(Error::contract(format!(
                "columns are not orthonormal (max deviation {dev:e})"
            )));
        }
        Ok(OrthonormalFrame { columns })
    }

    pub fn from_dense(m: &DenseMatrix) -> Result<Self> {
        Self::new(m.as_matrix().clone())
    }

    /// Frame with zero columns in dimension `dim`.
    pub fn empty(dim: usize) -> Self {
        OrthonormalFrame {
            columns: DMatrix::zeros(dim, 0),
        }
    }

    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn rank(&self) -> usize {
        self.columns.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.columns
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.columns.column(j).iter().copied().collect()
    }

    /// Keeps the listed columns (0-based), in the given order.
    pub fn select(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.rank()) {
            return Err(Error::contract(format!(
                "column {bad} out of range for rank-{} frame",
                self.rank()
            )));
        }
        Self::new(self.columns.select_columns(cols))
    }

    /// First `r` columns.
    pub fn leading(&self, r: usize) -> Result<Self> {
        if r > self.rank() {
            return Err(Error::contract(format!(
                "requested {r} leading columns of a rank-{} frame",
                self.rank()
            )));
        }
        Ok(OrthonormalFrame {
            columns: self.columns.columns(0, r).into_owned(),
        })
    }

    /// Right-multiplies by an `r × r` orthogonal matrix.
    pub fn rotate(&self, q: &DMatrix<f64>) -> Result<Self> {
        if q.nrows() != self.rank() || q.ncols() != self.rank() {
            return Err(Error::contract("rotation must be rank x rank"));
        }
        Self::new(&self.columns * q)
    }

    pub(crate) fn from_trusted(columns: DMatrix<f64>) -> Self {
        debug_assert!(orthonormality_deviation(&columns) <= 1e-6);
        OrthonormalFrame { columns }
    }
}

/// Max absolute entry of `QᵀQ − I`.
pub fn orthonormality_deviation(q: &DMatrix<f64>) -> f64 {
    let gram = q.transpose() * q;
    let r = gram.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..r {
        for j in 0..r {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// `left · diag(singular_values) · rightᵀ`, singular values non-increasing.
#[derive(Clone, Debug)]
pub struct SvdFactorization {
    pub left: OrthonormalFrame,
    pub singular_values: Vec<f64>,
    pub right: OrthonormalFrame,
}

impl SvdFactorization {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let u = self.left.as_matrix();
        let v = self.right.as_matrix();
        let mut us = u.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * v.transpose()
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }
}

/// Thin (or rank-`k` truncated) SVD with singular values in non-increasing order.
///
/// Each left singular vector is signed so that its largest-magnitude entry is
/// positive; the matching right vector is flipped with it.
pub fn compute_svd(m: &DenseMatrix, k: Option<usize>) -> Result<SvdFactorization> {
    let full = m.rows().min(m.cols());
    let k = k.unwrap_or(full);
    if k > full {
        return Err(Error::contract(format!(
            "truncation rank {k} exceeds min dimension {full}"
        )));
    }
    let (u, s, v) = raw_svd(m.as_matrix(), true)?;
    let v = v.expect("right vectors requested");
    let mut u = u.columns(0, k).into_owned();
    let mut v = v.columns(0, k).into_owned();
    for j in 0..k {
        if needs_flip(u.column(j).iter()) {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
    Ok(SvdFactorization {
        left: OrthonormalFrame::from_trusted(u),
        singular_values: s[..k].to_vec(),
        right: OrthonormalFrame::from_trusted(v),
    })
}

/// Top-`k` left singular vectors and all singular values, skipping the right factor.
pub(crate) fn left_singular(m: &DMatrix<f64>, k: usize) -> Result<(OrthonormalFrame, Vec<f64>)> {
    let full = m.nrows().min(m.ncols());
    if k > full {
        return Err(Error::contract(format!(
            "requested {k} singular vectors of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let (u, s, _) = raw_svd(m, false)?;
    let mut u = u.columns(0, k).into_owned();
    for j in 0..k {
        if needs_flip(u.column(j).iter()) {
            u.column_mut(j).neg_mut();
        }
    }
    Ok((OrthonormalFrame::from_trusted(u), s))
}

/// Sorted (stable, non-increasing) thin SVD. Returns `(U, σ, V)`.
pub(crate) fn raw_svd(m: &DMatrix<f64>, want_v: bool) -> Result<(DMatrix<f64>, Vec<f64>, Option<DMatrix<f64>>)> {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok((
            DMatrix::zeros(rows, 0),
            Vec::new(),
            want_v.then(|| DMatrix::zeros(cols, 0)),
        ));
    }
    let work = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let svd = work.thin_svd().map_err(|e| Error::Numerical {
        rows,
        cols,
        reason: format!("SVD failed: {e:?}"),
    })?;
    let (fu, fs, fv) = (svd.U(), svd.S().column_vector(), svd.V());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| fs[b].total_cmp(&fs[a]));
    let s: Vec<f64> = order.iter().map(|&i| fs[i]).collect();
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical {
            rows,
            cols,
            reason: "non-finite singular value".into(),
        });
    }
    let u = DMatrix::from_fn(rows, k, |i, j| fu[(i, order[j])]);
    let v = want_v.then(|| DMatrix::from_fn(cols, k, |i, j| fv[(i, order[j])]));
    Ok((u, s, v))
}

pub(crate) fn needs_flip<'a>(col: impl Iterator<Item = &'a f64>) -> bool {
    let mut best = 0.0_f64;
    let mut sign_negative = false;
    for &x in col {
        if x.abs() > best {
            best = x.abs();
            sign_negative = x < 0.0;
        }
    }
    sign_negative
}

/// Which sin-Θ norm to report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinThetaNorm {
    /// `‖sin Θ‖ = sqrt(1 − σ_min²(aᵀb))`, in `[0, 1]`.
    Spectral,
    /// `‖sin Θ‖_F² = r − ‖aᵀb‖_F²`, in `[0, r]`.
    FrobeniusSquared,
}

/// sin-Θ distance between two equal-rank subspaces.
///
/// Evaluated through the residual `b − a·aᵀb`, whose spectral norm and squared
/// Frobenius norm equal the two quantities above but keep full relative
/// accuracy when the subspaces nearly coincide.
pub fn sin_theta(a: &OrthonormalFrame, b: &OrthonormalFrame, norm: SinThetaNorm) -> Result<f64> {
    if a.dim() != b.dim() || a.rank() != b.rank() {
        return Err(Error::contract(format!(
            "sin-theta needs matching frames, got {}x{} and {}x{}",
            a.dim(),
            a.rank(),
            b.dim(),
            b.rank()
        )));
    }
    let r = a.rank();
    if r == 0 {
        return Ok(0.0);
    }
    let (a, b) = (a.as_matrix(), b.as_matrix());
    let residual = b - a * (a.transpose() * b);
    match norm {
        SinThetaNorm::Spectral => {
            let s = residual.singular_values();
            Ok(s.max().clamp(0.0, 1.0))
        }
        SinThetaNorm::FrobeniusSquared => Ok(residual.norm_squared().clamp(0.0, r as f64)),
    }
}

pub(crate) fn gaussian_matrix(rng: &mut rng::Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // fill column-major so the stream order is fixed
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Orthonormal factor of an `n × r` standard-Gaussian matrix.
///
/// Deterministic in `seed`; each column is signed so its largest-magnitude
/// entry is positive.
pub fn random_orthonormal(n: usize, r: usize, seed: u64) -> Result<OrthonormalFrame> {
    if r > n {
        return Err(Error::contract(format!("rank {r} exceeds dimension {n}")));
    }
    if r == 0 {
        return Ok(OrthonormalFrame::empty(n));
    }
    let mut rng = rng::seeded(seed);
    let g = gaussian_matrix(&mut rng, n, r);
    Ok(orthonormalize(g))
}

/// Q factor of a thin QR with the largest-entry-positive sign convention.
pub(crate) fn orthonormalize(g: DMatrix<f64>) -> OrthonormalFrame {
    let r = g.ncols();
    let mut q = g.qr().q();
    q = q.columns(0, r).into_owned();
    for j in 0..r {
        if needs_flip(q.column(j).iter()) {
            q.column_mut(j).neg_mut();
        }
    }
    OrthonormalFrame::from_trusted(q)
}

/// Horizontal concatenation of matrices sharing a row count.
pub(crate) fn hcat(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts.first().map_or(0, |m| m.nrows());
    let cols: usize = parts.iter().map(|m| m.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut offset = 0;
    for m in parts {
        out.columns_mut(offset, m.ncols()).copy_from(m);
        offset += m.ncols();
    }
    out
}

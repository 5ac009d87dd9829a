//! Ground-truth multi-matrix signals.
//!
//! A [`SignalSpec`] lists singular vector identities (shared by every matrix
//! or owned by one) and their per-matrix singular values. [`build_signal`]
//! turns it into matrices `X_i = (U_r U_{i*}) Σ_i V_iᵀ`; [`switch_profile`]
//! describes how shared and unshared vectors interleave once the matrices
//! are stacked side by side.

mod nonorth;
mod profile;
mod spec;

pub use nonorth::{nonorthogonal_stacked_svd, StackedFactorization};
pub use profile::{switch_profile, StackedIdentity, SwitchGap, SwitchProfile};
pub use spec::{SignalSpec, SignalSpecBuilder, SingularVectorId, UnsharedGeometry, ValueKey, VectorKind};

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, hcat, DenseMatrix, OrthonormalFrame};
use crate::rng;

/// Unit-norm tolerance for explicitly supplied unshared directions.
pub const UNIT_COLUMN_TOL: f64 = 1e-8;

/// Noiseless matrices together with the frames that generated them.
///
/// Column `j` of `right_frames[i]` pairs with the `j`-th left vector of
/// matrix `i`, listing shared vectors first and then that matrix's unshared
/// vectors, each in the spec's order.
#[derive(Clone, Debug)]
pub struct SignalPair {
    pub matrices: Vec<DenseMatrix>,
    pub shared_frame: OrthonormalFrame,
    pub unshared_frames: Vec<OrthonormalFrame>,
    pub right_frames: Vec<OrthonormalFrame>,
    /// `shared_values[i][j]`: value of the `j`-th shared vector in matrix `i`.
    pub shared_values: Vec<Vec<f64>>,
    /// `unshared_values[i][j]`: value of the `j`-th unshared vector of matrix `i`.
    pub unshared_values: Vec<Vec<f64>>,
}

impl SignalPair {
    pub fn k(&self) -> usize {
        self.matrices.len()
    }

    /// `(U_r U_{i*})` for 0-based matrix `i`.
    pub fn left_frame(&self, i: usize) -> OrthonormalFrame {
        OrthonormalFrame::from_trusted(hcat(&[
            self.shared_frame.as_matrix(),
            self.unshared_frames[i].as_matrix(),
        ]))
    }
}

/// Builds `X_1..X_k` from a spec.
///
/// In orthogonal mode every left vector is a column of one random orthonormal
/// pool, so all unshared directions are mutually orthogonal. In explicit mode
/// the unshared directions are taken as given and the shared frame is drawn
/// orthogonal to their span. Singular values keep the spec's order.
pub fn build_signal(spec: &SignalSpec) -> Result<SignalPair> {
    spec.validate()?;
    let n = spec.n;
    let r = spec.shared_count();
    let unshared_counts: Vec<usize> = (1..=spec.k).map(|i| spec.unshared_count(i)).collect();
    let total_unshared: usize = unshared_counts.iter().sum();

    let (shared_frame, unshared_frames) = match &spec.unshared_geometry {
        UnsharedGeometry::Orthogonal => {
            if n < r + total_unshared {
                return Err(Error::contract(format!(
                    "ambient dimension {n} cannot hold {} orthogonal left vectors",
                    r + total_unshared
                )));
            }
            let pool = linalg::random_orthonormal(n, r + total_unshared, rng::derive_seed(spec.seed, 0))?;
            let shared_frame = pool.leading(r)?;
            let mut offset = r;
            let mut frames = Vec::with_capacity(spec.k);
            for &c in &unshared_counts {
                let cols: Vec<usize> = (offset..offset + c).collect();
                frames.push(pool.select(&cols)?);
                offset += c;
            }
            (shared_frame, frames)
        }
        UnsharedGeometry::Explicit { directions } => explicit_frames(spec, directions, &unshared_counts)?,
    };

    let mut matrices = Vec::with_capacity(spec.k);
    let mut right_frames = Vec::with_capacity(spec.k);
    let mut shared_values = Vec::with_capacity(spec.k);
    let mut unshared_values = Vec::with_capacity(spec.k);
    for i in 1..=spec.k {
        let p = spec.dims[i - 1];
        let rank = r + unshared_counts[i - 1];
        if p < rank {
            return Err(Error::contract(format!("matrix {i} has {p} columns but rank {rank}")));
        }
        let right = linalg::random_orthonormal(p, rank, rng::derive_seed(spec.seed, i as u64))?;
        let sv: Vec<f64> = spec.shared_labels().map(|l| spec.value(i, l).unwrap()).collect();
        let uv: Vec<f64> = spec.unshared_labels(i).map(|l| spec.value(i, l).unwrap()).collect();
        let left = hcat(&[shared_frame.as_matrix(), unshared_frames[i - 1].as_matrix()]);
        let mut scaled = left;
        for (j, s) in sv.iter().chain(uv.iter()).enumerate() {
            scaled.column_mut(j).scale_mut(*s);
        }
        matrices.push(DenseMatrix::from_inner(scaled * right.as_matrix().transpose()));
        right_frames.push(right);
        shared_values.push(sv);
        unshared_values.push(uv);
    }

    Ok(SignalPair {
        matrices,
        shared_frame,
        unshared_frames,
        right_frames,
        shared_values,
        unshared_values,
    })
}

fn explicit_frames(
    spec: &SignalSpec,
    directions: &DenseMatrix,
    unshared_counts: &[usize],
) -> Result<(OrthonormalFrame, Vec<OrthonormalFrame>)> {
    let n = spec.n;
    let r = spec.shared_count();
    let total: usize = unshared_counts.iter().sum();
    let d = directions.as_matrix();
    if d.nrows() != n || d.ncols() != total {
        return Err(Error::contract(format!(
            "explicit geometry must be {n}x{total}, got {}x{}",
            d.nrows(),
            d.ncols()
        )));
    }
    for j in 0..total {
        let norm = d.column(j).norm();
        if (norm - 1.0).abs() > UNIT_COLUMN_TOL {
            return Err(Error::contract(format!(
                "explicit direction {j} has norm {norm}, expected 1"
            )));
        }
    }
    // columns are grouped by owner in the order unshared vectors appear in the spec
    let mut per_owner: Vec<Vec<usize>> = vec![Vec::new(); spec.k];
    for (col, v) in spec
        .vectors
        .iter()
        .filter(|v| v.kind == VectorKind::Unshared)
        .enumerate()
    {
        per_owner[v.owner.unwrap() - 1].push(col);
    }
    let mut frames = Vec::with_capacity(spec.k);
    for (i, cols) in per_owner.iter().enumerate() {
        let block = d.select_columns(cols);
        let frame = OrthonormalFrame::new(block)
            .map_err(|_| Error::contract(format!("unshared directions of matrix {} are not orthonormal", i + 1)))?;
        frames.push(frame);
    }

    // shared frame: random directions projected off the unshared span
    let basis = span_basis(d);
    if n < r + basis.ncols() {
        return Err(Error::contract(format!(
            "ambient dimension {n} cannot hold {r} shared vectors orthogonal to a rank-{} unshared span",
            basis.ncols()
        )));
    }
    let shared = if r == 0 {
        OrthonormalFrame::empty(n)
    } else {
        let mut g = rng::seeded(rng::derive_seed(spec.seed, 0));
        let raw = linalg::gaussian_matrix(&mut g, n, r);
        let mut projected = &raw - &basis * (basis.transpose() * &raw);
        // second pass removes what rounding left of the unshared span
        projected = &projected - &basis * (basis.transpose() * &projected);
        let q = linalg::orthonormalize(projected);
        let q = q.as_matrix();
        let q = q - &basis * (basis.transpose() * q);
        linalg::orthonormalize(q)
    };
    Ok((shared, frames))
}

/// Orthonormal basis for the column span of `m`.
pub(crate) fn span_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let Ok((u, s, _)) = linalg::raw_svd(m, false) else {
        return DMatrix::zeros(m.nrows(), 0);
    };
    let smax = s.first().copied().unwrap_or(0.0);
    let keep: Vec<usize> = s
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > 1e-10 * smax.max(1.0))
        .map(|(j, _)| j)
        .collect();
    u.select_columns(&keep)
}

/// Sub-Gaussian noise families. All have entry variance `τ²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    Gaussian,
    Rademacher,
    /// Uniform on `(−τ√3, τ√3)`.
    Uniform,
}

/// `Y = X + Z` with i.i.d. noise entries of scale `tau`.
pub fn add_noise(x: &DenseMatrix, tau: f64, dist: NoiseDistribution, seed: u64) -> Result<DenseMatrix> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::contract(format!(
            "noise scale must be finite and non-negative, got {tau}"
        )));
    }
    let mut out = x.as_matrix().clone();
    if tau == 0.0 {
        return Ok(DenseMatrix::from_inner(out));
    }
    let mut g = rng::seeded(seed);
    match dist {
        NoiseDistribution::Gaussian => {
            for v in out.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut g);
                *v += tau * z;
            }
        }
        NoiseDistribution::Rademacher => {
            for v in out.iter_mut() {
                *v += if rand::Rng::random::<bool>(&mut g) { tau } else { -tau };
            }
        }
        NoiseDistribution::Uniform => {
            let half = tau * 3f64.sqrt();
            let u = rand_distr::Uniform::new(-half, half).expect("non-empty range");
            for v in out.iter_mut() {
                *v += u.sample(&mut g);
            }
        }
    }
    Ok(DenseMatrix::from_inner(out))
}

/// Horizontal concatenation `(Y_1 Y_2 … Y_k)`.
pub fn stack(ms: &[DenseMatrix]) -> Result<DenseMatrix> {
    let first = ms
        .first()
        .ok_or_else(|| Error::contract("cannot stack an empty list"))?;
    if let Some((i, m)) = ms.iter().enumerate().find(|(_, m)| m.rows() != first.rows()) {
        return Err(Error::contract(format!(
            "matrix {} has {} rows, expected {}",
            i + 1,
            m.rows(),
            first.rows()
        )));
    }
    let parts: Vec<&DMatrix<f64>> = ms.iter().map(|m| m.as_matrix()).collect();
    Ok(DenseMatrix::from_inner(hcat(&parts)))
}

/// Joint/individual split `X_i = J_i + A_i` for 1-based matrix index `i`:
/// `J_i = U_r Σ_11 V_11ᵀ` and `A_i = U_{i*} Σ_12 V_12ᵀ`.
pub fn ajive_parts(pair: &SignalPair, i: usize) -> Result<(DenseMatrix, DenseMatrix)> {
    if i == 0 || i > pair.k() {
        return Err(Error::contract(format!("matrix index {i} outside 1..={}", pair.k())));
    }
    let idx = i - 1;
    let r = pair.shared_frame.rank();
    let v = pair.right_frames[idx].as_matrix();
    let part = |u: &DMatrix<f64>, vals: &[f64], offset: usize| {
        let mut scaled = u.clone();
        for (j, s) in vals.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*s);
        }
        let vb = v.columns(offset, vals.len());
        DenseMatrix::from_inner(scaled * vb.transpose())
    };
    let joint = part(pair.shared_frame.as_matrix(), &pair.shared_values[idx], 0);
    let individual = part(pair.unshared_frames[idx].as_matrix(), &pair.unshared_values[idx], r);
    Ok((joint, individual))
}

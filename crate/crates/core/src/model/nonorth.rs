//! Closed-form SVD of a stacked signal whose unshared directions need not be
//! mutually orthogonal.
//!
//! With `W = (U_{1*} … U_{k*})`, `D = diag(Σ_{1*}, …, Σ_{k*})` and
//! `B = blockdiag(V_{1*}, …, V_{k*})`, the unshared part of the stack is
//! `W D Bᵀ`. Whitening `W` by `S = Γᵀ Λ^{-1/2} Γ` (where `WᵀW = ΓᵀΛΓ`) gives
//! orthonormal columns `W S`, so the SVD of the small matrix `S⁻¹ D` finishes
//! the job. When `W` is column-rank-deficient it is first mapped to
//! `(Ũ* 0)` by an invertible `L`, and the same recipe runs on `Ũ*`.
//! The shared block is untouched: its values are `sqrt(Σ_i σ_i²)`.

use nalgebra::{DMatrix, DVector};

use super::{build_signal, SignalSpec, StackedIdentity};
use crate::error::{Error, Result};
use crate::linalg::{needs_flip, raw_svd, OrthonormalFrame, SvdFactorization};

/// Gram eigenvalues below this route the computation to the rank-deficient branch.
pub const GRAM_EIGEN_TOL: f64 = 1e-12;

/// A stacked SVD whose columns carry the identity of the vector they came from.
#[derive(Clone, Debug)]
pub struct StackedFactorization {
    pub svd: SvdFactorization,
    /// Identity of each column of `svd.left`, in output order.
    pub identities: Vec<StackedIdentity>,
    /// `order[j]` is the pre-sort position (shared block first, then unshared) of output column `j`.
    pub order: Vec<usize>,
    /// Whether the unshared concatenation was column-rank-deficient.
    pub rank_deficient: bool,
}

/// SVD of `(X_1 … X_k)` assembled from the spec's frames instead of a direct
/// factorization. Columns are sorted by non-increasing singular value; ties
/// keep the shared block ahead of the unshared one.
pub fn nonorthogonal_stacked_svd(spec: &SignalSpec) -> Result<StackedFactorization> {
    let pair = build_signal(spec)?;
    let k = pair.k();
    let n = spec.n;
    let r = pair.shared_frame.rank();
    let p_total: usize = spec.dims.iter().sum();
    let offsets: Vec<usize> = spec
        .dims
        .iter()
        .scan(0, |acc, p| {
            let o = *acc;
            *acc += p;
            Some(o)
        })
        .collect();

    // shared block
    let mut left_cols: Vec<DVector<f64>> = Vec::new();
    let mut right_cols: Vec<DVector<f64>> = Vec::new();
    let mut values = Vec::new();
    let mut identities = Vec::new();
    for (j, label) in spec.shared_labels().enumerate() {
        let c = (0..k).map(|i| pair.shared_values[i][j].powi(2)).sum::<f64>().sqrt();
        let mut v = DVector::zeros(p_total);
        for i in 0..k {
            let vi = pair.right_frames[i].as_matrix().column(j);
            v.rows_mut(offsets[i], spec.dims[i])
                .copy_from(&(vi * (pair.shared_values[i][j] / c)));
        }
        left_cols.push(pair.shared_frame.as_matrix().column(j).into_owned());
        right_cols.push(v);
        values.push(c);
        identities.push(StackedIdentity::Shared {
            label: label.to_string(),
        });
    }

    // unshared block
    let m: usize = pair.unshared_frames.iter().map(|f| f.rank()).sum();
    let mut rank_deficient = false;
    if m > 0 {
        let mut w = DMatrix::zeros(n, m);
        let mut b = DMatrix::zeros(p_total, m);
        let mut d = Vec::with_capacity(m);
        let mut labels = Vec::with_capacity(m);
        let mut col = 0;
        for i in 0..k {
            let frame = pair.unshared_frames[i].as_matrix();
            for (j, label) in spec.unshared_labels(i + 1).enumerate() {
                w.set_column(col, &frame.column(j));
                let vj = pair.right_frames[i].as_matrix().column(r + j);
                b.view_mut((offsets[i], col), (spec.dims[i], 1)).copy_from(&vj);
                d.push(pair.unshared_values[i][j]);
                labels.push((i + 1, label.to_string()));
                col += 1;
            }
        }
        let d = DMatrix::from_diagonal(&DVector::from_vec(d));
        let (u_star_left, sigma, v_star, deficient) = unshared_block(&w, &d)?;
        rank_deficient = deficient;
        let right = &b * &v_star;
        for j in 0..sigma.len() {
            let u = u_star_left.column(j).into_owned();
            identities.push(unshared_identity(&u, &w, &labels));
            left_cols.push(u);
            right_cols.push(right.column(j).into_owned());
            values.push(sigma[j]);
        }
    }

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let total = order.len();
    let mut left = DMatrix::zeros(n, total);
    let mut right = DMatrix::zeros(p_total, total);
    for (dst, &src) in order.iter().enumerate() {
        let mut u = left_cols[src].clone();
        let mut v = right_cols[src].clone();
        if needs_flip(u.iter()) {
            u.neg_mut();
            v.neg_mut();
        }
        left.set_column(dst, &u);
        right.set_column(dst, &v);
    }
    let singular_values = order.iter().map(|&i| values[i]).collect();
    let identities = order.iter().map(|&i| identities[i].clone()).collect();
    Ok(StackedFactorization {
        svd: SvdFactorization {
            left: OrthonormalFrame::from_trusted(left),
            singular_values,
            right: OrthonormalFrame::from_trusted(right),
        },
        identities,
        order,
        rank_deficient,
    })
}

/// Returns `(left, Σ*, V*, rank_deficient)` with `W D = left · diag(Σ*) · V*ᵀ`.
fn unshared_block(w: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>, bool)> {
    let (n, m) = w.shape();
    // Right singular vectors of W diagonalise the Gram matrix WᵀW = Q diag(s²) Qᵀ;
    // padding rows makes Q a complete m×m basis even when n < m.
    let mut padded = DMatrix::zeros(n.max(m), m);
    padded.rows_mut(0, n).copy_from(w);
    let (_, s, q) = raw_svd(&padded, true)?;
    let q = q.expect("right factor requested");
    let rank = s.iter().filter(|x| **x * **x >= GRAM_EIGEN_TOL).count();

    if rank == m {
        let s_mat = whitening(&q, &s);
        let s_inv = &q * DMatrix::from_diagonal(&DVector::from_iterator(m, s.iter().copied())) * q.transpose();
        let inner = s_inv * d;
        let (u_star, sigma, v_star) = raw_svd(&inner, true)?;
        let left = w * s_mat * u_star;
        return Ok((left, sigma, v_star.expect("right factor requested"), false));
    }

    // Column-rank-deficient: L = Q · blockdiag(diag(1/s_r), I) sends W to (Ũ* 0).
    let q_r = q.columns(0, rank).into_owned();
    let inv_s: Vec<f64> = s[..rank].iter().map(|x| 1.0 / x).collect();
    let u_tilde = w * &q_r * DMatrix::from_diagonal(&DVector::from_vec(inv_s));
    let gram = u_tilde.transpose() * &u_tilde;
    let eig = gram.symmetric_eigen();
    if eig.eigenvalues.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Numerical {
            rows: n,
            cols: m,
            reason: "reduced unshared basis lost rank".into(),
        });
    }
    let gamma_t = &eig.eigenvectors;
    let root: Vec<f64> = eig.eigenvalues.iter().map(|e| e.sqrt()).collect();
    let s_mat = gamma_t
        * DMatrix::from_diagonal(&DVector::from_iterator(rank, root.iter().map(|x| 1.0 / x)))
        * gamma_t.transpose();
    let s_inv = gamma_t * DMatrix::from_diagonal(&DVector::from_vec(root)) * gamma_t.transpose();
    // (S⁻¹ 0) L⁻¹ = S⁻¹ diag(s_r) Q_rᵀ
    let l_inv_top = DMatrix::from_diagonal(&DVector::from_iterator(rank, s[..rank].iter().copied())) * q_r.transpose();
    let inner = s_inv * l_inv_top * d;
    let (u_star, sigma, v_star) = raw_svd(&inner, true)?;
    let left = u_tilde * s_mat * u_star;
    Ok((left, sigma, v_star.expect("right factor requested"), true))
}

/// `S = Q diag(1/s) Qᵀ`, the inverse square root of `Q diag(s²) Qᵀ`.
fn whitening(q: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    let m = s.len();
    q * DMatrix::from_diagonal(&DVector::from_iterator(m, s.iter().map(|x| 1.0 / x))) * q.transpose()
}

/// Labels an output unshared column with the input direction it reproduces, if any.
fn unshared_identity(u: &DVector<f64>, w: &DMatrix<f64>, labels: &[(usize, String)]) -> StackedIdentity {
    for (j, (owner, label)) in labels.iter().enumerate() {
        let c = u.dot(&w.column(j));
        if 1.0 - c * c < 1e-10 {
            return StackedIdentity::Unshared {
                owner: Some(*owner),
                label: Some(label.clone()),
            };
        }
    }
    StackedIdentity::Unshared {
        owner: None,
        label: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{compute_svd, sin_theta, DenseMatrix, SinThetaNorm};
    use crate::model::{stack, UnsharedGeometry};
    use approx::assert_abs_diff_eq;

    fn direct(spec: &SignalSpec) -> SvdFactorization {
        let pair = build_signal(spec).unwrap();
        let y = stack(&pair.matrices).unwrap();
        let rank = nonorthogonal_stacked_svd(spec).unwrap().svd.rank();
        compute_svd(&y, Some(rank)).unwrap()
    }

    fn tilted(n: usize, angle: f64) -> DenseMatrix {
        let mut d = DMatrix::zeros(n, 2);
        d[(0, 0)] = 1.0;
        d[(0, 1)] = angle.cos();
        d[(1, 1)] = angle.sin();
        DenseMatrix::new(d).unwrap()
    }

    #[test]
    fn orthogonal_geometry_matches_analytic_values() {
        let spec = SignalSpec::builder(10, vec![8, 8])
            .shared("u", &[3.0, 4.0])
            .unshared("a", 1, 7.0)
            .unshared("b", 2, 2.0)
            .seed(5)
            .build()
            .unwrap();
        let f = nonorthogonal_stacked_svd(&spec).unwrap();
        for (got, want) in f.svd.singular_values.iter().zip([7.0, 5.0, 2.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(!f.rank_deficient);
        let labels: Vec<_> = f.identities.iter().map(|i| i.label().unwrap().to_string()).collect();
        assert_eq!(labels, ["a", "u", "b"]);
    }

    #[test]
    fn tilted_unshared_pair_matches_direct_svd() {
        let spec = SignalSpec::builder(8, vec![6, 7])
            .shared("u", &[3.0, 4.0])
            .unshared("a", 1, 6.0)
            .unshared("b", 2, 2.5)
            .geometry(UnsharedGeometry::Explicit {
                directions: tilted(8, std::f64::consts::FRAC_PI_4),
            })
            .seed(11)
            .build()
            .unwrap();
        let f = nonorthogonal_stacked_svd(&spec).unwrap();
        let oracle = direct(&spec);
        for (a, b) in f.svd.singular_values.iter().zip(&oracle.singular_values) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-8);
        }
        for j in 0..3 {
            let a = f.svd.left.select(&[j]).unwrap();
            let b = oracle.left.select(&[j]).unwrap();
            assert!(sin_theta(&a, &b, SinThetaNorm::Spectral).unwrap() < 1e-8);
        }
        let shared_pos = f.identities.iter().position(|i| i.is_shared()).unwrap();
        assert_abs_diff_eq!(f.svd.singular_values[shared_pos], 5.0, epsilon = 1e-12);
        let recon = f.svd.reconstruct();
        let y = stack(&build_signal(&spec).unwrap().matrices).unwrap();
        assert!((recon - y.as_matrix()).amax() < 1e-10);
    }

    #[test]
    fn parallel_unshared_directions_use_reduced_branch() {
        let mut d = DMatrix::zeros(6, 2);
        d[(0, 0)] = 1.0;
        d[(0, 1)] = 1.0;
        let spec = SignalSpec::builder(6, vec![5, 5])
            .shared("u", &[1.0, 1.0])
            .unshared("a", 1, 3.0)
            .unshared("b", 2, 4.0)
            .geometry(UnsharedGeometry::Explicit {
                directions: DenseMatrix::new(d).unwrap(),
            })
            .build()
            .unwrap();
        let f = nonorthogonal_stacked_svd(&spec).unwrap();
        assert!(f.rank_deficient);
        assert_eq!(f.svd.rank(), 2);
        assert_abs_diff_eq!(f.svd.singular_values[0], 5.0, epsilon = 1e-10);
        assert_abs_diff_eq!(f.svd.singular_values[1], 2f64.sqrt(), epsilon = 1e-12);
        let y = stack(&build_signal(&spec).unwrap().matrices).unwrap();
        assert!((f.svd.reconstruct() - y.as_matrix()).amax() < 1e-10);
    }
}

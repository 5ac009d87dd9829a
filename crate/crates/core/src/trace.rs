//! Tracing shared singular vectors into the stacked matrix.
//!
//! Each matrix's top singular vectors are compared with those of the other
//! matrices: a shared vector has a close partner elsewhere, an unshared one
//! does not. The vectors judged shared are then matched to their nearest
//! left singular vector of the stack, giving the index set `𝕁̂`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{select_svd, SubspaceEstimate};
use crate::linalg::{hcat, left_singular, DenseMatrix};

/// Conditions that make a trace result deviate from the plain algorithm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceFlag {
    /// More than `r` stacked positions were matched; only the `r` closest were kept.
    Overshoot,
    /// Several shared vectors matched the same stacked position.
    Undershoot,
    /// The matrices disagree on the shared rank implied by their counts.
    RankDisagreement,
}

/// How one individual singular vector was matched into the stack.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackMatch {
    /// 1-based matrix index.
    pub matrix: usize,
    /// 1-based position among that matrix's singular vectors.
    pub vector: usize,
    /// 1-based position among the stacked singular vectors.
    pub stacked_index: usize,
    /// `1 − ⟨u, û_k⟩²` to the matched stacked vector.
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceOutput {
    /// `distances[s][i]`: distance of the `i`-th vector of matrix `s` to the other matrices.
    pub distances: Vec<Vec<f64>>,
    /// Unshared count per matrix, as given or as estimated.
    pub unshared_counts: Vec<usize>,
    pub shared_rank: usize,
    /// `𝕁̂`, 1-based and ascending.
    pub shared_index_estimate: Vec<usize>,
    pub matches: Vec<StackMatch>,
    pub flags: Vec<TraceFlag>,
}

impl TraceOutput {
    pub fn d1(&self) -> &[f64] {
        &self.distances[0]
    }

    pub fn d2(&self) -> &[f64] {
        &self.distances[1]
    }

    pub fn k1_hat(&self) -> usize {
        self.unshared_counts[0]
    }

    pub fn k2_hat(&self) -> usize {
        self.unshared_counts[1]
    }

    pub fn is_flagged(&self) -> bool {
        !self.flags.is_empty()
    }
}

fn check_rank(y: &DenseMatrix, r: usize, which: usize) -> Result<()> {
    let full = y.rows().min(y.cols());
    if r == 0 || r > full {
        return Err(Error::contract(format!(
            "rank {r} for matrix {which} must lie in 1..={full}"
        )));
    }
    Ok(())
}

/// Squared sin between every pair of columns: `1 − (aᵀb)²`.
fn sin_sq_table(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    (a.transpose() * b).map(|c| (1.0 - c * c).clamp(0.0, 1.0))
}

fn argmin(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

fn top_frames(ys: &[DenseMatrix], ranks: &[usize]) -> Result<Vec<DMatrix<f64>>> {
    ys.iter()
        .zip(ranks)
        .map(|(y, &r)| left_singular(y.as_matrix(), r).map(|(f, _)| f.into_inner()))
        .collect()
}

/// `d_{si} = max_{t ≠ s} min_j (1 − ⟨û_{si}, û_{tj}⟩²)`.
fn distances_from_frames(frames: &[DMatrix<f64>]) -> Vec<Vec<f64>> {
    let k = frames.len();
    let mut out: Vec<Vec<f64>> = frames.iter().map(|f| vec![0.0; f.ncols()]).collect();
    for s in 0..k {
        for t in (0..k).filter(|t| *t != s) {
            let table = sin_sq_table(&frames[s], &frames[t]);
            for (i, d) in out[s].iter_mut().enumerate() {
                let nearest = table.row(i).iter().copied().fold(f64::INFINITY, f64::min);
                *d = d.max(nearest);
            }
        }
    }
    out
}

/// Per-vector distances between the top `r1` singular vectors of `y1` and the top `r2` of `y2`.
pub fn pair_distances(y1: &DenseMatrix, y2: &DenseMatrix, r1: usize, r2: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    check_rank(y1, r1, 1)?;
    check_rank(y2, r2, 2)?;
    let frames = top_frames(&[y1.clone(), y2.clone()], &[r1, r2])?;
    let mut d = distances_from_frames(&frames);
    let d2 = d.pop().unwrap();
    let d1 = d.pop().unwrap();
    Ok((d1, d2))
}

/// Number of unshared vectors implied by one distance sequence: the position
/// of the widest gap in the decreasing sequence padded with 1 above and 0 below.
pub fn estimate_count(d: &[f64]) -> usize {
    let mut sorted = d.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let padded: Vec<f64> = std::iter::once(1.0)
        .chain(sorted.iter().copied())
        .chain(std::iter::once(0.0))
        .collect();
    let mut best = (0, f64::NEG_INFINITY);
    for k in 0..padded.len() - 1 {
        let gap = padded[k] - padded[k + 1];
        if gap > best.1 {
            best = (k, gap);
        }
    }
    best.0
}

/// `(k̂_1, k̂_2)` from the two distance sequences.
pub fn estimate_counts(d1: &[f64], d2: &[f64]) -> Result<(usize, usize)> {
    for (which, d) in [(1, d1), (2, d2)] {
        if d.is_empty() {
            return Err(Error::contract(format!("distance sequence {which} is empty")));
        }
        if let Some(x) = d.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::contract(format!(
                "distance {x} in sequence {which} lies outside [0, 1]"
            )));
        }
    }
    Ok((estimate_count(d1), estimate_count(d2)))
}

/// Matches the `r` closest vectors of each matrix into the stack's top
/// `r + Σ k_s` singular vectors.
fn trace_core(
    ys: &[DenseMatrix],
    frames: &[DMatrix<f64>],
    distances: Vec<Vec<f64>>,
    counts: Vec<usize>,
    r: usize,
    mut flags: Vec<TraceFlag>,
) -> Result<TraceOutput> {
    let top = r + counts.iter().sum::<usize>();
    let parts: Vec<&DMatrix<f64>> = ys.iter().map(|y| y.as_matrix()).collect();
    let stacked = hcat(&parts);
    if top > stacked.nrows().min(stacked.ncols()) {
        return Err(Error::contract(format!(
            "r + Σk = {top} exceeds the stacked matrix's {}x{} shape",
            stacked.nrows(),
            stacked.ncols()
        )));
    }
    let (u, _) = left_singular(&stacked, top)?;
    let u = u.into_inner();

    let mut matches = Vec::new();
    for (s, d) in distances.iter().enumerate() {
        let mut order: Vec<usize> = (0..d.len()).collect();
        order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
        let table = sin_sq_table(&frames[s], &u);
        for &i in order.iter().take(r) {
            let (k, dist) = argmin(table.row(i).iter().copied());
            matches.push(StackMatch {
                matrix: s + 1,
                vector: i + 1,
                stacked_index: k + 1,
                distance: dist,
            });
        }
    }

    // closest match distance per stacked index
    let mut best: BTreeMap<usize, f64> = BTreeMap::new();
    for m in &matches {
        let e = best.entry(m.stacked_index).or_insert(f64::INFINITY);
        *e = e.min(m.distance);
    }
    let mut chosen: Vec<usize> = best.keys().copied().collect();
    if chosen.len() > r {
        flags.push(TraceFlag::Overshoot);
        let mut ranked: Vec<(usize, f64)> = best.into_iter().collect();
        ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        chosen = ranked.into_iter().take(r).map(|(k, _)| k).collect();
        chosen.sort_unstable();
    } else if chosen.len() < r {
        flags.push(TraceFlag::Undershoot);
    }

    Ok(TraceOutput {
        distances,
        unshared_counts: counts,
        shared_rank: r,
        shared_index_estimate: chosen,
        matches,
        flags,
    })
}

/// Identifies the stacked positions of the `r` shared vectors of two matrices
/// with known unshared counts `k1`, `k2`.
pub fn trace_shared(y1: &DenseMatrix, y2: &DenseMatrix, k1: usize, k2: usize, r: usize) -> Result<TraceOutput> {
    if r == 0 {
        return Err(Error::contract("shared rank must be positive"));
    }
    if y1.rows() != y2.rows() {
        return Err(Error::contract(format!(
            "matrices have {} and {} rows",
            y1.rows(),
            y2.rows()
        )));
    }
    let (r1, r2) = (r + k1, r + k2);
    check_rank(y1, r1, 1)?;
    check_rank(y2, r2, 2)?;
    let ys = [y1.clone(), y2.clone()];
    let frames = top_frames(&ys, &[r1, r2])?;
    let distances = distances_from_frames(&frames);
    trace_core(&ys, &frames, distances, vec![k1, k2], r, Vec::new())
}

/// Tracing for any number of matrices with ranks `ranks`, estimating each
/// unshared count from the max-min distances. When the implied shared ranks
/// `r_s − k̂_s` disagree, the smallest is used and the output is flagged.
pub fn trace_shared_multi(ys: &[DenseMatrix], ranks: &[usize]) -> Result<TraceOutput> {
    if ys.len() < 2 || ranks.len() != ys.len() {
        return Err(Error::contract(format!(
            "need at least two matrices with one rank each, got {} matrices and {} ranks",
            ys.len(),
            ranks.len()
        )));
    }
    let n = ys[0].rows();
    for (i, (y, &r)) in ys.iter().zip(ranks).enumerate() {
        if y.rows() != n {
            return Err(Error::contract(format!(
                "matrix {} has {} rows, expected {n}",
                i + 1,
                y.rows()
            )));
        }
        check_rank(y, r, i + 1)?;
    }
    let frames = top_frames(ys, ranks)?;
    let distances = distances_from_frames(&frames);
    let counts: Vec<usize> = distances.iter().map(|d| estimate_count(d)).collect();
    let implied: Vec<usize> = ranks.iter().zip(&counts).map(|(r, k)| r - k).collect();
    let r = *implied.iter().min().unwrap();
    let mut flags = Vec::new();
    if implied.iter().any(|x| *x != r) {
        flags.push(TraceFlag::RankDisagreement);
    }
    if r == 0 {
        return Err(Error::contract(format!(
            "no shared vectors detected (unshared counts {counts:?} for ranks {ranks:?})"
        )));
    }
    // the stacked window uses counts consistent with the chosen r
    let window: Vec<usize> = ranks.iter().map(|rs| rs - r).collect();
    let mut out = trace_core(ys, &frames, distances, window, r, flags)?;
    out.unshared_counts = counts;
    Ok(out)
}

/// End-to-end Shared-SVD: estimate counts, trace `𝕁̂`, select those stacked vectors.
pub fn shared_svd(ys: &[DenseMatrix], ranks: &[usize]) -> Result<(SubspaceEstimate, TraceOutput)> {
    let trace = trace_shared_multi(ys, ranks)?;
    let estimate = select_svd(ys, &trace.shared_index_estimate)?;
    Ok((estimate, trace))
}

/// Rank guess from the largest ratio `σ_i / σ_{i+1}` among the top `max_rank + 1` values.
pub fn elbow_rank(y: &DenseMatrix, max_rank: usize) -> Result<usize> {
    let full = y.rows().min(y.cols());
    if max_rank == 0 || max_rank >= full {
        return Err(Error::contract(format!("max rank must lie in 1..{full}")));
    }
    let (_, s) = left_singular(y.as_matrix(), 0)?;
    let mut best = (1, f64::NEG_INFINITY);
    for i in 0..max_rank {
        let ratio = s[i] / s[i + 1].max(f64::MIN_POSITIVE);
        if ratio > best.1 {
            best = (i + 1, ratio);
        }
    }
    Ok(best.0)
}

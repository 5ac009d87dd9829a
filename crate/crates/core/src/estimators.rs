//! Shared-subspace estimators built from left singular vectors.
//!
//! Every estimator takes the noisy matrices `Y_1..Y_k` (all with `n` rows) and
//! returns an `n × r` orthonormal frame.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hcat, left_singular, DenseMatrix, OrthonormalFrame};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    Stack,
    Individual,
    Average,
    Selected,
}

#[derive(Clone, Debug)]
pub struct SubspaceEstimate {
    pub frame: OrthonormalFrame,
    pub method: EstimateMethod,
    /// 1-based stacked positions used; empty unless `method` is `Selected`.
    pub indices: Vec<usize>,
    pub source: String,
}

fn check_rows(ys: &[DenseMatrix]) -> Result<usize> {
    let first = ys
        .first()
        .ok_or_else(|| Error::contract("at least one matrix is required"))?;
    let n = first.rows();
    if let Some((i, y)) = ys.iter().enumerate().find(|(_, y)| y.rows() != n) {
        return Err(Error::contract(format!(
            "matrix {} has {} rows, expected {n}",
            i + 1,
            y.rows()
        )));
    }
    Ok(n)
}

fn stacked(ys: &[DenseMatrix]) -> Result<DMatrix<f64>> {
    check_rows(ys)?;
    let parts: Vec<&DMatrix<f64>> = ys.iter().map(|y| y.as_matrix()).collect();
    Ok(hcat(&parts))
}

fn describe(ys: &[DenseMatrix]) -> String {
    let shapes: Vec<String> = ys.iter().map(|y| format!("{}x{}", y.rows(), y.cols())).collect();
    format!("{} matrices ({})", ys.len(), shapes.join(", "))
}

/// Top-`r` left singular vectors of `(Y_1 … Y_k)`.
pub fn stack_svd(ys: &[DenseMatrix], r: usize) -> Result<SubspaceEstimate> {
    let y = stacked(ys)?;
    let (frame, _) = left_singular(&y, r)?;
    Ok(SubspaceEstimate {
        frame,
        method: EstimateMethod::Stack,
        indices: Vec::new(),
        source: describe(ys),
    })
}

/// Top-`r` left singular vectors of a single matrix.
pub fn individual_svd(y: &DenseMatrix, r: usize) -> Result<SubspaceEstimate> {
    let (frame, _) = left_singular(y.as_matrix(), r)?;
    Ok(SubspaceEstimate {
        frame,
        method: EstimateMethod::Individual,
        indices: Vec::new(),
        source: describe(std::slice::from_ref(y)),
    })
}

/// Re-SVD of the unweighted concatenation of each matrix's top-`r` frame.
pub fn average_svd(ys: &[DenseMatrix], r: usize) -> Result<SubspaceEstimate> {
    let n = check_rows(ys)?;
    if r > n {
        return Err(Error::contract(format!("rank {r} exceeds dimension {n}")));
    }
    let frames = ys
        .iter()
        .map(|y| left_singular(y.as_matrix(), r).map(|(f, _)| f.into_inner()))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&DMatrix<f64>> = frames.iter().collect();
    let (frame, _) = left_singular(&hcat(&refs), r)?;
    Ok(SubspaceEstimate {
        frame,
        method: EstimateMethod::Average,
        indices: Vec::new(),
        source: describe(ys),
    })
}

/// Left singular vectors of the stack at the given 1-based positions, ordered
/// by descending singular value.
pub fn select_svd(ys: &[DenseMatrix], indices: &[usize]) -> Result<SubspaceEstimate> {
    if indices.is_empty() {
        return Err(Error::contract("no positions selected"));
    }
    if indices[0] == 0 || indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::contract(format!(
            "positions must be 1-based, distinct and ascending, got {indices:?}"
        )));
    }
    let y = stacked(ys)?;
    let max = *indices.last().unwrap();
    let (top, _) = left_singular(&y, max)?;
    let cols: Vec<usize> = indices.iter().map(|i| i - 1).collect();
    Ok(SubspaceEstimate {
        frame: top.select(&cols)?,
        method: EstimateMethod::Selected,
        indices: indices.to_vec(),
        source: describe(ys),
    })
}

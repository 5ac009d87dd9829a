//! Estimation of shared left singular subspaces across several noisy
//! low-rank matrices.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: dense SVD, sin-Θ distances and seeded orthonormal frames.
//! - [`model`]: ground-truth signal construction, noise, switch profiles and
//!   the closed-form SVD of a stacked signal with non-orthogonal unshared parts.
//! - [`estimators`]: Stack-SVD, individual SVD, Average-SVD and index-selected SVD.
//! - [`trace`]: identification of shared singular vectors inside the stacked matrix.
//! - [`theory`]: rate envelopes, SNR phase thresholds and parameter-space checks.
//! - [`harness`]: Monte Carlo experiments, embedding metrics and matrix I/O.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod theory;
pub mod trace;

pub use error::{Error, Result};
pub use estimators::{average_svd, individual_svd, select_svd, stack_svd, EstimateMethod, SubspaceEstimate};
pub use harness::{
    eval_embedding, load_labels, load_matrix, run_experiment, save_matrix, save_report, Design, EmbeddingEvalReport,
    Estimator, SimConfig, SimReport,
};
pub use linalg::{
    compute_svd, random_orthonormal, sin_theta, DenseMatrix, OrthonormalFrame, SinThetaNorm, SvdFactorization,
};
pub use model::{
    add_noise, ajive_parts, build_signal, nonorthogonal_stacked_svd, stack, switch_profile, NoiseDistribution,
    SignalPair, SignalSpec, SingularVectorId, StackedFactorization, SwitchProfile, UnsharedGeometry, VectorKind,
};
pub use theory::{classify_phase, phase_grid, rate_upper, snr_thresholds, PhaseConfig, PhaseRegion, RateQuery};
pub use trace::{estimate_counts, pair_distances, shared_svd, trace_shared, trace_shared_multi, TraceOutput};

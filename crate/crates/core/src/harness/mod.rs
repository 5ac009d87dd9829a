//! Monte Carlo experiments, embedding-quality metrics and file I/O.

mod embedding;
mod io;
mod presets;

pub use embedding::{eval_embedding, EmbeddingEvalReport};
pub use io::{load_labels, load_matrix, save_matrix, save_report, write_report};
pub use presets::{
    trace_spec, Design, DesignRow, TABLE1_ROWS, TABLE2_ROWS, TRACE_BASE, TRACE_GAPS, TRACE_LAYOUTS, TRACE_N, TRACE_P,
};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{average_svd, individual_svd, select_svd, stack_svd};
use crate::linalg::{sin_theta, DenseMatrix, OrthonormalFrame, SinThetaNorm};
use crate::model::{add_noise, build_signal, switch_profile, NoiseDistribution, SignalSpec};
use crate::rng::derive_seed;
use crate::trace::{shared_svd, trace_shared, trace_shared_multi};

/// Quantities recorded per trial. Loss-type entries report a sin-Θ loss;
/// the tracing entries report 1 on success and 0 otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Stack,
    Individual1,
    Individual2,
    Average,
    /// Shared-SVD with counts estimated from the data.
    Shared,
    /// Stacked singular vectors at the true shared positions.
    Oracle,
    /// `𝕁̂ = 𝕁` with the true unshared counts supplied.
    Tracing,
    /// `(k̂_1, k̂_2) = (k_1, k_2)`.
    Counts,
    /// `𝕁̂ = 𝕁` with estimated counts.
    TracingEstimated,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Stack => "stack",
            Estimator::Individual1 => "individual_1",
            Estimator::Individual2 => "individual_2",
            Estimator::Average => "average",
            Estimator::Shared => "shared",
            Estimator::Oracle => "oracle",
            Estimator::Tracing => "tracing",
            Estimator::Counts => "counts",
            Estimator::TracingEstimated => "tracing_estimated",
        }
    }

    pub fn is_success_rate(self) -> bool {
        matches!(
            self,
            Estimator::Tracing | Estimator::Counts | Estimator::TracingEstimated
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub design: Design,
    pub estimators: Vec<Estimator>,
    pub trials: usize,
    pub tau: f64,
    pub noise: NoiseDistribution,
    pub base_seed: u64,
    pub loss_norm: SinThetaNorm,
    /// Worker threads; `None` uses rayon's global pool.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl SimConfig {
    /// The estimators each preset reports, Gaussian noise with `τ = 1`, squared spectral loss.
    pub fn preset(design: Design, trials: usize, base_seed: u64) -> Self {
        let estimators = match design {
            Design::Table1 { .. } => vec![
                Estimator::Individual1,
                Estimator::Individual2,
                Estimator::Stack,
                Estimator::Average,
            ],
            Design::Table2 { .. } => vec![Estimator::Individual1, Estimator::Individual2, Estimator::Stack],
            Design::Table3 { .. } => vec![Estimator::Tracing, Estimator::Counts, Estimator::TracingEstimated],
            Design::Custom { .. } => vec![Estimator::Stack, Estimator::Oracle, Estimator::Shared],
        };
        SimConfig {
            design,
            estimators,
            trials,
            tau: 1.0,
            noise: NoiseDistribution::Gaussian,
            base_seed,
            loss_norm: SinThetaNorm::Spectral,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(Error::Config(format!(
                "tau must be finite and non-negative, got {}",
                self.tau
            )));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators selected".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        self.design.spec()?;
        Ok(())
    }
}

/// Aggregate for one estimator. `std` is the sample standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub estimator: Estimator,
    pub mean: f64,
    pub std: f64,
    pub trials: usize,
    pub flagged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub rows: Vec<ReportRow>,
    /// `values[e][t]`: outcome of estimator `e` (in `config.estimators` order) on trial `t`.
    pub values: Vec<Vec<f64>>,
    /// Per trial, whether any tracing step raised a flag.
    pub flags: Vec<bool>,
    pub trials: usize,
    pub flagged: usize,
    pub elapsed_secs: f64,
    pub config: SimConfig,
}

impl SimReport {
    pub fn row(&self, e: Estimator) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.estimator == e)
    }

    pub fn mean(&self, e: Estimator) -> Option<f64> {
        self.row(e).map(|r| r.mean)
    }

    fn from_values(config: SimConfig, values: Vec<Vec<f64>>, flags: Vec<bool>, elapsed_secs: f64) -> Self {
        let trials = flags.len();
        let flagged = flags.iter().filter(|f| **f).count();
        let rows = config
            .estimators
            .iter()
            .zip(&values)
            .map(|(&estimator, v)| {
                let (mean, std) = mean_std(v);
                ReportRow {
                    estimator,
                    mean,
                    std,
                    trials,
                    flagged,
                }
            })
            .collect();
        SimReport {
            rows,
            values,
            flags,
            trials,
            flagged,
            elapsed_secs,
            config,
        }
    }

    /// Concatenates runs over consecutive seed blocks into one report.
    pub fn pool(parts: &[SimReport]) -> Result<SimReport> {
        let first = parts.first().ok_or_else(|| Error::Config("nothing to pool".into()))?;
        let mut values = vec![Vec::new(); first.values.len()];
        let mut flags = Vec::new();
        let mut elapsed = 0.0;
        for p in parts {
            if p.config.estimators != first.config.estimators || p.config.design != first.config.design {
                return Err(Error::Config("pooled reports must share design and estimators".into()));
            }
            for (acc, v) in values.iter_mut().zip(&p.values) {
                acc.extend_from_slice(v);
            }
            flags.extend_from_slice(&p.flags);
            elapsed += p.elapsed_secs;
        }
        let mut config = first.config.clone();
        config.trials = flags.len();
        Ok(SimReport::from_values(config, values, flags, elapsed))
    }
}

/// Mean and sample standard deviation, summed in index order.
fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

struct Truth {
    spec: SignalSpec,
    shared_index_set: Vec<usize>,
    ranks: Vec<usize>,
}

/// Runs `cfg.trials` independent trials; trial `t` draws everything from seed `base_seed + t`.
///
/// Outcomes are gathered by trial index, so the report is identical for any
/// number of worker threads.
pub fn run_experiment(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let spec = cfg.design.spec()?;
    let profile = switch_profile(&spec)?;
    let truth = Truth {
        ranks: (1..=spec.k).map(|i| spec.rank(i)).collect(),
        shared_index_set: profile.shared_index_set,
        spec,
    };
    let start = Instant::now();
    let work = || -> Result<Vec<(Vec<f64>, bool)>> {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, &truth, cfg.base_seed.wrapping_add(t as u64)))
            .collect()
    };
    let outcomes = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    let elapsed = start.elapsed().as_secs_f64();
    let mut values = vec![Vec::with_capacity(cfg.trials); cfg.estimators.len()];
    let mut flags = Vec::with_capacity(cfg.trials);
    for (v, f) in outcomes {
        for (acc, x) in values.iter_mut().zip(v) {
            acc.push(x);
        }
        flags.push(f);
    }
    Ok(SimReport::from_values(cfg.clone(), values, flags, elapsed))
}

fn loss(truth: &OrthonormalFrame, est: &OrthonormalFrame, norm: SinThetaNorm) -> Result<f64> {
    let d = sin_theta(truth, est, norm)?;
    Ok(match norm {
        SinThetaNorm::Spectral => d * d,
        SinThetaNorm::FrobeniusSquared => d,
    })
}

fn run_trial(cfg: &SimConfig, truth: &Truth, seed: u64) -> Result<(Vec<f64>, bool)> {
    let spec = truth.spec.with_seed(derive_seed(seed, 0));
    let pair = build_signal(&spec)?;
    let ys: Vec<DenseMatrix> = pair
        .matrices
        .iter()
        .enumerate()
        .map(|(i, x)| add_noise(x, cfg.tau, cfg.noise, derive_seed(seed, 1 + i as u64)))
        .collect::<Result<_>>()?;
    let u = &pair.shared_frame;
    let r = u.rank();
    let mut flagged = false;
    let mut out = Vec::with_capacity(cfg.estimators.len());
    for &e in &cfg.estimators {
        let v = match e {
            Estimator::Stack => loss(u, &stack_svd(&ys, r)?.frame, cfg.loss_norm)?,
            Estimator::Individual1 => loss(u, &individual_svd(&ys[0], r)?.frame, cfg.loss_norm)?,
            Estimator::Individual2 => {
                let y = ys
                    .get(1)
                    .ok_or_else(|| Error::Config("individual_2 needs two matrices".into()))?;
                loss(u, &individual_svd(y, r)?.frame, cfg.loss_norm)?
            }
            Estimator::Average => loss(u, &average_svd(&ys, r)?.frame, cfg.loss_norm)?,
            Estimator::Oracle => loss(u, &select_svd(&ys, &truth.shared_index_set)?.frame, cfg.loss_norm)?,
            Estimator::Shared => match shared_svd(&ys, &truth.ranks) {
                Ok((est, trace)) => {
                    flagged |= trace.is_flagged();
                    if est.frame.rank() == r {
                        loss(u, &est.frame, cfg.loss_norm)?
                    } else {
                        worst_loss(r, cfg.loss_norm)
                    }
                }
                Err(Error::Contract(_)) => {
                    flagged = true;
                    worst_loss(r, cfg.loss_norm)
                }
                Err(e) => return Err(e),
            },
            Estimator::Tracing => {
                if ys.len() != 2 {
                    return Err(Error::Config("tracing with known counts needs two matrices".into()));
                }
                let k1 = truth.spec.unshared_count(1);
                let k2 = truth.spec.unshared_count(2);
                let t = trace_shared(&ys[0], &ys[1], k1, k2, r)?;
                flagged |= t.is_flagged();
                success(!t.is_flagged() && t.shared_index_estimate == truth.shared_index_set)
            }
            Estimator::Counts => {
                let t = trace_shared_multi(&ys, &truth.ranks);
                let want: Vec<usize> = (1..=truth.spec.k).map(|i| truth.spec.unshared_count(i)).collect();
                success(matches!(t, Ok(ref t) if t.unshared_counts == want))
            }
            Estimator::TracingEstimated => match trace_shared_multi(&ys, &truth.ranks) {
                Ok(t) => success(!t.is_flagged() && t.shared_index_estimate == truth.shared_index_set),
                Err(Error::Contract(_)) => 0.0,
                Err(e) => return Err(e),
            },
        };
        out.push(v);
    }
    Ok((out, flagged))
}

fn success(ok: bool) -> f64 {
    if ok {
        1.0
    } else {
        0.0
    }
}

/// Loss charged when an estimator returns no usable rank-`r` frame.
fn worst_loss(r: usize, norm: SinThetaNorm) -> f64 {
    match norm {
        SinThetaNorm::Spectral => 1.0,
        SinThetaNorm::FrobeniusSquared => r as f64,
    }
}

//! Input fixtures shared by the benchmarks.

use stacksvd::{add_noise, build_signal, DenseMatrix, NoiseDistribution, Result, SignalSpec};

/// Two noisy matrices sharing a rank-3 signal with values `(α, α/2, α/4)`.
pub fn shared_inputs(n: usize, p: usize, alpha: f64, seed: u64) -> Result<Vec<DenseMatrix>> {
    let spec = SignalSpec::builder(n, vec![p, p])
        .shared("u1", &[alpha, alpha])
        .shared("u2", &[alpha / 2.0, alpha / 2.0])
        .shared("u3", &[alpha / 4.0, alpha / 4.0])
        .seed(seed)
        .build()?;
    noisy(&spec, seed)
}

/// Two noisy matrices with one shared and one unshared vector each.
pub fn tracing_inputs(n: usize, p: usize, seed: u64) -> Result<Vec<DenseMatrix>> {
    let spec = SignalSpec::builder(n, vec![p, p])
        .unshared("a", 1, 60.0)
        .shared("s", &[30.0, 30.0])
        .unshared("b", 2, 45.0)
        .seed(seed)
        .build()?;
    noisy(&spec, seed)
}

fn noisy(spec: &SignalSpec, seed: u64) -> Result<Vec<DenseMatrix>> {
    let pair = build_signal(spec)?;
    pair.matrices
        .iter()
        .enumerate()
        .map(|(i, x)| add_noise(x, 1.0, NoiseDistribution::Gaussian, seed + 1 + i as u64))
        .collect()
}

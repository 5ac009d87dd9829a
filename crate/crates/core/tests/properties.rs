use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stacksvd::harness::{run_experiment, Design, Estimator, SimConfig, TABLE1_ROWS};
use stacksvd::theory::{rate_upper, RateQuery};
use stacksvd::{
    add_noise, build_signal, compute_svd, random_orthonormal, sin_theta, stack, stack_svd, switch_profile,
    trace_shared, trace_shared_multi, DenseMatrix, NoiseDistribution, OrthonormalFrame, SignalSpec, SinThetaNorm,
    UnsharedGeometry,
};

fn noisy(spec: &SignalSpec, seed: u64, tau: f64) -> Vec<DenseMatrix> {
    let pair = build_signal(&spec.with_seed(seed)).unwrap();
    pair.matrices
        .iter()
        .enumerate()
        .map(|(i, x)| add_noise(x, tau, NoiseDistribution::Gaussian, seed * 31 + i as u64).unwrap())
        .collect()
}

fn rotation(rng: &mut ChaCha8Rng, r: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0));
    g.qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn sin_theta_symmetric_and_rotation_invariant(seed in any::<u64>(), n in 4usize..12, r in 1usize..4) {
        let a = random_orthonormal(n, r, seed).unwrap();
        let b = random_orthonormal(n, r, seed ^ 0x9e37).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (qa, qb) = (rotation(&mut rng, r), rotation(&mut rng, r));
        let a2 = a.rotate(&qa).unwrap();
        let b2 = b.rotate(&qb).unwrap();
        for norm in [SinThetaNorm::Spectral, SinThetaNorm::FrobeniusSquared] {
            let d = sin_theta(&a, &b, norm).unwrap();
            prop_assert!((d - sin_theta(&b, &a, norm).unwrap()).abs() < 1e-10);
            prop_assert!((d - sin_theta(&a2, &b2, norm).unwrap()).abs() < 1e-10);
        }
        let s = sin_theta(&a, &b, SinThetaNorm::Spectral).unwrap();
        let f = sin_theta(&a, &b, SinThetaNorm::FrobeniusSquared).unwrap();
        prop_assert!(s * s <= f + 1e-12);
        prop_assert!(f <= r as f64 * s * s + 1e-12);
    }

    #[test]
    fn shared_values_compose_in_both_geometries(seed in any::<u64>(), a in 1.0f64..20.0, b in 1.0f64..20.0, tilt in 0.05f64..0.95) {
        let orth = SignalSpec::builder(8, vec![5, 5])
            .shared("u", &[a, b])
            .unshared("x", 1, 3.3)
            .unshared("y", 2, 2.2)
            .seed(seed)
            .build()
            .unwrap();
        let mut dirs = DMatrix::zeros(8, 2);
        dirs[(0, 0)] = 1.0;
        dirs[(0, 1)] = tilt;
        dirs[(1, 1)] = (1.0 - tilt * tilt).sqrt();
        let explicit = SignalSpec {
            unshared_geometry: UnsharedGeometry::Explicit { directions: DenseMatrix::new(dirs).unwrap() },
            ..orth.clone()
        };
        for spec in [orth, explicit] {
            let p = switch_profile(&spec).unwrap();
            let pos = p.identities.iter().position(|id| id.label() == Some("u")).unwrap();
            prop_assert!((p.stacked_values[pos] - a.hypot(b)).abs() < 1e-10);
        }
    }
}

fn random_explicit_spec(rng: &mut ChaCha8Rng) -> SignalSpec {
    let n = 12;
    let w1 = random_orthonormal(n, 2, rng.random()).unwrap().into_inner();
    let mut w2 = random_orthonormal(n, 2, rng.random()).unwrap().into_inner();
    // tilt X2's first direction towards X1's span
    let t = rng.random_range(0.0..0.9);
    let mut c = w2.column(0) * (1.0 - t) + w1.column(0) * t;
    c /= c.norm();
    w2.set_column(0, &c);
    let d = w2.column(1) - &c * c.dot(&w2.column(1));
    w2.set_column(1, &(&d / d.norm()));
    let mut dirs = DMatrix::zeros(n, 4);
    dirs.columns_mut(0, 2).copy_from(&w1);
    dirs.columns_mut(2, 2).copy_from(&w2);
    let mut v = || rng.random_range(1.0..10.0);
    SignalSpec::builder(n, vec![6, 6])
        .shared("s1", &[v(), v()])
        .shared("s2", &[v(), v()])
        .unshared("a1", 1, v())
        .unshared("a2", 1, v())
        .unshared("b1", 2, v())
        .unshared("b2", 2, v())
        .geometry(UnsharedGeometry::Explicit {
            directions: DenseMatrix::new(dirs).unwrap(),
        })
        .seed(rng.random())
        .build()
        .unwrap()
}

#[test]
fn shared_index_set_agrees_with_direct_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0;
    for _ in 0..60 {
        let spec = random_explicit_spec(&mut rng);
        let pair = build_signal(&spec).unwrap();
        let direct = compute_svd(&stack(&pair.matrices).unwrap(), Some(6)).unwrap();
        let v = &direct.singular_values;
        if v.windows(2).any(|w| w[0] - w[1] < 1e-6 * w[0]) {
            continue;
        }
        let profile = match switch_profile(&spec) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let u = pair.shared_frame.as_matrix();
        let shared: Vec<usize> = (0..6)
            .filter(|&j| (u.transpose() * direct.left.as_matrix().column(j)).norm_squared() > 1.0 - 1e-8)
            .map(|j| j + 1)
            .collect();
        assert_eq!(shared, profile.shared_index_set);
        checked += 1;
    }
    assert!(checked >= 40, "only {checked} non-degenerate instances");
}

#[test]
fn stack_error_shrinks_with_signal() {
    let spec = |g: f64| {
        SignalSpec::builder(10, vec![20, 20])
            .shared("u1", &[g, g])
            .shared("u2", &[g / 2.0, g / 2.0])
            .shared("u3", &[g / 4.0, g / 4.0])
            .build()
            .unwrap()
    };
    let mean_error = |g: f64| {
        let s = spec(g);
        (0..200u64)
            .map(|t| {
                let ys = noisy(&s, 1000 + t, 1.0);
                let truth = build_signal(&s.with_seed(1000 + t)).unwrap().shared_frame;
                let est = stack_svd(&ys, 3).unwrap().frame;
                sin_theta(&truth, &est, SinThetaNorm::Spectral).unwrap().powi(2)
            })
            .sum::<f64>()
            / 200.0
    };
    for g in [10.0, 20.0, 40.0] {
        assert!(mean_error(g) >= mean_error(2.0 * g), "gamma {g}");
    }
}

/// Interleaved layout with 10% multiplicative separation and every
/// individual singular value above both `n` and `2·sqrt(max p)`.
fn high_snr_spec() -> SignalSpec {
    let layout = "2121S2S1S";
    let (mut s, mut u) = (0, 0);
    let mut b = SignalSpec::builder(50, vec![100, 100]);
    for (j, t) in layout.chars().enumerate() {
        let value = 75.0 * 1.1f64.powi((layout.len() - 1 - j) as i32);
        b = match t {
            'S' => {
                s += 1;
                b.shared(&format!("u{s}"), &[value / 2f64.sqrt(); 2])
            }
            _ => {
                u += 1;
                b.unshared(&format!("u{u}*"), t.to_digit(10).unwrap() as usize, value)
            }
        };
    }
    b.build().unwrap()
}

#[test]
fn tracing_is_consistent_at_high_snr() {
    let spec = high_snr_spec();
    for i in 1..=2 {
        for l in spec.unshared_labels(i).chain(spec.shared_labels()) {
            let v = spec.value(i, l).unwrap();
            assert!(v >= 50.0 && v * v >= 400.0);
        }
    }
    let mut cfg = SimConfig::preset(Design::Custom { spec }, 1000, 4242);
    cfg.estimators = vec![Estimator::Tracing, Estimator::Counts, Estimator::TracingEstimated];
    let rep = run_experiment(&cfg).unwrap();
    for e in cfg.estimators {
        let rate = rep.mean(e).unwrap();
        assert!(rate >= 0.99, "{} success {rate}", e.as_str());
    }
}

#[test]
fn estimate_does_not_depend_on_input_order() {
    let spec = stacksvd::harness::trace_spec(1, 3.0, 20.0).unwrap();
    let (k1, k2) = (spec.unshared_count(1), spec.unshared_count(2));
    let ranks = [spec.rank(1), spec.rank(2)];
    let mut compared = 0;
    for t in 0..200u64 {
        let ys = noisy(&spec, t, 1.0);
        let a = trace_shared(&ys[0], &ys[1], k1, k2, 1).unwrap();
        let b = trace_shared(&ys[1], &ys[0], k2, k1, 1).unwrap();
        if !a.is_flagged() && !b.is_flagged() {
            assert_eq!(a.shared_index_estimate, b.shared_index_estimate, "trial {t}");
            compared += 1;
        }
        let a = trace_shared_multi(&ys, &ranks);
        let b = trace_shared_multi(&[ys[1].clone(), ys[0].clone()], &[ranks[1], ranks[0]]);
        if let (Ok(a), Ok(b)) = (a, b) {
            if !a.is_flagged() && !b.is_flagged() {
                assert_eq!(a.shared_index_estimate, b.shared_index_estimate, "trial {t}");
            }
        }
    }
    assert!(compared > 150);
}

#[test]
fn non_orthogonal_unshared_keeps_shared_positions() {
    let mut dirs = DMatrix::zeros(30, 2);
    dirs[(0, 0)] = 1.0;
    dirs[(0, 1)] = 0.5;
    dirs[(1, 1)] = 0.75f64.sqrt();
    let spec = SignalSpec::builder(30, vec![60, 60])
        .unshared("a", 1, 80.0)
        .shared("u", &[40.0, 40.0])
        .unshared("b", 2, 60.0)
        .geometry(UnsharedGeometry::Explicit {
            directions: DenseMatrix::new(dirs).unwrap(),
        })
        .build()
        .unwrap();
    let truth = switch_profile(&spec).unwrap().shared_index_set;
    for t in 0..200u64 {
        let ys = noisy(&spec, t, 1.0);
        let est = trace_shared(&ys[0], &ys[1], 1, 1, 1).unwrap();
        assert!(truth.iter().all(|j| est.shared_index_estimate.contains(j)), "trial {t}");
    }
}

#[test]
fn stack_loss_stays_within_rate_envelope() {
    for row in 1..=TABLE1_ROWS.len() {
        let (n, p1, p2, a, b) = TABLE1_ROWS[row - 1];
        let mut cfg = SimConfig::preset(Design::Table1 { row }, 100, 9);
        cfg.estimators = vec![Estimator::Stack];
        cfg.loss_norm = SinThetaNorm::FrobeniusSquared;
        let loss = run_experiment(&cfg).unwrap().mean(Estimator::Stack).unwrap();
        let strength_sq = (a * a + b * b) / 16.0;
        let q = RateQuery::new(n, p1 + p2, strength_sq, 3, SinThetaNorm::FrobeniusSquared).unwrap();
        let bound = 10.0 * rate_upper(&q);
        assert!(loss <= bound, "row {row}: loss {loss} vs envelope {bound}");
    }
}

#[test]
fn reported_standard_error_brackets_replication_spread() {
    let trials = 100;
    let mut means = Vec::new();
    let mut errors = Vec::new();
    for rep in 0..10u64 {
        let r = run_experiment(&SimConfig::preset(Design::Table1 { row: 1 }, trials, rep * 10_000)).unwrap();
        let row = r.row(Estimator::Stack).unwrap();
        means.push(row.mean);
        errors.push(row.std / (trials as f64).sqrt());
    }
    let m = means.iter().sum::<f64>() / 10.0;
    let spread = (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 9.0).sqrt();
    let se = errors.iter().sum::<f64>() / 10.0;
    assert!(spread > 0.5 * se && spread < 2.0 * se, "spread {spread} vs se {se}");
}

#[test]
fn pooled_runs_reproduce_single_run() {
    let full = run_experiment(&SimConfig::preset(Design::Table1 { row: 2 }, 500, 11)).unwrap();
    let parts: Vec<_> = (0..5u64)
        .map(|b| run_experiment(&SimConfig::preset(Design::Table1 { row: 2 }, 100, 11 + 100 * b)).unwrap())
        .collect();
    let pooled = stacksvd::SimReport::pool(&parts).unwrap();
    assert_eq!(full.values, pooled.values);
    for (a, b) in full.rows.iter().zip(&pooled.rows) {
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    }
    let mut threaded = SimConfig::preset(Design::Table1 { row: 2 }, 500, 11);
    threaded.workers = Some(3);
    assert_eq!(run_experiment(&threaded).unwrap().values, full.values);
}

#[test]
fn frames_reject_out_of_tolerance_columns() {
    let mut q = random_orthonormal(6, 2, 3).unwrap().into_inner();
    q[(0, 0)] += 1e-6;
    assert!(OrthonormalFrame::new(q).is_err());
}

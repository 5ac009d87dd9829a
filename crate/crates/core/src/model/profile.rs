use serde::{Deserialize, Serialize};

use super::{nonorthogonal_stacked_svd, SignalSpec, UnsharedGeometry, VectorKind};
use crate::error::{Error, Result};

/// Stacked values closer than this (relative) count as tied.
const TIE_RTOL: f64 = 1e-12;

/// Which spec vector a stacked singular vector corresponds to.
///
/// Unshared columns of a non-orthogonal stack are mixtures and may carry no label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StackedIdentity {
    Shared {
        label: String,
    },
    Unshared {
        owner: Option<usize>,
        label: Option<String>,
    },
}

impl StackedIdentity {
    pub fn kind(&self) -> VectorKind {
        match self {
            StackedIdentity::Shared { .. } => VectorKind::Shared,
            StackedIdentity::Unshared { .. } => VectorKind::Unshared,
        }
    }

    pub fn is_shared(&self) -> bool {
        self.kind() == VectorKind::Shared
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            StackedIdentity::Shared { label } => Some(label),
            StackedIdentity::Unshared { label, .. } => label.as_deref(),
        }
    }
}

/// One eigen-gap `σ_s² − σ_{s+1}²`. The terminal gap sits at the last position
/// and measures `σ_min² − 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchGap {
    pub position: usize,
    pub gap_sq: f64,
    pub terminal: bool,
}

/// Type layout of the stacked signal's singular vectors. Positions are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchProfile {
    pub stacked_values: Vec<f64>,
    pub types: Vec<VectorKind>,
    pub identities: Vec<StackedIdentity>,
    /// Positions `s` where vector `s` and `s + 1` differ in type.
    pub switch_set: Vec<usize>,
    /// One gap per switch, plus the terminal gap when the last vector is shared.
    pub gaps: Vec<SwitchGap>,
    pub shared_index_set: Vec<usize>,
    /// Smallest gap, `t²`; absent when there are no switches at all.
    pub min_gap_sq: Option<f64>,
    pub g1: Option<f64>,
    pub g2: Option<f64>,
}

impl SwitchProfile {
    /// Number of unshared vectors ranked above the first shared one.
    pub fn leading_unshared(&self) -> usize {
        self.types.iter().take_while(|t| **t == VectorKind::Unshared).count()
    }
}

/// Analytic switch profile of the noiseless stack `(X_1 … X_k)`.
///
/// In orthogonal geometry each shared vector's stacked value is
/// `sqrt(Σ_i σ_i²)` and each unshared vector keeps its own; in explicit
/// geometry the values come from [`nonorthogonal_stacked_svd`].
pub fn switch_profile(spec: &SignalSpec) -> Result<SwitchProfile> {
    spec.validate()?;
    let (values, identities) = match spec.unshared_geometry {
        UnsharedGeometry::Orthogonal => analytic_entries(spec),
        UnsharedGeometry::Explicit { .. } => {
            let f = nonorthogonal_stacked_svd(spec)?;
            (f.svd.singular_values, f.identities)
        }
    };
    let types: Vec<VectorKind> = identities.iter().map(StackedIdentity::kind).collect();

    for s in 1..values.len() {
        let (a, b) = (values[s - 1], values[s]);
        if types[s - 1] != types[s] && (a - b).abs() <= TIE_RTOL * a.abs().max(b.abs()) {
            return Err(Error::Ambiguous {
                first: s,
                second: s + 1,
                value: a,
            });
        }
    }

    let mut switch_set = Vec::new();
    let mut gaps = Vec::new();
    for s in 1..values.len() {
        if types[s - 1] != types[s] {
            switch_set.push(s);
            gaps.push(SwitchGap {
                position: s,
                gap_sq: values[s - 1].powi(2) - values[s].powi(2),
                terminal: false,
            });
        }
    }
    if types.last() == Some(&VectorKind::Shared) {
        gaps.push(SwitchGap {
            position: values.len(),
            gap_sq: values[values.len() - 1].powi(2),
            terminal: true,
        });
    }
    let min_gap_sq = gaps.iter().map(|g| g.gap_sq).min_by(f64::total_cmp);
    let shared_index_set: Vec<usize> = types
        .iter()
        .enumerate()
        .filter(|(_, t)| **t == VectorKind::Shared)
        .map(|(i, _)| i + 1)
        .collect();

    let r = spec.shared_count();
    let (g1, g2) = if spec.k == 2 {
        let orthogonal = matches!(spec.unshared_geometry, UnsharedGeometry::Orthogonal);
        (
            gap_g1(spec, &shared_index_set),
            if orthogonal {
                gap_g2(spec, &shared_index_set)
            } else {
                None
            },
        )
    } else {
        (None, None)
    };
    debug_assert_eq!(shared_index_set.len(), r);

    Ok(SwitchProfile {
        stacked_values: values,
        types,
        identities,
        switch_set,
        gaps,
        shared_index_set,
        min_gap_sq,
        g1,
        g2,
    })
}

fn analytic_entries(spec: &SignalSpec) -> (Vec<f64>, Vec<StackedIdentity>) {
    let mut entries: Vec<(f64, StackedIdentity)> = spec
        .vectors
        .iter()
        .map(|v| match v.kind {
            VectorKind::Shared => (
                spec.combined_shared_value(&v.label).expect("validated spec"),
                StackedIdentity::Shared { label: v.label.clone() },
            ),
            VectorKind::Unshared => (
                spec.value(v.owner.unwrap(), &v.label).expect("validated spec"),
                StackedIdentity::Unshared {
                    owner: v.owner,
                    label: Some(v.label.clone()),
                },
            ),
        })
        .collect();
    entries.sort_by(|a, b| b.0.total_cmp(&a.0));
    entries.into_iter().unzip()
}

fn max_unshared_sq(spec: &SignalSpec) -> f64 {
    (1..=spec.k)
        .flat_map(|i| spec.unshared_labels(i).map(move |l| (i, l)))
        .map(|(i, l)| spec.value(i, l).unwrap().powi(2))
        .fold(0.0, f64::max)
}

/// `min_shared (σ²(X_1) + σ²(X_2)) − max_unshared σ²`, when every shared vector outranks every unshared one.
fn gap_g1(spec: &SignalSpec, shared: &[usize]) -> Option<f64> {
    let r = shared.len();
    if r == 0 || shared.iter().enumerate().any(|(j, &p)| p != j + 1) {
        return None;
    }
    let min_shared = spec
        .shared_labels()
        .map(|l| spec.combined_shared_value(l).unwrap().powi(2))
        .fold(f64::INFINITY, f64::min);
    Some(min_shared - max_unshared_sq(spec))
}

/// `σ_{d_1}²(X_1) ∧ σ_{d_2}²(X_2) − max_shared (σ²(X_1) + σ²(X_2))`, when all `d`
/// unshared vectors outrank the shared block and both matrices own some.
fn gap_g2(spec: &SignalSpec, shared: &[usize]) -> Option<f64> {
    let r = shared.len();
    let d1 = spec.unshared_count(1);
    let d2 = spec.unshared_count(2);
    let d = d1 + d2;
    if r == 0 || d1 == 0 || d2 == 0 || shared.iter().enumerate().any(|(j, &p)| p != d + j + 1) {
        return None;
    }
    let min_unshared = |i: usize| {
        spec.unshared_labels(i)
            .map(|l| spec.value(i, l).unwrap().powi(2))
            .fold(f64::INFINITY, f64::min)
    };
    let max_shared = spec
        .shared_labels()
        .map(|l| spec.combined_shared_value(l).unwrap().powi(2))
        .fold(0.0, f64::max);
    Some(min_unshared(1).min(min_unshared(2)) - max_shared)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn worked_example(alpha: f64, beta: f64) -> SignalSpec {
        let c = (alpha * alpha + beta * beta).sqrt();
        SignalSpec::builder(10, vec![10, 10])
            .shared("u1", &[2.0 * alpha, 2.0 * beta])
            .shared("u2", &[alpha, beta])
            .unshared("u1*", 1, 1.5 * c)
            .unshared("u2*", 2, 0.5 * c)
            .build()
            .unwrap()
    }

    #[test]
    fn interleaved_worked_example() {
        let (alpha, beta) = (3.0, 4.0);
        let c = 5.0;
        let p = switch_profile(&worked_example(alpha, beta)).unwrap();
        let labels: Vec<_> = p.identities.iter().map(|i| i.label().unwrap()).collect();
        assert_eq!(labels, ["u1", "u1*", "u2", "u2*"]);
        for (got, want) in p.stacked_values.iter().zip([2.0 * c, 1.5 * c, c, 0.5 * c]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert_eq!(p.shared_index_set, vec![1, 3]);
        assert_eq!(p.switch_set, vec![1, 2, 3]);
        assert_eq!(p.gaps.len(), 3);
        assert!(p.g1.is_none() && p.g2.is_none());
        assert_abs_diff_eq!(p.min_gap_sq.unwrap(), (1.0 - 0.25) * c * c, epsilon = 1e-9);
    }

    #[test]
    fn one_strong_one_weak_example() {
        let spec = SignalSpec::builder(10, vec![10, 10])
            .unshared("u1", 1, 20.0)
            .shared("u", &[3.0, 4.0])
            .unshared("u2", 2, 2.0)
            .build()
            .unwrap();
        let p = switch_profile(&spec).unwrap();
        assert_eq!(p.stacked_values, vec![20.0, 5.0, 2.0]);
        assert_eq!(p.shared_index_set, vec![2]);
    }

    #[test]
    fn all_shared_has_only_terminal_gap() {
        let spec = SignalSpec::builder(10, vec![10, 10])
            .shared("a", &[4.0, 3.0])
            .shared("b", &[1.0, 1.0])
            .build()
            .unwrap();
        let p = switch_profile(&spec).unwrap();
        assert!(p.switch_set.is_empty());
        assert_eq!(p.shared_index_set, vec![1, 2]);
        assert_abs_diff_eq!(p.min_gap_sq.unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.g1.unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn weak_unshared_gives_g1() {
        let spec = SignalSpec::builder(10, vec![10, 10])
            .shared("u", &[3.0, 4.0])
            .unshared("a", 1, 2.0)
            .unshared("b", 2, 1.0)
            .build()
            .unwrap();
        let p = switch_profile(&spec).unwrap();
        assert_eq!(p.g1, Some(21.0));
        assert_eq!(p.g2, None);
    }

    #[test]
    fn strong_unshared_gives_g2() {
        let spec = SignalSpec::builder(10, vec![10, 10])
            .unshared("a", 1, 9.0)
            .unshared("b", 2, 8.0)
            .shared("u", &[3.0, 4.0])
            .build()
            .unwrap();
        let p = switch_profile(&spec).unwrap();
        assert_eq!(p.shared_index_set, vec![3]);
        assert_eq!(p.g2, Some(64.0 - 25.0));
        assert_eq!(p.g1, None);
        assert_eq!(p.leading_unshared(), 2);
    }

    #[test]
    fn tie_across_types_is_ambiguous() {
        let spec = SignalSpec::builder(10, vec![10, 10])
            .shared("u", &[3.0, 4.0])
            .unshared("a", 1, 5.0)
            .build()
            .unwrap();
        assert!(matches!(
            switch_profile(&spec),
            Err(Error::Ambiguous {
                first: 1,
                second: 2,
                ..
            })
        ));
    }

    #[test]
    fn tie_within_type_is_fine() {
        let spec = SignalSpec::builder(10, vec![10, 10])
            .unshared("a", 1, 5.0)
            .unshared("b", 2, 5.0)
            .shared("u", &[1.0, 1.0])
            .build()
            .unwrap();
        assert!(switch_profile(&spec).is_ok());
    }
}

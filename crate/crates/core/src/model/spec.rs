use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorKind {
    Shared,
    Unshared,
}

/// Identity of one left singular vector. Unshared vectors carry a 1-based
/// owner matrix index; shared ones carry none.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingularVectorId {
    pub kind: VectorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner: Option<usize>,
    pub label: String,
}

/// How unshared directions are placed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum UnsharedGeometry {
    /// All left vectors drawn from one orthonormal pool.
    Orthogonal,
    /// `n × (Σ r_{i*})` unit columns, one per unshared vector in spec order.
    Explicit { directions: DenseMatrix },
}

/// `(matrix index, vector label)`, written `"i:label"` in JSON.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValueKey {
    pub matrix: usize,
    pub label: String,
}

impl ValueKey {
    pub fn new(matrix: usize, label: impl Into<String>) -> Self {
        ValueKey {
            matrix,
            label: label.into(),
        }
    }
}

impl fmt::Display for ValueKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.matrix, self.label)
    }
}

impl FromStr for ValueKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (i, label) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("value key `{s}` is not of the form matrixIndex:label")))?;
        let matrix = i
            .parse()
            .map_err(|_| Error::Config(format!("value key `{s}` has a non-numeric matrix index")))?;
        Ok(ValueKey::new(matrix, label))
    }
}

impl Serialize for ValueKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ValueKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Generative description of a multi-matrix signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub n: usize,
    pub k: usize,
    pub dims: Vec<usize>,
    pub vectors: Vec<SingularVectorId>,
    pub values: BTreeMap<ValueKey, f64>,
    pub unshared_geometry: UnsharedGeometry,
    pub seed: u64,
}

impl SignalSpec {
    pub fn builder(n: usize, dims: Vec<usize>) -> SignalSpecBuilder {
        SignalSpecBuilder {
            spec: SignalSpec {
                n,
                k: dims.len(),
                dims,
                vectors: Vec::new(),
                values: BTreeMap::new(),
                unshared_geometry: UnsharedGeometry::Orthogonal,
                seed: 0,
            },
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: SignalSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Same spec with a different frame seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        SignalSpec { seed, ..self.clone() }
    }

    pub fn shared_labels(&self) -> impl Iterator<Item = &str> {
        self.vectors
            .iter()
            .filter(|v| v.kind == VectorKind::Shared)
            .map(|v| v.label.as_str())
    }

    /// Unshared labels owned by 1-based matrix `i`, in spec order.
    pub fn unshared_labels(&self, i: usize) -> impl Iterator<Item = &str> {
        self.vectors
            .iter()
            .filter(move |v| v.kind == VectorKind::Unshared && v.owner == Some(i))
            .map(|v| v.label.as_str())
    }

    pub fn shared_count(&self) -> usize {
        self.shared_labels().count()
    }

    pub fn unshared_count(&self, i: usize) -> usize {
        self.unshared_labels(i).count()
    }

    /// `rank(X_i) = r + r_{i*}` for 1-based `i`.
    pub fn rank(&self, i: usize) -> usize {
        self.shared_count() + self.unshared_count(i)
    }

    pub fn value(&self, i: usize, label: &str) -> Option<f64> {
        self.values.get(&ValueKey::new(i, label)).copied()
    }

    /// Combined stacked value `sqrt(Σ_i σ_i²)` of a shared vector.
    pub fn combined_shared_value(&self, label: &str) -> Option<f64> {
        let mut acc = 0.0;
        for i in 1..=self.k {
            acc += self.value(i, label)?.powi(2);
        }
        Some(acc.sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.dims.len() != self.k {
            return Err(Error::contract(format!(
                "k = {} but {} column dimensions given",
                self.k,
                self.dims.len()
            )));
        }
        if self.n == 0 || self.dims.contains(&0) {
            return Err(Error::contract("dimensions must be positive"));
        }
        let mut labels = BTreeSet::new();
        for v in &self.vectors {
            if !labels.insert(v.label.as_str()) {
                return Err(Error::contract(format!("duplicate vector label `{}`", v.label)));
            }
            match (v.kind, v.owner) {
                (VectorKind::Shared, None) => {}
                (VectorKind::Shared, Some(_)) => {
                    return Err(Error::contract(format!("shared vector `{}` has an owner", v.label)))
                }
                (VectorKind::Unshared, Some(o)) if (1..=self.k).contains(&o) => {}
                (VectorKind::Unshared, _) => {
                    return Err(Error::contract(format!(
                        "unshared vector `{}` needs an owner in 1..={}",
                        v.label, self.k
                    )))
                }
            }
        }
        let mut expected = BTreeSet::new();
        for v in &self.vectors {
            match v.kind {
                VectorKind::Shared => {
                    for i in 1..=self.k {
                        expected.insert(ValueKey::new(i, v.label.clone()));
                    }
                }
                VectorKind::Unshared => {
                    expected.insert(ValueKey::new(v.owner.unwrap(), v.label.clone()));
                }
            }
        }
        for key in &expected {
            match self.values.get(key) {
                None => return Err(Error::contract(format!("missing singular value for `{key}`"))),
                Some(s) if !(*s > 0.0) || !s.is_finite() => {
                    return Err(Error::contract(format!(
                        "singular value for `{key}` must be positive, got {s}"
                    )))
                }
                _ => {}
            }
        }
        if let Some(extra) = self.values.keys().find(|k| !expected.contains(k)) {
            return Err(Error::contract(format!(
                "value `{extra}` does not belong to any vector"
            )));
        }
        for i in 1..=self.k {
            if self.rank(i) == 0 {
                return Err(Error::contract(format!("matrix {i} has no singular vectors")));
            }
        }
        Ok(())
    }
}

/// Incremental [`SignalSpec`] construction; vectors keep insertion order.
#[derive(Clone, Debug)]
pub struct SignalSpecBuilder {
    spec: SignalSpec,
}

impl SignalSpecBuilder {
    /// A vector shared by all matrices, with one value per matrix.
    pub fn shared(mut self, label: &str, values: &[f64]) -> Self {
        self.spec.vectors.push(SingularVectorId {
            kind: VectorKind::Shared,
            owner: None,
            label: label.to_string(),
        });
        for (i, v) in values.iter().enumerate() {
            self.spec.values.insert(ValueKey::new(i + 1, label), *v);
        }
        self
    }

    /// A vector owned by 1-based matrix `owner`.
    pub fn unshared(mut self, label: &str, owner: usize, value: f64) -> Self {
        self.spec.vectors.push(SingularVectorId {
            kind: VectorKind::Unshared,
            owner: Some(owner),
            label: label.to_string(),
        });
        self.spec.values.insert(ValueKey::new(owner, label), value);
        self
    }

    pub fn geometry(mut self, g: UnsharedGeometry) -> Self {
        self.spec.unshared_geometry = g;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.spec.seed = seed;
        self
    }

    pub fn build(self) -> Result<SignalSpec> {
        self.spec.validate()?;
        Ok(self.spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_uses_index_label_keys() {
        let spec = SignalSpec::builder(5, vec![3, 4])
            .shared("u", &[2.0, 1.5])
            .unshared("a", 2, 0.5)
            .seed(42)
            .build()
            .unwrap();
        let json = spec.to_json().unwrap();
        assert!(json.contains("\"1:u\""));
        assert!(json.contains("\"2:a\""));
        assert!(json.contains("\"unshared_geometry\""));
        let back = SignalSpec::from_json(&json).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn validation_catches_bad_specs() {
        let missing = SignalSpec::builder(5, vec![3, 4]).shared("u", &[2.0]).build();
        assert!(missing.is_err());
        let bad_owner = SignalSpec::builder(5, vec![3, 4]).unshared("a", 3, 1.0).build();
        assert!(bad_owner.is_err());
        let negative = SignalSpec::builder(5, vec![3, 4]).shared("u", &[2.0, -1.0]).build();
        assert!(negative.is_err());
        let dup = SignalSpec::builder(5, vec![3, 4])
            .shared("u", &[1.0, 1.0])
            .unshared("u", 1, 1.0)
            .build();
        assert!(dup.is_err());
        let empty_matrix = SignalSpec::builder(5, vec![3, 4]).unshared("a", 1, 1.0).build();
        assert!(empty_matrix.is_err());
    }

    #[test]
    fn bad_value_key_is_rejected() {
        let json = r#"{"n":3,"k":1,"dims":[2],"vectors":[{"kind":"shared","label":"u"}],
            "values":{"one:u":1.0},"unshared_geometry":{"mode":"orthogonal"},"seed":1}"#;
        assert!(SignalSpec::from_json(json).is_err());
    }
}

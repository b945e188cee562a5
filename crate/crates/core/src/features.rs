//! Categorical feature schema, sample encoding, and the discrete forward
//! process: iterative feature dropout in raw feature space.
//!
//! Every feature reserves token `0` as [`MISSING`]. Dropping a feature during
//! the forward process and a feature being absent at serving time produce
//! the same token, so the model sees one representation for both.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MISSING: u32 = 0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub name: String,
    /// Raw values by token; index 0 is the empty string standing for MISSING.
    pub vocabulary: Vec<String>,
}

impl FeatureDescriptor {
    pub fn new(name: impl Into<String>, values: impl IntoIterator<Item = String>) -> Self {
        let mut vocabulary = vec![String::new()];
        vocabulary.extend(values);
        Self {
            name: name.into(),
            vocabulary,
        }
    }

    /// Vocabulary size including the MISSING token.
    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    features: Vec<FeatureDescriptor>,
    user_feature: Option<usize>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureDescriptor>, user_feature: Option<usize>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Config("schema needs at least one feature".into()));
        }
        let mut seen = HashSet::new();
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Config(format!("duplicate feature name '{}'", f.name)));
            }
            if f.vocab_size() < 2 {
                return Err(Error::Config(format!(
                    "feature '{}' has no real values besides MISSING",
                    f.name
                )));
            }
            if matches!(f.name.as_str(), "label" | "user_id") {
                return Err(Error::Config(format!("reserved feature name '{}'", f.name)));
            }
        }
        if let Some(u) = user_feature {
            if u >= features.len() {
                return Err(Error::Config(format!("user feature index {u} out of range")));
            }
        }
        Ok(Self {
            features,
            user_feature,
        })
    }

    /// Number of raw features `N`.
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[FeatureDescriptor] {
        &self.features
    }

    pub fn feature(&self, index: usize) -> &FeatureDescriptor {
        &self.features[index]
    }

    pub fn user_feature(&self) -> Option<usize> {
        self.user_feature
    }

    pub fn vocab_sizes(&self) -> Vec<usize> {
        self.features.iter().map(FeatureDescriptor::vocab_size).collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    /// SHA-256 over the canonical JSON serialization, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Checks that a sample has `N` slots, each inside its vocabulary.
    pub fn validate(&self, sample: &Sample) -> Result<()> {
        if sample.features.len() != self.len() {
            return Err(Error::Data(format!(
                "sample has {} feature slots, schema has {}",
                sample.features.len(),
                self.len()
            )));
        }
        for (f, &tok) in self.features.iter().zip(&sample.features) {
            if tok as usize >= f.vocab_size() {
                return Err(Error::TokenOutOfRange {
                    feature: f.name.clone(),
                    token: tok,
                    vocab_size: f.vocab_size(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sample {
    pub label: bool,
    pub user_id: u32,
    pub features: Vec<u32>,
}

impl Sample {
    pub fn new(label: bool, user_id: u32, features: Vec<u32>) -> Self {
        Self {
            label,
            user_id,
            features,
        }
    }

    pub fn y(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }

    pub fn is_missing(&self, feature: usize) -> bool {
        self.features[feature] == MISSING
    }
}

/// Step embedding: one flag per feature, `true` when the feature is missing
/// or was dropped.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DropoutMask {
    bits: Vec<bool>,
}

impl DropoutMask {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn none(n: usize) -> Self {
        Self {
            bits: vec![false; n],
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_set(&self, feature: usize) -> bool {
        self.bits[feature]
    }

    pub fn union(&self, other: &DropoutMask) -> DropoutMask {
        DropoutMask {
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        }
    }

    /// Writes the mask as 0/1 reals into `out` (length `N`).
    pub fn write_reals<T: num_traits::Float>(&self, out: &mut [T]) {
        for (o, &b) in out.iter_mut().zip(&self.bits) {
            *o = if b { T::one() } else { T::zero() };
        }
    }
}

pub fn mask_from_observed(sample: &Sample) -> DropoutMask {
    DropoutMask {
        bits: sample.features.iter().map(|&t| t == MISSING).collect(),
    }
}

/// Draws the number of forward steps `T` uniformly from `{0, 1, ..., n}`.
pub fn sample_t<R: Rng + ?Sized>(rng: &mut R, n: usize) -> usize {
    rng.random_range(0..=n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutcome {
    pub noisy: Sample,
    /// Dropped features plus features already missing in the input.
    pub mask: DropoutMask,
    /// Number of features actually dropped by this call.
    pub dropped: usize,
    /// Set when `T` exceeded the number of observed features.
    pub clamped: bool,
}

/// Runs `t` forward steps on `x0`, each dropping one still-observed feature
/// chosen uniformly at random.
///
/// Features that are already MISSING are never re-dropped; if `t` exceeds
/// the observed count, every observed feature is dropped and `clamped` is set.
pub fn forward_process<R: Rng + ?Sized>(x0: &Sample, t: usize, rng: &mut R) -> ForwardOutcome {
    let mut observed: Vec<usize> = (0..x0.features.len())
        .filter(|&f| x0.features[f] != MISSING)
        .collect();
    let steps = t.min(observed.len());
    let mut noisy = x0.clone();
    // One uniform draw per step among the features still observed.
    for step in 0..steps {
        let pick = rng.random_range(step..observed.len());
        observed.swap(step, pick);
        noisy.features[observed[step]] = MISSING;
    }
    ForwardOutcome {
        mask: mask_from_observed(&noisy),
        noisy,
        dropped: steps,
        clamped: t > steps,
    }
}

/// Maps raw string records onto tokens of a [`FeatureSchema`].
///
/// In *growing* mode (used when ingesting training data) unseen values are
/// appended to the vocabulary; in *frozen* mode they map to MISSING and are
/// counted.
#[derive(Debug, Clone)]
pub struct SampleEncoder {
    names: Vec<String>,
    vocabularies: Vec<Vec<String>>,
    lookup: Vec<HashMap<String, u32>>,
    user_feature: Option<usize>,
    frozen: bool,
    unknown_values: u64,
}

impl SampleEncoder {
    pub fn growing(feature_names: &[String], user_feature: Option<usize>) -> Result<Self> {
        let mut seen = HashSet::new();
        for name in feature_names {
            if !seen.insert(name) {
                return Err(Error::Config(format!("duplicate feature column '{name}'")));
            }
        }
        Ok(Self {
            names: feature_names.to_vec(),
            vocabularies: vec![vec![String::new()]; feature_names.len()],
            lookup: vec![HashMap::new(); feature_names.len()],
            user_feature,
            frozen: false,
            unknown_values: 0,
        })
    }

    pub fn frozen(schema: &FeatureSchema) -> Self {
        let lookup = schema
            .features()
            .iter()
            .map(|f| {
                f.vocabulary
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(i, v)| (v.clone(), i as u32))
                    .collect()
            })
            .collect();
        Self {
            names: schema.names().map(str::to_string).collect(),
            vocabularies: schema.features().iter().map(|f| f.vocabulary.clone()).collect(),
            lookup,
            user_feature: schema.user_feature(),
            frozen: true,
            unknown_values: 0,
        }
    }

    pub fn feature_names(&self) -> &[String] {
        &self.names
    }

    /// Values that were not in a frozen vocabulary and became MISSING.
    pub fn unknown_values(&self) -> u64 {
        self.unknown_values
    }

    /// Encodes one record of `label, user_id, <feature values...>`.
    /// `line` is only used for error messages.
    pub fn encode_sample(&mut self, record: &[&str], line: u64) -> Result<Sample> {
        let expected = self.names.len() + 2;
        if record.len() != expected {
            return Err(Error::Record {
                line,
                reason: format!("expected {expected} columns, found {}", record.len()),
            });
        }
        let label = match record[0].trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Record {
                    line,
                    reason: format!("label must be 0 or 1, found '{other}'"),
                })
            }
        };
        let user_id: u32 = record[1].trim().parse().map_err(|_| Error::Record {
            line,
            reason: format!("user_id must be a non-negative integer, found '{}'", record[1]),
        })?;
        let mut features = Vec::with_capacity(self.names.len());
        for (f, raw) in record[2..].iter().enumerate() {
            let value = raw.trim();
            if value.is_empty() {
                features.push(MISSING);
                continue;
            }
            let token = match self.lookup[f].get(value) {
                Some(&t) => t,
                None if self.frozen => {
                    self.unknown_values += 1;
                    log::debug!("line {line}: unknown value '{value}' for '{}'", self.names[f]);
                    MISSING
                }
                None => {
                    let t = self.vocabularies[f].len() as u32;
                    self.vocabularies[f].push(value.to_string());
                    self.lookup[f].insert(value.to_string(), t);
                    t
                }
            };
            features.push(token);
        }
        Ok(Sample {
            label,
            user_id,
            features,
        })
    }

    /// Freezes the vocabularies collected so far into a schema.
    pub fn schema(&self) -> Result<FeatureSchema> {
        let features = self
            .names
            .iter()
            .zip(&self.vocabularies)
            .map(|(name, vocab)| FeatureDescriptor {
                name: name.clone(),
                vocabulary: vocab.clone(),
            })
            .collect();
        FeatureSchema::new(features, self.user_feature)
    }
}

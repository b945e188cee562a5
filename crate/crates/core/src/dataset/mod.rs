//! Synthetic data with a known logistic ground truth, MCAR missingness,
//! user-stratified splitting and CSV I/O.

mod csv_io;

pub use csv_io::{read_csv, read_csv_from, write_csv, write_csv_to, CsvData, MAX_REJECT_FRACTION};

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureDescriptor, FeatureSchema, Sample, MISSING};
use crate::metrics::{auc, ScoredExample};

/// Who a context feature's value belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Fixed per user (profile attributes).
    User,
    /// Fixed per item.
    Item,
    /// Drawn fresh for every impression.
    Sample,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextFeature {
    pub name: String,
    pub vocab_size: usize,
    pub scope: Scope,
}

impl ContextFeature {
    fn new(name: &str, vocab_size: usize, scope: Scope) -> Self {
        Self {
            name: name.to_string(),
            vocab_size,
            scope,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingMode {
    Train,
    Eval,
    Both,
}

impl MissingMode {
    fn applies_to_train(self) -> bool {
        matches!(self, MissingMode::Train | MissingMode::Both)
    }

    fn applies_to_eval(self) -> bool {
        matches!(self, MissingMode::Eval | MissingMode::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub num_users: usize,
    pub num_items: usize,
    pub context: Vec<ContextFeature>,
    /// Rank of the user × item interaction term.
    pub rank: usize,
    pub temperature: f64,
    pub train_size: usize,
    pub eval_size: usize,
    pub missing_rate: f64,
    pub missing_mode: MissingMode,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            num_users: 1000,
            num_items: 500,
            context: vec![
                ContextFeature::new("gender", 2, Scope::User),
                ContextFeature::new("age_bucket", 7, Scope::User),
                ContextFeature::new("region", 30, Scope::User),
                ContextFeature::new("device", 4, Scope::User),
                ContextFeature::new("language", 8, Scope::User),
                ContextFeature::new("genre", 20, Scope::Item),
                ContextFeature::new("hour", 24, Scope::Sample),
                ContextFeature::new("weekday", 7, Scope::Sample),
                ContextFeature::new("mood", 6, Scope::Sample),
                ContextFeature::new("scene", 10, Scope::Sample),
            ],
            rank: 4,
            temperature: 1.0,
            train_size: 100_000,
            eval_size: 20_000,
            missing_rate: 0.2,
            missing_mode: MissingMode::Eval,
        }
    }
}

pub const USER_FEATURE: &str = "user";
pub const ITEM_FEATURE: &str = "item";

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.missing_rate) {
            return Err(Error::Config(format!(
                "missing_rate must be in [0, 1], got {}",
                self.missing_rate
            )));
        }
        for (name, v) in [
            ("num_users", self.num_users),
            ("num_items", self.num_items),
            ("rank", self.rank),
            ("train_size", self.train_size),
            ("eval_size", self.eval_size),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if let Some(c) = self.context.iter().find(|c| c.vocab_size == 0) {
            return Err(Error::Config(format!("context feature '{}' has vocab_size 0", c.name)));
        }
        self.schema().map(|_| ())
    }

    /// Number of features `N`: user, item and the context features.
    pub fn num_features(&self) -> usize {
        2 + self.context.len()
    }

    /// The full schema; token `k` of every feature is value index `k - 1`.
    pub fn schema(&self) -> Result<FeatureSchema> {
        let mut features = vec![
            FeatureDescriptor::new(USER_FEATURE, (0..self.num_users).map(|u| format!("u{u}"))),
            FeatureDescriptor::new(ITEM_FEATURE, (0..self.num_items).map(|i| format!("i{i}"))),
        ];
        for c in &self.context {
            features.push(FeatureDescriptor::new(
                c.name.clone(),
                (0..c.vocab_size).map(|v| v.to_string()),
            ));
        }
        FeatureSchema::new(features, Some(0))
    }

    pub fn hash(&self) -> String {
        crate::trainer::sha256_hex(serde_json::to_string(self).expect("spec serializes").as_bytes())
    }
}

/// The labeling process behind a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Per feature, per token (index 0 unused).
    pub token_weights: Vec<Vec<f64>>,
    pub user_factors: Vec<Vec<f64>>,
    pub item_factors: Vec<Vec<f64>>,
    pub temperature: f64,
}

impl GroundTruth {
    /// True logit `score / temperature` of a fully observed sample.
    pub fn logit(&self, features: &[u32]) -> f64 {
        let mut score: f64 = features
            .iter()
            .zip(&self.token_weights)
            .map(|(&t, w)| w[t as usize])
            .sum();
        let (u, i) = (features[0] as usize - 1, features[1] as usize - 1);
        score += self.user_factors[u]
            .iter()
            .zip(&self.item_factors[i])
            .map(|(a, b)| a * b)
            .sum::<f64>();
        score / self.temperature
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub spec: SynthSpec,
    pub schema: FeatureSchema,
    pub train: Vec<Sample>,
    pub eval: Vec<Sample>,
    pub truth: GroundTruth,
    /// True logits of the eval samples, computed before missingness.
    pub eval_logits: Vec<f64>,
}

impl SynthData {
    /// AUC of scoring eval samples by their true logits.
    pub fn oracle_auc(&self) -> Result<f64> {
        let examples: Vec<ScoredExample> = self
            .eval
            .iter()
            .zip(&self.eval_logits)
            .map(|(s, &l)| ScoredExample::new(s.user_id, s.label, l))
            .collect();
        auc(&examples)
    }
}

const PARTITION: usize = 10_000;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

// Stream ids; sample partitions use ids from SAMPLE_STREAMS upward.
const TRUTH_STREAM: u64 = 1;
const PROFILE_STREAM: u64 = 2;
const TRAIN_MISSING_STREAM: u64 = 3;
const EVAL_MISSING_STREAM: u64 = 4;
const SAMPLE_STREAMS: u64 = 1 << 20;

/// Generates train and eval sets. Fully determined by `spec`.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let schema = spec.schema()?;
    let n = spec.num_features();

    let mut rng = stream(spec.seed, TRUTH_STREAM);
    let token_dist = Normal::new(0.0, 1.0 / (n as f64).sqrt()).expect("positive std");
    let factor_dist = Normal::new(0.0, (spec.rank as f64).powf(-0.25)).expect("positive std");
    let token_weights = schema
        .vocab_sizes()
        .into_iter()
        .map(|v| {
            let mut w = vec![0.0];
            w.extend((1..v).map(|_| token_dist.sample(&mut rng)));
            w
        })
        .collect();
    let mut factors = |count: usize| -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| (0..spec.rank).map(|_| factor_dist.sample(&mut rng)).collect())
            .collect()
    };
    let user_factors = factors(spec.num_users);
    let item_factors = factors(spec.num_items);
    let truth = GroundTruth {
        token_weights,
        user_factors,
        item_factors,
        temperature: spec.temperature,
    };

    // Profile tokens for user- and item-scoped context features.
    let mut rng = stream(spec.seed, PROFILE_STREAM);
    let draw_profile = |rng: &mut ChaCha8Rng, count: usize, scope: Scope| -> Vec<Vec<u32>> {
        (0..count)
            .map(|_| {
                spec.context
                    .iter()
                    .map(|c| {
                        if c.scope == scope {
                            rng.random_range(1..=c.vocab_size as u32)
                        } else {
                            MISSING
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let user_profile = draw_profile(&mut rng, spec.num_users, Scope::User);
    let item_profile = draw_profile(&mut rng, spec.num_items, Scope::Item);

    let make = |rng: &mut ChaCha8Rng, user: usize| -> (Sample, f64) {
        let item = rng.random_range(0..spec.num_items);
        let mut features = Vec::with_capacity(n);
        features.push(user as u32 + 1);
        features.push(item as u32 + 1);
        for (j, c) in spec.context.iter().enumerate() {
            features.push(match c.scope {
                Scope::User => user_profile[user][j],
                Scope::Item => item_profile[item][j],
                Scope::Sample => rng.random_range(1..=c.vocab_size as u32),
            });
        }
        let logit = truth.logit(&features);
        let p = 1.0 / (1.0 + (-logit).exp());
        let label = rng.random_bool(p);
        (Sample::new(label, user as u32, features), logit)
    };

    let mut train = Vec::with_capacity(spec.train_size);
    for (part, start) in (0..spec.train_size).step_by(PARTITION).enumerate() {
        let mut rng = stream(spec.seed, SAMPLE_STREAMS + part as u64);
        for _ in start..(start + PARTITION).min(spec.train_size) {
            let user = rng.random_range(0..spec.num_users);
            train.push(make(&mut rng, user).0);
        }
    }

    // Eval users are drawn from users that appear in train.
    let train_users: Vec<usize> = train
        .iter()
        .map(|s| s.user_id as usize)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let eval_base = SAMPLE_STREAMS + spec.train_size.div_ceil(PARTITION) as u64;
    let mut eval = Vec::with_capacity(spec.eval_size);
    let mut eval_logits = Vec::with_capacity(spec.eval_size);
    for (part, start) in (0..spec.eval_size).step_by(PARTITION).enumerate() {
        let mut rng = stream(spec.seed, eval_base + part as u64);
        for _ in start..(start + PARTITION).min(spec.eval_size) {
            let user = *train_users.choose(&mut rng).expect("train is non-empty");
            let (s, l) = make(&mut rng, user);
            eval.push(s);
            eval_logits.push(l);
        }
    }

    if spec.missing_mode.applies_to_train() {
        inject_missingness(&mut train, spec.missing_rate, &mut stream(spec.seed, TRAIN_MISSING_STREAM))?;
    }
    if spec.missing_mode.applies_to_eval() {
        inject_missingness(&mut eval, spec.missing_rate, &mut stream(spec.seed, EVAL_MISSING_STREAM))?;
    }
    Ok(SynthData {
        spec: spec.clone(),
        schema,
        train,
        eval,
        truth,
        eval_logits,
    })
}

/// Replaces each feature slot by MISSING independently with probability
/// `rate` (missing completely at random). Labels are untouched.
pub fn inject_missingness<R: Rng + ?Sized>(
    samples: &mut [Sample],
    rate: f64,
    rng: &mut R,
) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!("missing rate must be in [0, 1], got {rate}")));
    }
    for s in samples {
        for tok in &mut s.features {
            if rng.random_bool(rate) {
                *tok = MISSING;
            }
        }
    }
    Ok(())
}

/// User-stratified split: each user with at least two samples sends about
/// `eval_fraction` of them (at least one, never all) to eval, so every eval
/// user also appears in train. Relative order is preserved.
pub fn split(samples: &[Sample], eval_fraction: f64, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if !(0.0..1.0).contains(&eval_fraction) {
        return Err(Error::Config(format!(
            "eval fraction must be in [0, 1), got {eval_fraction}"
        )));
    }
    let mut by_user: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_user.entry(s.user_id).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut to_eval = vec![false; samples.len()];
    for idx in by_user.values_mut() {
        if idx.len() < 2 || eval_fraction == 0.0 {
            continue;
        }
        let k = ((idx.len() as f64 * eval_fraction).round() as usize).clamp(1, idx.len() - 1);
        idx.shuffle(&mut rng);
        for &i in &idx[..k] {
            to_eval[i] = true;
        }
    }
    let (mut train, mut eval) = (Vec::new(), Vec::new());
    for (s, e) in samples.iter().zip(to_eval) {
        if e {
            eval.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    Ok((train, eval))
}

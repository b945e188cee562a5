//! Offline ranking metrics: AUC, per-user weighted AUC (UAUC), log-loss and
//! relative improvement over a baseline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::PROB_EPS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    pub user_id: u32,
    pub label: bool,
    pub score: f64,
}

impl ScoredExample {
    pub fn new(user_id: u32, label: bool, score: f64) -> Self {
        Self {
            user_id,
            label,
            score,
        }
    }
}

/// Mann-Whitney AUC with midranks for tied scores:
/// `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)`.
pub fn auc(examples: &[ScoredExample]) -> Result<f64> {
    let positives = examples.iter().filter(|e| e.label).count();
    let negatives = examples.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes ({positives} positive, {negatives} negative)"
        )));
    }
    if let Some(e) = examples.iter().find(|e| !e.score.is_finite()) {
        return Err(Error::UndefinedMetric(format!("non-finite score {}", e.score)));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.sort_by(|&a, &b| examples[a].score.total_cmp(&examples[b].score));

    // Sum of 1-based midranks of the positives.
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && examples[order[j]].score == examples[order[i]].score {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        let tied_pos = order[i..j].iter().filter(|&&k| examples[k].label).count();
        rank_sum += midrank * tied_pos as f64;
        i = j;
    }
    let p = positives as f64;
    let n = negatives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uauc {
    pub value: f64,
    pub users_scored: usize,
    pub users_skipped: usize,
}

/// Per-user AUC averaged with weights equal to each user's example count.
/// Users whose examples are all one class are skipped.
pub fn uauc(examples: &[ScoredExample]) -> Result<Uauc> {
    let mut by_user: BTreeMap<u32, Vec<ScoredExample>> = BTreeMap::new();
    for e in examples {
        by_user.entry(e.user_id).or_default().push(*e);
    }
    let mut weighted = 0.0;
    let mut weight = 0.0;
    let mut scored = 0;
    let mut skipped = 0;
    for group in by_user.values() {
        let pos = group.iter().filter(|e| e.label).count();
        if pos == 0 || pos == group.len() {
            skipped += 1;
            continue;
        }
        let w = group.len() as f64;
        weighted += w * auc(group)?;
        weight += w;
        scored += 1;
    }
    if scored == 0 {
        return Err(Error::UndefinedMetric(
            "UAUC: no user has both positive and negative examples".into(),
        ));
    }
    Ok(Uauc {
        value: weighted / weight,
        users_scored: scored,
        users_skipped: skipped,
    })
}

/// Mean binary cross-entropy with scores clamped to `[ε, 1-ε]`.
pub fn logloss(examples: &[ScoredExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::UndefinedMetric("log-loss of an empty set".into()));
    }
    let total: f64 = examples
        .iter()
        .map(|e| {
            let p = e.score.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if e.label {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / examples.len() as f64)
}

/// Relative improvement in percent: `(model / base - 1) * 100`.
pub fn relaimpr(metric_model: f64, metric_base: f64) -> Result<f64> {
    if !(metric_base > 0.0) {
        return Err(Error::UndefinedMetric(format!(
            "RelaImpr needs a positive base metric, got {metric_base}"
        )));
    }
    Ok((metric_model / metric_base - 1.0) * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaImprEntry {
    pub baseline: String,
    pub auc_pct: f64,
    pub uauc_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub arm: String,
    pub seed: u64,
    pub config_hash: String,
    pub code_version: String,
    /// `serve_predict` or `base_predict`.
    pub serving_path: String,
    pub auc: f64,
    pub uauc: f64,
    pub logloss: f64,
    pub n_examples: usize,
    pub n_users_scored: usize,
    pub n_users_skipped: usize,
    pub relaimpr: Vec<RelaImprEntry>,
}

pub const REPORT_CSV_HEADER: &[&str] = &[
    "arm",
    "seed",
    "config_hash",
    "code_version",
    "serving_path",
    "auc",
    "uauc",
    "logloss",
    "n_examples",
    "n_users_scored",
    "n_users_skipped",
    "relaimpr_baseline",
    "auc_relaimpr_pct",
    "uauc_relaimpr_pct",
];

impl MetricsReport {
    /// Computes AUC, UAUC and log-loss; RelaImpr entries start empty.
    pub fn from_scores(
        examples: &[ScoredExample],
        arm: &str,
        seed: u64,
        config_hash: &str,
        serving_path: &str,
    ) -> Result<Self> {
        let u = uauc(examples)?;
        Ok(Self {
            arm: arm.to_string(),
            seed,
            config_hash: config_hash.to_string(),
            code_version: crate::CODE_VERSION.to_string(),
            serving_path: serving_path.to_string(),
            auc: auc(examples)?,
            uauc: u.value,
            logloss: logloss(examples)?,
            n_examples: examples.len(),
            n_users_scored: u.users_scored,
            n_users_skipped: u.users_skipped,
            relaimpr: Vec::new(),
        })
    }

    pub fn add_relaimpr(&mut self, baseline: &MetricsReport) -> Result<()> {
        let entry = RelaImprEntry {
            baseline: format!("{}@{}", baseline.arm, baseline.seed),
            auc_pct: relaimpr(self.auc, baseline.auc)?,
            uauc_pct: relaimpr(self.uauc, baseline.uauc)?,
        };
        self.relaimpr.push(entry);
        Ok(())
    }

    /// Canonical JSON (struct field order, shortest round-trip floats).
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One CSV row matching [`REPORT_CSV_HEADER`]; only the first RelaImpr
    /// entry is included.
    pub fn csv_record(&self) -> Vec<String> {
        let (base, a, u) = match self.relaimpr.first() {
            Some(r) => (r.baseline.clone(), r.auc_pct.to_string(), r.uauc_pct.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        vec![
            self.arm.clone(),
            self.seed.to_string(),
            self.config_hash.clone(),
            self.code_version.clone(),
            self.serving_path.clone(),
            self.auc.to_string(),
            self.uauc.to_string(),
            self.logloss.to_string(),
            self.n_examples.to_string(),
            self.n_users_scored.to_string(),
            self.n_users_skipped.to_string(),
            base,
            a,
            u,
        ]
    }
}

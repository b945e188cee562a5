//! Comparison arms sharing one extractor/head architecture: the base model,
//! the full asymmetric model, its two ablations, and a symmetric Gaussian
//! latent-diffusion variant.

mod gaussian;

pub use gaussian::{
    gaussian_forward, gaussian_reverse_loss, standard_normal, step_conditioning, GaussianSchedule,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSchema, Sample};
use crate::metrics::{MetricsReport, ScoredExample};
use crate::numeric::{Precision, Real};
use crate::trainer::{DiffusionKind, ServingPath, TrainConfig, Trainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmName {
    Base,
    Asymdiff,
    AsymdiffWoRecon,
    AsymdiffWoAux,
    GaussDiff,
}

impl ArmName {
    pub const ALL: [ArmName; 5] = [
        ArmName::Base,
        ArmName::Asymdiff,
        ArmName::AsymdiffWoRecon,
        ArmName::AsymdiffWoAux,
        ArmName::GaussDiff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArmName::Base => "base",
            ArmName::Asymdiff => "asymdiff",
            ArmName::AsymdiffWoRecon => "asymdiff_wo_recon",
            ArmName::AsymdiffWoAux => "asymdiff_wo_aux",
            ArmName::GaussDiff => "gauss_diff",
        }
    }
}

impl fmt::Display for ArmName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArmName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArmName::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = ArmName::ALL.iter().map(|a| a.name()).collect();
                Error::Config(format!("unknown arm '{s}' (known: {})", known.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub arm: ArmName,
    /// Used by `gauss_diff` only.
    pub gaussian: GaussianSchedule,
}

impl ArmSpec {
    pub fn new(arm: ArmName) -> Self {
        Self {
            arm,
            gaussian: GaussianSchedule::default(),
        }
    }

    /// The full training configuration for this arm. Everything not listed
    /// here is taken from `shared` unchanged.
    ///
    /// | arm | λ_recon | λ_aux | noise | serving |
    /// |---|---|---|---|---|
    /// | base | 0 | 0 | — | base_predict |
    /// | asymdiff | shared | shared | dropout | serve_predict |
    /// | asymdiff_wo_recon | 0 | shared | dropout | serve_predict |
    /// | asymdiff_wo_aux | shared | 0 | dropout | serve_predict |
    /// | gauss_diff | shared | 0 | gaussian | base_predict |
    ///
    /// The Gaussian arm always differentiates through its target: with the
    /// target held fixed, the only path into `h` is the noised input, and
    /// that path rewards inflating the latent scale without bound.
    pub fn resolve(&self, shared: &TrainConfig) -> TrainConfig {
        let mut cfg = shared.clone();
        cfg.diffusion = DiffusionKind::FeatureDropout;
        cfg.serving = ServingPath::ServePredict;
        match self.arm {
            ArmName::Base => {
                cfg.model.lambda_recon = 0.0;
                cfg.model.lambda_aux = 0.0;
                cfg.serving = ServingPath::BasePredict;
            }
            ArmName::Asymdiff => {}
            ArmName::AsymdiffWoRecon => cfg.model.lambda_recon = 0.0,
            ArmName::AsymdiffWoAux => cfg.model.lambda_aux = 0.0,
            ArmName::GaussDiff => {
                cfg.model.lambda_aux = 0.0;
                cfg.diffusion = DiffusionKind::Gaussian;
                cfg.gaussian = self.gaussian;
                cfg.model.stop_gradient_target = false;
                cfg.serving = ServingPath::BasePredict;
            }
        }
        cfg
    }
}

/// Hash of the parts of a configuration that every arm must share: data
/// order, seed, initialization, architecture and optimizer.
pub fn shared_config_hash(cfg: &TrainConfig) -> String {
    let mut c = cfg.clone();
    c.model.lambda_recon = 0.0;
    c.model.lambda_aux = 0.0;
    c.model.stop_gradient_target = true;
    c.diffusion = DiffusionKind::default();
    c.gaussian = GaussianSchedule::default();
    c.serving = ServingPath::default();
    c.hash()
}

fn train_and_score_as<T: Real>(
    cfg: &TrainConfig,
    schema: &FeatureSchema,
    train: &[Sample],
    eval: &[Sample],
) -> Result<Vec<f64>> {
    let mut trainer: Trainer<T> = Trainer::new(cfg.clone(), schema.clone())?;
    trainer.fit(train, &mut std::io::sink(), |_| Ok(()))?;
    trainer.scores(eval)
}

/// Trains one configuration and scores `eval` along its serving path.
pub fn train_and_score(
    cfg: &TrainConfig,
    schema: &FeatureSchema,
    train: &[Sample],
    eval: &[Sample],
) -> Result<Vec<f64>> {
    match cfg.precision {
        Precision::F32 => train_and_score_as::<f32>(cfg, schema, train, eval),
        Precision::F64 => train_and_score_as::<f64>(cfg, schema, train, eval),
    }
}

pub fn scored(eval: &[Sample], scores: &[f64]) -> Vec<ScoredExample> {
    eval.iter()
        .zip(scores)
        .map(|(s, &p)| ScoredExample::new(s.user_id, s.label, p))
        .collect()
}

/// Trains and evaluates the arm once per seed.
pub fn run_arm(
    arm: &ArmSpec,
    shared: &TrainConfig,
    schema: &FeatureSchema,
    train: &[Sample],
    eval: &[Sample],
    seeds: &[u64],
) -> Result<Vec<MetricsReport>> {
    seeds
        .iter()
        .map(|&seed| {
            let cfg = arm.resolve(&TrainConfig {
                seed,
                ..shared.clone()
            });
            let scores = train_and_score(&cfg, schema, train, eval)?;
            log::info!("arm {} seed {seed} trained", arm.arm);
            MetricsReport::from_scores(
                &scored(eval, &scores),
                arm.arm.name(),
                seed,
                &cfg.hash(),
                cfg.serving.name(),
            )
        })
        .collect()
}

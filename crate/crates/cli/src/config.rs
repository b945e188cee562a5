//! TOML run configurations. Every field has a default; relative paths are
//! resolved against the directory of the file they appear in.

use std::fs;
use std::path::{Path, PathBuf};

use asymdiff_core::baselines::{ArmName, ArmSpec};
use asymdiff_core::dataset::SynthSpec;
use asymdiff_core::trainer::TrainConfig;
use asymdiff_core::{sha256_hex, Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// The directory relative paths inside `config` are resolved against.
pub fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() || p.as_os_str().is_empty() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Serializes `value` as TOML under a provenance comment
/// (e.g. `seed=3 config_hash=...`).
pub fn to_toml<T: Serialize>(value: &T, provenance: &str) -> Result<String> {
    let body = toml::to_string(value).map_err(|e| Error::Config(format!("cannot serialize: {e}")))?;
    Ok(format!("# {} {provenance}\n{body}", asymdiff_core::CODE_VERSION))
}

pub fn write_resolved<T: Serialize>(path: &Path, value: &T, provenance: &str) -> Result<()> {
    fs::write(path, to_toml(value, provenance)?)?;
    Ok(())
}

pub fn json_hash<T: Serialize>(value: &T) -> String {
    sha256_hex(serde_json::to_string(value).expect("config serializes").as_bytes())
}

/// `train` payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRun {
    /// Applies the arm's loss weights, noise and serving path on top of `train`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<ArmName>,
    pub train_data: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_data: Option<PathBuf>,
    #[serde(default = "default_train_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_train_out() -> PathBuf {
    PathBuf::from("run")
}

impl TrainRun {
    pub fn load(path: &Path) -> Result<Self> {
        let mut run: TrainRun = load_toml(path)?;
        let base = base_dir(path);
        run.train_data = resolve(&base, &run.train_data);
        run.eval_data = run.eval_data.map(|p| resolve(&base, &p));
        run.out_dir = resolve(&base, &run.out_dir);
        Ok(run)
    }

    /// The training configuration after applying `arm`.
    pub fn effective(&self) -> TrainConfig {
        match self.arm {
            Some(arm) => ArmSpec {
                arm,
                gaussian: self.train.gaussian,
            }
            .resolve(&self.train),
            None => self.train.clone(),
        }
    }

    pub fn label(&self) -> &'static str {
        self.arm.map_or("custom", ArmName::name)
    }
}

/// `ablate` payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepRun {
    pub arms: Vec<ArmName>,
    pub seeds: Vec<u64>,
    /// Eval missingness rates to sweep over synthetic data; empty uses
    /// `data.missing_rate` only.
    pub missing_rates: Vec<f64>,
    pub out_dir: PathBuf,
    /// Synthetic data; ignored when both CSV paths are given.
    pub data: SynthSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_data: Option<PathBuf>,
    pub train: TrainConfig,
}

impl Default for SweepRun {
    fn default() -> Self {
        Self {
            arms: vec![
                ArmName::Base,
                ArmName::Asymdiff,
                ArmName::AsymdiffWoRecon,
                ArmName::AsymdiffWoAux,
            ],
            seeds: (0..5).collect(),
            missing_rates: Vec::new(),
            out_dir: PathBuf::from("sweep"),
            data: SynthSpec::default(),
            train_data: None,
            eval_data: None,
            train: TrainConfig::default(),
        }
    }
}

impl SweepRun {
    pub fn load(path: &Path) -> Result<Self> {
        let mut run: SweepRun = load_toml(path)?;
        let base = base_dir(path);
        run.train_data = run.train_data.map(|p| resolve(&base, &p));
        run.eval_data = run.eval_data.map(|p| resolve(&base, &p));
        run.out_dir = resolve(&base, &run.out_dir);
        Ok(run)
    }

    pub fn validate(&self) -> Result<()> {
        if self.arms.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("arms and seeds must be non-empty".into()));
        }
        if self.train_data.is_some() != self.eval_data.is_some() {
            return Err(Error::Config(
                "train_data and eval_data must be given together".into(),
            ));
        }
        for &rho in &self.missing_rates {
            SynthSpec {
                missing_rate: rho,
                ..self.data.clone()
            }
            .validate()?;
        }
        self.data.validate()?;
        self.train.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_run_defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.toml");
        fs::write(&p, "train_data = \"data/train.csv\"\narm = \"base\"\n[train]\nseed = 3\n").unwrap();
        let run = TrainRun::load(&p).unwrap();
        assert_eq!(run.train_data, dir.path().join("data/train.csv"));
        assert_eq!(run.out_dir, dir.path().join("run"));
        assert_eq!(run.train.seed, 3);
        assert_eq!(run.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(run.effective().model.lambda_recon, 0.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.toml");
        fs::write(&p, "train_data = \"x\"\n[train]\nlearning_rate = 1\n").unwrap();
        assert!(matches!(TrainRun::load(&p), Err(Error::Config(_))));
    }

    #[test]
    fn resolved_sweep_round_trips() {
        let run = SweepRun::default();
        let text = to_toml(&run, "seed=0 config_hash=h").unwrap();
        let back: SweepRun = toml::from_str(&text).unwrap();
        assert_eq!(back, run);
    }
}

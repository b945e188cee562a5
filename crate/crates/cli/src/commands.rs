use std::fs::{self, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use asymdiff_core::baselines::scored;
use asymdiff_core::checkpoint::{self, Checkpoint, LoadedCheckpoint};
use asymdiff_core::dataset::{generate, read_csv, write_csv, SynthSpec};
use asymdiff_core::features::{FeatureSchema, Sample};
use asymdiff_core::metrics::MetricsReport;
use asymdiff_core::numeric::{Precision, Real};
use asymdiff_core::trainer::{params_digest, TrainConfig, Trainer};
use asymdiff_core::{sha256_hex, Error, Result, CODE_VERSION};
use serde::Serialize;

use crate::config::{write_resolved, TrainRun};

pub const TRAIN_CSV: &str = "train.csv";
pub const EVAL_CSV: &str = "eval.csv";
pub const DATASET_SIDECAR: &str = "dataset.json";
pub const CHECKPOINT: &str = "model.ckpt";
pub const RUN_LOG: &str = "run.log";
pub const METRICS: &str = "metrics.json";
pub const EVAL_HISTORY: &str = "eval_history.jsonl";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Data(format!("cannot create {}: {e}", dir.display())))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Provenance written next to generated CSVs.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct DatasetSidecar {
    pub code_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub schema_hash: String,
    pub train_rows: usize,
    pub eval_rows: usize,
    pub train_sha256: String,
    pub eval_sha256: String,
    /// AUC of the noiseless ground-truth logits on the eval set.
    pub oracle_auc: f64,
    pub spec: SynthSpec,
}

pub fn gen_data(spec: &SynthSpec, out: &Path) -> Result<DatasetSidecar> {
    spec.validate()?;
    let data = generate(spec)?;
    create_dir(out)?;
    let train = out.join(TRAIN_CSV);
    let eval = out.join(EVAL_CSV);
    write_csv(&train, &data.schema, &data.train)?;
    write_csv(&eval, &data.schema, &data.eval)?;
    let sidecar = DatasetSidecar {
        code_version: CODE_VERSION.to_string(),
        seed: spec.seed,
        config_hash: spec.hash(),
        schema_hash: data.schema.hash(),
        train_rows: data.train.len(),
        eval_rows: data.eval.len(),
        train_sha256: file_sha256(&train)?,
        eval_sha256: file_sha256(&eval)?,
        oracle_auc: data.oracle_auc()?,
        spec: spec.clone(),
    };
    write_json(&out.join(DATASET_SIDECAR), &sidecar)?;
    write_resolved(
        &out.join("spec.resolved.toml"),
        spec,
        &format!("seed={} config_hash={}", spec.seed, sidecar.config_hash),
    )?;
    Ok(sidecar)
}

fn read_rows(path: &Path, schema: Option<&FeatureSchema>) -> Result<(FeatureSchema, Vec<Sample>)> {
    let d = read_csv(path, schema)?;
    if !d.rejected.is_empty() {
        log::warn!("{}: skipped {} malformed rows", path.display(), d.rejected.len());
    }
    if d.unknown_values > 0 {
        log::warn!(
            "{}: {} values outside the training vocabulary read as missing",
            path.display(),
            d.unknown_values
        );
    }
    Ok((d.schema, d.samples))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub steps: u64,
    pub params_sha256: String,
    pub checkpoint: PathBuf,
    pub metrics: Option<MetricsReport>,
}

#[derive(Serialize)]
struct EvalLine<'a> {
    event: &'static str,
    config_hash: &'a str,
    seed: u64,
    step: u64,
    epoch: u64,
    auc: f64,
    uauc: f64,
    logloss: f64,
}

fn report_for<T: Real>(trainer: &Trainer<T>, eval: &[Sample], label: &str) -> Result<MetricsReport> {
    let scores = trainer.scores(eval)?;
    let cfg = trainer.config();
    MetricsReport::from_scores(
        &scored(eval, &scores),
        label,
        cfg.seed,
        &cfg.hash(),
        cfg.serving.name(),
    )
}

/// Hash of everything a resumed run must share with the checkpoint; the
/// epoch budget and logging/checkpoint cadence may change.
fn resume_key(cfg: &TrainConfig) -> String {
    TrainConfig {
        epochs: 1,
        log_every: 1,
        checkpoint_every: 0,
        eval_every_epochs: 0,
        ..cfg.clone()
    }
    .hash()
}

fn train_as<T: Real>(
    run: &TrainRun,
    schema: FeatureSchema,
    train: &[Sample],
    eval: Option<&[Sample]>,
    resume: Option<Checkpoint<T>>,
) -> Result<TrainSummary> {
    let cfg = run.effective();
    let label = run.label();
    let resuming = resume.is_some();
    let mut trainer = match resume {
        Some(c) => {
            if resume_key(&c.header.config) != resume_key(&cfg) {
                return Err(Error::Config(
                    "checkpoint was trained with a different configuration".into(),
                ));
            }
            let mut c = c;
            c.header.config = cfg.clone();
            c.into_trainer()?
        }
        None => Trainer::<T>::new(cfg.clone(), schema)?,
    };
    let out = &run.out_dir;
    let ckpt = out.join(CHECKPOINT);
    let log_file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(resuming)
        .truncate(!resuming)
        .open(out.join(RUN_LOG))?;
    let mut log = BufWriter::new(log_file);

    let spe = trainer.steps_per_epoch(train.len());
    let eval_every = cfg.eval_every_epochs as u64 * spe;
    let config_hash = cfg.hash();
    let mut history = Vec::new();
    trainer.fit(train, &mut log, |t| {
        let step = t.step();
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
            checkpoint::save(&ckpt, t, label)?;
        }
        if let Some(eval) = eval.filter(|_| eval_every > 0 && step % eval_every == 0) {
            let r = report_for(t, eval, label)?;
            log::info!("step {step}: eval auc {:.5} uauc {:.5}", r.auc, r.uauc);
            history.push(serde_json::to_string(&EvalLine {
                event: "eval",
                config_hash: &config_hash,
                seed: cfg.seed,
                step,
                epoch: step / spe,
                auc: r.auc,
                uauc: r.uauc,
                logloss: r.logloss,
            })?);
        }
        Ok(())
    })?;
    log.flush()?;
    checkpoint::save(&ckpt, &trainer, label)?;
    if !history.is_empty() {
        let mut f = OpenOptions::new()
            .create(true)
            .write(true)
            .append(resuming)
            .truncate(!resuming)
            .open(out.join(EVAL_HISTORY))?;
        for line in history {
            writeln!(f, "{line}")?;
        }
    }
    let metrics = match eval {
        Some(eval) => {
            let r = report_for(&trainer, eval, label)?;
            fs::write(out.join(METRICS), r.to_json())?;
            Some(r)
        }
        None => None,
    };
    Ok(TrainSummary {
        steps: trainer.step(),
        params_sha256: params_digest(trainer.params()),
        checkpoint: ckpt,
        metrics,
    })
}

pub fn train(run: &TrainRun, resume: Option<&Path>) -> Result<TrainSummary> {
    let cfg = run.effective();
    cfg.validate()?;
    let resumed = resume.map(checkpoint::load).transpose()?;
    let (schema, train) = read_rows(
        &run.train_data,
        resumed.as_ref().map(|c| &c.header().schema),
    )?;
    let eval = match &run.eval_data {
        Some(p) => Some(read_rows(p, Some(&schema))?.1),
        None => None,
    };
    create_dir(&run.out_dir)?;
    let resolved = TrainRun {
        train_data: std::path::absolute(&run.train_data)?,
        eval_data: run.eval_data.as_deref().map(std::path::absolute).transpose()?,
        out_dir: std::path::absolute(&run.out_dir)?,
        train: cfg.clone(),
        ..run.clone()
    };
    write_resolved(
        &run.out_dir.join("train.resolved.toml"),
        &resolved,
        &format!("seed={} config_hash={}", cfg.seed, cfg.hash()),
    )?;
    let eval = eval.as_deref();
    match (cfg.precision, resumed) {
        (Precision::F32, None) => train_as::<f32>(run, schema, &train, eval, None),
        (Precision::F64, None) => train_as::<f64>(run, schema, &train, eval, None),
        (Precision::F32, Some(LoadedCheckpoint::F32(c))) => {
            train_as::<f32>(run, schema, &train, eval, Some(c))
        }
        (Precision::F64, Some(LoadedCheckpoint::F64(c))) => {
            train_as::<f64>(run, schema, &train, eval, Some(c))
        }
        (p, Some(_)) => Err(Error::Config(format!(
            "checkpoint precision differs from configured {}",
            p.name()
        ))),
    }
}

/// Scores `data` with the checkpoint's own serving path.
pub fn evaluate(ckpt: &Path, data: &Path, baseline: Option<&Path>) -> Result<MetricsReport> {
    let model = checkpoint::load(ckpt)?;
    let header = model.header();
    let (_, samples) = read_rows(data, Some(&header.schema))?;
    let serving = header.config.serving;
    let scores = model.scores(&samples, serving)?;
    let mut report = MetricsReport::from_scores(
        &scored(&samples, &scores),
        &header.label,
        header.seed,
        &header.config_hash,
        serving.name(),
    )?;
    if let Some(b) = baseline {
        let text = fs::read_to_string(b)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", b.display())))?;
        report.add_relaimpr(&MetricsReport::from_json(&text)?)?;
    }
    Ok(report)
}

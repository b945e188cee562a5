//! Binary checkpoints: an 8-byte magic, a format version, a JSON header
//! (configuration, schema, hashes, block layout) and every parameter and
//! optimizer moment as little-endian f64 in block order.
//!
//! Values are widened to f64 on write, so f32 runs round-trip exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSchema, Sample};
use crate::model::ModelParams;
use crate::numeric::{AdamState, ParamSet, Precision, Real};
use crate::trainer::{predict_scores, ServingPath, TrainConfig, Trainer};

pub const MAGIC: &[u8; 8] = b"ASYMDIFF";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub code_version: String,
    /// Free-form run label, usually the arm name.
    pub label: String,
    pub precision: Precision,
    pub seed: u64,
    pub config_hash: String,
    pub schema_hash: String,
    pub step: u64,
    pub adam_step: u64,
    pub config: TrainConfig,
    pub schema: FeatureSchema,
    pub blocks: Vec<BlockInfo>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub header: CheckpointHeader,
    pub params: ModelParams<T>,
    pub adam: AdamState<T>,
}

impl<T: Real> Checkpoint<T> {
    pub fn into_trainer(self) -> Result<Trainer<T>> {
        Trainer::from_parts(
            self.header.config,
            self.header.schema,
            self.params,
            self.adam,
            self.header.step,
        )
    }
}

fn precision_of<T: Real>() -> Precision {
    if T::NAME == f32::NAME {
        Precision::F32
    } else {
        Precision::F64
    }
}

pub fn encode<T: Real>(trainer: &Trainer<T>, label: &str) -> Vec<u8> {
    let params = trainer.params();
    let adam = trainer.adam();
    let config = trainer.config().clone();
    let header = CheckpointHeader {
        code_version: crate::CODE_VERSION.to_string(),
        label: label.to_string(),
        precision: precision_of::<T>(),
        seed: config.seed,
        config_hash: config.hash(),
        schema_hash: trainer.schema().hash(),
        step: trainer.step(),
        adam_step: adam.step,
        config,
        schema: trainer.schema().clone(),
        blocks: (0..params.block_count())
            .map(|i| BlockInfo {
                name: params.block_name(i),
                len: params.block(i).len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let total: usize = header.blocks.iter().map(|b| b.len).sum();
    let mut out = Vec::with_capacity(20 + json.len() + 3 * 8 * total);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let mut put = |xs: &[T]| {
        for x in xs {
            out.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    };
    for i in 0..params.block_count() {
        put(params.block(i));
    }
    for m in adam.first.iter().chain(&adam.second) {
        put(m);
    }
    out
}

/// Writes atomically (temporary file, then rename).
pub fn save<T: Real>(path: &Path, trainer: &Trainer<T>, label: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&encode(trainer, label))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint("file is truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn fill<T: Real>(&mut self, out: &mut [T]) -> Result<()> {
        let raw = self.take(out.len() * 8)?;
        for (o, chunk) in out.iter_mut().zip(raw.chunks_exact(8)) {
            *o = T::from_f64(f64::from_le_bytes(chunk.try_into().expect("8 bytes")));
        }
        Ok(())
    }
}

pub fn decode_header(bytes: &[u8]) -> Result<(CheckpointHeader, usize)> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(c.take(4)?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let len = u64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes")) as usize;
    let header: CheckpointHeader = serde_json::from_slice(c.take(len)?)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.schema.hash() != header.schema_hash {
        return Err(Error::Checkpoint("schema hash does not match embedded schema".into()));
    }
    Ok((header, c.pos))
}

pub fn decode<T: Real>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let (header, offset) = decode_header(bytes)?;
    let mut params: ModelParams<T> = ModelParams::zeros(&header.schema, &header.config.model);
    let layout: Vec<BlockInfo> = (0..params.block_count())
        .map(|i| BlockInfo {
            name: params.block_name(i),
            len: params.block(i).len(),
        })
        .collect();
    if layout != header.blocks {
        return Err(Error::Checkpoint(
            "parameter layout does not match configuration".into(),
        ));
    }
    let mut c = Cursor { bytes, pos: offset };
    for i in 0..params.block_count() {
        c.fill(params.block_mut(i))?;
    }
    let mut adam = AdamState::new(header.config.optimizer, &params);
    adam.step = header.adam_step;
    for m in adam.first.iter_mut().chain(adam.second.iter_mut()) {
        c.fill(m)?;
    }
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - c.pos
        )));
    }
    Ok(Checkpoint {
        header,
        params,
        adam,
    })
}

/// A checkpoint in the precision it was trained with.
#[derive(Debug, Clone)]
pub enum LoadedCheckpoint {
    F32(Checkpoint<f32>),
    F64(Checkpoint<f64>),
}

impl LoadedCheckpoint {
    pub fn header(&self) -> &CheckpointHeader {
        match self {
            LoadedCheckpoint::F32(c) => &c.header,
            LoadedCheckpoint::F64(c) => &c.header,
        }
    }

    /// Scores along `path`; rejects samples from a different schema.
    pub fn scores(&self, samples: &[Sample], path: ServingPath) -> Result<Vec<f64>> {
        let schema = &self.header().schema;
        for s in samples {
            schema.validate(s)?;
        }
        match self {
            LoadedCheckpoint::F32(c) => predict_scores(&c.params, samples, path),
            LoadedCheckpoint::F64(c) => predict_scores(&c.params, samples, path),
        }
    }
}

pub fn load(path: &Path) -> Result<LoadedCheckpoint> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    let (header, _) = decode_header(&bytes)?;
    Ok(match header.precision {
        Precision::F32 => LoadedCheckpoint::F32(decode(&bytes)?),
        Precision::F64 => LoadedCheckpoint::F64(decode(&bytes)?),
    })
}

/// Fails unless `schema` is the one the checkpoint was trained on.
pub fn check_schema(header: &CheckpointHeader, schema: &FeatureSchema) -> Result<()> {
    let found = schema.hash();
    if found != header.schema_hash {
        return Err(Error::SchemaMismatch {
            expected: header.schema_hash.clone(),
            found,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureDescriptor;
    use crate::model::ModelConfig;

    fn trainer<T: Real>(precision: Precision) -> (Trainer<T>, Vec<Sample>) {
        let f = |name: &str, k: usize| FeatureDescriptor::new(name, (0..k).map(|i| i.to_string()));
        let schema = FeatureSchema::new(vec![f("a", 3), f("b", 4)], None).unwrap();
        let cfg = TrainConfig {
            precision,
            batch_size: 8,
            epochs: 1,
            model: ModelConfig {
                embedding_dim: 2,
                latent_dim: 3,
                mlp_hidden: vec![4],
                cross_layers: 1,
                denoiser_hidden: 3,
                ..ModelConfig::default()
            },
            ..TrainConfig::default()
        };
        let data: Vec<Sample> = (0..20u32)
            .map(|i| Sample::new(i % 3 == 0, i % 4, vec![i % 4, 1 + i % 4]))
            .collect();
        let mut t = Trainer::new(cfg, schema).unwrap();
        t.fit(&data, &mut std::io::sink(), |_| Ok(())).unwrap();
        (t, data)
    }

    #[test]
    fn f32_round_trip_is_exact() {
        let (t, data) = trainer::<f32>(Precision::F32);
        let bytes = encode(&t, "x");
        let c: Checkpoint<f32> = decode(&bytes).unwrap();
        assert_eq!(&c.params, t.params());
        assert_eq!(&c.adam, t.adam());
        assert_eq!(c.header.step, 3);
        let back = c.into_trainer().unwrap();
        assert_eq!(encode(&back, "x"), bytes);
        let lc = LoadedCheckpoint::F32(decode(&bytes).unwrap());
        assert_eq!(
            lc.scores(&data, ServingPath::ServePredict).unwrap(),
            t.scores(&data).unwrap()
        );
    }

    #[test]
    fn f64_file_round_trip() {
        let (t, _) = trainer::<f64>(Precision::F64);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.ckpt");
        save(&p, &t, "x").unwrap();
        match load(&p).unwrap() {
            LoadedCheckpoint::F64(c) => assert_eq!(&c.params, t.params()),
            other => panic!("wrong precision {:?}", other.header().precision),
        }
    }

    #[test]
    fn corruption_is_detected() {
        let (t, _) = trainer::<f32>(Precision::F32);
        let bytes = encode(&t, "x");
        assert!(decode::<f32>(&bytes[..bytes.len() - 4]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_header(&bad).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(decode::<f32>(&longer).is_err());
        assert!(load(Path::new("/nonexistent/model.ckpt")).is_err());
    }

    #[test]
    fn schema_mismatch_is_fatal() {
        let (t, _) = trainer::<f32>(Precision::F32);
        let (header, _) = decode_header(&encode(&t, "x")).unwrap();
        let other = FeatureSchema::new(
            vec![FeatureDescriptor::new("a", ["x".to_string()])],
            None,
        )
        .unwrap();
        assert!(matches!(check_schema(&header, &other), Err(Error::SchemaMismatch { .. })));
        check_schema(&header, t.schema()).unwrap();
    }
}

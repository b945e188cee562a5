//! The three networks: feature extractor `h` (embeddings, DCN-V2 cross
//! layers, ReLU MLP), prediction head `f`, and denoiser `g`.

mod network;

pub use network::{
    base_scores, denoise, denoise_backward, denoise_batch, extract, extract_backward,
    extract_batch, head_backward, head_forward, predict, DenoiseCache, ExtractCache, LatentRep,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSchema;
use crate::numeric::{ParamSet, Real, Tensor2};

/// Embedding tables are initialized uniformly in `[-EMBED_INIT, EMBED_INIT]`.
pub const EMBED_INIT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub latent_dim: usize,
    pub mlp_hidden: Vec<usize>,
    pub cross_layers: usize,
    pub denoiser_hidden: usize,
    pub lambda_main: f64,
    pub lambda_recon: f64,
    pub lambda_aux: f64,
    /// Treat `z0` as a constant target in the reconstruction loss.
    pub stop_gradient_target: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 16,
            latent_dim: 128,
            mlp_hidden: vec![256, 128],
            cross_layers: 2,
            denoiser_hidden: 128,
            lambda_main: 1.0,
            lambda_recon: 1.0,
            lambda_aux: 1.0,
            stop_gradient_target: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.latent_dim == 0 || self.denoiser_hidden == 0 {
            return Err(Error::Config(
                "embedding_dim, latent_dim and denoiser_hidden must be > 0".into(),
            ));
        }
        if self.mlp_hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("mlp_hidden sizes must be > 0".into()));
        }
        for (name, v) in [
            ("lambda_main", self.lambda_main),
            ("lambda_recon", self.lambda_recon),
            ("lambda_aux", self.lambda_aux),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// An affine layer `x W + b` with `W` stored `d_in x d_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Tensor2<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            weight: Tensor2::zeros(d_in, d_out),
            bias: vec![T::zero(); d_out],
        }
    }

    fn glorot(d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (d_in + d_out) as f64).sqrt();
        let data = (0..d_in * d_out)
            .map(|_| T::from_f64(rng.random_range(-limit..=limit)))
            .collect();
        Self {
            weight: Tensor2::new(d_in, d_out, data).expect("sized"),
            bias: vec![T::zero(); d_out],
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    feature_names: Vec<String>,
    pub embeddings: Vec<Tensor2<T>>,
    pub cross: Vec<Dense<T>>,
    /// Hidden ReLU layers followed by the linear projection to `d_z`.
    pub mlp: Vec<Dense<T>>,
    pub head: Dense<T>,
    /// `[s, z_T] -> hidden` (ReLU) and `hidden -> d_z`.
    pub denoiser: [Dense<T>; 2],
}

#[derive(Clone, Copy)]
enum Slot {
    Embedding(usize),
    Cross(usize, bool),
    Mlp(usize, bool),
    Head(bool),
    Denoiser(usize, bool),
}

impl<T: Real> ModelParams<T> {
    fn build(
        schema: &FeatureSchema,
        config: &ModelConfig,
        mut embed: impl FnMut(usize, usize) -> Tensor2<T>,
        mut dense: impl FnMut(usize, usize) -> Dense<T>,
    ) -> Self {
        let n = schema.len();
        let d = n * config.embedding_dim;
        let embeddings = schema
            .vocab_sizes()
            .into_iter()
            .map(|v| embed(v, config.embedding_dim))
            .collect();
        let cross = (0..config.cross_layers).map(|_| dense(d, d)).collect();
        let mut mlp = Vec::with_capacity(config.mlp_hidden.len() + 1);
        let mut width = d;
        for &h in &config.mlp_hidden {
            mlp.push(dense(width, h));
            width = h;
        }
        mlp.push(dense(width, config.latent_dim));
        let head = dense(config.latent_dim, 1);
        let denoiser = [
            dense(n + config.latent_dim, config.denoiser_hidden),
            dense(config.denoiser_hidden, config.latent_dim),
        ];
        Self {
            feature_names: schema.names().map(str::to_string).collect(),
            embeddings,
            cross,
            mlp,
            head,
            denoiser,
        }
    }

    /// All-zero parameters with the given shapes; also the gradient buffer.
    pub fn zeros(schema: &FeatureSchema, config: &ModelConfig) -> Self {
        Self::build(schema, config, Tensor2::zeros, Dense::zeros)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }

    pub fn fill_zero(&mut self) {
        for i in 0..self.block_count() {
            self.block_mut(i).iter_mut().for_each(|x| *x = T::zero());
        }
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn num_features(&self) -> usize {
        self.embeddings.len()
    }

    pub fn embedding_dim(&self) -> usize {
        self.embeddings[0].cols()
    }

    pub fn latent_dim(&self) -> usize {
        self.head.d_in()
    }

    pub fn parameter_count(&self) -> usize {
        (0..self.block_count()).map(|i| self.block(i).len()).sum()
    }

    /// Block lengths, in block order.
    pub fn block_lens(&self) -> Vec<usize> {
        (0..self.block_count()).map(|i| self.block(i).len()).collect()
    }

    pub fn is_finite(&self) -> bool {
        (0..self.block_count()).all(|i| self.block(i).iter().all(|x| x.is_finite()))
    }

    /// Converts between precisions (exact from f32 to f64).
    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let conv_t = |t: &Tensor2<T>| {
            Tensor2::new(
                t.rows(),
                t.cols(),
                t.data().iter().map(|x| U::from_f64(x.as_f64())).collect(),
            )
            .expect("same shape")
        };
        let conv_d = |d: &Dense<T>| Dense {
            weight: conv_t(&d.weight),
            bias: d.bias.iter().map(|x| U::from_f64(x.as_f64())).collect(),
        };
        ModelParams {
            feature_names: self.feature_names.clone(),
            embeddings: self.embeddings.iter().map(conv_t).collect(),
            cross: self.cross.iter().map(conv_d).collect(),
            mlp: self.mlp.iter().map(conv_d).collect(),
            head: conv_d(&self.head),
            denoiser: [conv_d(&self.denoiser[0]), conv_d(&self.denoiser[1])],
        }
    }

    fn locate(&self, index: usize) -> Slot {
        let e = self.embeddings.len();
        let c = self.cross.len() * 2;
        let m = self.mlp.len() * 2;
        let mut i = index;
        if i < e {
            return Slot::Embedding(i);
        }
        i -= e;
        if i < c {
            return Slot::Cross(i / 2, i % 2 == 1);
        }
        i -= c;
        if i < m {
            return Slot::Mlp(i / 2, i % 2 == 1);
        }
        i -= m;
        match i {
            0 | 1 => Slot::Head(i == 1),
            2..=5 => Slot::Denoiser((i - 2) / 2, i % 2 == 1),
            _ => panic!("parameter block {index} out of range"),
        }
    }
}

fn dense_block<T: Real>(d: &Dense<T>, bias: bool) -> &[T] {
    if bias {
        &d.bias
    } else {
        d.weight.data()
    }
}

fn dense_block_mut<T: Real>(d: &mut Dense<T>, bias: bool) -> &mut [T] {
    if bias {
        &mut d.bias
    } else {
        d.weight.data_mut()
    }
}

impl<T: Real> ParamSet<T> for ModelParams<T> {
    fn block_count(&self) -> usize {
        self.embeddings.len() + 2 * (self.cross.len() + self.mlp.len() + 1 + 2)
    }

    fn block_name(&self, index: usize) -> String {
        let part = |bias: bool| if bias { "bias" } else { "weight" };
        match self.locate(index) {
            Slot::Embedding(f) => format!("embedding.{}", self.feature_names[f]),
            Slot::Cross(l, b) => format!("cross.{l}.{}", part(b)),
            Slot::Mlp(l, b) => format!("mlp.{l}.{}", part(b)),
            Slot::Head(b) => format!("head.{}", part(b)),
            Slot::Denoiser(l, b) => format!("denoiser.{l}.{}", part(b)),
        }
    }

    fn block(&self, index: usize) -> &[T] {
        match self.locate(index) {
            Slot::Embedding(f) => self.embeddings[f].data(),
            Slot::Cross(l, b) => dense_block(&self.cross[l], b),
            Slot::Mlp(l, b) => dense_block(&self.mlp[l], b),
            Slot::Head(b) => dense_block(&self.head, b),
            Slot::Denoiser(l, b) => dense_block(&self.denoiser[l], b),
        }
    }

    fn block_mut(&mut self, index: usize) -> &mut [T] {
        match self.locate(index) {
            Slot::Embedding(f) => self.embeddings[f].data_mut(),
            Slot::Cross(l, b) => dense_block_mut(&mut self.cross[l], b),
            Slot::Mlp(l, b) => dense_block_mut(&mut self.mlp[l], b),
            Slot::Head(b) => dense_block_mut(&mut self.head, b),
            Slot::Denoiser(l, b) => dense_block_mut(&mut self.denoiser[l], b),
        }
    }
}

/// Deterministic initialization: embeddings uniform in `±EMBED_INIT`,
/// affine weights Glorot-uniform, biases zero.
pub fn init_params<T: Real>(
    schema: &FeatureSchema,
    config: &ModelConfig,
    seed: u64,
) -> Result<ModelParams<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Both closures draw from one stream; build() calls them in block order.
    let rng = std::cell::RefCell::new(&mut rng);
    Ok(ModelParams::build(
        schema,
        config,
        |v, d| {
            let mut r = rng.borrow_mut();
            let data = (0..v * d)
                .map(|_| T::from_f64(r.random_range(-EMBED_INIT..=EMBED_INIT)))
                .collect();
            Tensor2::new(v, d, data).expect("sized")
        },
        |i, o| Dense::glorot(i, o, &mut rng.borrow_mut()),
    ))
}

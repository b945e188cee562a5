//! Training stage (noising, the three-term objective with its manual
//! backward pass, Adam) and the two serving paths.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{standard_normal, step_conditioning, GaussianSchedule};
use crate::error::{Error, Result};
use crate::features::{forward_process, mask_from_observed, sample_t, FeatureSchema, Sample};
use crate::model::{
    denoise_backward, denoise_batch, extract_backward, extract_batch, head_backward,
    head_forward, init_params, predict, LatentRep, ModelConfig, ModelParams,
};
use crate::numeric::{
    adam_step, clamp_probability, AdamConfig, AdamState, ParamSet, Precision, Real, Tensor2,
    PROB_EPS,
};

/// Cross-entropy of a probability against a label, after clamping.
pub fn loss_main<T: Real>(y: bool, yhat: T) -> T {
    let p = clamp_probability(yhat);
    if y {
        -p.ln()
    } else {
        -(T::one() - p).ln()
    }
}

/// `||z0' - z0||²`.
pub fn loss_recon<T: Real>(z0_prime: &LatentRep<T>, z0: &LatentRep<T>) -> Result<T> {
    if z0_prime.len() != z0.len() {
        return Err(Error::shape(
            "loss_recon",
            format!("{} vs {}", z0_prime.len(), z0.len()),
        ));
    }
    Ok(z0_prime
        .0
        .iter()
        .zip(&z0.0)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum())
}

/// Cross-entropy of `f(z0')`, sharing the main head.
pub fn loss_aux<T: Real>(y: bool, z0_prime: &LatentRep<T>, params: &ModelParams<T>) -> Result<T> {
    Ok(loss_main(y, predict(params, z0_prime)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub main: f64,
    pub recon: f64,
    pub aux: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.main, self.recon, self.aux, self.total]
            .iter()
            .all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionKind {
    /// Discrete feature dropout in input space.
    #[default]
    FeatureDropout,
    /// Symmetric Gaussian noise in latent space.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServingPath {
    /// `f(g([s, h(x)]))`
    #[default]
    ServePredict,
    /// `f(h(x))`
    BasePredict,
}

impl ServingPath {
    pub fn name(self) -> &'static str {
        match self {
            ServingPath::ServePredict => "serve_predict",
            ServingPath::BasePredict => "base_predict",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub epochs: usize,
    pub precision: Precision,
    pub optimizer: AdamConfig,
    pub model: ModelConfig,
    pub diffusion: DiffusionKind,
    /// Only used when `diffusion = "gaussian"`.
    pub gaussian: GaussianSchedule,
    pub serving: ServingPath,
    /// Emit a run-log line every this many steps.
    pub log_every: u64,
    /// Write a checkpoint every this many steps (0 = only at the end).
    pub checkpoint_every: u64,
    /// Evaluate every this many epochs when an eval set is given (0 = only at the end).
    pub eval_every_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            batch_size: 1024,
            epochs: 5,
            precision: Precision::F32,
            optimizer: AdamConfig::default(),
            model: ModelConfig::default(),
            diffusion: DiffusionKind::FeatureDropout,
            gaussian: GaussianSchedule::default(),
            serving: ServingPath::ServePredict,
            log_every: 50,
            checkpoint_every: 0,
            eval_every_epochs: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be >= 1".into()));
        }
        self.optimizer.validate()?;
        self.model.validate()?;
        self.gaussian.validate()
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Corrupted inputs for one batch, drawn before the objective is evaluated
/// so that the objective itself is a deterministic function of parameters.
#[derive(Debug, Clone)]
pub struct NoiseBatch<T> {
    /// Conditioning rows `s` fed to the denoiser, `[B x N]`.
    pub step: Tensor2<T>,
    pub corruption: Corruption<T>,
    /// Samples whose `T` exceeded their observed feature count.
    pub t_clamps: usize,
}

#[derive(Debug, Clone)]
pub enum Corruption<T> {
    Dropout {
        noisy: Vec<Sample>,
    },
    Gaussian {
        eps: Tensor2<T>,
        alpha_bar: Vec<f64>,
    },
}

/// Feature-dropout noise with the given per-sample step counts.
pub fn dropout_noise<T: Real, R: Rng + ?Sized>(
    batch: &[&Sample],
    steps: &[usize],
    rng: &mut R,
) -> Result<NoiseBatch<T>> {
    if batch.len() != steps.len() {
        return Err(Error::shape(
            "dropout_noise",
            format!("{} samples, {} step counts", batch.len(), steps.len()),
        ));
    }
    let n = batch.first().map_or(0, |s| s.features.len());
    let mut step = Tensor2::zeros(batch.len(), n);
    let mut noisy = Vec::with_capacity(batch.len());
    let mut t_clamps = 0;
    for (b, (x0, &t)) in batch.iter().zip(steps).enumerate() {
        let out = forward_process(x0, t, rng);
        out.mask.write_reals(step.row_mut(b));
        t_clamps += out.clamped as usize;
        noisy.push(out.noisy);
    }
    Ok(NoiseBatch {
        step,
        corruption: Corruption::Dropout { noisy },
        t_clamps,
    })
}

/// Draws the corruption for a batch according to the configured diffusion.
pub fn draw_noise<T: Real, R: Rng + ?Sized>(
    config: &TrainConfig,
    batch: &[&Sample],
    rng: &mut R,
) -> Result<NoiseBatch<T>> {
    let n = batch.first().map_or(0, |s| s.features.len());
    match config.diffusion {
        DiffusionKind::FeatureDropout => {
            let steps: Vec<usize> = batch.iter().map(|_| sample_t(rng, n)).collect();
            dropout_noise(batch, &steps, rng)
        }
        DiffusionKind::Gaussian => {
            let schedule = &config.gaussian;
            let d_z = config.model.latent_dim;
            let mut step = Tensor2::zeros(batch.len(), n);
            let mut eps = Vec::with_capacity(batch.len() * d_z);
            let mut alpha_bar = Vec::with_capacity(batch.len());
            for b in 0..batch.len() {
                let k = schedule.sample_step(rng);
                step_conditioning(k, schedule.steps, n).write_reals(step.row_mut(b));
                alpha_bar.push(schedule.alpha_bar(k)?);
                eps.extend(standard_normal(rng, d_z).into_iter().map(T::from_f64));
            }
            Ok(NoiseBatch {
                step,
                corruption: Corruption::Gaussian {
                    eps: Tensor2::new(batch.len(), d_z, eps)?,
                    alpha_bar,
                },
                t_clamps: 0,
            })
        }
    }
}

fn mean_ce<T: Real>(batch: &[&Sample], probs: &[T]) -> f64 {
    let sum: f64 = batch
        .iter()
        .zip(probs)
        .map(|(s, &p)| loss_main(s.label, p).as_f64())
        .sum();
    sum / batch.len() as f64
}

fn is_clamped<T: Real>(p: T) -> bool {
    p <= T::from_f64(PROB_EPS) || p >= T::one() - T::from_f64(PROB_EPS)
}

/// `dL/dlogit = λ (p - y) / B`; zero where the probability was clamped.
fn ce_logit_grad<T: Real>(batch: &[&Sample], probs: &[T], lambda: T) -> (Tensor2<T>, usize) {
    let b = T::from_f64(batch.len() as f64);
    let mut clamps = 0;
    let data = batch
        .iter()
        .zip(probs)
        .map(|(s, &p)| {
            if is_clamped(p) {
                clamps += 1;
                T::zero()
            } else {
                let y = if s.label { T::one() } else { T::zero() };
                lambda * (p - y) / b
            }
        })
        .collect();
    (Tensor2::new(batch.len(), 1, data).expect("column"), clamps)
}

/// Value and (optionally) gradient of
/// `λ_main L_main + λ_recon L_recon + λ_aux L_aux`, averaged over the batch.
///
/// `frozen_target` replaces `z0` as the reconstruction target and is never
/// differentiated; without it, `z0 = h(x0)` is used and receives gradient
/// unless `stop_gradient_target` is set. Terms whose λ is zero are evaluated
/// but not back-propagated. Returns the loss and the number of clamped
/// probabilities.
pub fn objective<T: Real>(
    params: &ModelParams<T>,
    model: &ModelConfig,
    batch: &[&Sample],
    noise: &NoiseBatch<T>,
    frozen_target: Option<&Tensor2<T>>,
    grads: Option<&mut ModelParams<T>>,
) -> Result<(LossBreakdown, usize)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let bsz = batch.len();
    let (z0, cache0) = extract_batch(params, batch)?;
    let (_, p0) = head_forward(params, &z0)?;

    let (z_noisy, noisy_cache) = match &noise.corruption {
        Corruption::Dropout { noisy } => {
            let refs: Vec<&Sample> = noisy.iter().collect();
            let (z, c) = extract_batch(params, &refs)?;
            (z, Some(c))
        }
        Corruption::Gaussian { eps, alpha_bar } => {
            let mut z = z0.clone();
            for (b, &ab) in alpha_bar.iter().enumerate() {
                let (a, s) = (T::from_f64(ab.sqrt()), T::from_f64((1.0 - ab).sqrt()));
                for (o, &e) in z.row_mut(b).iter_mut().zip(eps.row(b)) {
                    *o = a * *o + s * e;
                }
            }
            (z, None)
        }
    };
    let (z0_prime, dcache) = denoise_batch(params, &noise.step, &z_noisy)?;
    let target = frozen_target.unwrap_or(&z0);
    if target.shape() != z0_prime.shape() {
        return Err(Error::shape(
            "objective",
            format!("target {:?} vs output {:?}", target.shape(), z0_prime.shape()),
        ));
    }
    let diff: Vec<T> = z0_prime
        .data()
        .iter()
        .zip(target.data())
        .map(|(&a, &b)| a - b)
        .collect();
    let recon = diff.iter().map(|d| (*d * *d).as_f64()).sum::<f64>() / bsz as f64;
    let (_, pp) = head_forward(params, &z0_prime)?;

    let main = mean_ce(batch, &p0);
    let aux = mean_ce(batch, &pp);
    let loss = LossBreakdown {
        main,
        recon,
        aux,
        total: model.lambda_main * main + model.lambda_recon * recon + model.lambda_aux * aux,
    };
    let mut clamps = p0.iter().chain(&pp).filter(|&&p| is_clamped(p)).count();

    let Some(grads) = grads else {
        return Ok((loss, clamps));
    };
    clamps = 0;
    let mut g_z0: Option<Tensor2<T>> = None;
    if model.lambda_main > 0.0 {
        let (gl, c) = ce_logit_grad(batch, &p0, T::from_f64(model.lambda_main));
        clamps += c;
        g_z0 = Some(head_backward(params, &z0, &gl, grads)?);
    }
    if model.lambda_recon > 0.0 || model.lambda_aux > 0.0 {
        let mut g_out = Tensor2::zeros(bsz, z0_prime.cols());
        if model.lambda_aux > 0.0 {
            let (gl, c) = ce_logit_grad(batch, &pp, T::from_f64(model.lambda_aux));
            clamps += c;
            g_out = head_backward(params, &z0_prime, &gl, grads)?;
        }
        if model.lambda_recon > 0.0 {
            let coef = T::from_f64(2.0 * model.lambda_recon / bsz as f64);
            for (g, &d) in g_out.data_mut().iter_mut().zip(&diff) {
                *g = *g + coef * d;
            }
            if frozen_target.is_none() && !model.stop_gradient_target {
                let g = g_z0.get_or_insert_with(|| Tensor2::zeros(bsz, z0.cols()));
                for (g, &d) in g.data_mut().iter_mut().zip(&diff) {
                    *g = *g - coef * d;
                }
            }
        }
        let g_noisy = denoise_backward(params, &dcache, &g_out, grads)?;
        match (&noise.corruption, noisy_cache) {
            (Corruption::Dropout { .. }, Some(cache)) => {
                extract_backward(params, &cache, &g_noisy, grads)?;
            }
            (Corruption::Gaussian { alpha_bar, .. }, _) => {
                let g = g_z0.get_or_insert_with(|| Tensor2::zeros(bsz, z0.cols()));
                for (b, &ab) in alpha_bar.iter().enumerate() {
                    let a = T::from_f64(ab.sqrt());
                    for (o, &u) in g.row_mut(b).iter_mut().zip(g_noisy.row(b)) {
                        *o = *o + a * u;
                    }
                }
            }
            (Corruption::Dropout { .. }, None) => unreachable!("dropout path keeps its cache"),
        }
    }
    if let Some(g) = g_z0 {
        extract_backward(params, &cache0, &g, grads)?;
    }
    Ok((loss, clamps))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub loss: LossBreakdown,
    pub t_clamps: usize,
    pub prob_clamps: usize,
}

/// One optimizer update on `batch`. Noise is drawn from `rng`; `grads` is a
/// scratch buffer with the shape of `params`.
#[allow(clippy::too_many_arguments)]
pub fn train_step<T: Real, R: Rng + ?Sized>(
    params: &mut ModelParams<T>,
    adam: &mut AdamState<T>,
    grads: &mut ModelParams<T>,
    batch: &[&Sample],
    rng: &mut R,
    config: &TrainConfig,
    step: u64,
    batch_index: u64,
) -> Result<StepOutcome> {
    let noise = draw_noise::<T, R>(config, batch, rng)?;
    grads.fill_zero();
    let (loss, prob_clamps) = objective(params, &config.model, batch, &noise, None, Some(grads))?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            step,
            batch: batch_index,
            breakdown: format!(
                "main={} recon={} aux={} total={}",
                loss.main, loss.recon, loss.aux, loss.total
            ),
        });
    }
    adam_step(adam, params, grads)?;
    Ok(StepOutcome {
        loss,
        t_clamps: noise.t_clamps,
        prob_clamps,
    })
}

/// Noise stream for global step `step`, independent of data order.
pub fn diffusion_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * step);
    rng
}

/// Sample visiting order for one epoch.
pub fn epoch_order(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * epoch + 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// SHA-256 over every parameter as little-endian f64, in block order.
pub fn params_digest<T: Real>(params: &ModelParams<T>) -> String {
    let mut h = Sha256::new();
    for i in 0..params.block_count() {
        for x in params.block(i) {
            h.update(x.as_f64().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[derive(Serialize)]
struct StartLine<'a> {
    event: &'static str,
    code_version: &'static str,
    config_hash: &'a str,
    schema_hash: &'a str,
    seed: u64,
    precision: &'static str,
    diffusion: DiffusionKind,
    t_sampling: &'static str,
    stop_gradient_target: bool,
    lambda_main: f64,
    lambda_recon: f64,
    lambda_aux: f64,
    from_step: u64,
    total_steps: u64,
    train_examples: usize,
}

#[derive(Serialize)]
struct StepLine<'a> {
    event: &'static str,
    config_hash: &'a str,
    seed: u64,
    step: u64,
    epoch: u64,
    main: f64,
    recon: f64,
    aux: f64,
    total: f64,
    lambda_main: f64,
    lambda_recon: f64,
    lambda_aux: f64,
    t_clamps: usize,
    prob_clamps: usize,
}

#[derive(Serialize)]
struct EndLine<'a> {
    event: &'static str,
    config_hash: &'a str,
    seed: u64,
    step: u64,
    params_sha256: String,
}

fn write_line(log: &mut dyn Write, line: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *log, line)?;
    log.write_all(b"\n")?;
    Ok(())
}

/// Owns parameters, optimizer state and the step counter for one run.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    config: TrainConfig,
    schema: FeatureSchema,
    params: ModelParams<T>,
    adam: AdamState<T>,
    grads: ModelParams<T>,
    step: u64,
}

impl<T: Real> Trainer<T> {
    pub fn new(config: TrainConfig, schema: FeatureSchema) -> Result<Self> {
        config.validate()?;
        let params = init_params(&schema, &config.model, config.seed)?;
        let adam = AdamState::new(config.optimizer, &params);
        Self::from_parts(config, schema, params, adam, 0)
    }

    /// Rebuilds a trainer from saved state (resume).
    pub fn from_parts(
        config: TrainConfig,
        schema: FeatureSchema,
        params: ModelParams<T>,
        adam: AdamState<T>,
        step: u64,
    ) -> Result<Self> {
        config.validate()?;
        if params.num_features() != schema.len() {
            return Err(Error::SchemaMismatch {
                expected: format!("{} features", schema.len()),
                found: format!("{} embedding tables", params.num_features()),
            });
        }
        if adam.first.len() != params.block_count() {
            return Err(Error::Checkpoint("optimizer state does not match parameters".into()));
        }
        let grads = params.zeros_like();
        Ok(Self {
            config,
            schema,
            params,
            adam,
            grads,
            step,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn adam(&self) -> &AdamState<T> {
        &self.adam
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn steps_per_epoch(&self, n: usize) -> u64 {
        n.div_ceil(self.config.batch_size) as u64
    }

    pub fn total_steps(&self, n: usize) -> u64 {
        self.steps_per_epoch(n) * self.config.epochs as u64
    }

    /// Trains until the configured number of epochs is complete, resuming
    /// from the current step. `after_step` runs after every update.
    pub fn fit(
        &mut self,
        data: &[Sample],
        log: &mut dyn Write,
        mut after_step: impl FnMut(&Self) -> Result<()>,
    ) -> Result<Option<LossBreakdown>> {
        if data.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        for s in data {
            self.schema.validate(s)?;
        }
        let config_hash = self.config.hash();
        let spe = self.steps_per_epoch(data.len());
        let total = self.total_steps(data.len());
        let m = &self.config.model;
        write_line(
            log,
            &StartLine {
                event: if self.step == 0 { "start" } else { "resume" },
                code_version: crate::CODE_VERSION,
                config_hash: &config_hash,
                schema_hash: &self.schema.hash(),
                seed: self.config.seed,
                precision: T::NAME,
                diffusion: self.config.diffusion,
                t_sampling: "uniform{0..N}",
                stop_gradient_target: m.stop_gradient_target,
                lambda_main: m.lambda_main,
                lambda_recon: m.lambda_recon,
                lambda_aux: m.lambda_aux,
                from_step: self.step,
                total_steps: total,
                train_examples: data.len(),
            },
        )?;

        let bsz = self.config.batch_size;
        let mut order_epoch = u64::MAX;
        let mut order = Vec::new();
        let mut last = None;
        while self.step < total {
            let epoch = self.step / spe;
            let pos = (self.step % spe) as usize;
            if epoch != order_epoch {
                order = epoch_order(self.config.seed, epoch, data.len());
                order_epoch = epoch;
            }
            let idx = &order[pos * bsz..((pos + 1) * bsz).min(data.len())];
            let batch: Vec<&Sample> = idx.iter().map(|&i| &data[i]).collect();
            let mut rng = diffusion_rng(self.config.seed, self.step);
            let out = train_step(
                &mut self.params,
                &mut self.adam,
                &mut self.grads,
                &batch,
                &mut rng,
                &self.config,
                self.step,
                pos as u64,
            )?;
            self.step += 1;
            last = Some(out.loss);
            if self.step % self.config.log_every == 0 || self.step == total {
                let m = &self.config.model;
                write_line(
                    log,
                    &StepLine {
                        event: "step",
                        config_hash: &config_hash,
                        seed: self.config.seed,
                        step: self.step,
                        epoch,
                        main: out.loss.main,
                        recon: out.loss.recon,
                        aux: out.loss.aux,
                        total: out.loss.total,
                        lambda_main: m.lambda_main,
                        lambda_recon: m.lambda_recon,
                        lambda_aux: m.lambda_aux,
                        t_clamps: out.t_clamps,
                        prob_clamps: out.prob_clamps,
                    },
                )?;
                log::debug!("step {} total loss {:.5}", self.step, out.loss.total);
            }
            after_step(self)?;
        }
        write_line(
            log,
            &EndLine {
                event: "end",
                config_hash: &config_hash,
                seed: self.config.seed,
                step: self.step,
                params_sha256: params_digest(&self.params),
            },
        )?;
        Ok(last)
    }

    /// Probabilities for `samples` along the configured serving path.
    pub fn scores(&self, samples: &[Sample]) -> Result<Vec<f64>> {
        predict_scores(&self.params, samples, self.config.serving)
    }
}

/// Serving stage: `f(g([s, h(x)]))` with `s` the observed-missing mask of `x`.
pub fn serve_predict<T: Real>(params: &ModelParams<T>, x: &Sample) -> Result<T> {
    Ok(serve_scores(params, &[x])?[0])
}

/// Non-diffusion path `f(h(x))`.
pub fn base_predict<T: Real>(params: &ModelParams<T>, x: &Sample) -> Result<T> {
    Ok(crate::model::base_scores(params, &[x])?[0])
}

/// Batched [`serve_predict`].
pub fn serve_scores<T: Real>(params: &ModelParams<T>, samples: &[&Sample]) -> Result<Vec<T>> {
    let mut step = Tensor2::zeros(samples.len(), params.num_features());
    for (b, s) in samples.iter().enumerate() {
        mask_from_observed(s).write_reals(step.row_mut(b));
    }
    let (z, _) = extract_batch(params, samples)?;
    let (z0_prime, _) = denoise_batch(params, &step, &z)?;
    Ok(head_forward(params, &z0_prime)?.1)
}

const SCORE_CHUNK: usize = 1024;

/// Scores a whole dataset in chunks along `path`.
pub fn predict_scores<T: Real>(
    params: &ModelParams<T>,
    samples: &[Sample],
    path: ServingPath,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(SCORE_CHUNK) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let p = match path {
            ServingPath::ServePredict => serve_scores(params, &refs)?,
            ServingPath::BasePredict => crate::model::base_scores(params, &refs)?,
        };
        out.extend(p.into_iter().map(Real::as_f64));
    }
    Ok(out)
}

//! With λ_recon = λ_aux = 0 the trainer must follow a plain cross-entropy
//! trainer bit for bit.

use asymdiff_core::features::{FeatureDescriptor, FeatureSchema, Sample, MISSING};
use asymdiff_core::model::{
    extract_backward, extract_batch, head_backward, head_forward, init_params, ModelConfig,
    ModelParams,
};
use asymdiff_core::numeric::{adam_step, AdamState, Tensor2, PROB_EPS};
use asymdiff_core::trainer::{epoch_order, TrainConfig, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn schema() -> FeatureSchema {
    let f = |name: &str, k: usize| FeatureDescriptor::new(name, (0..k).map(|i| i.to_string()));
    FeatureSchema::new(vec![f("u", 6), f("i", 5), f("c", 3)], Some(0)).unwrap()
}

fn data() -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    (0..70)
        .map(|i| {
            let f = [6u32, 5, 3]
                .iter()
                .map(|&v| if rng.random_bool(0.1) { MISSING } else { rng.random_range(1..=v) })
                .collect();
            Sample::new(rng.random_bool(0.4), i % 9, f)
        })
        .collect()
}

/// Minimal supervised trainer: `f(h(x))`, mean cross-entropy, Adam.
fn plain_ce_trajectory<T: asymdiff_core::numeric::Real>(
    cfg: &TrainConfig,
    data: &[Sample],
    steps: usize,
) -> Vec<ModelParams<T>> {
    let mut params: ModelParams<T> = init_params(&schema(), &cfg.model, cfg.seed).unwrap();
    let mut adam = AdamState::new(cfg.optimizer, &params);
    let per_epoch = data.len().div_ceil(cfg.batch_size);
    let mut out = Vec::new();
    for step in 0..steps {
        let order = epoch_order(cfg.seed, (step / per_epoch) as u64, data.len());
        let pos = step % per_epoch;
        let idx = &order[pos * cfg.batch_size..((pos + 1) * cfg.batch_size).min(data.len())];
        let batch: Vec<&Sample> = idx.iter().map(|&i| &data[i]).collect();

        let (z, cache) = extract_batch(&params, &batch).unwrap();
        let (_, probs) = head_forward(&params, &z).unwrap();
        let b = T::from_f64(batch.len() as f64);
        let lo = T::from_f64(PROB_EPS);
        let hi = T::one() - lo;
        let dlogit: Vec<T> = batch
            .iter()
            .zip(&probs)
            .map(|(s, &p)| {
                if p <= lo || p >= hi {
                    T::zero()
                } else {
                    (p - if s.label { T::one() } else { T::zero() }) / b
                }
            })
            .collect();
        let mut grads = params.zeros_like();
        let gz = head_backward(&params, &z, &Tensor2::new(batch.len(), 1, dlogit).unwrap(), &mut grads)
            .unwrap();
        extract_backward(&params, &cache, &gz, &mut grads).unwrap();
        adam_step(&mut adam, &mut params, &grads).unwrap();
        out.push(params.clone());
    }
    out
}

fn trainer_trajectory<T: asymdiff_core::numeric::Real>(
    cfg: &TrainConfig,
    data: &[Sample],
) -> Vec<ModelParams<T>> {
    let mut t: Trainer<T> = Trainer::new(cfg.clone(), schema()).unwrap();
    let mut out = Vec::new();
    t.fit(data, &mut std::io::sink(), |tr| {
        out.push(tr.params().clone());
        Ok(())
    })
    .unwrap();
    out
}

fn config(batch_size: usize, stop_gradient_target: bool) -> TrainConfig {
    TrainConfig {
        seed: 5,
        batch_size,
        epochs: 2,
        model: ModelConfig {
            embedding_dim: 4,
            latent_dim: 6,
            mlp_hidden: vec![8, 7],
            cross_layers: 2,
            denoiser_hidden: 5,
            lambda_main: 1.0,
            lambda_recon: 0.0,
            lambda_aux: 0.0,
            stop_gradient_target,
        },
        ..TrainConfig::default()
    }
}

#[test]
fn zero_lambda_trajectory_is_plain_cross_entropy_f64() {
    let d = data();
    let cfg = config(16, true);
    let ours = trainer_trajectory::<f64>(&cfg, &d);
    let oracle = plain_ce_trajectory::<f64>(&cfg, &d, 10);
    assert!(ours.len() >= 10);
    for (step, (a, b)) in ours.iter().zip(&oracle).enumerate() {
        assert_eq!(a, b, "diverged at step {step}");
    }
}

#[test]
fn zero_lambda_trajectory_is_plain_cross_entropy_f32() {
    let d = data();
    let cfg = config(8, false);
    let ours = trainer_trajectory::<f32>(&cfg, &d);
    let oracle = plain_ce_trajectory::<f32>(&cfg, &d, 10);
    for (step, (a, b)) in ours.iter().zip(&oracle).enumerate() {
        assert_eq!(a, b, "diverged at step {step}");
    }
}

#[test]
fn nonzero_lambda_departs_from_plain_trainer() {
    let d = data();
    let mut cfg = config(16, true);
    cfg.model.lambda_aux = 1.0;
    let ours = trainer_trajectory::<f64>(&cfg, &d);
    let oracle = plain_ce_trajectory::<f64>(&cfg, &d, 1);
    assert_ne!(ours[0], oracle[0]);
}

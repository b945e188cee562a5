use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::error::{Error, Result};
use crate::features::{DropoutMask, Sample};
use crate::numeric::{
    affine_backward_into, affine_forward, clamp_probability, embedding_backward_into,
    embedding_lookup_into, relu_backward, relu_forward, sigmoid, Real, Tensor2,
};

/// A latent representation `z` of length `d_z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRep<T>(pub Vec<T>);

impl<T: Real> LatentRep<T> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn to_row(&self) -> Tensor2<T> {
        Tensor2::new(1, self.0.len(), self.0.clone()).expect("row")
    }
}

/// Activations kept from [`extract_batch`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ExtractCache<T> {
    /// Token ids, feature-major: `ids[f][b]`.
    ids: Vec<Vec<u32>>,
    x0: Tensor2<T>,
    cross_inputs: Vec<Tensor2<T>>,
    cross_pre: Vec<Tensor2<T>>,
    mlp_inputs: Vec<Tensor2<T>>,
    mlp_pre: Vec<Tensor2<T>>,
}

/// `h`: embeddings -> DCN-V2 cross layers -> ReLU MLP -> `d_z`.
///
/// Each cross layer computes `x_{l+1} = x_0 ⊙ (x_l W_l + b_l) + x_l` on the
/// concatenated embedding vector.
pub fn extract_batch<T: Real>(
    params: &ModelParams<T>,
    samples: &[&Sample],
) -> Result<(Tensor2<T>, ExtractCache<T>)> {
    let n = params.num_features();
    let d_e = params.embedding_dim();
    let batch = samples.len();
    let mut ids = vec![Vec::with_capacity(batch); n];
    for s in samples {
        if s.features.len() != n {
            return Err(Error::Data(format!(
                "sample has {} feature slots, model expects {n}",
                s.features.len()
            )));
        }
        for (f, &tok) in s.features.iter().enumerate() {
            ids[f].push(tok);
        }
    }
    let mut x0 = Tensor2::zeros(batch, n * d_e);
    for (f, table) in params.embeddings.iter().enumerate() {
        embedding_lookup_into(table, &ids[f], &params.feature_names()[f], &mut x0, f * d_e)?;
    }

    let mut cross_inputs = Vec::with_capacity(params.cross.len());
    let mut cross_pre = Vec::with_capacity(params.cross.len());
    let mut x = x0.clone();
    for layer in &params.cross {
        let pre = affine_forward(&x, &layer.weight, &layer.bias)?;
        let mut next = x.clone();
        for ((o, &a), &p) in next.data_mut().iter_mut().zip(x0.data()).zip(pre.data()) {
            *o = *o + a * p;
        }
        cross_inputs.push(x);
        cross_pre.push(pre);
        x = next;
    }

    let last = params.mlp.len() - 1;
    let mut mlp_inputs = Vec::with_capacity(params.mlp.len());
    let mut mlp_pre = Vec::with_capacity(last);
    for (i, layer) in params.mlp.iter().enumerate() {
        let pre = affine_forward(&x, &layer.weight, &layer.bias)?;
        mlp_inputs.push(x);
        if i < last {
            x = relu_forward(&pre);
            mlp_pre.push(pre);
        } else {
            x = pre;
        }
    }
    Ok((
        x,
        ExtractCache {
            ids,
            x0,
            cross_inputs,
            cross_pre,
            mlp_inputs,
            mlp_pre,
        },
    ))
}

/// Accumulates `dL/dθ_h` into `grads` given `dL/dz`.
pub fn extract_backward<T: Real>(
    params: &ModelParams<T>,
    cache: &ExtractCache<T>,
    grad_z: &Tensor2<T>,
    grads: &mut ModelParams<T>,
) -> Result<()> {
    let last = params.mlp.len() - 1;
    let mut g = grad_z.clone();
    for i in (0..params.mlp.len()).rev() {
        if i < last {
            g = relu_backward(&g, &cache.mlp_pre[i])?;
        }
        let layer = &params.mlp[i];
        let gl = &mut grads.mlp[i];
        g = affine_backward_into(
            &g,
            &cache.mlp_inputs[i],
            &layer.weight,
            &mut gl.weight,
            &mut gl.bias,
            true,
        )?
        .expect("input gradient");
    }

    // Gradient reaching x0 through the elementwise x0 ⊙ (...) terms.
    let mut g_x0 = Tensor2::zeros(cache.x0.rows(), cache.x0.cols());
    for l in (0..params.cross.len()).rev() {
        let pre = &cache.cross_pre[l];
        let mut g_pre = g.clone();
        for (((gp, &a), o), &p) in g_pre
            .data_mut()
            .iter_mut()
            .zip(cache.x0.data())
            .zip(g_x0.data_mut().iter_mut())
            .zip(pre.data())
        {
            *o = *o + *gp * p;
            *gp = *gp * a;
        }
        let layer = &params.cross[l];
        let gl = &mut grads.cross[l];
        let through = affine_backward_into(
            &g_pre,
            &cache.cross_inputs[l],
            &layer.weight,
            &mut gl.weight,
            &mut gl.bias,
            true,
        )?
        .expect("input gradient");
        for (gi, &t) in g.data_mut().iter_mut().zip(through.data()) {
            *gi = *gi + t;
        }
    }
    for (gi, &o) in g.data_mut().iter_mut().zip(g_x0.data()) {
        *gi = *gi + o;
    }

    let d_e = params.embedding_dim();
    for (f, grad_table) in grads.embeddings.iter_mut().enumerate() {
        embedding_backward_into(grad_table, &cache.ids[f], &g, f * d_e)?;
    }
    Ok(())
}

/// `f` on a batch: returns `(logits, clamped probabilities)`, both `[B x 1]`.
pub fn head_forward<T: Real>(
    params: &ModelParams<T>,
    z: &Tensor2<T>,
) -> Result<(Tensor2<T>, Vec<T>)> {
    let logits = affine_forward(z, &params.head.weight, &params.head.bias)?;
    let probs = logits
        .data()
        .iter()
        .map(|&l| clamp_probability(sigmoid(l)))
        .collect();
    Ok((logits, probs))
}

/// Accumulates head gradients and returns `dL/dz` for `dL/dlogit`.
pub fn head_backward<T: Real>(
    params: &ModelParams<T>,
    z: &Tensor2<T>,
    grad_logits: &Tensor2<T>,
    grads: &mut ModelParams<T>,
) -> Result<Tensor2<T>> {
    Ok(affine_backward_into(
        grad_logits,
        z,
        &params.head.weight,
        &mut grads.head.weight,
        &mut grads.head.bias,
        true,
    )?
    .expect("input gradient"))
}

#[derive(Debug, Clone)]
pub struct DenoiseCache<T> {
    input: Tensor2<T>,
    hidden_pre: Tensor2<T>,
    hidden: Tensor2<T>,
    step_width: usize,
}

/// `g`: `[s, z_T] -> affine -> ReLU -> affine -> d_z`.
///
/// `step` holds one conditioning row per sample (`[B x N]`).
pub fn denoise_batch<T: Real>(
    params: &ModelParams<T>,
    step: &Tensor2<T>,
    z_noisy: &Tensor2<T>,
) -> Result<(Tensor2<T>, DenoiseCache<T>)> {
    let input = step.hcat(z_noisy)?;
    let [first, second] = &params.denoiser;
    let hidden_pre = affine_forward(&input, &first.weight, &first.bias)?;
    let hidden = relu_forward(&hidden_pre);
    let out = affine_forward(&hidden, &second.weight, &second.bias)?;
    Ok((
        out,
        DenoiseCache {
            input,
            hidden_pre,
            hidden,
            step_width: step.cols(),
        },
    ))
}

/// Accumulates denoiser gradients and returns `dL/dz_T`.
pub fn denoise_backward<T: Real>(
    params: &ModelParams<T>,
    cache: &DenoiseCache<T>,
    grad_out: &Tensor2<T>,
    grads: &mut ModelParams<T>,
) -> Result<Tensor2<T>> {
    let [first, second] = &params.denoiser;
    let [g_first, g_second] = &mut grads.denoiser;
    let g_hidden = affine_backward_into(
        grad_out,
        &cache.hidden,
        &second.weight,
        &mut g_second.weight,
        &mut g_second.bias,
        true,
    )?
    .expect("input gradient");
    let g_pre = relu_backward(&g_hidden, &cache.hidden_pre)?;
    let g_input = affine_backward_into(
        &g_pre,
        &cache.input,
        &first.weight,
        &mut g_first.weight,
        &mut g_first.bias,
        true,
    )?
    .expect("input gradient");
    let latent = g_input.cols() - cache.step_width;
    g_input.column_slice(cache.step_width, latent)
}

/// `h(x)` for a single sample.
pub fn extract<T: Real>(params: &ModelParams<T>, sample: &Sample) -> Result<LatentRep<T>> {
    let (z, _) = extract_batch(params, &[sample])?;
    Ok(LatentRep(z.into_data()))
}

/// `f(z) = σ(wᵀz + b)`, clamped to `[ε, 1-ε]`.
pub fn predict<T: Real>(params: &ModelParams<T>, z: &LatentRep<T>) -> Result<T> {
    let (_, p) = head_forward(params, &z.to_row())?;
    Ok(p[0])
}

/// `g([s, z_T])` for a single sample.
pub fn denoise<T: Real>(
    params: &ModelParams<T>,
    mask: &DropoutMask,
    z_noisy: &LatentRep<T>,
) -> Result<LatentRep<T>> {
    let mut step = Tensor2::zeros(1, mask.len());
    mask.write_reals(step.row_mut(0));
    let (out, _) = denoise_batch(params, &step, &z_noisy.to_row())?;
    Ok(LatentRep(out.into_data()))
}

/// `f(h(x))` probabilities for a batch.
pub fn base_scores<T: Real>(params: &ModelParams<T>, samples: &[&Sample]) -> Result<Vec<T>> {
    let (z, _) = extract_batch(params, samples)?;
    Ok(head_forward(params, &z)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureDescriptor, FeatureSchema, MISSING};
    use crate::model::{init_params, ModelConfig};
    use crate::numeric::ParamSet;
    use proptest::prelude::*;

    fn schema(n: usize) -> FeatureSchema {
        FeatureSchema::new(
            (0..n)
                .map(|i| FeatureDescriptor::new(format!("f{i}"), (0..3).map(|v| v.to_string())))
                .collect(),
            None,
        )
        .unwrap()
    }

    fn tiny() -> ModelConfig {
        ModelConfig {
            embedding_dim: 2,
            latent_dim: 3,
            mlp_hidden: vec![4],
            cross_layers: 1,
            denoiser_hidden: 4,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn zero_weights_give_final_bias() {
        let cfg = ModelConfig {
            cross_layers: 0,
            mlp_hidden: vec![],
            latent_dim: 4,
            embedding_dim: 2,
            ..ModelConfig::default()
        };
        let mut p: ModelParams<f64> = init_params(&schema(2), &cfg, 1).unwrap();
        p.mlp[0].weight.fill(0.0);
        p.mlp[0].bias = vec![0.5, -1.0, 2.0, 0.25];
        let z = extract(&p, &Sample::new(true, 0, vec![1, 2])).unwrap();
        assert_eq!(z.0, vec![0.5, -1.0, 2.0, 0.25]);
    }

    #[test]
    fn cross_layer_hand_oracle() {
        // One feature, d_e = 2, one cross layer, identity MLP projection.
        let s = schema(1);
        let cfg = ModelConfig {
            embedding_dim: 2,
            latent_dim: 2,
            mlp_hidden: vec![],
            cross_layers: 1,
            ..ModelConfig::default()
        };
        let mut p: ModelParams<f64> = init_params(&s, &cfg, 0).unwrap();
        p.embeddings[0].row_mut(1).copy_from_slice(&[0.5, -2.0]);
        p.cross[0].weight = Tensor2::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        p.cross[0].bias = vec![0.1, -0.2];
        p.mlp[0].weight = Tensor2::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        p.mlp[0].bias = vec![0.0, 0.0];
        let z = extract(&p, &Sample::new(false, 0, vec![1])).unwrap();
        // x0 ⊙ (x0 W + b) + x0, x0 W = [0.5 - 6, 1 - 8] = [-5.5, -7]
        let x0 = [0.5, -2.0];
        let pre = [-5.5 + 0.1, -7.0 - 0.2];
        let expect = [x0[0] * pre[0] + x0[0], x0[1] * pre[1] + x0[1]];
        assert_eq!(z.0, expect.to_vec());
    }

    #[test]
    fn predict_values() {
        let s = schema(1);
        let cfg = ModelConfig {
            latent_dim: 1,
            ..tiny()
        };
        let mut p: ModelParams<f64> = init_params(&s, &cfg, 0).unwrap();
        p.head.weight.fill(0.0);
        assert_eq!(predict(&p, &LatentRep(vec![3.7])).unwrap(), 0.5);
        p.head.bias = vec![30.0];
        assert!(predict(&p, &LatentRep(vec![0.0])).unwrap() >= 1.0 - 1e-7);
        p.head.bias = vec![0.0];
        p.head.weight.fill(1.0);
        let y = predict(&p, &LatentRep(vec![0.5])).unwrap();
        assert!((y - 0.622_459_331_201_854_6).abs() < 1e-12);
    }

    #[test]
    fn denoise_zero_weights_and_mask_sensitivity() {
        let s = schema(2);
        let mut p: ModelParams<f64> = init_params(&s, &tiny(), 4).unwrap();
        let z = LatentRep(vec![0.3, -0.1, 0.8]);
        let a = denoise(&p, &DropoutMask::new(vec![false, false]), &z).unwrap();
        let b = denoise(&p, &DropoutMask::new(vec![true, false]), &z).unwrap();
        assert_eq!(a.len(), 3);
        assert_ne!(a, b);

        p.denoiser[0].weight.fill(0.0);
        p.denoiser[1].weight.fill(0.0);
        p.denoiser[1].bias = vec![1.0, 2.0, 3.0];
        let c = denoise(&p, &DropoutMask::new(vec![true, true]), &z).unwrap();
        assert_eq!(c.0, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn denoise_hand_oracle() {
        // N = 2, d_z = 2, hidden = 2.
        let s = schema(2);
        let cfg = ModelConfig {
            latent_dim: 2,
            denoiser_hidden: 2,
            ..tiny()
        };
        let mut p: ModelParams<f64> = init_params(&s, &cfg, 0).unwrap();
        p.denoiser[0].weight = Tensor2::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, -1.0],
            vec![0.5, 0.5],
            vec![-1.0, 2.0],
        ])
        .unwrap();
        p.denoiser[0].bias = vec![0.0, 0.25];
        p.denoiser[1].weight = Tensor2::from_rows(&[vec![2.0, 1.0], vec![-1.0, 3.0]]).unwrap();
        p.denoiser[1].bias = vec![0.5, -0.5];
        let out = denoise(
            &p,
            &DropoutMask::new(vec![true, false]),
            &LatentRep(vec![1.0, 0.5]),
        )
        .unwrap();
        // input [1, 0, 1, 0.5]
        let h0 = (1.0f64 * 1.0 + 0.0 + 1.0 * 0.5 + 0.5 * -1.0 + 0.0).max(0.0);
        let h1 = (0.0 + 0.0 * -1.0 + 1.0 * 0.5 + 0.5 * 2.0 + 0.25f64).max(0.0);
        let expect = vec![h0 * 2.0 + h1 * -1.0 + 0.5, h0 * 1.0 + h1 * 3.0 - 0.5];
        assert_eq!(out.0, expect);
    }

    #[test]
    fn out_of_vocabulary_token_is_error() {
        let p: ModelParams<f64> = init_params(&schema(2), &tiny(), 0).unwrap();
        let err = extract(&p, &Sample::new(true, 0, vec![1, 9])).unwrap_err();
        assert!(matches!(err, Error::TokenOutOfRange { token: 9, .. }));
    }

    #[test]
    fn batch_matches_single_and_is_deterministic() {
        let p: ModelParams<f64> = init_params(&schema(3), &tiny(), 5).unwrap();
        let a = Sample::new(true, 0, vec![1, 2, 3]);
        let b = Sample::new(false, 0, vec![MISSING, 1, 3]);
        let (z, _) = extract_batch(&p, &[&a, &b]).unwrap();
        let za = extract(&p, &a).unwrap();
        let zb = extract(&p, &b).unwrap();
        for j in 0..3 {
            assert!((z.get(0, j) - za.0[j]).abs() < 1e-14);
            assert!((z.get(1, j) - zb.0[j]).abs() < 1e-14);
        }
        assert_eq!(extract(&p, &a).unwrap(), za);
    }

    #[test]
    fn extract_backward_matches_finite_differences() {
        let s = schema(3);
        let cfg = ModelConfig {
            cross_layers: 2,
            ..tiny()
        };
        let p: ModelParams<f64> = init_params(&s, &cfg, 8).unwrap();
        let batch = [
            Sample::new(true, 0, vec![1, 2, 0]),
            Sample::new(false, 0, vec![3, 2, 1]),
            Sample::new(true, 0, vec![1, 0, 2]),
        ];
        let refs: Vec<&Sample> = batch.iter().collect();
        let probe = Tensor2::from_rows(&[
            vec![0.3, -0.7, 1.1],
            vec![-0.2, 0.5, 0.9],
            vec![1.3, 0.1, -0.4],
        ])
        .unwrap();
        let loss = |q: &ModelParams<f64>| -> f64 {
            let (z, _) = extract_batch(q, &refs).unwrap();
            z.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = extract_batch(&p, &refs).unwrap();
        let mut grads = p.zeros_like();
        extract_backward(&p, &cache, &probe, &mut grads).unwrap();
        let report = crate::numeric::grad_check(&p, &grads, loss, 1e-5);
        for b in &report.blocks {
            if b.name.starts_with("head") || b.name.starts_with("denoiser") {
                continue;
            }
            assert!(b.passed, "{b:?}");
        }
        assert!(grads.block(grads.block_count() - 1).iter().all(|&x| x == 0.0));
    }

    proptest! {
        #[test]
        fn extract_total_over_missingness(bits in prop::collection::vec(any::<bool>(), 5), seed in 0u64..50) {
            let p: ModelParams<f64> = init_params(&schema(5), &tiny(), seed).unwrap();
            let features = bits.iter().enumerate().map(|(i, &m)| if m { MISSING } else { 1 + (i as u32 % 3) }).collect();
            let x = Sample::new(true, 0, features);
            let z = extract(&p, &x).unwrap();
            prop_assert_eq!(z.len(), 3);
            prop_assert!(z.0.iter().all(|v| v.is_finite()));
            let mask = crate::features::mask_from_observed(&x);
            let g = denoise(&p, &mask, &z).unwrap();
            prop_assert_eq!(g.len(), 3);
        }
    }
}

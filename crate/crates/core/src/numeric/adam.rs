use serde::{Deserialize, Serialize};

use super::{ParamSet, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam hyperparameters {self:?}")))
        }
    }
}

/// Moment buffers, one per parameter block, plus the update counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new<P: ParamSet<T>>(config: AdamConfig, params: &P) -> Self {
        let sizes: Vec<usize> = (0..params.block_count())
            .map(|i| params.block(i).len())
            .collect();
        Self {
            config,
            step: 0,
            first: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            second: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }
}

/// One bias-corrected Adam update of every block.
///
/// Gradients are checked for finiteness before anything is mutated, so a
/// failed step leaves parameters and moments untouched.
pub fn adam_step<T: Real, P: ParamSet<T>>(
    state: &mut AdamState<T>,
    params: &mut P,
    grads: &P,
) -> Result<()> {
    let blocks = params.block_count();
    if grads.block_count() != blocks || state.first.len() != blocks {
        return Err(Error::shape(
            "adam_step",
            format!(
                "{blocks} parameter blocks, {} gradient blocks, {} moment blocks",
                grads.block_count(),
                state.first.len()
            ),
        ));
    }
    for i in 0..blocks {
        let (p, g) = (params.block(i).len(), grads.block(i).len());
        if p != g || state.first[i].len() != p {
            return Err(Error::shape(
                "adam_step",
                format!("block '{}': {p} params, {g} grads", params.block_name(i)),
            ));
        }
        if grads.block(i).iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient {
                step: state.step + 1,
                block: params.block_name(i),
            });
        }
    }

    state.step += 1;
    let cfg = state.config;
    let t = state.step as i32;
    let b1 = T::from_f64(cfg.beta1);
    let b2 = T::from_f64(cfg.beta2);
    let one = T::one();
    let correction1 = T::from_f64(1.0 - cfg.beta1.powi(t));
    let correction2 = T::from_f64(1.0 - cfg.beta2.powi(t));
    let lr = T::from_f64(cfg.learning_rate);
    let eps = T::from_f64(cfg.epsilon);

    for i in 0..blocks {
        let g = grads.block(i);
        let m = &mut state.first[i];
        let v = &mut state.second[i];
        let p = params.block_mut(i);
        for j in 0..p.len() {
            m[j] = b1 * m[j] + (one - b1) * g[j];
            v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
            let m_hat = m[j] / correction1;
            let v_hat = v[j] / correction2;
            p[j] = p[j] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::DropoutMask;
use crate::model::{denoise, LatentRep, ModelParams};
use crate::numeric::Real;

/// Linear β schedule for latent Gaussian diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianSchedule {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for GaussianSchedule {
    fn default() -> Self {
        Self {
            steps: 10,
            beta_start: 1e-4,
            beta_end: 0.1,
        }
    }
}

impl GaussianSchedule {
    pub fn validate(&self) -> Result<()> {
        let in_range = |b: f64| (0.0..1.0).contains(&b);
        if self.steps == 0 || !in_range(self.beta_start) || !in_range(self.beta_end) {
            return Err(Error::Config(format!(
                "gaussian schedule needs steps >= 1 and betas in [0, 1), got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn betas(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.beta_start];
        }
        let span = self.beta_end - self.beta_start;
        (0..self.steps)
            .map(|i| self.beta_start + span * i as f64 / (self.steps - 1) as f64)
            .collect()
    }

    /// `ᾱ_k = Π_{i ≤ k} (1 - β_i)` for `k` in `1..=K`.
    pub fn alpha_bar(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.steps {
            return Err(Error::Config(format!(
                "diffusion step {k} outside 1..={}",
                self.steps
            )));
        }
        Ok(self.betas()[..k].iter().map(|b| 1.0 - b).product())
    }

    /// Uniform over `1..=K`.
    pub fn sample_step<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(1..=self.steps)
    }
}

/// Step conditioning for the shared denoiser: a thermometer code of
/// `ceil(k N / K)` leading ones in the `N`-wide mask slot.
pub fn step_conditioning(k: usize, total_steps: usize, n: usize) -> DropoutMask {
    let ones = (k * n).div_ceil(total_steps.max(1)).min(n);
    DropoutMask::new((0..n).map(|i| i < ones).collect())
}

/// Draws `ε ~ N(0, I)` of length `d`.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// `z_k = √ᾱ_k z0 + √(1 - ᾱ_k) ε`.
pub fn gaussian_forward<T: Real, R: Rng + ?Sized>(
    z0: &LatentRep<T>,
    k: usize,
    schedule: &GaussianSchedule,
    rng: &mut R,
) -> Result<LatentRep<T>> {
    let ab = schedule.alpha_bar(k)?;
    let eps = standard_normal(rng, z0.len());
    Ok(mix(z0, &eps, ab))
}

pub(crate) fn mix<T: Real>(z0: &LatentRep<T>, eps: &[f64], alpha_bar: f64) -> LatentRep<T> {
    let a = T::from_f64(alpha_bar.sqrt());
    let s = T::from_f64((1.0 - alpha_bar).sqrt());
    LatentRep(
        z0.0.iter()
            .zip(eps)
            .map(|(&z, &e)| a * z + s * T::from_f64(e))
            .collect(),
    )
}

/// `||g([c(k), z_k]) - z0||²` for one latent.
pub fn gaussian_reverse_loss<T: Real, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    z0: &LatentRep<T>,
    k: usize,
    schedule: &GaussianSchedule,
    rng: &mut R,
) -> Result<T> {
    let zk = gaussian_forward(z0, k, schedule, rng)?;
    let cond = step_conditioning(k, schedule.steps, params.num_features());
    let out = denoise(params, &cond, &zk)?;
    crate::trainer::loss_recon(&out, z0)
}

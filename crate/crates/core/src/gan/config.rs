use serde::{Deserialize, Serialize};

use crate::physics::BLOCKS;
use crate::{Error, Result};

/// Hyper-parameters of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub log_every_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub latent_dim: usize,
    /// Weight of the spectral discriminator in the generator loss.
    pub w_d2: f64,
    /// Weight of the spectral regularizer in the generator loss.
    pub w_sr: f64,
    /// Disable D2 and the regularizer, leaving a plain DCGAN.
    pub ablation_baseline: bool,
    pub seed: u64,
    /// Generated image side; a multiple of 8 (three doublings of the seed grid).
    pub image_size: usize,
    /// Narrowest generator width; the seed tensor has `8 * base_channels` channels.
    pub base_channels: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            log_every_steps: 5,
            batch_size: 16,
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.99,
            latent_dim: 100,
            w_d2: 0.5,
            w_sr: 0.1,
            ablation_baseline: false,
            seed: 42,
            image_size: 32,
            base_channels: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, reason: String| Err(Error::validation(field, reason));
        if self.epochs == 0 {
            return fail("epochs", "must be at least 1".into());
        }
        if self.batch_size < 2 {
            return fail("batch_size", format!("{} < 2", self.batch_size));
        }
        if self.log_every_steps == 0 {
            return fail("log_every_steps", "must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate", format!("{} is not positive", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(name, format!("{b} outside [0, 1)"));
            }
        }
        if self.latent_dim == 0 || self.latent_dim % BLOCKS != 0 {
            return fail("latent_dim", format!("{} is not a positive multiple of {BLOCKS}", self.latent_dim));
        }
        for (name, w) in [("w_d2", self.w_d2), ("w_sr", self.w_sr)] {
            if !(w >= 0.0 && w.is_finite()) {
                return fail(name, format!("{w} is negative or non-finite"));
            }
        }
        if self.image_size % 8 != 0 || self.image_size < 32 {
            return fail("image_size", format!("{} is not a multiple of 8 of at least 32", self.image_size));
        }
        if self.base_channels == 0 {
            return fail("base_channels", "must be at least 1".into());
        }
        Ok(())
    }

    /// Side of the projected seed grid.
    pub fn seed_side(&self) -> usize {
        self.image_size / 8
    }

    /// Loss weights after applying the ablation switch.
    pub fn effective_weights(&self) -> (f64, f64) {
        if self.ablation_baseline {
            (0.0, 0.0)
        } else {
            (self.w_d2, self.w_sr)
        }
    }
}

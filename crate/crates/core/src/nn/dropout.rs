use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

/// Inverted dropout. `keep_prob` is the probability an activation survives;
/// survivors are scaled by `1 / keep_prob` so the expectation is unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutConfig {
    pub keep_prob: f64,
    pub seed: u64,
    pub train_mode: bool,
}

impl DropoutConfig {
    pub fn eval() -> Self {
        Self { keep_prob: 1.0, seed: 0, train_mode: false }
    }

    pub fn train(keep_prob: f64, seed: u64) -> Self {
        Self { keep_prob, seed, train_mode: true }
    }

    pub fn is_active(&self) -> bool {
        self.train_mode && self.keep_prob < 1.0
    }

    pub fn is_valid(&self) -> bool {
        self.keep_prob > 0.0 && self.keep_prob <= 1.0
    }
}

/// Draw a multiplicative mask of `n` entries, each `0` or `1 / keep_prob`.
pub(crate) fn draw_mask(n: usize, keep_prob: f64, rng: &mut Rng) -> Vec<f64> {
    let scale = 1.0 / keep_prob;
    (0..n).map(|_| if rng.gen::<f64>() < keep_prob { scale } else { 0.0 }).collect()
}

/// Apply dropout to a flat activation array.
pub fn dropout_apply(activations: &[f64], cfg: &DropoutConfig) -> Vec<f64> {
    if !cfg.is_active() {
        return activations.to_vec();
    }
    let mut rng = crate::rng::rng_from(cfg.seed);
    let mask = draw_mask(activations.len(), cfg.keep_prob, &mut rng);
    activations.iter().zip(&mask).map(|(a, m)| a * m).collect()
}

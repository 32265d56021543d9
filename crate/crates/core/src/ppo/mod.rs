//! PPO training for the feature policy.
//!
//! Each round: snapshot the policy, collect stratified batches of stochastic
//! rollouts, score every batch once with the set-level reward, turn batch
//! returns into per-token advantages (EMA baseline, then normalization across
//! the round), and take clipped-surrogate gradient steps that reuse the
//! frozen rollouts for several epochs.
//!
//! There is no critic: the reward is a single scalar per batch, so a learned
//! value function would have no per-state signal to fit. An EMA baseline over
//! batch returns does the variance reduction instead, and every token of a
//! batch shares that batch's advantage.

mod loss;
mod rollout;
mod train;

pub use loss::{ppo_loss, surrogate, SurrogateStats};
pub use rollout::{collect_rollouts, BatchSampler, RolloutBuffer, RolloutItem};
pub use train::{train, TrainLog, TrainRow};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelError;
use crate::rewards::RewardError;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("invalid ppo config: {0}")]
    Config(String),

    #[error("cannot build a stratified batch: {0}")]
    Stratification(String),

    #[error("{0} advantages for {1} windows")]
    AdvantageCount(usize, usize),

    #[error("non-finite {what} at round {round}: {detail}")]
    NonFinite { what: &'static str, round: usize, detail: String },

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Reward(#[from] RewardError),

    #[error(transparent)]
    Num(#[from] crate::numkit::NumError),
}

/// Shape of one stratified rollout batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchSpec {
    pub classes_per_batch: usize,
    pub users_per_class: usize,
    pub windows_per_cell: usize,
}

impl Default for BatchSpec {
    fn default() -> Self {
        // 4 x 2 x 2 keeps both reward terms defined: >= 2 classes for the
        // discrimination pairs, >= 2 users per class for the invariance term.
        BatchSpec { classes_per_batch: 4, users_per_class: 2, windows_per_cell: 2 }
    }
}

impl BatchSpec {
    pub fn windows_per_batch(&self) -> usize {
        self.classes_per_batch * self.users_per_class * self.windows_per_cell
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    /// Clip width for the surrogate ratio.
    pub epsilon: f64,
    pub learning_rate: f64,
    /// Training rounds; 0 is a valid no-op.
    pub rounds: usize,
    /// Gradient passes over each round's frozen rollouts.
    pub ppo_epochs_per_round: usize,
    /// Independent stratified batches collected per round; advantages are
    /// normalized across all of them.
    pub buffers_per_round: usize,
    pub batch: BatchSpec,
    /// Weight on class discrimination.
    pub w_cls: f64,
    /// Weight on user invariance.
    pub w_inv: f64,
    /// EMA factor for the return baseline.
    pub baseline_decay: f64,
    /// Guard added to the advantage std before dividing.
    pub adv_norm_eps: f64,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            epsilon: 0.2,
            learning_rate: 3e-4,
            rounds: 90,
            ppo_epochs_per_round: 4,
            buffers_per_round: 4,
            batch: BatchSpec::default(),
            w_cls: 5.0,
            w_inv: 0.5,
            baseline_decay: 0.9,
            adv_norm_eps: 1e-8,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |msg: String| Err(PpoError::Config(msg));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.ppo_epochs_per_round == 0 {
            return bad("ppo_epochs_per_round must be at least 1".into());
        }
        if self.buffers_per_round == 0 {
            return bad("buffers_per_round must be at least 1".into());
        }
        let b = &self.batch;
        if b.classes_per_batch == 0 || b.users_per_class == 0 || b.windows_per_cell == 0 {
            return bad("every batch dimension must be at least 1".into());
        }
        if !(self.w_cls >= 0.0) || !(self.w_inv >= 0.0) {
            return bad(format!(
                "reward weights must be non-negative, got w_cls={} w_inv={}",
                self.w_cls, self.w_inv
            ));
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad(format!(
                "baseline_decay must be in [0, 1), got {}",
                self.baseline_decay
            ));
        }
        if !(self.adv_norm_eps > 0.0) {
            return bad(format!("adv_norm_eps must be positive, got {}", self.adv_norm_eps));
        }
        Ok(())
    }
}

/// Exponential moving average over batch returns. Starts unset; the first
/// observed return initializes it, making the first advantage exactly zero.
#[derive(Debug, Clone, Default)]
pub struct EmaBaseline {
    value: Option<f64>,
}

impl EmaBaseline {
    pub fn new() -> Self {
        EmaBaseline { value: None }
    }

    pub fn value(&self) -> Option<f64> {
        self.value
    }

    /// Raw advantage of `ret` against the pre-update baseline, then fold
    /// `ret` into the average.
    fn observe(&mut self, ret: f64, decay: f64) -> f64 {
        let pre = self.value.unwrap_or(ret);
        self.value = Some(decay * pre + (1.0 - decay) * ret);
        ret - pre
    }
}

/// One advantage per buffer, shared by every token of every window in it.
///
/// The raw advantage is the batch return minus the EMA baseline; raws are
/// then normalized to zero mean and unit std across the whole slice (the
/// round's update window). When all returns agree the std is zero and the
/// eps guard maps everything to exactly 0.
pub fn compute_advantages(
    buffers: &[RolloutBuffer],
    baseline: &mut EmaBaseline,
    cfg: &PpoConfig,
) -> Vec<f64> {
    let raw: Vec<f64> = buffers
        .iter()
        .map(|b| baseline.observe(b.reward.j, cfg.baseline_decay))
        .collect();
    if raw.is_empty() {
        return raw;
    }
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let var = raw.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / raw.len() as f64;
    let denom = var.sqrt() + cfg.adv_norm_eps;
    raw.into_iter().map(|r| (r - mean) / denom).collect()
}

//! Stratified rollout collection.
//!
//! A batch is classes_per_batch x users_per_class x windows_per_cell windows,
//! so both reward terms see the structure they need. Rollouts are stochastic
//! and their log-probs are frozen into the buffer: they are what the PPO
//! ratio denominators mean by "the old policy".

use std::collections::BTreeMap;

use crate::data::Dataset;
use crate::model::{Episode, PolicyNetwork};
use crate::numkit::{Matrix, Rng};
use crate::rewards::{combined_objective, RewardBatch, RewardBreakdown};

use super::{BatchSpec, PpoConfig, PpoError};

/// One window's rollout inside a buffer.
#[derive(Debug, Clone)]
pub struct RolloutItem {
    /// The window content, kept so later epochs can re-encode it.
    pub x: Matrix,
    pub y: usize,
    pub user: u32,
    /// Index of the window in the dataset the buffer was drawn from.
    pub window: usize,
    /// Stochastic rollout under the snapshot policy; `logprobs` are the
    /// frozen old log-probs and are never recomputed.
    pub episode: Episode,
}

/// One stratified batch of frozen rollouts plus its set-level reward.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub items: Vec<RolloutItem>,
    pub reward: RewardBreakdown,
}

/// Index of dataset windows by (class, user), ready for stratified draws.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    /// class -> user -> window indices, all non-empty by construction.
    cells: BTreeMap<usize, BTreeMap<u32, Vec<usize>>>,
}

impl BatchSampler {
    pub fn new(data: &Dataset) -> Self {
        let mut cells: BTreeMap<usize, BTreeMap<u32, Vec<usize>>> = BTreeMap::new();
        for (i, w) in data.windows.iter().enumerate() {
            cells.entry(w.y).or_default().entry(w.user).or_default().push(i);
        }
        BatchSampler { cells }
    }

    /// Restrict to the given window indices (e.g. the source split).
    pub fn new_subset(data: &Dataset, indices: &[usize]) -> Self {
        let mut cells: BTreeMap<usize, BTreeMap<u32, Vec<usize>>> = BTreeMap::new();
        for &i in indices {
            let w = &data.windows[i];
            cells.entry(w.y).or_default().entry(w.user).or_default().push(i);
        }
        BatchSampler { cells }
    }

    /// Draw one stratified batch of window indices.
    ///
    /// Classes and users are drawn without replacement. Windows within a
    /// (class, user) cell are drawn without replacement when the cell is
    /// large enough, with replacement otherwise — a small cell is usable,
    /// an absent one is not.
    pub fn sample(&self, spec: &BatchSpec, rng: &mut Rng) -> Result<Vec<usize>, PpoError> {
        let eligible: Vec<usize> = self
            .cells
            .iter()
            .filter(|(_, users)| users.len() >= spec.users_per_class)
            .map(|(&c, _)| c)
            .collect();
        if eligible.len() < spec.classes_per_batch {
            let detail = self
                .cells
                .iter()
                .find(|(_, users)| users.len() < spec.users_per_class)
                .map(|(c, users)| {
                    format!(" (class {c} has {} users, needs {})", users.len(), spec.users_per_class)
                })
                .unwrap_or_default();
            return Err(PpoError::Stratification(format!(
                "need {} classes with at least {} users each, found {}{}",
                spec.classes_per_batch,
                spec.users_per_class,
                eligible.len(),
                detail
            )));
        }

        let mut out = Vec::with_capacity(spec.windows_per_batch());
        for ci in rng.choose_distinct(eligible.len(), spec.classes_per_batch) {
            let class = eligible[ci];
            let users: Vec<u32> = self.cells[&class].keys().copied().collect();
            for ui in rng.choose_distinct(users.len(), spec.users_per_class) {
                let cell = &self.cells[&class][&users[ui]];
                if cell.len() >= spec.windows_per_cell {
                    for wi in rng.choose_distinct(cell.len(), spec.windows_per_cell) {
                        out.push(cell[wi]);
                    }
                } else {
                    for _ in 0..spec.windows_per_cell {
                        out.push(cell[rng.below(cell.len())]);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Roll out one stratified batch under the current policy and score it once.
pub fn collect_rollouts(
    net: &PolicyNetwork,
    data: &Dataset,
    sampler: &BatchSampler,
    cfg: &PpoConfig,
    rng: &mut Rng,
) -> Result<RolloutBuffer, PpoError> {
    let indices = sampler.sample(&cfg.batch, rng)?;
    let mut items = Vec::with_capacity(indices.len());
    for idx in indices {
        let w = &data.windows[idx];
        let episode = net.rollout_stochastic(&w.x, rng)?;
        items.push(RolloutItem {
            x: w.x.clone(),
            y: w.y,
            user: w.user,
            window: idx,
            episode,
        });
    }
    let batch = RewardBatch::new(
        items.iter().map(|it| it.episode.tokens.clone()).collect(),
        items.iter().map(|it| it.y).collect(),
        items.iter().map(|it| it.user).collect(),
    )?;
    let reward = combined_objective(&batch, cfg.w_cls, cfg.w_inv)?;
    Ok(RolloutBuffer { items, reward })
}

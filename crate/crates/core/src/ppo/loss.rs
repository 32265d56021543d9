//! The clipped surrogate objective.
//!
//! Per token: ratio = exp(logpi_new - logpi_old), objective
//! min(ratio * adv, clip(ratio, 1-eps, 1+eps) * adv); the loss is the
//! negated mean over all tokens of the buffer. Gradients reach the policy
//! only through logpi_new — old log-probs and advantages enter as constants.

use crate::model::BoundPolicy;
use crate::numkit::{Graph, Matrix, Node};

use super::{PpoError, RolloutBuffer};

/// Ratio diagnostics for one surrogate evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct SurrogateStats {
    /// Fraction of tokens with ratio outside [1-eps, 1+eps].
    pub clip_frac: f64,
    pub mean_abs_ratio_minus_1: f64,
}

/// loss = -mean(min(ratio * adv, clip(ratio) * adv)) over all entries.
///
/// Exposed separately from [`ppo_loss`] so the clip arithmetic can be pinned
/// against exact ratios.
pub fn surrogate(
    g: &mut Graph,
    ratio: Node,
    adv: Node,
    epsilon: f64,
) -> Result<Node, PpoError> {
    let unclipped = g.mul(ratio, adv)?;
    let clipped_ratio = g.clamp(ratio, 1.0 - epsilon, 1.0 + epsilon)?;
    let clipped = g.mul(clipped_ratio, adv)?;
    let per_token = g.min_elem(unclipped, clipped)?;
    let mean = g.mean_all(per_token)?;
    Ok(g.scale(mean, -1.0)?)
}

/// Build the surrogate loss for one buffer under the bound (current) policy.
///
/// `advantages` carries one value per window, shared by its tokens: batch
/// rewards give no finer credit, so there is nothing more granular to assign.
pub fn ppo_loss(
    g: &mut Graph,
    bound: &BoundPolicy,
    buffer: &RolloutBuffer,
    advantages: &[f64],
    epsilon: f64,
) -> Result<(Node, SurrogateStats), PpoError> {
    if advantages.len() != buffer.items.len() {
        return Err(PpoError::AdvantageCount(advantages.len(), buffer.items.len()));
    }
    let s = bound.config().s;
    let mut ratio_parts = Vec::with_capacity(buffer.items.len());
    let mut adv_parts = Vec::with_capacity(buffer.items.len());
    for (item, &a) in buffer.items.iter().zip(advantages) {
        let h = bound.encode(g, &item.x)?;
        let logp_new = bound.log_prob(g, h, &item.episode.tokens)?;
        let logp_old = g.leaf(Matrix::new(s, 1, item.episode.logprobs.clone())?);
        let diff = g.sub(logp_new, logp_old)?;
        ratio_parts.push(g.exp(diff)?);
        adv_parts.push(g.leaf(Matrix::filled(s, 1, a)));
    }
    let ratio = g.concat_rows(&ratio_parts)?;
    let adv = g.concat_rows(&adv_parts)?;

    let lo = 1.0 - epsilon;
    let hi = 1.0 + epsilon;
    let mut outside = 0usize;
    let mut abs_dev = 0.0;
    let ratios = g.value(ratio).as_slice();
    for &r in ratios {
        if r < lo || r > hi {
            outside += 1;
        }
        abs_dev += (r - 1.0).abs();
    }
    let n = ratios.len() as f64;
    let stats = SurrogateStats {
        clip_frac: outside as f64 / n,
        mean_abs_ratio_minus_1: abs_dev / n,
    };

    let loss = surrogate(g, ratio, adv, epsilon)?;
    Ok((loss, stats))
}

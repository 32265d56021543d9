//! The round-based training loop and its optimizer.

use crate::data::Dataset;
use crate::model::PolicyNetwork;
use crate::numkit::{Graph, Matrix, Rng};

use super::{
    collect_rollouts, compute_advantages, ppo_loss, BatchSampler, EmaBaseline, PpoConfig,
    PpoError, RolloutBuffer,
};

/// Per-round training metrics. Reward fields average over the round's
/// buffers; loss and ratio fields average over its gradient steps.
#[derive(Debug, Clone)]
pub struct TrainRow {
    pub round: usize,
    pub j: f64,
    pub r_cls: f64,
    pub r_inv: f64,
    pub loss: f64,
    pub clip_frac: f64,
    pub mean_abs_ratio_minus_1: f64,
    /// Mean and std of the round's normalized advantages; both ~0 when the
    /// eps guard collapsed a constant-return round.
    pub adv_mean: f64,
    pub adv_std: f64,
}

/// Append-only training log.
#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub rows: Vec<TrainRow>,
}

impl TrainLog {
    /// CSV export: `round,j,r_cls,r_inv,loss,clip_frac,mean_abs_ratio_minus_1`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,j,r_cls,r_inv,loss,clip_frac,mean_abs_ratio_minus_1\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.round, r.j, r.r_cls, r.r_inv, r.loss, r.clip_frac, r.mean_abs_ratio_minus_1
            ));
        }
        out
    }
}

/// Adam over the parameter set, moments kept in canonical parameter order.
struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    fn new(net: &PolicyNetwork, lr: f64) -> Self {
        let zeros: Vec<Matrix> = net
            .params
            .iter()
            .map(|(_, p)| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: zeros.clone(), v: zeros }
    }

    fn step(&mut self, net: &mut PolicyNetwork, grads: &[Matrix]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (i, (_, param)) in net.params.iter_mut().enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for ((p, &g), (mi, vi)) in param
                .data_mut()
                .iter_mut()
                .zip(grads[i].as_slice())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Train a copy of `net` on `data` (every window of which is fair game —
/// callers restrict to their training split first).
///
/// Per round: collect `buffers_per_round` stratified batches under the
/// round-start policy, convert returns to advantages, then take
/// `ppo_epochs_per_round` passes of one gradient step per buffer. The whole
/// run is deterministic given the config.
pub fn train(
    net: &PolicyNetwork,
    data: &Dataset,
    cfg: &PpoConfig,
) -> Result<(PolicyNetwork, TrainLog), PpoError> {
    cfg.validate()?;
    let mut net = net.clone();
    let mut log = TrainLog::default();
    if cfg.rounds == 0 {
        return Ok((net, log));
    }

    let sampler = BatchSampler::new(data);
    let mut baseline = EmaBaseline::new();
    let mut adam = Adam::new(&net, cfg.learning_rate);
    let mut rng = Rng::new(cfg.seed);

    for round in 0..cfg.rounds {
        let buffers: Vec<RolloutBuffer> = (0..cfg.buffers_per_round)
            .map(|_| collect_rollouts(&net, data, &sampler, cfg, &mut rng))
            .collect::<Result<_, _>>()?;
        for buf in &buffers {
            if !buf.reward.j.is_finite() {
                return Err(PpoError::NonFinite {
                    what: "batch return",
                    round,
                    detail: format!(
                        "j={} r_cls={} r_inv={} over {} windows",
                        buf.reward.j,
                        buf.reward.r_cls,
                        buf.reward.r_inv,
                        buf.items.len()
                    ),
                });
            }
        }
        let advs = compute_advantages(&buffers, &mut baseline, cfg);

        let n_buf = buffers.len() as f64;
        let mut loss_sum = 0.0;
        let mut clip_sum = 0.0;
        let mut dev_sum = 0.0;
        let mut steps = 0usize;
        for _ in 0..cfg.ppo_epochs_per_round {
            for (buf, &adv) in buffers.iter().zip(&advs) {
                let mut g = Graph::new();
                let bound = net.bind(&mut g);
                let per_window = vec![adv; buf.items.len()];
                let (loss, stats) = ppo_loss(&mut g, &bound, buf, &per_window, cfg.epsilon)?;
                let loss_value = g.value(loss).item();
                if !loss_value.is_finite() {
                    return Err(PpoError::NonFinite {
                        what: "surrogate loss",
                        round,
                        detail: format!(
                            "loss={loss_value} adv={adv} j={} r_cls={} r_inv={}",
                            buf.reward.j, buf.reward.r_cls, buf.reward.r_inv
                        ),
                    });
                }
                g.backward(loss)?;
                let grads: Vec<Matrix> = bound
                    .params()
                    .map(|(name, node)| match g.grad(node) {
                        Some(grad) => grad.clone(),
                        None => {
                            let p = net.params.get(name);
                            Matrix::zeros(p.rows(), p.cols())
                        }
                    })
                    .collect();
                adam.step(&mut net, &grads);
                loss_sum += loss_value;
                clip_sum += stats.clip_frac;
                dev_sum += stats.mean_abs_ratio_minus_1;
                steps += 1;
            }
        }

        let adv_mean = advs.iter().sum::<f64>() / advs.len() as f64;
        let adv_var =
            advs.iter().map(|a| (a - adv_mean) * (a - adv_mean)).sum::<f64>() / advs.len() as f64;
        let steps_f = steps as f64;
        log.rows.push(TrainRow {
            round,
            j: buffers.iter().map(|b| b.reward.j).sum::<f64>() / n_buf,
            r_cls: buffers.iter().map(|b| b.reward.r_cls).sum::<f64>() / n_buf,
            r_inv: buffers.iter().map(|b| b.reward.r_inv).sum::<f64>() / n_buf,
            loss: loss_sum / steps_f,
            clip_frac: clip_sum / steps_f,
            mean_abs_ratio_minus_1: dev_sum / steps_f,
            adv_mean,
            adv_std: adv_var.sqrt(),
        });
    }
    Ok((net, log))
}

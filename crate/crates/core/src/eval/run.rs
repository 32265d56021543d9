//! End-to-end execution of one cross-user split.
//!
//! Train the policy on source windows, freeze it, fit the probe on source
//! deterministic features, score target windows the pipeline has never
//! touched. The leakage guard re-checks that source and target are disjoint
//! by window id and by origin on every run — a split that shares even one
//! window is a bug worth dying over, not a metric worth reporting.

use std::collections::HashSet;

use crate::classifier::{flatten, LrModel};
use crate::data::{sha256_bytes, Dataset, SplitPlan};
use crate::model::{ModelConfig, PolicyNetwork};
use crate::numkit::{derive_seed, Matrix, Rng};
use crate::ppo::{train, PpoConfig};

use super::{ConfusionMatrix, EvalError, ExperimentResult};

/// Knobs that belong to the experiment, not to the model or the trainer.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Ridge weight for the probe.
    pub probe_lambda: f64,
    /// Master seed; per-plan seeds are derived from it, so independent plans
    /// can run concurrently without sharing RNG streams.
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { probe_lambda: 1e-2, seed: 0 }
    }
}

/// Digest identifying the configuration a result was produced under.
pub fn config_digest(model_cfg: &ModelConfig, ppo_cfg: &PpoConfig, opts: &RunOptions) -> String {
    let blob = format!(
        "{}\n{}\nprobe_lambda={}\n",
        serde_json::to_string(model_cfg).expect("model config serializes"),
        serde_json::to_string(ppo_cfg).expect("ppo config serializes"),
        opts.probe_lambda,
    );
    sha256_bytes(blob.as_bytes())
}

/// Train on the plan's source users, evaluate on its target users.
pub fn run_split(
    plan: &SplitPlan,
    data: &Dataset,
    model_cfg: &ModelConfig,
    ppo_cfg: &PpoConfig,
    opts: &RunOptions,
) -> Result<ExperimentResult, EvalError> {
    let source_idx = data.windows_of(&plan.source_users);
    let target_idx = data.windows_of(&plan.target_users);
    if source_idx.is_empty() {
        return Err(EvalError::EmptySplit { plan: plan.name.clone(), side: "source" });
    }
    if target_idx.is_empty() {
        return Err(EvalError::EmptySplit { plan: plan.name.clone(), side: "target" });
    }
    {
        let users: HashSet<u32> =
            source_idx.iter().map(|&i| data.windows[i].user).collect();
        let classes: HashSet<usize> =
            source_idx.iter().map(|&i| data.windows[i].y).collect();
        if users.len() < 2 || classes.len() < 2 {
            return Err(EvalError::DegenerateSource {
                plan: plan.name.clone(),
                users: users.len(),
                classes: classes.len(),
            });
        }
    }

    // Leakage guard: no target window may appear in any training stage.
    let train_ids: HashSet<u64> = source_idx.iter().map(|&i| data.windows[i].id).collect();
    let train_origins: HashSet<_> =
        source_idx.iter().filter_map(|&i| data.windows[i].origin).collect();
    for &i in &target_idx {
        let w = &data.windows[i];
        if train_ids.contains(&w.id) {
            return Err(EvalError::Leakage { plan: plan.name.clone(), window_id: w.id });
        }
        if let Some(origin) = w.origin {
            if train_origins.contains(&origin) {
                return Err(EvalError::Leakage { plan: plan.name.clone(), window_id: w.id });
            }
        }
    }

    // Policy training sees the source subset only.
    let train_data = data.subset(&source_idx);
    let mut cfg = ppo_cfg.clone();
    cfg.seed = derive_seed(opts.seed, &["ppo", &plan.name]);
    let mut init_rng = Rng::new(derive_seed(opts.seed, &["init", &plan.name]));
    let net = PolicyNetwork::init(model_cfg.clone(), &mut init_rng)?;
    let (trained, _log) = train(&net, &train_data, &cfg)?;

    // Probe fit on deterministic source features.
    let dim = model_cfg.s * model_cfg.k;
    let mut feats = Vec::with_capacity(train_data.windows.len() * dim);
    let mut labels = Vec::with_capacity(train_data.windows.len());
    for w in &train_data.windows {
        feats.extend(flatten(&trained.rollout_deterministic(&w.x)?));
        labels.push(w.y);
    }
    let x = Matrix::new(labels.len(), dim, feats)?;
    let probe = LrModel::fit(&x, &labels, data.num_classes, opts.probe_lambda)?;

    // Score the held-out users.
    let mut cm = ConfusionMatrix::new(data.num_classes);
    for &i in &target_idx {
        let w = &data.windows[i];
        let z = flatten(&trained.rollout_deterministic(&w.x)?);
        let (pred, _) = probe.predict(&z)?;
        cm.record(w.y, pred);
    }

    Ok(ExperimentResult {
        plan: plan.name.clone(),
        accuracy: cm.accuracy()?,
        per_class_f1: cm.per_class_f1(),
        confusion: cm,
        config_digest: config_digest(model_cfg, ppo_cfg, opts),
        seed: opts.seed,
    })
}

/// Accuracy of always predicting the most common source class (smallest id
/// on ties) — the floor any learned feature has to clear.
pub fn majority_baseline(plan: &SplitPlan, data: &Dataset) -> Result<f64, EvalError> {
    let source_idx = data.windows_of(&plan.source_users);
    let target_idx = data.windows_of(&plan.target_users);
    if source_idx.is_empty() {
        return Err(EvalError::EmptySplit { plan: plan.name.clone(), side: "source" });
    }
    if target_idx.is_empty() {
        return Err(EvalError::EmptySplit { plan: plan.name.clone(), side: "target" });
    }
    let mut counts = vec![0usize; data.num_classes + 1];
    for &i in &source_idx {
        counts[data.windows[i].y] += 1;
    }
    let majority = (1..counts.len()).max_by_key(|&c| (counts[c], usize::MAX - c)).unwrap();
    let hits = target_idx.iter().filter(|&&i| data.windows[i].y == majority).count();
    Ok(hits as f64 / target_idx.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabeledWindow;
    use crate::ppo::BatchSpec;

    fn grid_dataset(classes: usize, users: u32, per_cell: usize, l: usize, d: usize) -> Dataset {
        let mut rng = Rng::new(99);
        let mut windows = Vec::new();
        let mut id = 0;
        for y in 1..=classes {
            for user in 1..=users {
                for _ in 0..per_cell {
                    // Give classes distinct means so a probe has signal.
                    let shift = y as f64;
                    let data: Vec<f64> =
                        (0..l * d).map(|_| shift + 0.3 * rng.normal()).collect();
                    windows.push(LabeledWindow {
                        x: Matrix::new(l, d, data).unwrap(),
                        y,
                        user,
                        origin: None,
                        id,
                    });
                    id += 1;
                }
            }
        }
        Dataset { windows, num_classes: classes, num_channels: d, window_len: l }
    }

    fn tiny_model(l: usize, d: usize) -> ModelConfig {
        let mut mc = ModelConfig::new(l, d);
        mc.d_model = 8;
        mc.n_heads = 2;
        mc.d_ff = 16;
        mc.s = 2;
        mc.k = 3;
        mc
    }

    fn tiny_ppo() -> PpoConfig {
        let mut cfg = PpoConfig::default();
        cfg.rounds = 1;
        cfg.ppo_epochs_per_round = 1;
        cfg.buffers_per_round = 2;
        cfg.batch = BatchSpec { classes_per_batch: 2, users_per_class: 2, windows_per_cell: 1 };
        cfg
    }

    fn plan(name: &str, source: &[u32], target: &[u32]) -> SplitPlan {
        SplitPlan {
            name: name.into(),
            held_out: "T".into(),
            source_users: source.to_vec(),
            target_users: target.to_vec(),
        }
    }

    #[test]
    fn run_split_scores_only_the_target() {
        let data = grid_dataset(2, 3, 3, 5, 2);
        let p = plan("12->3", &[1, 2], &[3]);
        let r = run_split(&p, &data, &tiny_model(5, 2), &tiny_ppo(), &RunOptions::default())
            .unwrap();

        assert_eq!(r.plan, "12->3");
        // 2 classes x 1 user x 3 windows in the target.
        assert_eq!(r.confusion.total(), 6);
        assert!((0.0..=1.0).contains(&r.accuracy));
        assert_eq!(r.per_class_f1.len(), 2);
        assert_eq!(r.confusion.accuracy().unwrap().to_bits(), r.accuracy.to_bits());
        assert_eq!(r.config_digest.len(), 64);
    }

    #[test]
    fn run_split_is_seed_deterministic() {
        let data = grid_dataset(2, 3, 3, 5, 2);
        let p = plan("12->3", &[1, 2], &[3]);
        let opts = RunOptions { probe_lambda: 1e-2, seed: 7 };
        let a = run_split(&p, &data, &tiny_model(5, 2), &tiny_ppo(), &opts).unwrap();
        let b = run_split(&p, &data, &tiny_model(5, 2), &tiny_ppo(), &opts).unwrap();
        assert_eq!(a.accuracy.to_bits(), b.accuracy.to_bits());
        assert_eq!(a.confusion, b.confusion);
    }

    #[test]
    fn shared_users_trip_the_leakage_guard() {
        let data = grid_dataset(2, 3, 2, 5, 2);
        let p = plan("bad", &[1, 2], &[2, 3]);
        let err = run_split(&p, &data, &tiny_model(5, 2), &tiny_ppo(), &RunOptions::default())
            .unwrap_err();
        assert!(matches!(err, EvalError::Leakage { .. }), "{err}");
    }

    #[test]
    fn shared_origins_trip_the_leakage_guard() {
        // Same recording region labeled under two different users: ids
        // differ, origins collide.
        use crate::data::WindowOrigin;
        let mut data = grid_dataset(2, 3, 2, 5, 2);
        let origin = Some(WindowOrigin { recording: 0, start: 0 });
        data.windows[0].origin = origin; // user 1, in source
        let mut stolen = data.windows[0].clone();
        stolen.user = 3; // lands in target
        stolen.id = 10_000;
        stolen.origin = origin;
        data.windows.push(stolen);

        let p = plan("bad", &[1, 2], &[3]);
        let err = run_split(&p, &data, &tiny_model(5, 2), &tiny_ppo(), &RunOptions::default())
            .unwrap_err();
        assert!(matches!(err, EvalError::Leakage { window_id: 10_000, .. }), "{err}");
    }

    #[test]
    fn degenerate_splits_are_rejected() {
        let data = grid_dataset(2, 3, 2, 5, 2);
        let empty_target = plan("12->none", &[1, 2], &[9]);
        assert!(matches!(
            run_split(&empty_target, &data, &tiny_model(5, 2), &tiny_ppo(), &RunOptions::default()),
            Err(EvalError::EmptySplit { side: "target", .. })
        ));

        let empty_source = plan("none->3", &[8], &[3]);
        assert!(matches!(
            run_split(&empty_source, &data, &tiny_model(5, 2), &tiny_ppo(), &RunOptions::default()),
            Err(EvalError::EmptySplit { side: "source", .. })
        ));

        let one_user = plan("1->3", &[1], &[3]);
        assert!(matches!(
            run_split(&one_user, &data, &tiny_model(5, 2), &tiny_ppo(), &RunOptions::default()),
            Err(EvalError::DegenerateSource { users: 1, .. })
        ));
    }

    #[test]
    fn majority_baseline_counts_the_top_source_class() {
        let mut data = grid_dataset(2, 3, 2, 4, 1);
        // Tilt class 1 in the source by dropping one class-2 window of user 1.
        let victim = data
            .windows
            .iter()
            .position(|w| w.user == 1 && w.y == 2)
            .unwrap();
        data.windows.remove(victim);

        let p = plan("12->3", &[1, 2], &[3]);
        let b = majority_baseline(&p, &data).unwrap();
        // Majority is class 1; target has 2 of 4 windows in class 1.
        assert!((b - 0.5).abs() <= 1e-15);
    }

    #[test]
    fn majority_baseline_breaks_ties_toward_the_smaller_id() {
        let data = grid_dataset(2, 3, 2, 4, 1); // perfectly balanced
        let p = plan("12->3", &[1, 2], &[3]);
        let b = majority_baseline(&p, &data).unwrap();
        assert!((b - 0.5).abs() <= 1e-15); // class 1 chosen, half the target
    }

    #[test]
    fn digest_tracks_config_content() {
        let opts = RunOptions::default();
        let m = tiny_model(5, 2);
        let p1 = tiny_ppo();
        let mut p2 = tiny_ppo();
        p2.w_inv = 0.0;
        let a = config_digest(&m, &p1, &opts);
        let b = config_digest(&m, &p1, &opts);
        let c = config_digest(&m, &p2, &opts);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}

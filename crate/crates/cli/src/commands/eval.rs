//! `harfeat eval`: score a trained policy's features on held-out users.
//!
//! A linear probe is fit on the training split's deterministic features and
//! scored on the test split. Train/test window ids must be disjoint; shared
//! *users* are allowed but demoted to a printed sanity-mode note, so a
//! hand-built memorization split can exercise the pipeline without ever
//! passing as a cross-user result.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use harfeat_core::classifier::flatten;
use harfeat_core::eval::{config_digest, results_csv, RunOptions};
use harfeat_core::model::{load_checkpoint, PolicyNetwork};
use harfeat_core::numkit::Matrix;
use harfeat_core::{ConfusionMatrix, Dataset, ExperimentResult, LrModel};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::pipeline::{load_manifest, load_windows, select_plans};

pub fn run(
    cfg: &RunConfig,
    plan_arg: Option<&str>,
    checkpoint_override: Option<&Path>,
) -> Result<(), CliError> {
    let data_root = cfg.data_root();
    let manifest = load_manifest(&data_root)?;
    let plans = select_plans(&manifest, &data_root, plan_arg, &cfg.eval.plans)?;
    let run_root = cfg.run_root();

    for plan in &plans {
        let train_data = load_windows(&plan.path.join("train.csv"), &manifest)?;
        let test_data = load_windows(&plan.path.join("test.csv"), &manifest)?;

        let train_ids: HashSet<u64> = train_data.windows.iter().map(|w| w.id).collect();
        if let Some(w) = test_data.windows.iter().find(|w| train_ids.contains(&w.id)) {
            return Err(CliError::data(format!(
                "plan {}: test window {} also appears in the training split — \
                 leaked split refused",
                plan.name, w.id
            )));
        }
        let train_users: HashSet<u32> = train_data.windows.iter().map(|w| w.user).collect();
        if test_data.windows.iter().any(|w| train_users.contains(&w.user)) {
            eprintln!(
                "note: plan {} shares users between train and test; scoring as a \
                 sanity check, not a cross-user result",
                plan.name
            );
        }

        let default_ckpt = run_root.join("train").join(&plan.dir_name).join("checkpoint.json");
        let ckpt_path = checkpoint_override.unwrap_or(&default_ckpt);
        if !ckpt_path.is_file() {
            return Err(CliError::data(format!(
                "{}: checkpoint not found; run `harfeat train` with this config \
                 first or pass --checkpoint",
                ckpt_path.display()
            )));
        }
        let net = load_checkpoint(ckpt_path)?;
        let expected = cfg.model.to_model_config(manifest.window_len, manifest.num_channels);
        if net.config != expected {
            return Err(CliError::data(format!(
                "{}: checkpoint model configuration does not match the current \
                 config (checkpoint {}x{} tokens on {}x{} windows, config wants \
                 {}x{} on {}x{}); re-train or point --checkpoint elsewhere",
                ckpt_path.display(),
                net.config.s,
                net.config.k,
                net.config.l,
                net.config.d,
                expected.s,
                expected.k,
                expected.l,
                expected.d
            )));
        }

        let (x, labels) = probe_inputs(&net, &train_data)?;
        let probe = LrModel::fit(&x, &labels, manifest.num_classes, cfg.eval.probe_lambda)?;

        let mut cm = ConfusionMatrix::new(manifest.num_classes);
        for w in &test_data.windows {
            let z = flatten(&net.rollout_deterministic(&w.x)?);
            let (pred, _) = probe.predict(&z)?;
            cm.record(w.y, pred);
        }
        let accuracy = cm.accuracy()?;
        let opts = RunOptions { probe_lambda: cfg.eval.probe_lambda, seed: cfg.seed };
        let result = ExperimentResult {
            plan: plan.name.clone(),
            accuracy,
            per_class_f1: cm.per_class_f1(),
            confusion: cm,
            config_digest: config_digest(&expected, &cfg.ppo, &opts),
            seed: cfg.seed,
        };

        let out = run_root.join("eval").join(&plan.dir_name);
        fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
        let results_path = out.join("results.csv");
        fs::write(&results_path, results_csv(std::slice::from_ref(&result)))
            .map_err(|e| CliError::io(&results_path, e))?;
        let confusion_path = out.join("confusion.csv");
        fs::write(&confusion_path, result.confusion.to_csv())
            .map_err(|e| CliError::io(&confusion_path, e))?;

        println!(
            "{}: accuracy {:.4} on {} held-out windows ({})",
            plan.name,
            accuracy,
            test_data.windows.len(),
            out.display()
        );
    }
    Ok(())
}

/// Deterministic features for every window, as one probe design matrix.
fn probe_inputs(net: &PolicyNetwork, data: &Dataset) -> Result<(Matrix, Vec<usize>), CliError> {
    let dim = net.config.s * net.config.k;
    let mut feats = Vec::with_capacity(data.windows.len() * dim);
    let mut labels = Vec::with_capacity(data.windows.len());
    for w in &data.windows {
        feats.extend(flatten(&net.rollout_deterministic(&w.x)?));
        labels.push(w.y);
    }
    Ok((Matrix::new(labels.len(), dim, feats)?, labels))
}

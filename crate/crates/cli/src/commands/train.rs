//! `harfeat train`: PPO-train one policy per split plan.
//!
//! Each plan trains from its own derived seeds (one stream for parameter
//! init, one for the rollout/update loop), so the same config and master
//! seed always reproduce the same checkpoint and training log bytes.

use std::fs;

use harfeat_core::model::{save_checkpoint, PolicyNetwork};
use harfeat_core::numkit::{derive_seed, Rng};
use harfeat_core::ppo::train;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::pipeline::{load_manifest, load_windows, select_plans};

pub fn run(cfg: &RunConfig, plan_arg: Option<&str>) -> Result<(), CliError> {
    let data_root = cfg.data_root();
    let manifest = load_manifest(&data_root)?;
    let plans = select_plans(&manifest, &data_root, plan_arg, &cfg.eval.plans)?;
    let run_root = cfg.run_root();
    println!("run directory: {}", run_root.display());

    for plan in &plans {
        let train_data = load_windows(&plan.path.join("train.csv"), &manifest)?;
        let model_cfg = cfg.model.to_model_config(manifest.window_len, manifest.num_channels);
        let mut ppo_cfg = cfg.ppo.clone();
        ppo_cfg.seed = derive_seed(cfg.seed, &["ppo", &plan.name]);
        let mut init_rng = Rng::new(derive_seed(cfg.seed, &["init", &plan.name]));
        let net = PolicyNetwork::init(model_cfg, &mut init_rng)?;
        let (trained, log) = train(&net, &train_data, &ppo_cfg)?;

        let out = run_root.join("train").join(&plan.dir_name);
        fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
        let ckpt = out.join("checkpoint.json");
        save_checkpoint(&ckpt, &trained)?;
        let log_path = out.join("trainlog.csv");
        fs::write(&log_path, log.to_csv()).map_err(|e| CliError::io(&log_path, e))?;

        match log.rows.last() {
            Some(row) => println!(
                "trained {}: {} rounds on {} windows, J {:.4} -> {:.4}",
                plan.name,
                ppo_cfg.rounds,
                train_data.windows.len(),
                log.rows[0].j,
                row.j
            ),
            None => println!(
                "trained {}: 0 rounds, checkpoint is the seeded initialization",
                plan.name
            ),
        }
    }
    Ok(())
}

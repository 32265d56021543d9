//! `harfeat sweep`: retrain and re-evaluate along one hyperparameter axis.
//!
//! Each (value, plan) cell is a full train+eval from scratch, seeded by
//! hashing (master seed, axis, value, plan) so cells are independent and
//! reproducible no matter how many run in parallel.

use std::fs;
use std::fmt::Write as _;

use harfeat_core::eval::{run_split, RunOptions};
use harfeat_core::numkit::derive_seed;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::pipeline::build_dataset;

pub const AXES: [&str; 3] = ["s", "w_cls", "w_inv"];

/// A parsed sweep value: the integer token count or a reward weight.
#[derive(Debug, Clone, Copy)]
enum AxisValue {
    TokenCount(usize),
    Weight(f64),
}

impl std::fmt::Display for AxisValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AxisValue::TokenCount(s) => write!(f, "{s}"),
            AxisValue::Weight(w) => write!(f, "{w}"),
        }
    }
}

fn parse_values(axis: &str, raw: &[String]) -> Result<Vec<AxisValue>, CliError> {
    if !AXES.contains(&axis) {
        return Err(CliError::usage(format!(
            "unknown sweep axis \"{axis}\"; valid axes: {}",
            AXES.join(", ")
        )));
    }
    if raw.len() < 2 {
        return Err(CliError::usage(format!(
            "a sweep needs at least 2 values, got {}",
            raw.len()
        )));
    }
    raw.iter()
        .map(|v| match axis {
            "s" => v
                .trim()
                .parse::<usize>()
                .ok()
                .filter(|&s| s >= 1)
                .map(AxisValue::TokenCount)
                .ok_or_else(|| {
                    CliError::usage(format!("axis s needs positive integers, got \"{v}\""))
                }),
            _ => v
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|w| w.is_finite() && *w >= 0.0)
                .map(AxisValue::Weight)
                .ok_or_else(|| {
                    CliError::usage(format!(
                        "axis {axis} needs non-negative numbers, got \"{v}\""
                    ))
                }),
        })
        .collect()
}

pub fn run(cfg: &RunConfig, axis: &str, raw_values: &[String], jobs: usize) -> Result<(), CliError> {
    let values = parse_values(axis, raw_values)?;
    if jobs == 0 {
        return Err(CliError::usage("--jobs must be at least 1"));
    }

    let build = build_dataset(cfg, None)?;
    let data = &build.dataset;
    let plans: Vec<_> = if cfg.eval.plans.is_empty() {
        build.plans.iter().collect()
    } else {
        cfg.eval
            .plans
            .iter()
            .map(|name| {
                build.plans.iter().find(|p| &p.name == name).ok_or_else(|| {
                    CliError::usage(format!(
                        "eval.plans names \"{name}\", which is not a plan of this dataset"
                    ))
                })
            })
            .collect::<Result<_, _>>()?
    };

    // One task per (value, plan) cell, in the order rows are written.
    let tasks: Vec<(AxisValue, &harfeat_core::SplitPlan)> = values
        .iter()
        .flat_map(|&v| plans.iter().map(move |&p| (v, p)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::data(format!("thread pool: {e}")))?;
    let rows: Vec<(String, String, f64, u64)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(value, plan)| {
                let mut model_cfg =
                    cfg.model.to_model_config(data.window_len, data.num_channels);
                let mut ppo_cfg = cfg.ppo.clone();
                match value {
                    AxisValue::TokenCount(s) => model_cfg.s = s,
                    AxisValue::Weight(w) if axis == "w_cls" => ppo_cfg.w_cls = w,
                    AxisValue::Weight(w) => ppo_cfg.w_inv = w,
                }
                let value_str = value.to_string();
                let opts = RunOptions {
                    probe_lambda: cfg.eval.probe_lambda,
                    seed: derive_seed(cfg.seed, &[axis, &value_str, &plan.name]),
                };
                let result = run_split(plan, data, &model_cfg, &ppo_cfg, &opts)?;
                Ok((value_str, plan.name.clone(), result.accuracy, opts.seed))
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;

    let mut csv = String::from("axis,value,plan,accuracy,seed\n");
    for (value, plan, accuracy, seed) in &rows {
        let _ = writeln!(csv, "{axis},{value},{plan},{accuracy},{seed}");
    }
    let out_dir = cfg.run_root().join("sweep");
    fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
    let out = out_dir.join(format!("{axis}.csv"));
    fs::write(&out, &csv).map_err(|e| CliError::io(&out, e))?;

    println!("swept {axis} over {} values x {} plans -> {}", values.len(), plans.len(), out.display());
    for (value, plan, accuracy, _) in &rows {
        println!("  {axis}={value} {plan}: accuracy {accuracy:.4}");
    }
    Ok(())
}

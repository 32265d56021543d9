//! `harfeat report`: collect per-plan evaluation results into one summary.
//!
//! Reads every `eval/*/results.csv` under the run directory, prints a
//! human-readable table, and writes `summary.csv` with plans as columns and
//! one row of accuracies plus their mean and sample standard deviation —
//! the same shape the per-plan numbers are usually quoted in.

use std::fs;
use std::fmt::Write as _;
use std::path::Path;

use crate::config::RunConfig;
use crate::error::CliError;

struct PlanRow {
    plan: String,
    accuracy: f64,
    seed: String,
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let run_root = cfg.run_root();
    let eval_dir = run_root.join("eval");
    let mut rows = Vec::new();
    if eval_dir.is_dir() {
        let mut entries: Vec<_> = fs::read_dir(&eval_dir)
            .map_err(|e| CliError::io(&eval_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for dir in entries {
            let path = dir.join("results.csv");
            if path.is_file() {
                rows.push(parse_results(&path)?);
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::data(format!(
            "no evaluation results under {}; run `harfeat eval` first",
            eval_dir.display()
        )));
    }
    rows.sort_by(|a, b| a.plan.cmp(&b.plan));

    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r.accuracy).sum::<f64>() / n;
    let stdev = if rows.len() < 2 {
        0.0
    } else {
        (rows.iter().map(|r| (r.accuracy - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };

    println!("plan        accuracy  seed");
    for r in &rows {
        println!("{:<11} {:.4}    {}", r.plan, r.accuracy, r.seed);
    }
    println!("mean accuracy {mean:.4}, sample stdev {stdev:.4} over {} plans", rows.len());

    let mut csv = String::new();
    for r in &rows {
        let _ = write!(csv, "{},", r.plan);
    }
    csv.push_str("avg,stdev\n");
    for r in &rows {
        let _ = write!(csv, "{},", r.accuracy);
    }
    let _ = writeln!(csv, "{mean},{stdev}");
    let out = run_root.join("summary.csv");
    fs::write(&out, &csv).map_err(|e| CliError::io(&out, e))?;
    println!("summary: {}", out.display());
    Ok(())
}

/// Pull (plan, accuracy, seed) out of a per-plan results CSV.
fn parse_results(path: &Path) -> Result<PlanRow, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::data(format!("{}: empty file", path.display())))?;
    if !header.starts_with("plan,accuracy,seed") {
        return Err(CliError::data(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    let row = lines
        .next()
        .ok_or_else(|| CliError::data(format!("{}: no data row", path.display())))?;
    let fields: Vec<&str> = row.split(',').collect();
    if fields.len() < 3 {
        return Err(CliError::data(format!("{}: short data row", path.display())));
    }
    let accuracy: f64 = fields[1]
        .parse()
        .map_err(|_| CliError::data(format!("{}: bad accuracy {:?}", path.display(), fields[1])))?;
    Ok(PlanRow { plan: fields[0].to_string(), accuracy, seed: fields[2].to_string() })
}

//! `harfeat synth`: generate the synthetic corpus and export plan CSVs.

use crate::config::RunConfig;
use crate::error::CliError;
use crate::pipeline::{build_dataset, export_plans};

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.dataset.kind != "synth" {
        return Err(CliError::usage(format!(
            "dataset.kind is \"{}\"; `harfeat synth` builds synthetic data — \
             use `harfeat ingest` for real corpora",
            cfg.dataset.kind
        )));
    }
    let build = build_dataset(cfg, None)?;
    let dir = cfg.data_root();
    let manifest = export_plans(&build, &dir)?;
    super::print_export(&dir, &manifest);
    Ok(())
}

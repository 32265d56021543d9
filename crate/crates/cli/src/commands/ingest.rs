//! `harfeat ingest`: read a real sensor corpus and export plan CSVs.

use std::path::Path;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::pipeline::{build_dataset, export_plans};

pub fn run(cfg: &RunConfig, root: Option<&Path>) -> Result<(), CliError> {
    if cfg.dataset.kind == "synth" {
        return Err(CliError::usage(
            "dataset.kind is \"synth\"; `harfeat ingest` reads a real corpus — \
             set dataset.kind to \"dsads\" or \"pamap2\", or run `harfeat synth`",
        ));
    }
    let build = build_dataset(cfg, root)?;
    let dir = cfg.data_root();
    let manifest = export_plans(&build, &dir)?;
    super::print_export(&dir, &manifest);
    Ok(())
}

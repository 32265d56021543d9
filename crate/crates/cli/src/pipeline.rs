//! Shared plumbing between subcommands: building a windowed dataset from a
//! config, exporting per-plan CSVs, and loading them back.

use std::fs;
use std::path::{Path, PathBuf};

use harfeat_core::data::{
    build_logo_splits, default_waves, ingest_dsads, ingest_pamap2, read_windows_csv,
    sha256_file, synth_generate, windowize, write_windows_csv, zscore_per_user,
    ChannelSet, ExportManifest, PlanExport, SynthSpec, MANIFEST_SCHEMA,
};
use harfeat_core::{Dataset, SplitPlan};

use crate::config::{DatasetSection, RunConfig, DATA_ROOT_ENV};
use crate::error::CliError;

/// Windowed dataset plus the cross-validation plans over it.
pub struct DataBuild {
    pub dataset: Dataset,
    pub plans: Vec<SplitPlan>,
    pub kind: String,
    /// Seed the windows were generated from (0 for real corpora).
    pub gen_seed: u64,
}

/// Raw-corpus root: flag beats config beats environment.
pub fn resolve_root(cfg: &RunConfig, flag: Option<&Path>) -> Result<PathBuf, CliError> {
    if let Some(p) = flag {
        return Ok(p.to_path_buf());
    }
    if let Some(p) = &cfg.dataset.root {
        return Ok(p.clone());
    }
    if let Ok(v) = std::env::var(DATA_ROOT_ENV) {
        if !v.is_empty() {
            return Ok(PathBuf::from(v));
        }
    }
    Err(CliError::usage(format!(
        "no data root for dataset \"{}\": pass --root, set dataset.root in the \
         config, or export {DATA_ROOT_ENV}",
        cfg.dataset.kind
    )))
}

/// Synth spec from the config, with two conveniences: a class count below 2
/// is rejected up front (single-class data cannot train or evaluate a
/// classifier), and an untouched default wave bank is resized to match a
/// changed class count instead of demanding hand-written waveforms.
pub fn resolved_synth_spec(ds: &DatasetSection) -> Result<SynthSpec, CliError> {
    let mut spec = ds.synth.clone();
    if spec.num_classes < 2 {
        return Err(CliError::usage(format!(
            "dataset.synth.num_classes must be at least 2, got {}",
            spec.num_classes
        )));
    }
    if spec.num_classes != spec.class_waves.len() && spec.class_waves == default_waves(4) {
        spec.class_waves = default_waves(spec.num_classes);
    }
    Ok(spec)
}

/// Build the windowed dataset named by the config, normalized per user, and
/// plan the leave-one-group-out splits over it.
pub fn build_dataset(cfg: &RunConfig, root_flag: Option<&Path>) -> Result<DataBuild, CliError> {
    let ds = &cfg.dataset;
    let (mut recordings, gen_seed) = match ds.kind.as_str() {
        "synth" => {
            let spec = resolved_synth_spec(ds)?;
            (synth_generate(&spec)?, spec.seed)
        }
        "dsads" => {
            let root = resolve_root(cfg, root_flag)?;
            (ingest_dsads(&root, &ChannelSet::parse(&ds.channels)?)?, 0)
        }
        "pamap2" => {
            let root = resolve_root(cfg, root_flag)?;
            (ingest_pamap2(&root, &ChannelSet::parse(&ds.channels)?)?, 0)
        }
        other => {
            return Err(CliError::usage(format!(
                "dataset.kind must be \"synth\", \"dsads\", or \"pamap2\", got \"{other}\""
            )))
        }
    };
    zscore_per_user(&mut recordings, ds.zscore_eps)?;
    let dataset = windowize(&recordings, ds.window_seconds, ds.overlap)?;
    let groups = resolved_groups(ds, &dataset)?;
    let plans = build_logo_splits(&groups)?;
    Ok(DataBuild { dataset, plans, kind: ds.kind.clone(), gen_seed })
}

/// Explicit groups from the config, or the per-dataset defaults: paired
/// users for the real corpora, leave-one-user-out for synth.
pub fn resolved_groups(
    ds: &DatasetSection,
    data: &Dataset,
) -> Result<Vec<(String, Vec<u32>)>, CliError> {
    if !ds.groups.is_empty() {
        return Ok(ds.groups.iter().map(|g| (g.name.clone(), g.users.clone())).collect());
    }
    let named = |pairs: &[(&str, [u32; 2])]| {
        pairs.iter().map(|(n, u)| (n.to_string(), u.to_vec())).collect()
    };
    match ds.kind.as_str() {
        "dsads" => Ok(named(&[
            ("A", [1, 2]),
            ("B", [3, 4]),
            ("C", [5, 6]),
            ("D", [7, 8]),
        ])),
        "pamap2" => Ok(named(&[("A", [1, 2]), ("B", [5, 6]), ("C", [7, 8])])),
        _ => {
            let users = data.users();
            if users.len() > 26 {
                return Err(CliError::usage(format!(
                    "{} users need explicit [[dataset.groups]]; single-letter \
                     default names stop at 26",
                    users.len()
                )));
            }
            Ok(users
                .iter()
                .enumerate()
                .map(|(i, &u)| (((b'A' + i as u8) as char).to_string(), vec![u]))
                .collect())
        }
    }
}

/// Write per-plan train/test CSVs plus the manifest recording counts and
/// checksums. The export is a pure function of the dataset and plans, so
/// rerunning it reproduces identical bytes.
pub fn export_plans(build: &DataBuild, dir: &Path) -> Result<ExportManifest, CliError> {
    let plans_dir = dir.join("plans");
    fs::create_dir_all(&plans_dir).map_err(|e| CliError::io(&plans_dir, e))?;
    let data = &build.dataset;
    let mut exports = Vec::with_capacity(build.plans.len());
    for plan in &build.plans {
        let pdir = plans_dir.join(plan.dir_name());
        fs::create_dir_all(&pdir).map_err(|e| CliError::io(&pdir, e))?;
        let train_idx = data.windows_of(&plan.source_users);
        let test_idx = data.windows_of(&plan.target_users);
        if train_idx.is_empty() || test_idx.is_empty() {
            return Err(CliError::data(format!(
                "plan {}: a split matched no windows; check the group user ids \
                 against the corpus",
                plan.name
            )));
        }
        let train_path = pdir.join("train.csv");
        let test_path = pdir.join("test.csv");
        write_windows_csv(&train_path, data, &train_idx)?;
        write_windows_csv(&test_path, data, &test_idx)?;
        exports.push(PlanExport {
            name: plan.name.clone(),
            dir: plan.dir_name(),
            source_users: plan.source_users.clone(),
            target_users: plan.target_users.clone(),
            train_windows: train_idx.len(),
            test_windows: test_idx.len(),
            train_sha256: sha256_file(&train_path)?,
            test_sha256: sha256_file(&test_path)?,
        });
    }
    let manifest = ExportManifest {
        schema: MANIFEST_SCHEMA.to_string(),
        dataset: build.kind.clone(),
        seed: build.gen_seed,
        num_classes: data.num_classes,
        num_channels: data.num_channels,
        window_len: data.window_len,
        total_windows: data.windows.len(),
        plans: exports,
    };
    manifest.write(&dir.join("manifest.json"))?;
    Ok(manifest)
}

pub fn load_manifest(data_root: &Path) -> Result<ExportManifest, CliError> {
    let path = data_root.join("manifest.json");
    if !path.is_file() {
        return Err(CliError::data(format!(
            "{} not found; run `harfeat synth` or `harfeat ingest` first",
            path.display()
        )));
    }
    Ok(ExportManifest::read(&path)?)
}

/// One plan's exported files on disk.
pub struct PlanFiles {
    pub name: String,
    /// Directory basename, also used for per-plan output directories.
    pub dir_name: String,
    pub path: PathBuf,
}

/// Resolve which plans a command should touch. An explicit `--plan` may
/// name a manifest entry or any directory under `plans/` (the latter lets
/// hand-built sanity splits run through the same pipeline); otherwise the
/// config's `eval.plans` filter applies, and an empty filter means all.
pub fn select_plans(
    manifest: &ExportManifest,
    data_root: &Path,
    requested: Option<&str>,
    config_plans: &[String],
) -> Result<Vec<PlanFiles>, CliError> {
    let files = |name: &str, dir: &str| PlanFiles {
        name: name.to_string(),
        dir_name: dir.to_string(),
        path: data_root.join("plans").join(dir),
    };
    if let Some(arg) = requested {
        if let Some(p) = manifest.plans.iter().find(|p| p.name == arg || p.dir == arg) {
            return Ok(vec![files(&p.name, &p.dir)]);
        }
        let dir = data_root.join("plans").join(arg);
        if dir.join("train.csv").is_file() {
            return Ok(vec![files(arg, arg)]);
        }
        return Err(CliError::data(format!(
            "plan \"{arg}\" is not in the manifest and {} has no train.csv",
            dir.display()
        )));
    }
    if config_plans.is_empty() {
        return Ok(manifest.plans.iter().map(|p| files(&p.name, &p.dir)).collect());
    }
    config_plans
        .iter()
        .map(|name| {
            manifest
                .plans
                .iter()
                .find(|p| &p.name == name || &p.dir == name)
                .map(|p| files(&p.name, &p.dir))
                .ok_or_else(|| {
                    CliError::usage(format!(
                        "eval.plans names \"{name}\", which is not in the manifest"
                    ))
                })
        })
        .collect()
}

/// Read an exported window CSV and reconcile it with the manifest: the
/// class count is authoritative there (a split missing some class must not
/// shrink the label space), and geometry mismatches are refused.
pub fn load_windows(path: &Path, manifest: &ExportManifest) -> Result<Dataset, CliError> {
    if !path.is_file() {
        return Err(CliError::data(format!(
            "{}: not found; re-run `harfeat synth`/`ingest` or check the plan name",
            path.display()
        )));
    }
    let mut data = read_windows_csv(path)?;
    if data.num_classes > manifest.num_classes {
        return Err(CliError::data(format!(
            "{}: labels run to {}, but the manifest says {} classes",
            path.display(),
            data.num_classes,
            manifest.num_classes
        )));
    }
    if data.window_len != manifest.window_len || data.num_channels != manifest.num_channels {
        return Err(CliError::data(format!(
            "{}: windows are {}x{}, but the manifest says {}x{}",
            path.display(),
            data.window_len,
            data.num_channels,
            manifest.window_len,
            manifest.num_channels
        )));
    }
    data.num_classes = manifest.num_classes;
    Ok(data)
}

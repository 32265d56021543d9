//! Run configuration: a sectioned TOML file plus `--set` overrides.
//!
//! Every run is a pure function of the resolved config and nothing else, so
//! output directories are content-addressed by digests of it: the dataset
//! section addresses the exported window CSVs, the whole config addresses
//! training and evaluation outputs. Editing a key lands the run in a fresh
//! directory instead of silently overwriting the old one.

use std::fs;
use std::path::{Path, PathBuf};

use harfeat_core::data::{sha256_bytes, SynthSpec};
use harfeat_core::model::ModelConfig;
use harfeat_core::PpoConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Fallback data root for `ingest` when neither `--root` nor `dataset.root`
/// is given.
pub const DATA_ROOT_ENV: &str = "HARFEAT_DATA_ROOT";

/// Config file used when `--config` is not passed. Missing file means
/// built-in defaults, so the binary works from any directory.
pub const DEFAULT_CONFIG_PATH: &str = "config/default.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed. Every stream (init, training, sweep runs) derives its
    /// own seed from this plus a purpose label, never shares it directly.
    pub seed: u64,
    pub output: OutputSection,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub ppo: PpoConfig,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output: OutputSection::default(),
            dataset: DatasetSection::default(),
            model: ModelSection::default(),
            ppo: PpoConfig::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Parent of all content-addressed data/run directories.
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("runs") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// "synth", "dsads", or "pamap2".
    pub kind: String,
    /// Raw corpus root for the real datasets (unused by synth).
    pub root: Option<PathBuf>,
    /// "acc_gyro", "all", or a comma list of raw column indices.
    pub channels: String,
    pub window_seconds: f64,
    /// Fraction of each window shared with the next one, in [0, 1).
    pub overlap: f64,
    /// Variance floor for the per-user z-score.
    pub zscore_eps: f64,
    /// Cross-validation groups; empty means the per-kind defaults.
    pub groups: Vec<GroupSection>,
    pub synth: SynthSpec,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            kind: "synth".into(),
            root: None,
            channels: "acc_gyro".into(),
            window_seconds: 3.0,
            overlap: 0.5,
            zscore_eps: 1e-8,
            groups: Vec::new(),
            synth: SynthSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSection {
    pub name: String,
    pub users: Vec<u32>,
}

/// Model hyperparameters. Window length and channel count are not here:
/// they come from the data and are filled in by `to_model_config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers_enc: usize,
    pub n_layers_dec: usize,
    pub d_ff: usize,
    pub s: usize,
    pub k: usize,
    pub logsig_min: f64,
    pub logsig_max: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let base = ModelConfig::new(1, 1);
        ModelSection {
            d_model: base.d_model,
            n_heads: base.n_heads,
            n_layers_enc: base.n_layers_enc,
            n_layers_dec: base.n_layers_dec,
            d_ff: base.d_ff,
            s: base.s,
            k: base.k,
            logsig_min: base.logsig_min,
            logsig_max: base.logsig_max,
        }
    }
}

impl ModelSection {
    pub fn to_model_config(&self, l: usize, d: usize) -> ModelConfig {
        ModelConfig {
            l,
            d,
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_layers_enc: self.n_layers_enc,
            n_layers_dec: self.n_layers_dec,
            d_ff: self.d_ff,
            s: self.s,
            k: self.k,
            logsig_min: self.logsig_min,
            logsig_max: self.logsig_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Ridge weight of the linear probe.
    pub probe_lambda: f64,
    /// Plan names to run; empty means every plan in the manifest.
    pub plans: Vec<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { probe_lambda: 1e-2, plans: Vec::new() }
    }
}

impl RunConfig {
    /// Load `path` (or the default file, or built-ins) and apply `--set`
    /// overrides. Unknown keys anywhere are an error.
    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Self, CliError> {
        let (text, source) = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                (text, p.display().to_string())
            }
            None => {
                let p = Path::new(DEFAULT_CONFIG_PATH);
                if p.is_file() {
                    let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                    (text, p.display().to_string())
                } else {
                    (String::new(), "built-in defaults".to_string())
                }
            }
        };
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| CliError::usage(format!("{source}: {e}")))?;
        for spec in sets {
            apply_set(&mut table, spec)?;
        }
        table
            .try_into()
            .map_err(|e| CliError::usage(format!("{source}: {e}")))
    }

    fn dataset_digest(&self) -> String {
        let blob = serde_json::to_string(&self.dataset).expect("dataset section serializes");
        sha256_bytes(blob.as_bytes())
    }

    fn run_digest(&self) -> String {
        let blob = serde_json::to_string(self).expect("config serializes");
        sha256_bytes(blob.as_bytes())
    }

    /// Where exported window CSVs live: keyed by the dataset section only,
    /// so training-knob changes reuse the same export.
    pub fn data_root(&self) -> PathBuf {
        self.output.dir.join(format!("data-{}", &self.dataset_digest()[..12]))
    }

    /// Where checkpoints, logs, metrics, and sweeps live: keyed by the
    /// whole config.
    pub fn run_root(&self) -> PathBuf {
        self.output.dir.join(format!("run-{}", &self.run_digest()[..12]))
    }
}

/// Apply one `--set KEY=VALUE` override onto the parsed config table.
/// KEY is a dotted path; VALUE is parsed as a TOML literal, falling back
/// to a plain string so `--set dataset.kind=dsads` needs no quotes.
fn apply_set(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("--set expects KEY=VALUE, got \"{spec}\"")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(|p| p.is_empty()) {
        return Err(CliError::usage(format!("--set: bad key \"{key}\"")));
    }
    let value = parse_toml_value(raw.trim());
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        cur = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                CliError::usage(format!("--set {key}: \"{part}\" is not a section"))
            })?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_toml_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) if t.len() == 1 => t.remove("v").expect("key v present"),
        _ => toml::Value::String(raw.to_string()),
    }
}

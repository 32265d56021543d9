//! Dataset handling: ingestion, per-user normalization, windowing,
//! leave-one-group-out split planning, and synthetic data generation.
//!
//! Pipeline order is fixed: recordings are z-scored per (user, channel)
//! first, then cut into fixed-length windows. Normalization is label-free and
//! strictly per-user, so normalizing source and target users together leaks
//! nothing across the split boundary.

mod csvio;
mod dsads;
mod pamap2;
mod splits;
mod synth;
mod types;
mod windows;

pub use csvio::{
    read_windows_csv, sha256_bytes, sha256_file, write_windows_csv, ExportManifest,
    PlanExport, MANIFEST_SCHEMA,
};
pub use dsads::{dsads_acc_gyro, dsads_all, ingest_dsads, DSADS_RAW_COLS, DSADS_SAMPLE_RATE};
pub use pamap2::{
    ingest_pamap2, pamap2_acc_gyro, pamap2_all, PAMAP2_KEPT_ACTIVITIES, PAMAP2_RAW_COLS,
    PAMAP2_SAMPLE_RATE,
};
pub use splits::build_logo_splits;
pub use synth::{default_waves, synth_generate, ClassWave, SynthSpec, Waveform};
pub use types::{ChannelSet, Dataset, LabeledWindow, SensorRecording, SplitPlan, WindowOrigin};
pub use windows::{slide_windows, window_count, windowize};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::numkit::NumError;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("missing expected path {}", .0.display())]
    MissingPath(PathBuf),

    #[error("{}: line {line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{}: line {line}: expected {expected} columns, got {got}", path.display())]
    ColumnCount { path: PathBuf, line: usize, expected: usize, got: usize },

    #[error("invalid window spec: {0}")]
    BadWindowSpec(String),

    #[error("invalid groups: {0}")]
    BadGroups(String),

    #[error("invalid synthetic spec: {0}")]
    BadSynthSpec(String),

    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    #[error(transparent)]
    Num(#[from] NumError),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.to_path_buf(), source }
    }
}

/// Normalize every recording in place: per (user, channel), subtract the mean
/// and divide by the population standard deviation computed over all of that
/// user's samples across recordings. Channels with std below `eps` divide by
/// `eps` instead, which maps constant channels to exactly 0.
pub fn zscore_per_user(recordings: &mut [SensorRecording], eps: f64) -> Result<(), DataError> {
    if !(eps > 0.0) {
        return Err(DataError::Inconsistent(format!(
            "zscore eps must be positive, got {eps}"
        )));
    }
    if recordings.is_empty() {
        return Ok(());
    }
    let d = recordings[0].samples.cols();
    let mut users: Vec<u32> = recordings.iter().map(|r| r.user).collect();
    users.sort_unstable();
    users.dedup();

    for user in users {
        for ch in 0..d {
            let mut sum = 0.0;
            let mut count = 0usize;
            for rec in recordings.iter().filter(|r| r.user == user) {
                if rec.samples.cols() != d {
                    return Err(DataError::Inconsistent(format!(
                        "recording for user {} has {} channels, expected {}",
                        rec.user,
                        rec.samples.cols(),
                        d
                    )));
                }
                for t in 0..rec.samples.rows() {
                    sum += rec.samples.get(t, ch);
                }
                count += rec.samples.rows();
            }
            let mean = sum / count as f64;
            let mut ss = 0.0;
            for rec in recordings.iter().filter(|r| r.user == user) {
                for t in 0..rec.samples.rows() {
                    let v = rec.samples.get(t, ch) - mean;
                    ss += v * v;
                }
            }
            let std = (ss / count as f64).sqrt();
            let denom = if std < eps { eps } else { std };
            for rec in recordings.iter_mut().filter(|r| r.user == user) {
                let cols = rec.samples.cols();
                let data = rec.samples.data_mut();
                for row in data.chunks_mut(cols) {
                    row[ch] = (row[ch] - mean) / denom;
                }
            }
        }
    }
    Ok(())
}

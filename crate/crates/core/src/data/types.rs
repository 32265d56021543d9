//! Core data types shared across the pipeline.

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::numkit::Matrix;

/// One contiguous multichannel time series from one user doing one activity.
#[derive(Debug, Clone)]
pub struct SensorRecording {
    pub user: u32,
    /// Class id, 1-based and contiguous within a dataset.
    pub activity: usize,
    pub sample_rate: f64,
    /// T x d samples.
    pub samples: Matrix,
}

/// Where a window was cut from, for leakage auditing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowOrigin {
    /// Index of the recording in the ingested recording list.
    pub recording: usize,
    /// First sample row of the window within that recording.
    pub start: usize,
}

/// Fixed-length window with its label, user, and identity.
#[derive(Debug, Clone)]
pub struct LabeledWindow {
    /// l x d window content.
    pub x: Matrix,
    /// Class id, 1-based.
    pub y: usize,
    pub user: u32,
    /// Present for windows cut in-process; None after a CSV round trip.
    pub origin: Option<WindowOrigin>,
    /// Dataset-global window id. Survives CSV export/import, which is what
    /// makes train/eval overlap detectable across process boundaries.
    pub id: u64,
}

/// Windowed dataset ready for training or evaluation.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub windows: Vec<LabeledWindow>,
    /// Number of classes (labels are 1..=num_classes).
    pub num_classes: usize,
    pub num_channels: usize,
    pub window_len: usize,
}

impl Dataset {
    pub fn users(&self) -> Vec<u32> {
        let mut users: Vec<u32> = self.windows.iter().map(|w| w.user).collect();
        users.sort_unstable();
        users.dedup();
        users
    }

    /// Indices of windows belonging to the given users.
    pub fn windows_of(&self, users: &[u32]) -> Vec<usize> {
        self.windows
            .iter()
            .enumerate()
            .filter(|(_, w)| users.contains(&w.user))
            .map(|(i, _)| i)
            .collect()
    }

    /// New dataset holding only the given windows. Ids and the class count
    /// are preserved, so leakage checks stay meaningful on the subset.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            windows: indices.iter().map(|&i| self.windows[i].clone()).collect(),
            num_classes: self.num_classes,
            num_channels: self.num_channels,
            window_len: self.window_len,
        }
    }
}

/// One leave-one-group-out experiment: train on `source_users`, evaluate on
/// the held-out group's `target_users`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitPlan {
    /// Display name, e.g. "ABC->D".
    pub name: String,
    /// Name of the held-out group.
    pub held_out: String,
    pub source_users: Vec<u32>,
    pub target_users: Vec<u32>,
}

impl SplitPlan {
    /// Filesystem-safe variant of the display name.
    pub fn dir_name(&self) -> String {
        self.name.replace("->", "_to_")
    }
}

/// Which raw columns become model channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChannelSet {
    /// Accelerometer + gyroscope triplets of every sensor unit.
    AccGyro,
    /// Every sensor column the dataset considers valid.
    All,
    /// Explicit 0-based raw column indices.
    Custom(Vec<usize>),
}

impl ChannelSet {
    pub fn parse(s: &str) -> Result<Self, DataError> {
        match s.trim() {
            "acc_gyro" => Ok(ChannelSet::AccGyro),
            "all" => Ok(ChannelSet::All),
            other => {
                let idx: Result<Vec<usize>, _> =
                    other.split(',').map(|p| p.trim().parse::<usize>()).collect();
                match idx {
                    Ok(v) if !v.is_empty() => Ok(ChannelSet::Custom(v)),
                    _ => Err(DataError::Inconsistent(format!(
                        "channels must be \"acc_gyro\", \"all\", or a comma list of \
                         column indices; got \"{other}\""
                    ))),
                }
            }
        }
    }

    pub(crate) fn resolve(
        &self,
        acc_gyro: &[usize],
        all: &[usize],
        raw_cols: usize,
    ) -> Result<Vec<usize>, DataError> {
        let cols = match self {
            ChannelSet::AccGyro => acc_gyro.to_vec(),
            ChannelSet::All => all.to_vec(),
            ChannelSet::Custom(v) => v.clone(),
        };
        if let Some(&bad) = cols.iter().find(|&&c| c >= raw_cols) {
            return Err(DataError::Inconsistent(format!(
                "channel index {bad} out of range for {raw_cols} raw columns"
            )));
        }
        Ok(cols)
    }
}

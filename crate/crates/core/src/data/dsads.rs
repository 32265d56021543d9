//! Ingest for the 19-activity, 8-user daily/sports activities corpus.
//!
//! Directory layout: `root/aXX/pY/sZZ.txt` where `aXX` is the activity
//! (a01..a19), `pY` the user (p1..p8), and each `sZZ.txt` a 5-second segment
//! of 125 rows x 45 comma-separated values sampled at 25 Hz. Five body-worn
//! units contribute 9 columns each (accelerometer, gyroscope, magnetometer,
//! xyz each); the default channel subset keeps accelerometer + gyroscope.

use std::fs;
use std::path::Path;

use super::types::{ChannelSet, SensorRecording};
use super::DataError;
use crate::numkit::Matrix;

pub const DSADS_SAMPLE_RATE: f64 = 25.0;
pub const DSADS_RAW_COLS: usize = 45;

/// Accelerometer + gyroscope columns: the first 6 of each unit's 9.
pub fn dsads_acc_gyro() -> Vec<usize> {
    let mut cols = Vec::with_capacity(30);
    for unit in 0..5 {
        cols.extend(unit * 9..unit * 9 + 6);
    }
    cols
}

/// Every raw column is a sensor reading in this corpus.
pub fn dsads_all() -> Vec<usize> {
    (0..DSADS_RAW_COLS).collect()
}

/// Read every segment under `root`, one recording per segment file.
pub fn ingest_dsads(root: &Path, channels: &ChannelSet) -> Result<Vec<SensorRecording>, DataError> {
    if !root.is_dir() {
        return Err(DataError::MissingPath(root.to_path_buf()));
    }
    let keep = channels.resolve(&dsads_acc_gyro(), &dsads_all(), DSADS_RAW_COLS)?;
    let mut recordings = Vec::new();
    for activity in 1..=19usize {
        let adir = root.join(format!("a{activity:02}"));
        if !adir.is_dir() {
            continue;
        }
        for user in 1..=8u32 {
            let pdir = adir.join(format!("p{user}"));
            if !pdir.is_dir() {
                continue;
            }
            let mut files: Vec<_> = fs::read_dir(&pdir)
                .map_err(|e| DataError::io(&pdir, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| {
                    p.file_name()
                        .and_then(|n| n.to_str())
                        .map(|n| n.starts_with('s') && n.ends_with(".txt"))
                        .unwrap_or(false)
                })
                .collect();
            files.sort();
            for file in files {
                let samples = read_segment(&file, &keep)?;
                recordings.push(SensorRecording {
                    user,
                    activity,
                    sample_rate: DSADS_SAMPLE_RATE,
                    samples,
                });
            }
        }
    }
    if recordings.is_empty() {
        return Err(DataError::Inconsistent(format!(
            "no segment files found under {}",
            root.display()
        )));
    }
    Ok(recordings)
}

fn read_segment(path: &Path, keep: &[usize]) -> Result<Matrix, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let mut data = Vec::new();
    let mut rows = 0;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = [0.0; DSADS_RAW_COLS];
        let mut got = 0;
        for field in line.split(',') {
            if got < DSADS_RAW_COLS {
                fields[got] = field.trim().parse::<f64>().map_err(|_| DataError::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    msg: format!("bad number {:?}", field.trim()),
                })?;
            }
            got += 1;
        }
        if got != DSADS_RAW_COLS {
            return Err(DataError::ColumnCount {
                path: path.to_path_buf(),
                line: idx + 1,
                expected: DSADS_RAW_COLS,
                got,
            });
        }
        data.extend(keep.iter().map(|&c| fields[c]));
        rows += 1;
    }
    if rows == 0 {
        return Err(DataError::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "empty segment file".into(),
        });
    }
    Ok(Matrix::new(rows, keep.len(), data)?)
}

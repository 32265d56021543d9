//! Ingest for the 9-user physical-activity monitoring corpus.
//!
//! Directory layout: `root/Protocol/subjectNNN.dat`, user id NNN - 100. Each
//! row has 54 whitespace-separated values sampled at 100 Hz: timestamp,
//! activity id, heart rate, then three inertial units (hand, chest, ankle) of
//! 17 columns each: temperature, 16g accelerometer xyz, 6g accelerometer xyz,
//! gyroscope xyz, magnetometer xyz, orientation (4, invalid in this corpus).
//!
//! Only 11 activities are kept and remapped to contiguous labels 1..=11 in
//! ascending raw-id order; everything else (including the 0 = transient
//! marker) is dropped. Rows are cut into runs wherever the kept activity
//! changes, one recording per run, and sensor dropouts (NaN) are repaired per
//! channel within each run by linear interpolation, holding the edge values.

use std::fs;
use std::path::Path;

use super::types::{ChannelSet, SensorRecording};
use super::DataError;
use crate::numkit::Matrix;

pub const PAMAP2_SAMPLE_RATE: f64 = 100.0;
pub const PAMAP2_RAW_COLS: usize = 54;

/// Raw activity ids kept, in ascending order; position + 1 is the new label.
pub const PAMAP2_KEPT_ACTIVITIES: [u32; 11] = [1, 2, 3, 4, 5, 6, 7, 12, 13, 16, 17];

/// 16g accelerometer + gyroscope columns of the three units.
pub fn pamap2_acc_gyro() -> Vec<usize> {
    let mut cols = Vec::with_capacity(18);
    for base in [3usize, 20, 37] {
        cols.extend(base + 1..base + 4); // 16g accelerometer xyz
        cols.extend(base + 7..base + 10); // gyroscope xyz
    }
    cols
}

/// Every sensor column: heart rate plus each unit's temperature,
/// accelerometers, gyroscope, and magnetometer. Timestamp, activity id, and
/// the orientation quaternions (invalid in this corpus) are excluded.
pub fn pamap2_all() -> Vec<usize> {
    let mut cols = vec![2]; // heart rate
    for base in [3usize, 20, 37] {
        cols.extend(base..base + 13);
    }
    cols
}

fn remap_activity(raw: u32) -> Option<usize> {
    PAMAP2_KEPT_ACTIVITIES.iter().position(|&k| k == raw).map(|p| p + 1)
}

/// Read every subject file under `root/Protocol`.
pub fn ingest_pamap2(
    root: &Path,
    channels: &ChannelSet,
) -> Result<Vec<SensorRecording>, DataError> {
    let proto = root.join("Protocol");
    if !proto.is_dir() {
        return Err(DataError::MissingPath(proto));
    }
    let keep = channels.resolve(&pamap2_acc_gyro(), &pamap2_all(), PAMAP2_RAW_COLS)?;
    let mut files: Vec<_> = fs::read_dir(&proto)
        .map_err(|e| DataError::io(&proto, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter_map(|p| {
            let name = p.file_name()?.to_str()?;
            let digits = name.strip_prefix("subject")?.strip_suffix(".dat")?;
            let num: u32 = digits.parse().ok()?;
            num.checked_sub(100).filter(|&u| u > 0).map(|u| (u, p.clone()))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(DataError::Inconsistent(format!(
            "no subject files found under {}",
            proto.display()
        )));
    }

    let mut recordings = Vec::new();
    for (user, path) in files {
        read_subject(&path, user, &keep, &mut recordings)?;
    }
    if recordings.is_empty() {
        return Err(DataError::Inconsistent(
            "no rows with kept activity ids found".into(),
        ));
    }
    Ok(recordings)
}

fn read_subject(
    path: &Path,
    user: u32,
    keep: &[usize],
    out: &mut Vec<SensorRecording>,
) -> Result<(), DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let d = keep.len();
    let mut run_activity = 0usize; // 0 = no open run
    let mut run_data: Vec<f64> = Vec::new();

    let flush = |activity: usize, data: &mut Vec<f64>, out: &mut Vec<SensorRecording>| {
        if activity == 0 || data.is_empty() {
            data.clear();
            return Ok(());
        }
        let rows = data.len() / d;
        let mut samples = std::mem::take(data);
        repair_nans(&mut samples, rows, d);
        out.push(SensorRecording {
            user,
            activity,
            sample_rate: PAMAP2_SAMPLE_RATE,
            samples: Matrix::new(rows, d, samples)?,
        });
        Ok(())
    };

    let mut fields = vec![0.0f64; PAMAP2_RAW_COLS];
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut got = 0;
        for field in line.split_whitespace() {
            if got < PAMAP2_RAW_COLS {
                fields[got] = field.parse::<f64>().map_err(|_| DataError::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    msg: format!("bad number {field:?}"),
                })?;
            }
            got += 1;
        }
        if got != PAMAP2_RAW_COLS {
            return Err(DataError::ColumnCount {
                path: path.to_path_buf(),
                line: idx + 1,
                expected: PAMAP2_RAW_COLS,
                got,
            });
        }
        let raw = fields[1];
        if !(raw.is_finite() && raw >= 0.0 && raw.fract() == 0.0) {
            return Err(DataError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: format!("bad activity id {raw}"),
            });
        }
        let activity = remap_activity(raw as u32).unwrap_or(0);
        if activity != run_activity {
            flush(run_activity, &mut run_data, out)?;
            run_activity = activity;
        }
        if activity != 0 {
            run_data.extend(keep.iter().map(|&c| fields[c]));
        }
    }
    flush(run_activity, &mut run_data, out)
}

/// Replace NaN entries per column: linear interpolation between the nearest
/// finite neighbors, edge values held, all-NaN columns zero-filled.
fn repair_nans(data: &mut [f64], rows: usize, cols: usize) {
    for c in 0..cols {
        let finite: Vec<usize> = (0..rows)
            .filter(|&r| data[r * cols + c].is_finite())
            .collect();
        if finite.is_empty() {
            for r in 0..rows {
                data[r * cols + c] = 0.0;
            }
            continue;
        }
        if finite.len() == rows {
            continue;
        }
        let mut next = 0; // index into `finite` of the first anchor >= r
        for r in 0..rows {
            if data[r * cols + c].is_finite() {
                continue;
            }
            while next < finite.len() && finite[next] < r {
                next += 1;
            }
            let value = if next == 0 {
                data[finite[0] * cols + c] // before the first anchor: hold it
            } else if next == finite.len() {
                data[finite[finite.len() - 1] * cols + c] // past the last: hold it
            } else {
                let (lo, hi) = (finite[next - 1], finite[next]);
                let w = (r - lo) as f64 / (hi - lo) as f64;
                data[lo * cols + c] * (1.0 - w) + data[hi * cols + c] * w
            };
            data[r * cols + c] = value;
        }
    }
}

//! Sliding-window extraction.

use super::types::{Dataset, LabeledWindow, SensorRecording, WindowOrigin};
use super::DataError;
use crate::numkit::Matrix;

/// Window length and stride for a recording's sample rate.
///
/// l = round(window_seconds * rate), half rounding up; stride is
/// floor(l * (1 - overlap)), clamped to at least 1 so extraction always
/// advances even for degenerate tiny-window configs.
pub(crate) fn window_geometry(
    sample_rate: f64,
    window_seconds: f64,
    overlap: f64,
) -> Result<(usize, usize), DataError> {
    if !(window_seconds > 0.0 && sample_rate > 0.0) || window_seconds * sample_rate < 1.0 {
        return Err(DataError::BadWindowSpec(format!(
            "window of {window_seconds} s at {sample_rate} Hz covers less than one sample"
        )));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(DataError::BadWindowSpec(format!(
            "overlap must be in [0, 1), got {overlap}"
        )));
    }
    let l = (window_seconds * sample_rate).round() as usize;
    let step = ((l as f64) * (1.0 - overlap)).floor() as usize;
    Ok((l, step.max(1)))
}

/// Number of windows a recording of length `t` yields: starts at 0, step
/// apart, while start + l <= t.
pub fn window_count(t: usize, l: usize, step: usize) -> usize {
    if t < l {
        0
    } else {
        (t - l) / step + 1
    }
}

/// Cut one recording into overlapping windows, returned as (start, content).
/// A recording shorter than one window yields no windows.
pub fn slide_windows(
    rec: &SensorRecording,
    window_seconds: f64,
    overlap: f64,
) -> Result<Vec<(usize, Matrix)>, DataError> {
    let (l, step) = window_geometry(rec.sample_rate, window_seconds, overlap)?;
    let t = rec.samples.rows();
    let d = rec.samples.cols();
    let mut out = Vec::with_capacity(window_count(t, l, step));
    let mut start = 0;
    while start + l <= t {
        let mut data = Vec::with_capacity(l * d);
        for row in start..start + l {
            data.extend_from_slice(rec.samples.row(row));
        }
        out.push((start, Matrix::new(l, d, data)?));
        start += step;
    }
    Ok(out)
}

/// Window a full recording list into a dataset, assigning each window a
/// global id equal to its position in the combined window sequence.
pub fn windowize(
    recordings: &[SensorRecording],
    window_seconds: f64,
    overlap: f64,
) -> Result<Dataset, DataError> {
    if recordings.is_empty() {
        return Err(DataError::Inconsistent("no recordings to window".into()));
    }
    let d = recordings[0].samples.cols();
    let (expected_l, _) =
        window_geometry(recordings[0].sample_rate, window_seconds, overlap)?;

    let mut windows = Vec::new();
    let mut num_classes = 0;
    for (rec_idx, rec) in recordings.iter().enumerate() {
        if rec.samples.cols() != d {
            return Err(DataError::Inconsistent(format!(
                "recording {rec_idx} has {} channels, expected {d}",
                rec.samples.cols()
            )));
        }
        let (l, _) = window_geometry(rec.sample_rate, window_seconds, overlap)?;
        if l != expected_l {
            return Err(DataError::Inconsistent(format!(
                "recording {rec_idx} at {} Hz yields window length {l}, expected {expected_l}; \
                 mixed sample rates are not supported",
                rec.sample_rate
            )));
        }
        if rec.activity == 0 {
            return Err(DataError::Inconsistent(format!(
                "recording {rec_idx} has activity id 0; ids are 1-based"
            )));
        }
        num_classes = num_classes.max(rec.activity);
        for (start, x) in slide_windows(rec, window_seconds, overlap)? {
            windows.push(LabeledWindow {
                x,
                y: rec.activity,
                user: rec.user,
                origin: Some(WindowOrigin { recording: rec_idx, start }),
                id: windows.len() as u64,
            });
        }
    }
    if windows.is_empty() {
        return Err(DataError::Inconsistent(
            "windowing produced no windows; recordings shorter than one window".into(),
        ));
    }
    Ok(Dataset { windows, num_classes, num_channels: d, window_len: expected_l })
}

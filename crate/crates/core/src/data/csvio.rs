//! Canonical window CSV format, the only format the model and evaluation
//! stages consume.
//!
//! Header `user,activity,window_id,t,ch0..ch{d-1}`, UTF-8, LF line endings;
//! one row per sample, rows of a window contiguous with `t` counting up from
//! 0. Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle is bit-exact.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::types::{Dataset, LabeledWindow};
use super::DataError;
use crate::numkit::Matrix;

/// Write the selected windows of `data` to `path`.
pub fn write_windows_csv(
    path: &Path,
    data: &Dataset,
    indices: &[usize],
) -> Result<(), DataError> {
    if indices.is_empty() {
        return Err(DataError::Inconsistent(format!(
            "refusing to write empty window set to {}",
            path.display()
        )));
    }
    let d = data.num_channels;
    let mut out = String::from("user,activity,window_id,t");
    for c in 0..d {
        let _ = write!(out, ",ch{c}");
    }
    out.push('\n');
    for &i in indices {
        let w = &data.windows[i];
        for t in 0..w.x.rows() {
            let _ = write!(out, "{},{},{},{}", w.user, w.y, w.id, t);
            for &v in w.x.row(t) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| DataError::io(path, e))
}

/// Read a canonical window CSV back into a dataset. Window origins are not
/// representable in the format, so they come back as `None`; window ids are
/// preserved, which keeps train/eval overlap detectable across export.
pub fn read_windows_csv(path: &Path) -> Result<Dataset, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let mut lines = text.lines().enumerate();

    let parse_err = |line: usize, msg: String| DataError::Parse {
        path: path.to_path_buf(),
        line: line + 1,
        msg,
    };

    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(0, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 5 || cols[..4] != ["user", "activity", "window_id", "t"] {
        return Err(parse_err(hline, format!("bad header {header:?}")));
    }
    let d = cols.len() - 4;
    for (c, col) in cols[4..].iter().enumerate() {
        if *col != format!("ch{c}") {
            return Err(parse_err(hline, format!("expected column ch{c}, got {col:?}")));
        }
    }

    struct Open {
        id: u64,
        user: u32,
        activity: usize,
        rows: usize,
        data: Vec<f64>,
    }
    let mut windows: Vec<LabeledWindow> = Vec::new();
    let mut seen: HashSet<u64> = HashSet::new();
    let mut open: Option<Open> = None;
    let mut window_len = 0usize;

    let mut close = |w: Open, windows: &mut Vec<LabeledWindow>| -> Result<(), DataError> {
        if window_len == 0 {
            window_len = w.rows;
        } else if w.rows != window_len {
            return Err(DataError::Inconsistent(format!(
                "window {} has {} rows, expected {}",
                w.id, w.rows, window_len
            )));
        }
        windows.push(LabeledWindow {
            x: Matrix::new(w.rows, d, w.data)?,
            y: w.activity,
            user: w.user,
            origin: None,
            id: w.id,
        });
        Ok(())
    };

    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut next = |name: &str| {
            fields
                .next()
                .ok_or_else(|| parse_err(idx, format!("missing {name} column")))
        };
        let user: u32 = next("user")?
            .parse()
            .map_err(|_| parse_err(idx, "bad user id".into()))?;
        let activity: usize = next("activity")?
            .parse()
            .map_err(|_| parse_err(idx, "bad activity id".into()))?;
        if activity == 0 {
            return Err(parse_err(idx, "activity ids are 1-based; got 0".into()));
        }
        let id: u64 = next("window_id")?
            .parse()
            .map_err(|_| parse_err(idx, "bad window_id".into()))?;
        let t: usize = next("t")?
            .parse()
            .map_err(|_| parse_err(idx, "bad t".into()))?;

        let switch = open.as_ref().map(|w| w.id != id).unwrap_or(true);
        if switch {
            if let Some(w) = open.take() {
                close(w, &mut windows)?;
            }
            if !seen.insert(id) {
                return Err(parse_err(idx, format!("window id {id} appears twice")));
            }
            open = Some(Open { id, user, activity, rows: 0, data: Vec::new() });
        }
        let w = open.as_mut().expect("opened above");
        if t != w.rows {
            return Err(parse_err(idx, format!("expected t={}, got {t}", w.rows)));
        }
        if (w.user, w.activity) != (user, activity) {
            return Err(parse_err(
                idx,
                format!("window {id} changes user or activity mid-window"),
            ));
        }
        for c in 0..d {
            let raw = next(&format!("ch{c}"))?;
            let v: f64 = raw
                .parse()
                .map_err(|_| parse_err(idx, format!("bad number {raw:?} in ch{c}")))?;
            w.data.push(v);
        }
        if fields.next().is_some() {
            return Err(parse_err(idx, format!("more than {} columns", d + 4)));
        }
        w.rows += 1;
    }
    if let Some(w) = open.take() {
        close(w, &mut windows)?;
    }
    if windows.is_empty() {
        return Err(parse_err(hline, "no data rows".into()));
    }

    let num_classes = windows.iter().map(|w| w.y).max().unwrap_or(0);
    Ok(Dataset { windows, num_classes, num_channels: d, window_len })
}

/// Hex SHA-256 of an in-memory byte string.
pub fn sha256_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_string(&hasher.finalize())
}

/// Hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> Result<String, DataError> {
    let mut file = fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 8192];
    loop {
        let n = file.read(&mut buf).map_err(|e| DataError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Files written for one split plan, with content checksums.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PlanExport {
    pub name: String,
    pub dir: String,
    pub source_users: Vec<u32>,
    pub target_users: Vec<u32>,
    pub train_windows: usize,
    pub test_windows: usize,
    pub train_sha256: String,
    pub test_sha256: String,
}

/// Top-level record of an export run: what was written, from what, and the
/// checksums that make reruns comparable byte-for-byte.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExportManifest {
    pub schema: String,
    pub dataset: String,
    pub seed: u64,
    pub num_classes: usize,
    pub num_channels: usize,
    pub window_len: usize,
    pub total_windows: usize,
    pub plans: Vec<PlanExport>,
}

pub const MANIFEST_SCHEMA: &str = "harfeat.windows.v1";

impl ExportManifest {
    pub fn write(&self, path: &Path) -> Result<(), DataError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| DataError::Inconsistent(format!("manifest encode: {e}")))?;
        fs::write(path, json + "\n").map_err(|e| DataError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| DataError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })
    }
}

//! Set-level training rewards.
//!
//! Both rewards are computed over a batch of feature sequences with class and
//! user labels, using only the classes and users actually present in the
//! batch. All distances are squared Frobenius norms.
//!
//! - Class discrimination: mean squared distance between class centroids over
//!   ordered pairs of distinct classes. Higher is better.
//! - User invariance: for each class, the mean per-(class, user) scatter plus
//!   the mean squared gap between that class's per-user centroids, summed
//!   over classes and negated. Always <= 0; 0 means every user's features
//!   for a class collapse onto one point.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::numkit::Matrix;

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("reward batch is empty")]
    EmptyBatch,

    #[error("batch arrays disagree: {features} features, {labels} labels, {users} users")]
    LengthMismatch { features: usize, labels: usize, users: usize },

    #[error("feature {index} is {got}, expected {expected}")]
    ShapeMismatch { index: usize, got: String, expected: String },

    #[error("label at index {index} is 0; class ids start at 1")]
    ZeroLabel { index: usize },

    #[error("class discrimination needs at least 2 classes, found {found}")]
    NeedTwoClasses { found: usize },

    #[error("reward weight {name} must be non-negative, got {value}")]
    NegativeWeight { name: &'static str, value: f64 },
}

/// Feature sequences plus the class and user of the window each came from.
#[derive(Debug, Clone)]
pub struct RewardBatch {
    features: Vec<Matrix>,
    labels: Vec<usize>,
    users: Vec<u32>,
}

impl RewardBatch {
    pub fn new(
        features: Vec<Matrix>,
        labels: Vec<usize>,
        users: Vec<u32>,
    ) -> Result<Self, RewardError> {
        if features.is_empty() {
            return Err(RewardError::EmptyBatch);
        }
        if features.len() != labels.len() || features.len() != users.len() {
            return Err(RewardError::LengthMismatch {
                features: features.len(),
                labels: labels.len(),
                users: users.len(),
            });
        }
        let expected = (features[0].rows(), features[0].cols());
        for (i, f) in features.iter().enumerate() {
            if (f.rows(), f.cols()) != expected {
                return Err(RewardError::ShapeMismatch {
                    index: i,
                    got: f.dims(),
                    expected: format!("{}x{}", expected.0, expected.1),
                });
            }
        }
        if let Some(i) = labels.iter().position(|&y| y == 0) {
            return Err(RewardError::ZeroLabel { index: i });
        }
        Ok(Self { features, labels, users })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires at least one sample
    }

    pub fn features(&self) -> &[Matrix] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn users(&self) -> &[u32] {
        &self.users
    }
}

/// Weighted objective value with its parts and centroid diagnostics.
#[derive(Debug, Clone)]
pub struct RewardBreakdown {
    pub r_cls: f64,
    pub r_inv: f64,
    pub j: f64,
    pub w_cls: f64,
    pub w_inv: f64,
    /// Frobenius norm of each class centroid present in the batch.
    pub class_centroid_norms: BTreeMap<usize, f64>,
    /// Frobenius norm of each (class, user) cell centroid.
    pub cell_centroid_norms: BTreeMap<(usize, u32), f64>,
}

fn mean_of<'a>(mats: impl Iterator<Item = &'a Matrix>, rows: usize, cols: usize) -> Matrix {
    let mut sum = Matrix::zeros(rows, cols);
    let mut n = 0usize;
    for m in mats {
        for (o, &v) in sum.data_mut().iter_mut().zip(m.as_slice()) {
            *o += v;
        }
        n += 1;
    }
    debug_assert!(n > 0);
    let inv = 1.0 / n as f64;
    for o in sum.data_mut() {
        *o *= inv;
    }
    sum
}

fn frob_sq_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum()
}

/// Mean feature sequence per class present in the batch, keyed by class id.
pub fn class_centroids(batch: &RewardBatch) -> BTreeMap<usize, Matrix> {
    let (r, c) = (batch.features[0].rows(), batch.features[0].cols());
    let mut out = BTreeMap::new();
    let mut classes: Vec<usize> = batch.labels.clone();
    classes.sort_unstable();
    classes.dedup();
    for cls in classes {
        let members = batch
            .features
            .iter()
            .zip(&batch.labels)
            .filter(|(_, &y)| y == cls)
            .map(|(f, _)| f);
        out.insert(cls, mean_of(members, r, c));
    }
    out
}

/// Mean feature sequence per (class, user) cell present in the batch.
pub fn cell_centroids(batch: &RewardBatch) -> BTreeMap<(usize, u32), Matrix> {
    let (r, c) = (batch.features[0].rows(), batch.features[0].cols());
    let mut cells: Vec<(usize, u32)> = batch
        .labels
        .iter()
        .zip(&batch.users)
        .map(|(&y, &u)| (y, u))
        .collect();
    cells.sort_unstable();
    cells.dedup();
    let mut out = BTreeMap::new();
    for (cls, usr) in cells {
        let members = batch
            .features
            .iter()
            .zip(batch.labels.iter().zip(&batch.users))
            .filter(|(_, (&y, &u))| y == cls && u == usr)
            .map(|(f, _)| f);
        out.insert((cls, usr), mean_of(members, r, c));
    }
    out
}

/// Class-discrimination reward: mean squared centroid distance over ordered
/// pairs of distinct classes present in the batch.
pub fn r_cls(batch: &RewardBatch) -> Result<f64, RewardError> {
    let centroids = class_centroids(batch);
    let c = centroids.len();
    if c < 2 {
        return Err(RewardError::NeedTwoClasses { found: c });
    }
    let mut sum = 0.0;
    for (ca, ma) in &centroids {
        for (cb, mb) in &centroids {
            if ca != cb {
                sum += frob_sq_diff(ma, mb);
            }
        }
    }
    Ok(sum / (c * (c - 1)) as f64)
}

/// User-invariance reward (always <= 0). Per class: mean per-user scatter
/// around the (class, user) centroid, plus the mean squared gap between the
/// class's per-user centroids over ordered user pairs (0 when only one user
/// has samples for the class). Summed over classes, negated.
pub fn r_inv(batch: &RewardBatch) -> f64 {
    let cells = cell_centroids(batch);
    let mut classes: Vec<usize> = batch.labels.clone();
    classes.sort_unstable();
    classes.dedup();

    let mut total = 0.0;
    for cls in classes {
        let users: Vec<u32> = cells
            .keys()
            .filter(|(y, _)| *y == cls)
            .map(|(_, u)| *u)
            .collect();
        let uc = users.len();

        let mut intra = 0.0;
        for &usr in &users {
            let centroid = &cells[&(cls, usr)];
            let mut cell_sum = 0.0;
            let mut cell_n = 0usize;
            for ((f, &y), &u) in batch.features.iter().zip(&batch.labels).zip(&batch.users) {
                if y == cls && u == usr {
                    cell_sum += frob_sq_diff(f, centroid);
                    cell_n += 1;
                }
            }
            intra += cell_sum / cell_n as f64;
        }
        intra /= uc as f64;

        let mut inter = 0.0;
        if uc >= 2 {
            for &ua in &users {
                for &ub in &users {
                    if ua != ub {
                        inter += frob_sq_diff(&cells[&(cls, ua)], &cells[&(cls, ub)]);
                    }
                }
            }
            inter /= (uc * (uc - 1)) as f64;
        }

        total += intra + inter;
    }
    -total
}

/// j = w_cls * r_cls + w_inv * r_inv, with centroid-norm diagnostics.
pub fn combined_objective(
    batch: &RewardBatch,
    w_cls: f64,
    w_inv: f64,
) -> Result<RewardBreakdown, RewardError> {
    for (name, value) in [("w_cls", w_cls), ("w_inv", w_inv)] {
        if !(value >= 0.0) {
            return Err(RewardError::NegativeWeight { name, value });
        }
    }
    let r_cls = r_cls(batch)?;
    let r_inv = r_inv(batch);
    let j = w_cls * r_cls + w_inv * r_inv;
    let class_centroid_norms = class_centroids(batch)
        .into_iter()
        .map(|(c, m)| (c, m.frob_sq().sqrt()))
        .collect();
    let cell_centroid_norms = cell_centroids(batch)
        .into_iter()
        .map(|(k, m)| (k, m.frob_sq().sqrt()))
        .collect();
    Ok(RewardBreakdown {
        r_cls,
        r_inv,
        j,
        w_cls,
        w_inv,
        class_centroid_norms,
        cell_centroid_norms,
    })
}

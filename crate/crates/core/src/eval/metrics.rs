//! Confusion matrices and the scores derived from them.

use crate::numkit::Matrix;

use super::{EvalError, ExperimentResult};

/// C x C counts; rows are true classes, columns predictions, both 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<u64>,
    c: usize,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix { counts: vec![0; num_classes * num_classes], c: num_classes }
    }

    pub fn num_classes(&self) -> usize {
        self.c
    }

    pub fn record(&mut self, true_class: usize, predicted: usize) {
        assert!(
            (1..=self.c).contains(&true_class) && (1..=self.c).contains(&predicted),
            "class out of range: true {true_class}, predicted {predicted}, C = {}",
            self.c
        );
        self.counts[(true_class - 1) * self.c + (predicted - 1)] += 1;
    }

    pub fn get(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[(true_class - 1) * self.c + (predicted - 1)]
    }

    /// Total evaluated windows.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (1..=self.c).map(|i| self.get(i, i)).sum()
    }

    /// trace / total.
    pub fn accuracy(&self) -> Result<f64, EvalError> {
        let total = self.total();
        if total == 0 {
            return Err(EvalError::EmptyConfusion);
        }
        Ok(self.trace() as f64 / total as f64)
    }

    /// F1 per class: 2PR/(P+R) with precision from the class column and
    /// recall from its row; 0 when both are undefined or zero.
    pub fn per_class_f1(&self) -> Vec<f64> {
        (1..=self.c)
            .map(|k| {
                let tp = self.get(k, k) as f64;
                let col: u64 = (1..=self.c).map(|t| self.get(t, k)).sum();
                let row: u64 = (1..=self.c).map(|p| self.get(k, p)).sum();
                let precision = if col == 0 { 0.0 } else { tp / col as f64 };
                let recall = if row == 0 { 0.0 } else { tp / row as f64 };
                if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                }
            })
            .collect()
    }

    /// Each row scaled to sum 1; all-zero rows stay zero.
    pub fn row_normalized(&self) -> Matrix {
        let mut out = Matrix::zeros(self.c, self.c);
        for t in 1..=self.c {
            let row: u64 = (1..=self.c).map(|p| self.get(t, p)).sum();
            if row == 0 {
                continue;
            }
            for p in 1..=self.c {
                out.set(t - 1, p - 1, self.get(t, p) as f64 / row as f64);
            }
        }
        out
    }

    /// CSV with a `true_class` key column and one `pred_c` column per class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true_class");
        for p in 1..=self.c {
            out.push_str(&format!(",pred_{p}"));
        }
        out.push('\n');
        for t in 1..=self.c {
            out.push_str(&t.to_string());
            for p in 1..=self.c {
                out.push_str(&format!(",{}", self.get(t, p)));
            }
            out.push('\n');
        }
        out
    }
}

/// Cross-plan averages in the shape of a results table row.
#[derive(Debug, Clone)]
pub struct Summary {
    pub num_plans: usize,
    pub mean_accuracy: f64,
    /// Sample (n-1) standard deviation over plan accuracies.
    pub stdev_accuracy: f64,
    /// True when only one plan was aggregated, so the stdev is 0 by fiat.
    pub single_plan: bool,
    pub mean_f1: Vec<f64>,
    /// Element-wise mean of the row-normalized plan confusions.
    pub mean_confusion: Matrix,
}

/// Mean / sample-stdev over plans, plus averaged F1 and confusion.
///
/// Confusions are row-normalized before averaging so plans with bigger
/// targets do not dominate the picture.
pub fn aggregate(results: &[ExperimentResult]) -> Result<Summary, EvalError> {
    let first = results.first().ok_or(EvalError::NoResults)?;
    let c = first.confusion.num_classes();
    for r in results {
        if r.confusion.num_classes() != c {
            return Err(EvalError::MixedClassCounts { a: c, b: r.confusion.num_classes() });
        }
    }

    let n = results.len();
    let mean_accuracy = results.iter().map(|r| r.accuracy).sum::<f64>() / n as f64;
    let single_plan = n == 1;
    let stdev_accuracy = if single_plan {
        0.0
    } else {
        let ss: f64 = results
            .iter()
            .map(|r| (r.accuracy - mean_accuracy) * (r.accuracy - mean_accuracy))
            .sum();
        (ss / (n - 1) as f64).sqrt()
    };

    let mut mean_f1 = vec![0.0; c];
    let mut mean_confusion = Matrix::zeros(c, c);
    for r in results {
        for (acc, f) in mean_f1.iter_mut().zip(&r.per_class_f1) {
            *acc += f;
        }
        let norm = r.confusion.row_normalized();
        for (acc, v) in mean_confusion.data_mut().iter_mut().zip(norm.as_slice()) {
            *acc += v;
        }
    }
    let inv = 1.0 / n as f64;
    for f in mean_f1.iter_mut() {
        *f *= inv;
    }
    for v in mean_confusion.data_mut() {
        *v *= inv;
    }

    Ok(Summary {
        num_plans: n,
        mean_accuracy,
        stdev_accuracy,
        single_plan,
        mean_f1,
        mean_confusion,
    })
}

/// One row per plan: `plan,accuracy,seed` then per-class F1 columns.
pub fn results_csv(results: &[ExperimentResult]) -> String {
    let c = results.first().map(|r| r.per_class_f1.len()).unwrap_or(0);
    let mut out = String::from("plan,accuracy,seed");
    for k in 1..=c {
        out.push_str(&format!(",f1_class_{k}"));
    }
    out.push('\n');
    for r in results {
        out.push_str(&format!("{},{},{}", r.plan, r.accuracy, r.seed));
        for f in &r.per_class_f1 {
            out.push_str(&format!(",{f}"));
        }
        out.push('\n');
    }
    out
}

/// One column per plan plus `avg` and `stdev`, one data row — the shape of a
/// cross-user results table. Accuracies stay as fractions.
pub fn summary_csv(results: &[ExperimentResult], summary: &Summary) -> String {
    let mut header = String::new();
    let mut row = String::new();
    for r in results {
        header.push_str(&format!("{},", r.plan));
        row.push_str(&format!("{},", r.accuracy));
    }
    header.push_str("avg,stdev\n");
    row.push_str(&format!("{},{}\n", summary.mean_accuracy, summary.stdev_accuracy));
    header.push_str(&row);
    header
}

/// CSV of a row-normalized averaged confusion (float entries).
pub fn mean_confusion_csv(m: &Matrix) -> String {
    let mut out = String::from("true_class");
    for p in 1..=m.cols() {
        out.push_str(&format!(",pred_{p}"));
    }
    out.push('\n');
    for t in 0..m.rows() {
        out.push_str(&(t + 1).to_string());
        for p in 0..m.cols() {
            out.push_str(&format!(",{}", m.get(t, p)));
        }
        out.push('\n');
    }
    out
}

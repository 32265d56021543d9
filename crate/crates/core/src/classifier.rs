//! Multinomial logistic regression: the linear probe that scores features.
//!
//! The probe is trained on flattened feature sequences from source users and
//! evaluated on held-out users, so its accuracy measures how much
//! user-invariant class structure the features carry. The objective
//! -sum log P(y_i | x_i) + lambda*||beta||^2 (biases unregularized) is
//! convex; full-batch gradient descent with step-halving line search finds
//! the unique optimum to a small gradient norm.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::Matrix;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("no training samples")]
    EmptyTrainingSet,

    #[error("{n} samples cannot cover {c} classes")]
    FewerSamplesThanClasses { n: usize, c: usize },

    #[error("class {0} has no training samples")]
    MissingClass(usize),

    #[error("label {label} at sample {index} outside 1..={c}")]
    BadLabel { index: usize, label: usize, c: usize },

    #[error("sample {index} has {got} features, expected {expected}")]
    FeatureLength { index: usize, expected: usize, got: usize },

    #[error("{0} labels for {1} samples")]
    LabelCount(usize, usize),

    #[error("lambda must be finite and >= 0, got {0}")]
    BadLambda(f64),
}

/// Row-major flattening of a token sequence, generation order first.
pub fn flatten(tokens: &Matrix) -> Vec<f64> {
    tokens.as_slice().to_vec()
}

/// Fitted probe: per-class weight rows and biases over flattened features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LrModel {
    /// C x D weights; row c-1 scores class c.
    pub beta: Matrix,
    /// Per-class biases.
    pub bias: Vec<f64>,
    pub lambda: f64,
    pub num_classes: usize,
}

const GRAD_TOL: f64 = 1e-6;
const MAX_ITERS: usize = 50_000;

impl LrModel {
    /// Fit on `features` (one row per sample) with labels in 1..=num_classes.
    pub fn fit(
        features: &Matrix,
        labels: &[usize],
        num_classes: usize,
        lambda: f64,
    ) -> Result<Self, ClassifierError> {
        let d = features.cols();
        Self::fit_from(features, labels, num_classes, lambda, Matrix::zeros(num_classes, d), vec![0.0; num_classes])
            .map(|(model, _)| model)
    }

    /// As `fit`, from an explicit starting point; returns the objective
    /// trace. Convexity makes the endpoint independent of the start, which
    /// the tests verify.
    fn fit_from(
        features: &Matrix,
        labels: &[usize],
        num_classes: usize,
        lambda: f64,
        mut beta: Matrix,
        mut bias: Vec<f64>,
    ) -> Result<(Self, Vec<f64>), ClassifierError> {
        let n = features.rows();
        let d = features.cols();
        let c = num_classes;
        if n == 0 {
            return Err(ClassifierError::EmptyTrainingSet);
        }
        if labels.len() != n {
            return Err(ClassifierError::LabelCount(labels.len(), n));
        }
        if n < c {
            return Err(ClassifierError::FewerSamplesThanClasses { n, c });
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(ClassifierError::BadLambda(lambda));
        }
        let mut seen = vec![false; c];
        for (index, &label) in labels.iter().enumerate() {
            if label == 0 || label > c {
                return Err(ClassifierError::BadLabel { index, label, c });
            }
            seen[label - 1] = true;
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(ClassifierError::MissingClass(missing + 1));
        }

        let objective = |beta: &Matrix, bias: &[f64]| -> f64 {
            let mut nll = 0.0;
            for i in 0..n {
                let x = features.row(i);
                let logits = row_logits(beta, bias, x);
                nll -= logits[labels[i] - 1] - log_sum_exp(&logits);
            }
            nll + lambda * beta.frob_sq()
        };

        // Fixed diagonal curvature bounds (0.25 majorizes softmax curvature)
        // precondition the descent direction, so a heavily regularized beta
        // and the free biases converge on the same schedule.
        let mut curv_beta = vec![2.0 * lambda; d];
        for i in 0..n {
            for (cv, &xd) in curv_beta.iter_mut().zip(features.row(i)) {
                *cv += 0.25 * xd * xd;
            }
        }
        for cv in curv_beta.iter_mut() {
            *cv = cv.max(1e-12);
        }
        let curv_bias = 0.25 * n as f64;

        let mut trace = Vec::new();
        let mut obj = objective(&beta, &bias);
        trace.push(obj);
        let mut step = 1.0_f64;

        for _ in 0..MAX_ITERS {
            // Gradient of the objective at the current point.
            let mut gbeta = Matrix::zeros(c, d);
            let mut gbias = vec![0.0; c];
            for i in 0..n {
                let x = features.row(i);
                let logits = row_logits(&beta, &bias, x);
                let probs = softmax(&logits);
                for cc in 0..c {
                    let resid = probs[cc] - if labels[i] == cc + 1 { 1.0 } else { 0.0 };
                    gbias[cc] += resid;
                    let grow = gbeta.row_mut(cc);
                    for (gd, &xd) in grow.iter_mut().zip(x) {
                        *gd += resid * xd;
                    }
                }
            }
            let mut gnorm_sq = 0.0;
            for cc in 0..c {
                let brow = beta.row(cc).to_vec();
                let grow = gbeta.row_mut(cc);
                for (gd, bd) in grow.iter_mut().zip(brow) {
                    *gd += 2.0 * lambda * bd;
                    gnorm_sq += *gd * *gd;
                }
                gnorm_sq += gbias[cc] * gbias[cc];
            }
            if gnorm_sq.sqrt() <= GRAD_TOL {
                break;
            }

            // Step-halving line search: accept the first decrease.
            let mut accepted = false;
            for _ in 0..200 {
                let mut cand_beta = beta.clone();
                for (row, (bd, gd)) in cand_beta
                    .data_mut()
                    .iter_mut()
                    .zip(gbeta.as_slice())
                    .enumerate()
                {
                    *bd -= step * gd / curv_beta[row % d];
                }
                let cand_bias: Vec<f64> = bias
                    .iter()
                    .zip(&gbias)
                    .map(|(b, g)| b - step * g / curv_bias)
                    .collect();
                let cand_obj = objective(&cand_beta, &cand_bias);
                if cand_obj < obj {
                    beta = cand_beta;
                    bias = cand_bias;
                    obj = cand_obj;
                    trace.push(obj);
                    accepted = true;
                    step = (step * 1.5).min(8.0);
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break; // no descent direction at f64 resolution: done
            }
        }

        Ok((LrModel { beta, bias, lambda, num_classes }, trace))
    }

    /// Predicted class (1-based, smallest id wins ties) and the full
    /// probability vector.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>), ClassifierError> {
        if x.len() != self.beta.cols() {
            return Err(ClassifierError::FeatureLength {
                index: 0,
                expected: self.beta.cols(),
                got: x.len(),
            });
        }
        let logits = row_logits(&self.beta, &self.bias, x);
        let probs = softmax(&logits);
        let mut best = 0;
        for (cc, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = cc;
            }
        }
        Ok((best + 1, probs))
    }
}

fn row_logits(beta: &Matrix, bias: &[f64], x: &[f64]) -> Vec<f64> {
    (0..beta.rows())
        .map(|cc| {
            let dot: f64 = beta.row(cc).iter().zip(x).map(|(b, v)| b * v).sum();
            dot + bias[cc]
        })
        .collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

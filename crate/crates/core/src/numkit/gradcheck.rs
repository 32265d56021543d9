//! Finite-difference validation of the reverse pass.

use super::{Graph, Matrix, Node, NumError};

/// Compare the analytic gradient of `f` at `at` against central differences.
///
/// `f` must build a scalar (1x1) output from the single input node it is
/// given, and must be deterministic: it is re-invoked on a fresh graph for
/// every perturbed entry. Returns the worst relative error
/// |analytic - cd| / max(1, |cd|) over all entries.
pub fn check_gradient<F>(f: F, at: &Matrix, step: f64) -> Result<f64, NumError>
where
    F: Fn(&mut Graph, Node) -> Result<Node, NumError>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(NumError::Invalid(format!("step must be positive, got {step}")));
    }

    let mut g = Graph::new();
    let x = g.leaf(at.clone());
    let out = f(&mut g, x)?;
    let ov = g.value(out);
    if ov.rows() != 1 || ov.cols() != 1 {
        return Err(NumError::Invalid(format!(
            "check_gradient needs a scalar output, got {}",
            ov.dims()
        )));
    }
    g.backward(out)?;
    // A gradient of None means the output ignores x, i.e. the gradient is 0.
    let analytic = g
        .grad(x)
        .cloned()
        .unwrap_or_else(|| Matrix::zeros(at.rows(), at.cols()));

    let eval_at = |r: usize, c: usize, v: f64| -> Result<f64, NumError> {
        let mut pert = at.clone();
        pert.set(r, c, v);
        let mut g2 = Graph::new();
        let x2 = g2.leaf(pert);
        let o2 = f(&mut g2, x2)?;
        Ok(g2.value(o2).item())
    };

    let mut worst = 0.0f64;
    for r in 0..at.rows() {
        for c in 0..at.cols() {
            let base = at.get(r, c);
            let fp = eval_at(r, c, base + step)?;
            let fm = eval_at(r, c, base - step)?;
            let cd = (fp - fm) / (2.0 * step);
            let err = (analytic.get(r, c) - cd).abs() / cd.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

//! Asymmetric squared error.
//!
//! With `e = y - y_hat`, each term is `e^2 (sign(e) + a)^2`, averaged over
//! the batch. For `a < 0` overestimates (`e < 0`) weigh `(a - 1)^2` against
//! `(a + 1)^2` for underestimates.

use crate::error::{Error, Result};

#[inline]
fn sign(e: f64) -> f64 {
    if e > 0.0 {
        1.0
    } else if e < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Loss contribution of one residual `e`, before the `1/N` average.
#[inline]
pub fn asym_term(e: f64, a: f64) -> f64 {
    let w = sign(e) + a;
    e * e * w * w
}

/// Derivative of [`asym_term`] with respect to the prediction.
#[inline]
pub fn asym_term_grad(e: f64, a: f64) -> f64 {
    let w = sign(e) + a;
    -2.0 * e * w * w
}

/// Mean asymmetric loss and its gradient with respect to each prediction.
pub fn asym_loss(predictions: &[f64], targets: &[f64], a: f64) -> Result<(f64, Vec<f64>)> {
    if predictions.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = predictions.len() as f64;
    let mut loss = 0.0;
    let grad = predictions
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            let e = y - p;
            loss += asym_term(e, a);
            asym_term_grad(e, a) / n
        })
        .collect();
    Ok((loss / n, grad))
}

//! Class-weighted binary cross-entropy, computed from the logit.
//!
//! Working on logits instead of probabilities keeps the loss finite for any
//! input: `-ln sigmoid(z)` is `softplus(-z)` and never evaluates a `ln(0)`.

use super::ops::sigmoid;

/// `ln(1 + e^x)` without overflow: `max(x, 0) + ln(1 + e^-|x|)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Loss and its logit gradient for one example:
/// `weight * (softplus(z) - t * z)` and `weight * (sigmoid(z) - t)`.
pub fn weighted_bce_with_logit(logit: f64, target: bool, weight: f64) -> (f64, f64) {
    let t = f64::from(target);
    let loss = weight * (softplus(logit) - t * logit);
    let grad = weight * (sigmoid(logit) - t);
    (loss, grad)
}

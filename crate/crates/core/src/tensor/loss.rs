use ndarray::{Array1, ArrayView1};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

pub fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

/// Target probability for a smoothed binary label.
pub fn smoothed_target(real: bool, smoothing: f64) -> f64 {
    if real {
        1.0 - smoothing
    } else {
        smoothing
    }
}

/// Mean binary cross-entropy of `probs` against the smoothed label.
///
/// An empty batch has zero loss.
pub fn bce_smoothed(probs: ArrayView1<f64>, real: bool, smoothing: f64) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    let t = smoothed_target(real, smoothing);
    let total: f64 = probs
        .iter()
        .map(|&p| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    total / probs.len() as f64
}

/// Gradient of [`bce_smoothed`] with respect to the pre-sigmoid logits.
///
/// Entries whose probability was clamped get zero gradient, matching the
/// flat region introduced by the clamp.
pub fn bce_smoothed_logit_grad(probs: ArrayView1<f64>, real: bool, smoothing: f64) -> Array1<f64> {
    let b = probs.len().max(1) as f64;
    let t = smoothed_target(real, smoothing);
    probs.mapv(|p| {
        if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
            0.0
        } else {
            (p - t) / b
        }
    })
}

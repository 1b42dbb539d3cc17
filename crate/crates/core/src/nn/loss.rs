use crate::error::{Error, Result};

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = p.iter().sum();
    for v in &mut p {
        *v /= sum;
    }
    p
}

/// Returns `(-ln p[target], p)`; `p - onehot(target)` is the logit gradient.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= logits.len() {
        return Err(Error::out_of_range("target class", target as i64));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let loss = sum.ln() - (logits[target] - max);
    Ok((loss, softmax(logits)))
}

/// `0.5 * tanh(z)` and its derivative.
pub fn half_tanh(z: f64) -> (f64, f64) {
    let t = z.tanh();
    (0.5 * t, 0.5 * (1.0 - t * t))
}

use crate::error::{Error, Result};

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::InvalidArgument("softmax of an empty vector".into()));
    }
    if logits.iter().any(|x| x.is_nan()) {
        return Err(Error::NonFinite("NaN logit passed to softmax".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// `-ln p[target]`.
pub fn cross_entropy(probabilities: &[f64], target: usize) -> Result<f64> {
    let p = probabilities.get(target).ok_or_else(|| {
        Error::InvalidArgument(format!("class {target} out of range for {} classes", probabilities.len()))
    })?;
    Ok(-p.ln())
}

/// Cross-entropy computed from logits via log-sum-exp; finite even when the
/// target probability underflows.
pub fn cross_entropy_from_logits(logits: &[f64], target: usize) -> Result<f64> {
    let z = logits.get(target).ok_or_else(|| {
        Error::InvalidArgument(format!("class {target} out of range for {} classes", logits.len()))
    })?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    Ok(lse - z)
}

/// Gradient of softmax followed by cross-entropy, taken at the logits: `p - onehot(target)`.
pub fn softmax_cross_entropy_grad(probabilities: &[f64], target: usize) -> Result<Vec<f64>> {
    if target >= probabilities.len() {
        return Err(Error::InvalidArgument(format!(
            "class {target} out of range for {} classes",
            probabilities.len()
        )));
    }
    let mut g = probabilities.to_vec();
    g[target] -= 1.0;
    Ok(g)
}

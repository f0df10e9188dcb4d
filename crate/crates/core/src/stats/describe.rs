//! Location, spread, shape and scale reliability.

use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with the n - 1 denominator.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Descriptives {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    /// Adjusted Fisher-Pearson skewness G1; needs n >= 3.
    pub skewness: Option<f64>,
    /// Excess kurtosis G2 with small-sample correction; needs n >= 4.
    pub kurtosis: Option<f64>,
}

pub fn descriptives(x: &[f64]) -> Result<Descriptives> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("descriptives need at least 2 values, got {n}")));
    }
    let m = mean(x);
    let nf = n as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / nf;
    if !(m2 > 0.0) {
        return Err(Error::ZeroVariance("constant vector has undefined moments".into()));
    }
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / nf;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / nf;
    let g1 = m3 / m2.powf(1.5);
    let g2 = m4 / (m2 * m2) - 3.0;
    let skewness = (n >= 3).then(|| (nf * (nf - 1.0)).sqrt() / (nf - 2.0) * g1);
    let kurtosis = (n >= 4).then(|| (nf - 1.0) / ((nf - 2.0) * (nf - 3.0)) * ((nf + 1.0) * g2 + 6.0));
    Ok(Descriptives {
        n,
        mean: m,
        sd: (m2 * nf / (nf - 1.0)).sqrt(),
        skewness,
        kurtosis,
    })
}

/// Cronbach's alpha for a respondents x items matrix (one row per respondent).
pub fn cronbach_alpha(rows: &[Vec<f64>]) -> Result<f64> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return Err(Error::InvalidArgument(format!(
            "cronbach alpha needs at least 2 respondents and 2 items, got {n}x{k}"
        )));
    }
    if rows.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidArgument("ragged item matrix".into()));
    }
    let item_var: f64 = (0..k)
        .map(|j| variance(&rows.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .sum();
    let totals: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
    let total_var = variance(&totals);
    if !(total_var > 0.0) {
        return Err(Error::ZeroVariance("scale totals are constant".into()));
    }
    let kf = k as f64;
    Ok(kf / (kf - 1.0) * (1.0 - item_var / total_var))
}

//! Correlation, simple regression and two-group t tests.

use std::fmt;
use std::str::FromStr;

use super::describe::{mean, variance};
use super::tdist::{f_sf, t_two_sided_p};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correlation {
    pub n: usize,
    pub r: f64,
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// t statistic of a correlation r over n pairs.
pub fn t_from_r(r: f64, n: usize) -> f64 {
    let df = n as f64 - 2.0;
    if r.abs() >= 1.0 {
        return f64::INFINITY.copysign(r);
    }
    r * df.sqrt() / (1.0 - r * r).sqrt()
}

/// Pearson r with its two-sided p value (t test on n - 2 df).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::InvalidArgument(format!("pearson needs equal lengths, got {n} and {}", y.len())));
    }
    if n < 3 {
        return Err(Error::InvalidArgument(format!("pearson needs at least 3 pairs, got {n}")));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::ZeroVariance("pearson needs non-constant x and y".into()));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    Ok(correlation_from_r(r, n))
}

pub fn correlation_from_r(r: f64, n: usize) -> Correlation {
    let t = t_from_r(r, n);
    let df = n as f64 - 2.0;
    Correlation {
        n,
        r,
        t,
        df,
        p: t_two_sided_p(t, df),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegressionReport {
    pub n: usize,
    /// Standardized slope; equals r for one predictor.
    pub beta: f64,
    /// Standard error of the standardized slope.
    pub se: f64,
    /// Raw slope and intercept; absent when built from r alone.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub t: f64,
    pub r2: f64,
    pub adj_r2: f64,
    pub f: f64,
    pub df1: f64,
    pub df2: f64,
    pub p: f64,
}

/// Simple regression summary implied by a correlation r over n cases.
pub fn regression_from_r(r: f64, n: usize) -> Result<RegressionReport> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("regression needs at least 3 cases, got {n}")));
    }
    if !(-1.0..=1.0).contains(&r) {
        return Err(Error::InvalidArgument(format!("correlation {r} outside [-1, 1]")));
    }
    let nf = n as f64;
    let r2 = r * r;
    let df2 = nf - 2.0;
    let f = if r2 >= 1.0 { f64::INFINITY } else { df2 * r2 / (1.0 - r2) };
    Ok(RegressionReport {
        n,
        beta: r,
        se: ((1.0 - r2) / df2).sqrt(),
        slope: None,
        intercept: None,
        t: t_from_r(r, n),
        r2,
        adj_r2: 1.0 - (1.0 - r2) * (nf - 1.0) / df2,
        f,
        df1: 1.0,
        df2,
        p: f_sf(f, 1.0, df2),
    })
}

/// Ordinary least squares of y on a single predictor x.
pub fn ols_simple(x: &[f64], y: &[f64]) -> Result<RegressionReport> {
    if x.len() >= 2 && x.len() == y.len() && !(variance(x) > 0.0) {
        return Err(Error::ZeroVariance("regression predictor is constant".into()));
    }
    let c = pearson(x, y)?;
    let mut rep = regression_from_r(c.r, c.n)?;
    let slope = c.r * (variance(y) / variance(x)).sqrt();
    rep.slope = Some(slope);
    rep.intercept = Some(mean(y) - slope * mean(x));
    Ok(rep)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TTestVariant {
    /// Student t with pooled variance.
    #[default]
    Pooled,
    Welch,
}

impl TTestVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            TTestVariant::Pooled => "pooled",
            TTestVariant::Welch => "welch",
        }
    }
}

impl fmt::Display for TTestVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TTestVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" | "student" => Ok(TTestVariant::Pooled),
            "welch" => Ok(TTestVariant::Welch),
            _ => Err(Error::InvalidArgument(format!("unknown t-test variant {s:?} (pooled | welch)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl GroupSummary {
    pub fn of(x: &[f64]) -> Result<Self> {
        if x.len() < 2 {
            return Err(Error::InvalidArgument(format!("each group needs at least 2 values, got {}", x.len())));
        }
        Ok(GroupSummary {
            n: x.len(),
            mean: mean(x),
            sd: variance(x).sqrt(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTestReport {
    pub variant: TTestVariant,
    pub a: GroupSummary,
    pub b: GroupSummary,
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Two-sample t test from group summaries; t is (mean_a - mean_b) / SE.
pub fn ttest_from_summary(a: GroupSummary, b: GroupSummary, variant: TTestVariant) -> Result<TTestReport> {
    if a.n < 2 || b.n < 2 {
        return Err(Error::InvalidArgument(format!("each group needs n >= 2, got {} and {}", a.n, b.n)));
    }
    let (n1, n2) = (a.n as f64, b.n as f64);
    let (v1, v2) = (a.sd * a.sd, b.sd * b.sd);
    let (se, df) = match variant {
        TTestVariant::Pooled => {
            let df = n1 + n2 - 2.0;
            let sp2 = ((n1 - 1.0) * v1 + (n2 - 1.0) * v2) / df;
            ((sp2 * (1.0 / n1 + 1.0 / n2)).sqrt(), df)
        }
        TTestVariant::Welch => {
            let (q1, q2) = (v1 / n1, v2 / n2);
            let df = (q1 + q2).powi(2) / (q1 * q1 / (n1 - 1.0) + q2 * q2 / (n2 - 1.0));
            ((q1 + q2).sqrt(), df)
        }
    };
    if !(se > 0.0) {
        return Err(Error::ZeroVariance("both groups are constant".into()));
    }
    let t = (a.mean - b.mean) / se;
    Ok(TTestReport {
        variant,
        a,
        b,
        t,
        df,
        p: t_two_sided_p(t, df),
    })
}

pub fn ttest_independent(a: &[f64], b: &[f64], variant: TTestVariant) -> Result<TTestReport> {
    ttest_from_summary(GroupSummary::of(a)?, GroupSummary::of(b)?, variant)
}

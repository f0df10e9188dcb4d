//! Binary classification scores from a confusion matrix.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// The same matrix seen with the other class as positive.
    pub fn swap_positive(&self) -> Self {
        ConfusionMatrix {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

/// Counts predictions against labels with `positive` as the positive class.
pub fn confusion(preds: &[usize], labels: &[usize], positive: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "need equal non-empty prediction and label lists, got {} and {}",
            preds.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &l) in preds.iter().zip(labels) {
        match (p == positive, l == positive) {
            (true, true) => cm.tp += 1,
            (false, false) => cm.tn += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// `None` marks a rate whose denominator is zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub accuracy: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub mcc: f64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Accuracy, sensitivity, specificity, precision, F1 and the Matthews
/// correlation coefficient.
///
/// MCC is `(tp*tn - fp*fn) / sqrt((tp+fp)(tp+fn)(tn+fp)(tn+fn))`, the
/// Pearson correlation of the 0/1 prediction and label vectors. A printed
/// variant with numerator `tp*tn - fp - fn` is not a correlation (it leaves
/// [-1, 1]) and is treated as a misprint. When any factor under the root is
/// zero the MCC is 0.
pub fn score(cm: &ConfusionMatrix) -> Result<MetricReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("confusion matrix is empty".into()));
    }
    let ConfusionMatrix { tp, tn, fp, fn_ } = *cm;
    let sensitivity = ratio(tp, tp + fn_);
    let precision = ratio(tp, tp + fp);
    let f1 = match (precision, sensitivity) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    let mcc = if factors.contains(&0) {
        0.0
    } else {
        let num = tp as f64 * tn as f64 - fp as f64 * fn_ as f64;
        let den = factors.iter().map(|&f| f as f64).product::<f64>().sqrt();
        (num / den).clamp(-1.0, 1.0)
    };
    Ok(MetricReport {
        accuracy: (tp + tn) as f64 / total as f64,
        sensitivity,
        specificity: ratio(tn, tn + fp),
        precision,
        f1,
        mcc,
    })
}

pub const TABLE_COLUMNS: [&str; 7] = [
    "Classification Accuracy",
    "Sensitivity",
    "Specificity",
    "Precision",
    "F1 Score",
    "MCC",
    "Training Time (s)",
];

/// One table row: a model name, its report and an optional training time.
#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub model: String,
    pub report: MetricReport,
    pub training_seconds: Option<f64>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

/// Plain-text table with one row per model. Undefined values print as
/// "n/a", a missing training time as "-".
pub fn render_table(rows: &[TableRow]) -> String {
    let mut header = vec!["Model".to_string()];
    header.extend(TABLE_COLUMNS.iter().map(|s| s.to_string()));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                cell(Some(r.report.accuracy)),
                cell(r.report.sensitivity),
                cell(r.report.specificity),
                cell(r.report.precision),
                cell(r.report.f1),
                cell(Some(r.report.mcc)),
                r.training_seconds.map_or_else(|| "-".to_string(), |s| format!("{s:.2}")),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| body.iter().map(|row| row[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| -> String {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, s)| if i == 0 { format!("{s:<w$}", w = widths[i]) } else { format!("{s:>w$}", w = widths[i]) })
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(&header);
    out.push_str(&line(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>()));
    for row in &body {
        out.push_str(&line(row));
    }
    out
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tp={} tn={} fp={} fn={}", self.tp, self.tn, self.fp, self.fn_)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_count() {
        let cm = confusion(&[1, 1, 0, 0, 1], &[1, 0, 0, 1, 1], 1).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(2, 1, 1, 1));
        let same = confusion(&[0, 1, 1], &[0, 1, 1], 1).unwrap();
        assert_eq!((same.fp, same.fn_), (0, 0));
        let flipped = confusion(&[1, 0, 0], &[0, 1, 1], 1).unwrap();
        assert_eq!((flipped.tp, flipped.tn), (0, 0));
        assert!(confusion(&[], &[], 1).is_err());
        assert!(confusion(&[1], &[1, 0], 1).is_err());
    }

    #[test]
    fn perfect_and_inverted() {
        let r = score(&ConfusionMatrix::new(10, 10, 0, 0)).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!((r.sensitivity, r.specificity, r.precision, r.f1), (Some(1.0), Some(1.0), Some(1.0), Some(1.0)));
        assert_eq!(r.mcc, 1.0);
        let r = score(&ConfusionMatrix::new(0, 0, 10, 10)).unwrap();
        assert_eq!(r.accuracy, 0.0);
        assert_eq!(r.mcc, -1.0);
    }

    #[test]
    fn worked_example() {
        let r = score(&ConfusionMatrix::new(5, 3, 1, 1)).unwrap();
        assert!((r.accuracy - 0.8).abs() < 1e-15);
        assert!((r.sensitivity.unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert!((r.specificity.unwrap() - 0.75).abs() < 1e-15);
        assert!((r.precision.unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert!((r.f1.unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert!((r.mcc - 14.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn undefined_rates() {
        let r = score(&ConfusionMatrix::new(4, 0, 0, 0)).unwrap();
        assert_eq!(r.specificity, None);
        assert_eq!(r.mcc, 0.0);
        let r = score(&ConfusionMatrix::new(0, 5, 0, 0)).unwrap();
        assert_eq!((r.sensitivity, r.precision, r.f1), (None, None, None));
        assert!(score(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn table_layout() {
        let rows = vec![
            TableRow {
                model: "mini-vgg".into(),
                report: score(&ConfusionMatrix::new(5, 3, 1, 1)).unwrap(),
                training_seconds: Some(12.345),
            },
            TableRow {
                model: "one-class".into(),
                report: score(&ConfusionMatrix::new(4, 0, 0, 0)).unwrap(),
                training_seconds: None,
            },
        ];
        let t = render_table(&rows);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        let cols = ["Model", "Classification Accuracy", "Sensitivity", "Specificity", "Precision", "F1 Score", "MCC"];
        let mut at = 0;
        for c in cols {
            let i = lines[0][at..].find(c).unwrap();
            at += i + c.len();
        }
        assert!(lines[0].ends_with("Training Time (s)"));
        assert!(lines[2].contains("0.8000") && lines[2].contains("0.5833") && lines[2].ends_with("12.35"));
        assert!(lines[3].contains("n/a") && lines[3].ends_with('-'));
    }
}

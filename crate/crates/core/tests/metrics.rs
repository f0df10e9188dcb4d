//! Exhaustive checks of the confusion-matrix scores.

use histoxai_core::metrics::{confusion, score, ConfusionMatrix};

const MAX_TOTAL: u64 = 40;

fn all_matrices() -> impl Iterator<Item = ConfusionMatrix> {
    (0..=MAX_TOTAL).flat_map(|tp| {
        (0..=MAX_TOTAL - tp).flat_map(move |tn| {
            (0..=MAX_TOTAL - tp - tn).flat_map(move |fp| {
                (0..=MAX_TOTAL - tp - tn - fp)
                    .map(move |fn_| ConfusionMatrix::new(tp, tn, fp, fn_))
                    .filter(|cm| cm.total() > 0)
            })
        })
    })
}

/// Prediction and label vectors that produce `cm`, positive class 1.
fn vectors(cm: &ConfusionMatrix) -> (Vec<usize>, Vec<usize>) {
    let mut p = Vec::new();
    let mut l = Vec::new();
    for (pred, label, count) in [(1, 1, cm.tp), (0, 0, cm.tn), (1, 0, cm.fp), (0, 1, cm.fn_)] {
        p.extend(std::iter::repeat_n(pred, count as usize));
        l.extend(std::iter::repeat_n(label, count as usize));
    }
    (p, l)
}

/// Textbook Pearson r on the raw vectors; `None` when either is constant.
fn pearson_oracle(x: &[usize], y: &[usize]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<usize>() as f64 / n;
    let my = y.iter().sum::<usize>() as f64 / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a as f64 - mx, b as f64 - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

fn count(p: &[usize], l: &[usize], f: impl Fn(usize, usize) -> bool) -> u64 {
    p.iter().zip(l).filter(|(&a, &b)| f(a, b)).count() as u64
}

#[test]
fn mcc_is_pearson_and_rates_match_definitions() {
    let mut checked = 0;
    for cm in all_matrices() {
        let (p, l) = vectors(&cm);
        assert_eq!(confusion(&p, &l, 1).unwrap(), cm);
        let r = score(&cm).unwrap();
        let expected = pearson_oracle(&p, &l).unwrap_or(0.0);
        assert!((r.mcc - expected).abs() < 1e-12, "{cm}: {} vs {expected}", r.mcc);

        let n = p.len() as f64;
        let correct = count(&p, &l, |a, b| a == b) as f64;
        assert_eq!(r.accuracy, correct / n);
        let rate = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        let sens = rate(count(&p, &l, |a, b| a == 1 && b == 1), count(&p, &l, |_, b| b == 1));
        let spec = rate(count(&p, &l, |a, b| a == 0 && b == 0), count(&p, &l, |_, b| b == 0));
        let prec = rate(count(&p, &l, |a, b| a == 1 && b == 1), count(&p, &l, |a, _| a == 1));
        assert_eq!((r.sensitivity, r.specificity, r.precision), (sens, spec, prec));
        let f1 = match (prec, sens) {
            (Some(pr), Some(se)) if pr + se > 0.0 => Some(2.0 * pr * se / (pr + se)),
            _ => None,
        };
        assert_eq!(r.f1, f1);
        if let Some(f) = f1 {
            let alt = 2.0 * cm.tp as f64 / (2 * cm.tp + cm.fp + cm.fn_) as f64;
            assert!((f - alt).abs() < 1e-15);
        }
        checked += 1;
    }
    assert_eq!(checked, 135_750);
}

#[test]
fn swaps() {
    let mut f1_changed = 0;
    for cm in all_matrices() {
        let r = score(&cm).unwrap();
        let s = score(&cm.swap_positive()).unwrap();
        // The swap is the same matrix read with the other class as positive.
        assert_eq!(r.accuracy, s.accuracy);
        assert_eq!((r.sensitivity, r.specificity), (s.specificity, s.sensitivity));
        assert!((r.mcc.abs() - s.mcc.abs()).abs() < 1e-15);
        if r.f1 != s.f1 {
            f1_changed += 1;
        }
    }
    assert!(f1_changed > 0, "f1 should depend on which class is positive");
    let cm = ConfusionMatrix::new(8, 1, 1, 0);
    assert_ne!(score(&cm).unwrap().f1, score(&cm.swap_positive()).unwrap().f1);
}

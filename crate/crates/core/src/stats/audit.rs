//! Internal-consistency audit of published summary statistics.
//!
//! Every reported number carries the precision it was printed with. A derived
//! value is computed from the reported inputs and, where the derivation is a
//! closed form, also over the box of all inputs consistent with their
//! rounding. A check passes when the reported value lies within half a unit
//! of its last printed digit of that envelope. Reported values are never
//! modified.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;

use super::inference::{t_from_r, ttest_from_summary, GroupSummary, TTestVariant};
use super::tdist::{f_sf, t_two_sided_p};
use crate::error::{Error, Result};
use crate::kv::KvFile;

/// Largest |derived t - reported t| accepted when searching group splits.
pub const T_SPLIT_TOLERANCE: f64 = 0.05;

/// A number as printed, with its count of decimals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reported {
    pub value: f64,
    pub decimals: u32,
}

impl Reported {
    pub fn new(value: f64, decimals: u32) -> Self {
        Reported { value, decimals }
    }

    /// Accepts `.748`, `0.748`, `-3.31` and comma decimals such as `,748`.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        let norm = if s.contains('.') { s.to_string() } else { s.replacen(',', ".", 1) };
        let decimals = norm.split_once('.').map_or(0, |(_, frac)| frac.len() as u32);
        let body = norm.strip_prefix('-').unwrap_or(&norm);
        if body.is_empty() || !body.chars().all(|c| c.is_ascii_digit() || c == '.') || body == "." {
            return None;
        }
        let value: f64 = if body.starts_with('.') {
            let fixed = norm.replacen('.', "0.", 1);
            fixed.parse().ok()?
        } else {
            norm.parse().ok()?
        };
        Some(Reported { value, decimals })
    }

    /// Half a unit of the last printed digit.
    pub fn half_unit(&self) -> f64 {
        0.5 * 10f64.powi(-(self.decimals as i32))
    }

    pub fn lo(&self) -> f64 {
        self.value - self.half_unit()
    }

    pub fn hi(&self) -> f64 {
        self.value + self.half_unit()
    }
}

impl fmt::Display for Reported {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.*}", self.decimals as usize, self.value)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Record {
    pub name: String,
    pub n: Option<usize>,
    pub values: BTreeMap<String, Reported>,
    pub lists: BTreeMap<String, Vec<Reported>>,
    /// 1-based positions in `item_means` that are reverse scored.
    pub reverse_items: Vec<usize>,
    pub scale: Option<(f64, f64)>,
    pub variant: TTestVariant,
    /// Name of an earlier record whose group split applies here.
    pub same_split_as: Option<String>,
}

const LIST_KEYS: [&str; 1] = ["item_means"];
const SCALAR_KEYS: [&str; 23] = [
    "r", "r_p_below", "beta", "se", "r2", "adj_r2", "f", "p", "sd_x", "sd_y", "mean", "sd", "group1_mean",
    "group1_sd", "group2_mean", "group2_sd", "t", "t_p", "alpha", "skewness", "kurtosis", "group1_n", "group2_n",
];

fn list(s: &str, line: usize, key: &str) -> Result<Vec<Reported>> {
    s.split(|c: char| c == ';' || c == ' ' || c == '\t' || c == '|')
        .flat_map(|part| part.split(", "))
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| Reported::parse(p.trim_end_matches(',')).ok_or_else(|| Error::Parse { line, msg: format!("{key}: bad number {p:?}") }))
        .collect()
}

impl Record {
    pub fn get(&self, key: &str) -> Option<Reported> {
        self.values.get(key).copied()
    }
}

/// Reads records from key = value text; each `[section]` is one record.
pub fn parse_records(text: &str) -> Result<Vec<Record>> {
    let file = KvFile::parse(text)?;
    let mut out = Vec::new();
    for sec in &file.sections {
        let mut rec = Record {
            name: if sec.name.is_empty() { "record".into() } else { sec.name.clone() },
            ..Default::default()
        };
        let (mut lo, mut hi) = (None, None);
        for e in &sec.entries {
            let bad = |msg: String| Error::Parse { line: e.line, msg };
            match e.key.as_str() {
                "n" => rec.n = Some(e.value.parse().map_err(|_| bad(format!("n must be a whole number, got {:?}", e.value)))?),
                "same_split_as" => rec.same_split_as = Some(e.value.clone()),
                "variant" => rec.variant = e.value.parse().map_err(|err: Error| bad(err.to_string()))?,
                "reverse_items" => {
                    rec.reverse_items = e
                        .value
                        .split(',')
                        .map(|p| p.trim().parse::<usize>().ok().filter(|&i| i >= 1))
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| bad(format!("reverse_items must list 1-based positions, got {:?}", e.value)))?
                }
                "scale_min" => lo = Some(e.value.parse::<f64>().map_err(|_| bad("scale_min is not a number".into()))?),
                "scale_max" => hi = Some(e.value.parse::<f64>().map_err(|_| bad("scale_max is not a number".into()))?),
                k if LIST_KEYS.contains(&k) => {
                    rec.lists.insert(k.into(), list(&e.value, e.line, k)?);
                }
                k if k.starts_with("repeat_") => {
                    let v = list(&e.value, e.line, k)?;
                    if v.len() < 2 {
                        return Err(bad(format!("{k} needs at least two reported values")));
                    }
                    rec.lists.insert(k.into(), v);
                }
                k if SCALAR_KEYS.contains(&k) => {
                    let v = Reported::parse(&e.value).ok_or_else(|| bad(format!("{k}: bad number {:?}", e.value)))?;
                    rec.values.insert(k.into(), v);
                }
                k => return Err(bad(format!("unknown key {k:?}"))),
            }
        }
        match (lo, hi) {
            (Some(a), Some(b)) if a < b => rec.scale = Some((a, b)),
            (None, None) => {}
            _ => return Err(Error::Parse { line: sec.line, msg: "scale_min and scale_max must both be set, min < max".into() }),
        }
        if !rec.reverse_items.is_empty() && rec.scale.is_none() {
            return Err(Error::Parse { line: sec.line, msg: "reverse_items needs scale_min and scale_max".into() });
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Consistent,
    Inconsistent,
    Unverifiable,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Consistent => "consistent",
            Verdict::Inconsistent => "inconsistent",
            Verdict::Unverifiable => "unverifiable",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Finding {
    pub record: String,
    pub check: String,
    /// Key of the reported quantity being tested.
    pub quantity: String,
    pub reported: Option<Reported>,
    pub derived: Option<f64>,
    /// Range of the derived value over the inputs' rounding box.
    pub envelope: Option<(f64, f64)>,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub note: String,
}

type Formula = fn(&[f64], f64) -> f64;

struct Closed {
    id: &'static str,
    target: &'static str,
    inputs: &'static [&'static str],
    needs_n: bool,
    f: Formula,
}

fn adj(r2: f64, n: f64) -> f64 {
    1.0 - (1.0 - r2) * (n - 1.0) / (n - 2.0)
}

fn f_of_r2(r2: f64, n: f64) -> f64 {
    (n - 2.0) * r2 / (1.0 - r2)
}

const CLOSED: [Closed; 10] = [
    Closed { id: "r2_from_r", target: "r2", inputs: &["r"], needs_n: false, f: |v, _| v[0] * v[0] },
    Closed { id: "adj_r2_from_r", target: "adj_r2", inputs: &["r"], needs_n: true, f: |v, n| adj(v[0] * v[0], n) },
    Closed { id: "adj_r2_from_r2", target: "adj_r2", inputs: &["r2"], needs_n: true, f: |v, n| adj(v[0], n) },
    Closed { id: "f_from_r", target: "f", inputs: &["r"], needs_n: true, f: |v, n| f_of_r2(v[0] * v[0], n) },
    Closed { id: "f_from_r2", target: "f", inputs: &["r2"], needs_n: true, f: |v, n| f_of_r2(v[0], n) },
    Closed { id: "beta_from_r", target: "beta", inputs: &["r"], needs_n: false, f: |v, _| v[0] },
    Closed {
        id: "se_standardized_from_r",
        target: "se",
        inputs: &["r"],
        needs_n: true,
        f: |v, n| ((1.0 - v[0] * v[0]) / (n - 2.0)).sqrt(),
    },
    Closed {
        id: "se_raw_slope_from_r",
        target: "se",
        inputs: &["r", "sd_x", "sd_y"],
        needs_n: true,
        f: |v, n| ((1.0 - v[0] * v[0]) / (n - 2.0)).sqrt() * v[2] / v[1],
    },
    Closed { id: "p_from_f", target: "p", inputs: &["f"], needs_n: true, f: |v, n| f_sf(v[0], 1.0, n - 2.0) },
    Closed {
        id: "p_from_r",
        target: "p",
        inputs: &["r"],
        needs_n: true,
        f: |v, n| t_two_sided_p(t_from_r(v[0], n as usize), n - 2.0),
    },
];

/// Min and max of `f` over the corners of the inputs' rounding box.
fn envelope(inputs: &[Reported], f: impl Fn(&[f64]) -> f64) -> (f64, f64) {
    let k = inputs.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut corner = vec![0.0; k];
    for mask in 0..(1u32 << k) {
        for (j, r) in inputs.iter().enumerate() {
            corner[j] = if mask >> j & 1 == 1 { r.hi() } else { r.lo() };
        }
        let v = f(&corner);
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}

fn judge(reported: Reported, lo: f64, hi: f64) -> Verdict {
    let tol = reported.half_unit();
    // Small slack for binary representation of decimal inputs.
    let eps = 1e-12 * (1.0 + reported.value.abs());
    if reported.value >= lo - tol - eps && reported.value <= hi + tol + eps {
        Verdict::Consistent
    } else {
        Verdict::Inconsistent
    }
}

fn unverifiable(rec: &Record, check: &str, quantity: &str, missing: &[&str], note: &str) -> Finding {
    Finding {
        record: rec.name.clone(),
        check: check.into(),
        quantity: quantity.into(),
        reported: rec.get(quantity).or_else(|| rec.lists.get(quantity).and_then(|l| l.first().copied())),
        derived: None,
        envelope: None,
        tolerance: 0.0,
        verdict: Verdict::Unverifiable,
        note: if missing.is_empty() { note.into() } else { format!("missing {}", missing.join(", ")) },
    }
}

fn closed_checks(rec: &Record, out: &mut Vec<Finding>) {
    for c in &CLOSED {
        let Some(target) = rec.get(c.target) else { continue };
        let mut missing: Vec<&str> = c.inputs.iter().copied().filter(|k| rec.get(k).is_none()).collect();
        if c.needs_n && rec.n.is_none() {
            missing.push("n");
        }
        // Checks that only differ by an absent optional input stay silent.
        if c.inputs.len() > 1 && c.inputs[1..].iter().any(|k| rec.get(k).is_none()) && rec.get(c.inputs[0]).is_some() {
            continue;
        }
        if !missing.is_empty() {
            out.push(unverifiable(rec, c.id, c.target, &missing, ""));
            continue;
        }
        let n = rec.n.map_or(0.0, |n| n as f64);
        if c.needs_n && n < 3.0 {
            out.push(unverifiable(rec, c.id, c.target, &[], "n below 3"));
            continue;
        }
        let inputs: Vec<Reported> = c.inputs.iter().map(|k| rec.get(k).expect("checked")).collect();
        let face: Vec<f64> = inputs.iter().map(|r| r.value).collect();
        let derived = (c.f)(&face, n);
        let (lo, hi) = envelope(&inputs, |v| (c.f)(v, n));
        out.push(Finding {
            record: rec.name.clone(),
            check: c.id.into(),
            quantity: c.target.into(),
            reported: Some(target),
            derived: Some(derived),
            envelope: Some((lo, hi)),
            tolerance: target.half_unit(),
            verdict: judge(target, lo, hi),
            note: String::new(),
        });
    }
    // "p < bound" claims attached to a correlation.
    if let Some(bound) = rec.get("r_p_below") {
        match (rec.get("r"), rec.n) {
            (Some(r), Some(n)) if n >= 3 => {
                let f: Formula = |v, n| t_two_sided_p(t_from_r(v[0], n as usize), n - 2.0);
                let derived = f(&[r.value], n as f64);
                let (lo, hi) = envelope(&[r], |v| f(v, n as f64));
                out.push(Finding {
                    record: rec.name.clone(),
                    check: "p_from_r_below".into(),
                    quantity: "r_p_below".into(),
                    reported: Some(bound),
                    derived: Some(derived),
                    envelope: Some((lo, hi)),
                    tolerance: 0.0,
                    verdict: if lo < bound.value { Verdict::Consistent } else { Verdict::Inconsistent },
                    note: format!("claim p < {bound}"),
                });
            }
            _ => {
                let mut missing = vec![];
                if rec.get("r").is_none() {
                    missing.push("r");
                }
                if rec.n.is_none() {
                    missing.push("n");
                }
                out.push(unverifiable(rec, "p_from_r_below", "r_p_below", &missing, "n below 3"));
            }
        }
    }
}

fn composite_check(rec: &Record, out: &mut Vec<Finding>) {
    let Some(items) = rec.lists.get("item_means") else { return };
    let Some(reported) = rec.get("mean") else { return };
    let k = items.len() as f64;
    let (mut face, mut lo, mut hi) = (0.0, 0.0, 0.0);
    for (i, it) in items.iter().enumerate() {
        let rev = rec.reverse_items.contains(&(i + 1));
        let (v, a, b) = match (rev, rec.scale) {
            (true, Some((smin, smax))) => (smin + smax - it.value, smin + smax - it.hi(), smin + smax - it.lo()),
            _ => (it.value, it.lo(), it.hi()),
        };
        face += v / k;
        lo += a / k;
        hi += b / k;
    }
    let note = if rec.reverse_items.is_empty() {
        String::new()
    } else {
        let pos: Vec<String> = rec.reverse_items.iter().map(usize::to_string).collect();
        format!("items {} reverse scored", pos.join(","))
    };
    out.push(Finding {
        record: rec.name.clone(),
        check: "composite_from_item_means".into(),
        quantity: "mean".into(),
        reported: Some(reported),
        derived: Some(face),
        envelope: Some((lo, hi)),
        tolerance: reported.half_unit(),
        verdict: judge(reported, lo, hi),
        note,
    });
}

const GROUP_KEYS: [&str; 4] = ["group1_mean", "group1_sd", "group2_mean", "group2_sd"];

/// Group summaries from (m1, s1, m2, s2) at a split.
fn groups(x: &[f64], n1: usize, n2: usize) -> (GroupSummary, GroupSummary) {
    (
        GroupSummary { n: n1, mean: x[0], sd: x[1] },
        GroupSummary { n: n2, mean: x[2], sd: x[3] },
    )
}

/// Pooled overall mean and sd of two groups.
fn combine(a: GroupSummary, b: GroupSummary) -> (f64, f64) {
    let (n1, n2) = (a.n as f64, b.n as f64);
    let n = n1 + n2;
    let m = (n1 * a.mean + n2 * b.mean) / n;
    let ss = (n1 - 1.0) * a.sd * a.sd + (n2 - 1.0) * b.sd * b.sd + n1 * (a.mean - m).powi(2) + n2 * (b.mean - m).powi(2);
    (m, (ss / (n - 1.0)).sqrt())
}

struct GroupCtx<'a> {
    rec: &'a Record,
    inputs: Vec<Reported>,
    face: Vec<f64>,
    variant: TTestVariant,
}

impl GroupCtx<'_> {
    fn test(&self, x: &[f64], n1: usize, n2: usize) -> Option<(f64, f64, f64)> {
        let (a, b) = groups(x, n1, n2);
        ttest_from_summary(a, b, self.variant).ok().map(|r| (r.t, r.df, r.p))
    }

    fn t(&self, n1: usize, n2: usize) -> Option<f64> {
        self.test(&self.face, n1, n2).map(|v| v.0)
    }

    /// Closed-form check of `quantity` at a fixed split, with envelope.
    fn at_split(&self, check: &str, quantity: &str, n1: usize, n2: usize, note: &str, f: impl Fn(&[f64]) -> f64) -> Option<Finding> {
        let reported = self.rec.get(quantity)?;
        let (lo, hi) = envelope(&self.inputs, &f);
        Some(Finding {
            record: self.rec.name.clone(),
            check: check.into(),
            quantity: quantity.into(),
            reported: Some(reported),
            derived: Some(f(&self.face)),
            envelope: Some((lo, hi)),
            tolerance: reported.half_unit(),
            verdict: judge(reported, lo, hi),
            note: format!("{note}, split {n1}/{n2}"),
        })
    }

    fn overall(&self, n1: usize, n2: usize, note: &str) -> Vec<Finding> {
        let mean = self.at_split("mean_from_groups", "mean", n1, n2, note, |x| {
            let (a, b) = groups(x, n1, n2);
            combine(a, b).0
        });
        let sd = self.at_split("sd_from_groups", "sd", n1, n2, note, |x| {
            let (a, b) = groups(x, n1, n2);
            combine(a, b).1
        });
        mean.into_iter().chain(sd).collect()
    }
}

/// Two-group checks. Group sizes come from `group1_n`/`group2_n`, from the
/// split resolved for the record named by `same_split_as`, or from a search
/// over all splits of `n` whose pooled t lies within `T_SPLIT_TOLERANCE` of
/// the reported t. When several splits pass, those whose implied overall
/// mean and sd disagree with a reported `mean`/`sd` are dropped.
fn group_checks(rec: &Record, resolved: &BTreeMap<String, (usize, usize)>, out: &mut Vec<Finding>) -> Option<(usize, usize)> {
    if GROUP_KEYS.iter().all(|k| rec.get(k).is_none()) {
        return None;
    }
    let t_rep = rec.get("t");
    let mut missing: Vec<String> = GROUP_KEYS.iter().filter(|k| rec.get(k).is_none()).map(|k| k.to_string()).collect();
    let explicit = match (rec.get("group1_n"), rec.get("group2_n")) {
        (Some(a), Some(b)) => Some((a.value as usize, b.value as usize)),
        _ => None,
    };
    let borrowed = match &rec.same_split_as {
        Some(other) => match resolved.get(other) {
            Some(&s) => Some(s),
            None => {
                missing.push(format!("split of {other}"));
                None
            }
        },
        None => None,
    };
    if explicit.is_none() && borrowed.is_none() && rec.same_split_as.is_none() && rec.n.is_none() {
        missing.push("n".into());
    }
    if t_rep.is_none() && explicit.is_none() && borrowed.is_none() {
        missing.push("t".into());
    }
    if !missing.is_empty() {
        let m: Vec<&str> = missing.iter().map(String::as_str).collect();
        for (check, q) in [("t_from_groups", "t"), ("p_from_t", "t_p"), ("mean_from_groups", "mean"), ("sd_from_groups", "sd")] {
            if rec.get(q).is_some() {
                out.push(unverifiable(rec, check, q, &m, ""));
            }
        }
        return None;
    }
    let ctx = GroupCtx {
        rec,
        inputs: GROUP_KEYS.iter().map(|k| rec.get(k).expect("checked")).collect(),
        face: GROUP_KEYS.iter().map(|k| rec.get(k).expect("checked").value).collect(),
        variant: rec.variant,
    };

    let (n1, n2, note) = if let Some((n1, n2)) = explicit.or(borrowed) {
        let how = if explicit.is_some() { "given" } else { "as in " };
        let note = if explicit.is_some() { how.to_string() } else { format!("{how}{}", rec.same_split_as.as_deref().unwrap_or("")) };
        if let Some(t_rep) = t_rep {
            let derived = ctx.t(n1, n2).unwrap_or(f64::NAN);
            out.push(Finding {
                record: rec.name.clone(),
                check: "t_from_groups".into(),
                quantity: "t".into(),
                reported: Some(t_rep),
                derived: Some(derived),
                envelope: None,
                tolerance: T_SPLIT_TOLERANCE,
                verdict: if (derived - t_rep.value).abs() <= T_SPLIT_TOLERANCE { Verdict::Consistent } else { Verdict::Inconsistent },
                note: format!("{} t, {note} split {n1}/{n2}", rec.variant),
            });
        }
        (n1, n2, format!("{} t, {note}", rec.variant))
    } else {
        let t_rep = t_rep.expect("checked");
        let n = rec.n.expect("checked");
        let mut scored: Vec<(usize, f64)> = (2..=n.saturating_sub(2))
            .filter_map(|n1| ctx.t(n1, n - n1).map(|t| (n1, t)))
            .collect();
        if scored.is_empty() {
            out.push(unverifiable(rec, "t_from_groups", "t", &[], "n too small to split"));
            return None;
        }
        scored.sort_by(|a, b| (a.1 - t_rep.value).abs().total_cmp(&(b.1 - t_rep.value).abs()).then(a.0.cmp(&b.0)));
        let within: Vec<usize> = scored.iter().filter(|(_, t)| (t - t_rep.value).abs() <= T_SPLIT_TOLERANCE).map(|s| s.0).collect();
        let agrees_overall = |n1: usize| ctx.overall(n1, n - n1, "").iter().all(|f| f.verdict == Verdict::Consistent);
        let kept: Vec<usize> = if within.len() > 1 { within.iter().copied().filter(|&a| agrees_overall(a)).collect() } else { within.clone() };
        let show = |v: &[usize]| v.iter().map(|a| format!("{a}/{}", n - a)).collect::<Vec<_>>().join(" ");
        let (n1, verdict, note) = match (kept.as_slice(), within.len()) {
            ([only], 1) => (*only, Verdict::Consistent, format!("{} t, unique split", rec.variant)),
            ([only], _) => (
                *only,
                Verdict::Consistent,
                {
                    let others: Vec<usize> = within.iter().copied().filter(|a| a != only).collect();
                    format!("{} t, t alone also allows {}, excluded by overall mean/sd; unique split", rec.variant, show(&others))
                },
            ),
            ([], 0) => (scored[0].0, Verdict::Inconsistent, format!("{} t, no split within {T_SPLIT_TOLERANCE}; closest", rec.variant)),
            ([], _) => (within[0], Verdict::Consistent, format!("{} t, splits {} all disagree with overall mean/sd; closest", rec.variant, show(&within))),
            (many, _) => (many[0], Verdict::Consistent, format!("{} t, ambiguous splits {}; closest", rec.variant, show(many))),
        };
        let derived = ctx.t(n1, n - n1).unwrap_or(f64::NAN);
        out.push(Finding {
            record: rec.name.clone(),
            check: "t_from_groups".into(),
            quantity: "t".into(),
            reported: Some(t_rep),
            derived: Some(derived),
            envelope: None,
            tolerance: T_SPLIT_TOLERANCE,
            verdict,
            note: format!("{note} {n1}/{}", n - n1),
        });
        (n1, n - n1, format!("{} t, searched", rec.variant))
    };

    if let Some(df) = ctx.test(&ctx.face, n1, n2).map(|v| v.1) {
        out.extend(ctx.at_split("p_from_t", "t_p", n1, n2, &format!("{note}, df {df:.3}"), |x| {
            ctx.test(x, n1, n2).map_or(f64::NAN, |v| v.2)
        }));
    }
    out.extend(ctx.overall(n1, n2, &note));
    Some((n1, n2))
}

fn repeat_checks(rec: &Record, out: &mut Vec<Finding>) {
    for (key, vals) in rec.lists.iter().filter(|(k, _)| k.starts_with("repeat_")) {
        let lo = vals.iter().map(Reported::lo).fold(f64::NEG_INFINITY, f64::max);
        let hi = vals.iter().map(Reported::hi).fold(f64::INFINITY, f64::min);
        let shown: Vec<String> = vals.iter().map(Reported::to_string).collect();
        out.push(Finding {
            record: rec.name.clone(),
            check: "same_quantity_reported_twice".into(),
            quantity: key.clone(),
            reported: Some(vals[0]),
            derived: Some(vals[1].value),
            envelope: None,
            tolerance: vals.iter().map(Reported::half_unit).fold(0.0, f64::max),
            verdict: if lo <= hi + 1e-12 { Verdict::Consistent } else { Verdict::Inconsistent },
            note: format!("values {}", shown.join(" vs ")),
        });
    }
}

/// All checks derivable from one record, in a fixed order.
pub fn audit_reported(rec: &Record) -> Vec<Finding> {
    audit_with_splits(rec, &BTreeMap::new()).0
}

fn audit_with_splits(rec: &Record, resolved: &BTreeMap<String, (usize, usize)>) -> (Vec<Finding>, Option<(usize, usize)>) {
    let mut out = Vec::new();
    closed_checks(rec, &mut out);
    composite_check(rec, &mut out);
    let split = group_checks(rec, resolved, &mut out);
    repeat_checks(rec, &mut out);
    for q in ["alpha", "skewness", "kurtosis"] {
        if rec.get(q).is_some() {
            out.push(unverifiable(rec, &format!("{q}_needs_raw_data"), q, &[], "needs respondent-level scores"));
        }
    }
    (out, split)
}

/// Audits records in order; a record may reuse the group split resolved
/// for an earlier one through `same_split_as`.
pub fn audit_records(records: &[Record]) -> Vec<Finding> {
    let mut resolved = BTreeMap::new();
    let mut out = Vec::new();
    for rec in records {
        let (f, split) = audit_with_splits(rec, &resolved);
        if let Some(s) = split {
            resolved.insert(rec.name.clone(), s);
        }
        out.extend(f);
    }
    out
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "n/a".into()
    } else {
        format!("{v:.4}")
    }
}

/// Aligned text table of findings followed by verdict counts.
pub fn render_findings(findings: &[Finding]) -> String {
    let mut rows = vec![["record", "check", "quantity", "reported", "derived", "envelope", "tolerance", "verdict", "note"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>()];
    for f in findings {
        rows.push(vec![
            f.record.clone(),
            f.check.clone(),
            f.quantity.clone(),
            f.reported.map_or("-".into(), |r| r.to_string()),
            f.derived.map_or("-".into(), num),
            f.envelope.map_or("-".into(), |(a, b)| format!("[{}, {}]", num(a), num(b))),
            if f.verdict == Verdict::Unverifiable { "-".into() } else { format!("{}", f.tolerance) },
            f.verdict.to_string(),
            f.note.clone(),
        ]);
    }
    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in &rows {
        let cells: Vec<String> = r.iter().enumerate().map(|(i, s)| format!("{s:<w$}", w = widths[i])).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    let count = |v: Verdict| findings.iter().filter(|f| f.verdict == v).count();
    let _ = writeln!(
        out,
        "\n{} checks: {} consistent, {} inconsistent, {} unverifiable",
        findings.len(),
        count(Verdict::Consistent),
        count(Verdict::Inconsistent),
        count(Verdict::Unverifiable)
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn find<'a>(fs: &'a [Finding], check: &str) -> &'a Finding {
        fs.iter().find(|f| f.check == check).unwrap_or_else(|| panic!("no {check}"))
    }

    #[test]
    fn parses_printed_numbers() {
        assert_eq!(Reported::parse(".748"), Some(Reported::new(0.748, 3)));
        assert_eq!(Reported::parse(",748"), Some(Reported::new(0.748, 3)));
        assert_eq!(Reported::parse("-,288"), Some(Reported::new(-0.288, 3)));
        assert_eq!(Reported::parse("4"), Some(Reported::new(4.0, 0)));
        assert_eq!(Reported::parse("-3.31"), Some(Reported::new(-3.31, 2)));
        assert_eq!(Reported::parse("x"), None);
        assert_eq!(Reported::parse("."), None);
        assert!((Reported::new(0.5, 2).half_unit() - 0.005).abs() < 1e-18);
    }

    #[test]
    fn regression_identities() {
        let recs = parse_records("[reg]\nn = 10\nr = .748\nr2 = .56\nadj_r2 = .50\nf = 8.88\n").unwrap();
        let fs = audit_reported(&recs[0]);
        assert_eq!(find(&fs, "r2_from_r").verdict, Verdict::Consistent);
        assert_eq!(find(&fs, "adj_r2_from_r").verdict, Verdict::Consistent);
        let f = find(&fs, "f_from_r2");
        assert_eq!(f.verdict, Verdict::Inconsistent);
        assert!((f.derived.unwrap() - 10.18).abs() < 0.01);
    }

    #[test]
    fn missing_n_is_unverifiable() {
        let recs = parse_records("[m]\nmean = 4.33\nitem_means = 3.9, 4.5, 4.0, 5.1\ngroup1_mean = 3.78\ngroup1_sd = .46\ngroup2_mean = 5.17\ngroup2_sd = .88\nt = -3.31\nt_p = .01\nr = .5\nf = 3.1\n").unwrap();
        let fs = audit_reported(&recs[0]);
        assert_eq!(find(&fs, "composite_from_item_means").verdict, Verdict::Consistent);
        for f in &fs {
            if f.check != "composite_from_item_means" {
                assert_eq!(f.verdict, Verdict::Unverifiable, "{}", f.check);
            }
        }
        assert!(fs.iter().filter(|f| f.verdict == Verdict::Unverifiable).count() >= 3);
    }

    #[test]
    fn explicit_groups_and_repeats() {
        let recs = parse_records("[g]\ngroup1_mean = 1\ngroup1_sd = 1\ngroup2_mean = 4\ngroup2_sd = 1\ngroup1_n = 3\ngroup2_n = 3\nt = -3.674\nrepeat_age = 34.2, 32.4\n").unwrap();
        let fs = audit_reported(&recs[0]);
        assert_eq!(find(&fs, "t_from_groups").verdict, Verdict::Consistent);
        assert_eq!(find(&fs, "same_quantity_reported_twice").verdict, Verdict::Inconsistent);
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(parse_records("[x]\nbogus = 1\n").is_err());
        assert!(parse_records("[x]\nreverse_items = 2\nitem_means = 1.0, 2.0\n").is_err());
    }
}

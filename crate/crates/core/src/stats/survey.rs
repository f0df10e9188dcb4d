//! Likert survey matrices and the reliability / correlation / regression /
//! group-difference battery run on them.

use std::fmt::Write as _;
use std::path::Path;

use super::describe::{cronbach_alpha, descriptives, Descriptives};
use super::inference::{ols_simple, pearson, ttest_independent, Correlation, RegressionReport, TTestReport, TTestVariant};
use crate::error::{Error, Result};

pub const COVARIATES: [&str; 5] = ["respondent", "age", "experience_years", "ai_experience", "prediction_correct"];

#[derive(Clone, Debug, PartialEq)]
pub struct SurveySchema {
    pub scale_min: f64,
    pub scale_max: f64,
    /// Item ids scored as `scale_min + scale_max - x` before analysis.
    pub reverse: Vec<String>,
}

impl Default for SurveySchema {
    fn default() -> Self {
        SurveySchema {
            scale_min: 1.0,
            scale_max: 7.0,
            reverse: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Respondent {
    pub id: String,
    pub age: f64,
    pub experience_years: f64,
    pub ai_experience: bool,
    pub prediction_correct: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurveyMatrix {
    pub items: Vec<String>,
    pub respondents: Vec<Respondent>,
    /// One row per respondent, item order as in `items`, reverse flags applied.
    pub scores: Vec<Vec<f64>>,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "yes" | "true" | "y" => Some(true),
        "0" | "no" | "false" | "n" => Some(false),
        _ => None,
    }
}

/// Alphabetic prefix of an item id: "CHF3" -> "CHF".
pub fn scale_of(item: &str) -> &str {
    item.trim_end_matches(|c: char| c.is_ascii_digit())
}

impl SurveyMatrix {
    pub fn from_csv_reader<R: std::io::Read>(reader: R, schema: &SurveySchema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
            .iter()
            .map(str::to_string)
            .collect();
        if header.len() <= COVARIATES.len() || header[..COVARIATES.len()] != COVARIATES {
            return Err(Error::Parse {
                line: 1,
                msg: format!("header must start with {} followed by item columns", COVARIATES.join(",")),
            });
        }
        let items: Vec<String> = header[COVARIATES.len()..].to_vec();
        for item in &items {
            let prefix = scale_of(item);
            if prefix.is_empty() || prefix.len() == item.len() {
                return Err(Error::Parse { line: 1, msg: format!("item column {item:?} is not <SCALE><number>") });
            }
        }
        for r in &schema.reverse {
            if !items.contains(r) {
                return Err(Error::InvalidArgument(format!("reverse-scored item {r:?} is not a survey column")));
            }
        }
        let mut respondents = Vec::new();
        let mut scores = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
            if rec.len() != header.len() {
                return Err(Error::Parse { line, msg: format!("{} cells, expected {}", rec.len(), header.len()) });
            }
            let cell = |j: usize| -> Result<&str> {
                let v = &rec[j];
                if v.is_empty() {
                    return Err(Error::Parse { line, msg: format!("missing value in column {}", header[j]) });
                }
                Ok(v)
            };
            let num = |j: usize| -> Result<f64> {
                let v = cell(j)?;
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Parse { line, msg: format!("column {}: {v:?} is not a number", header[j]) })
            };
            let flag = |j: usize| -> Result<bool> {
                let v = cell(j)?;
                parse_bool(v).ok_or_else(|| Error::Parse { line, msg: format!("column {}: {v:?} is not yes/no", header[j]) })
            };
            respondents.push(Respondent {
                id: cell(0)?.to_string(),
                age: num(1)?,
                experience_years: num(2)?,
                ai_experience: flag(3)?,
                prediction_correct: flag(4)?,
            });
            let mut row = Vec::with_capacity(items.len());
            for (k, item) in items.iter().enumerate() {
                let v = num(COVARIATES.len() + k)?;
                if v < schema.scale_min || v > schema.scale_max {
                    return Err(Error::Parse {
                        line,
                        msg: format!("{item} = {v} outside scale [{}, {}]", schema.scale_min, schema.scale_max),
                    });
                }
                row.push(if schema.reverse.contains(item) { schema.scale_min + schema.scale_max - v } else { v });
            }
            scores.push(row);
        }
        if respondents.is_empty() {
            return Err(Error::Data("survey has no respondents".into()));
        }
        Ok(SurveyMatrix {
            items,
            respondents,
            scores,
        })
    }

    pub fn load(path: &Path, schema: &SurveySchema) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, schema)
    }

    /// Scale prefixes in column order, without repeats.
    pub fn scales(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for item in &self.items {
            let s = scale_of(item);
            if !out.iter().any(|o| o == s) {
                out.push(s.to_string());
            }
        }
        out
    }

    /// Respondents x items sub-matrix for one scale.
    pub fn scale_items(&self, scale: &str) -> Vec<Vec<f64>> {
        let cols: Vec<usize> = (0..self.items.len()).filter(|&k| scale_of(&self.items[k]) == scale).collect();
        self.scores.iter().map(|row| cols.iter().map(|&k| row[k]).collect()).collect()
    }

    /// Per-respondent mean over a scale's items.
    pub fn composite(&self, scale: &str) -> Vec<f64> {
        self.scale_items(scale)
            .iter()
            .map(|r| r.iter().sum::<f64>() / r.len() as f64)
            .collect()
    }

    pub fn item_means(&self, scale: &str) -> Vec<f64> {
        let rows = self.scale_items(scale);
        let k = rows.first().map_or(0, Vec::len);
        (0..k)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScaleSummary {
    pub scale: String,
    pub items: usize,
    pub alpha: Option<f64>,
    pub descriptives: Descriptives,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupDifference {
    pub scale: String,
    pub report: TTestReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Battery {
    pub n: usize,
    pub scales: Vec<ScaleSummary>,
    /// First scale against the second.
    pub correlation: Option<Correlation>,
    /// Second scale regressed on the first.
    pub regression: Option<RegressionReport>,
    pub experience_cut: f64,
    pub differences: Vec<GroupDifference>,
}

/// Runs the full battery. Respondents with `experience_years <= experience_cut`
/// form the first group of the difference tests.
pub fn battery(m: &SurveyMatrix, experience_cut: f64, variant: TTestVariant) -> Result<Battery> {
    let scales = m.scales();
    let mut summaries = Vec::new();
    for s in &scales {
        let rows = m.scale_items(s);
        let alpha = if rows[0].len() >= 2 { Some(cronbach_alpha(&rows)?) } else { None };
        summaries.push(ScaleSummary {
            scale: s.clone(),
            items: rows[0].len(),
            alpha,
            descriptives: descriptives(&m.composite(s))?,
        });
    }
    let (correlation, regression) = if scales.len() >= 2 {
        let (x, y) = (m.composite(&scales[0]), m.composite(&scales[1]));
        (Some(pearson(&x, &y)?), Some(ols_simple(&x, &y)?))
    } else {
        (None, None)
    };
    let junior: Vec<usize> = (0..m.respondents.len())
        .filter(|&i| m.respondents[i].experience_years <= experience_cut)
        .collect();
    let senior: Vec<usize> = (0..m.respondents.len()).filter(|i| !junior.contains(i)).collect();
    let mut differences = Vec::new();
    for s in &scales {
        let c = m.composite(s);
        let a: Vec<f64> = junior.iter().map(|&i| c[i]).collect();
        let b: Vec<f64> = senior.iter().map(|&i| c[i]).collect();
        differences.push(GroupDifference {
            scale: s.clone(),
            report: ttest_independent(&a, &b, variant)?,
        });
    }
    Ok(Battery {
        n: m.respondents.len(),
        scales: summaries,
        correlation,
        regression,
        experience_cut,
        differences,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(i, s)| if i == 0 { format!("{s:<w$}", w = widths[i]) } else { format!("{s:>w$}", w = widths[i]) })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

impl Battery {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Reliability and correlation (n = {})", self.n);
        let mut rows = vec![vec![
            "Scale".to_string(),
            "Mean".into(),
            "S.D.".into(),
            "Alpha".into(),
            "r".into(),
            "Skewness".into(),
            "Kurtosis".into(),
        ]];
        for (i, s) in self.scales.iter().enumerate() {
            let r = match (i, &self.correlation) {
                (1, Some(c)) => format!("{:.4}{}", c.r, if c.p < 0.05 { "*" } else { "" }),
                _ => String::new(),
            };
            rows.push(vec![
                format!("{}.{}", i + 1, s.scale),
                format!("{:.4}", s.descriptives.mean),
                format!("{:.4}", s.descriptives.sd),
                opt(s.alpha),
                r,
                opt(s.descriptives.skewness),
                opt(s.descriptives.kurtosis),
            ]);
        }
        out.push_str(&table(&rows));
        if let Some(c) = &self.correlation {
            let _ = writeln!(out, "r = {:.4}, t = {:.4}, df = {}, p = {:.4}; *: p < .05", c.r, c.t, c.df, c.p);
        }
        if let (Some(r), [x, y, ..]) = (&self.regression, self.scales.as_slice()) {
            let _ = writeln!(out, "\nRegression: {} on {} (n = {})", y.scale, x.scale, r.n);
            let rows = vec![
                vec!["Beta", "S.E.", "t", "p", "R2", "Adj.R2", "F", "df"].into_iter().map(String::from).collect(),
                vec![
                    format!("{:.4}", r.beta),
                    format!("{:.4}", r.se),
                    format!("{:.4}", r.t),
                    format!("{:.4}", r.p),
                    format!("{:.4}", r.r2),
                    format!("{:.4}", r.adj_r2),
                    format!("{:.4}", r.f),
                    format!("{}, {}", r.df1, r.df2),
                ],
            ];
            out.push_str(&table(&rows));
        }
        if let Some(d) = self.differences.first() {
            let _ = writeln!(
                out,
                "\nDifference tests: experience <= {} vs > {} years ({})",
                self.experience_cut, self.experience_cut, d.report.variant
            );
        }
        let mut rows = vec![["Scale", "n1", "Mean1", "S.D.1", "n2", "Mean2", "S.D.2", "t", "df", "p"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>()];
        for d in &self.differences {
            let r = &d.report;
            rows.push(vec![
                d.scale.clone(),
                r.a.n.to_string(),
                format!("{:.4}", r.a.mean),
                format!("{:.4}", r.a.sd),
                r.b.n.to_string(),
                format!("{:.4}", r.b.mean),
                format!("{:.4}", r.b.sd),
                format!("{:.4}", r.t),
                format!("{:.4}", r.df),
                format!("{:.4}", r.p),
            ]);
        }
        if !self.differences.is_empty() {
            out.push_str(&table(&rows));
        }
        out
    }
}

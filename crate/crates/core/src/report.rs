//! Comparison tables across models and mitigation strategies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::metrics::{FairnessReport, Metric};

/// The four columns of the comparison table, in display order.
pub const TABLE_METRICS: [Metric; 4] = [
    Metric::Accuracy,
    Metric::DisparateImpact,
    Metric::EqualOpportunityDifference,
    Metric::AverageOddsDifference,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedReport {
    pub strategy: String,
    pub model: String,
    pub report: FairnessReport,
}

impl TaggedReport {
    /// Uses the report's dataset tag as strategy and model tag as model.
    pub fn from_report(report: FairnessReport) -> TaggedReport {
        TaggedReport {
            strategy: report.dataset_tag.clone(),
            model: report.model_tag.clone(),
            report,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: String,
    pub model: String,
    pub report: FairnessReport,
    /// Change against the baseline row of the same model, for metrics
    /// defined on both sides.
    pub deltas: BTreeMap<Metric, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
}

pub fn compare_reports(reports: &[TaggedReport], baseline: &str) -> Result<Comparison> {
    if reports.is_empty() {
        return Err(FairError::Aggregation("no reports to compare".into()));
    }
    if !reports.iter().any(|r| r.strategy == baseline) {
        let tags: BTreeSet<&str> = reports.iter().map(|r| r.strategy.as_str()).collect();
        return Err(FairError::Aggregation(format!(
            "baseline tag {baseline:?} not among strategies {tags:?}"
        )));
    }
    let mut seen = BTreeSet::new();
    for r in reports {
        if !seen.insert((r.strategy.as_str(), r.model.as_str())) {
            return Err(FairError::Aggregation(format!(
                "duplicate report for strategy {:?}, model {:?}",
                r.strategy, r.model
            )));
        }
    }
    let rows = reports
        .iter()
        .map(|r| {
            let base = reports.iter().find(|b| b.strategy == baseline && b.model == r.model);
            let deltas = base
                .map(|b| {
                    Metric::ALL
                        .iter()
                        .filter_map(|&m| Some((m, r.report.get(m)? - b.report.get(m)?)))
                        .collect()
                })
                .unwrap_or_default();
            ComparisonRow {
                strategy: r.strategy.clone(),
                model: r.model.clone(),
                report: r.report.clone(),
                deltas,
            }
        })
        .collect();
    Ok(Comparison {
        baseline: baseline.to_string(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = FairError;

    fn from_str(s: &str) -> Result<ReportFormat> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(FairError::Config(format!("unknown report format {other:?}"))),
        }
    }
}

/// Four significant digits, ties to even, trailing zeros removed.
pub fn format_sig4(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.3e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    let (sign, mantissa) = mantissa.strip_prefix('-').map_or(("", mantissa), |m| ("-", m));
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let mut out = if exp < 0 {
        format!("0.{}{digits}", "0".repeat((-exp - 1) as usize))
    } else if exp as usize + 1 >= digits.len() {
        format!("{digits}{}", "0".repeat(exp as usize + 1 - digits.len()))
    } else {
        let (int, frac) = digits.split_at(exp as usize + 1);
        format!("{int}.{frac}")
    };
    if out.contains('.') {
        out = out.trim_end_matches('0').trim_end_matches('.').to_string();
    }
    format!("{sign}{out}")
}

fn cell(r: &FairnessReport, m: Metric) -> String {
    match r.get(m) {
        Some(v) => format_sig4(v),
        None => format!("undefined({})", r.undefined_reason(m).unwrap_or_default()),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_report(c: &Comparison, format: ReportFormat) -> Result<String> {
    let mut out = String::new();
    match format {
        ReportFormat::Json => out = serde_json::to_string_pretty(c)? + "\n",
        ReportFormat::Markdown => {
            out.push_str("| Model |");
            for m in TABLE_METRICS {
                write!(out, " {} |", m.title()).unwrap();
            }
            out.push_str("\n|---|");
            out.push_str(&"---|".repeat(TABLE_METRICS.len()));
            out.push('\n');
            for row in &c.rows {
                let label = if row.strategy.is_empty() {
                    row.model.clone()
                } else {
                    format!("{} ({})", row.model, row.strategy)
                };
                write!(out, "| {label} |").unwrap();
                for m in TABLE_METRICS {
                    write!(out, " {} |", cell(&row.report, m)).unwrap();
                }
                out.push('\n');
            }
        }
        ReportFormat::Csv => {
            out.push_str("strategy,model,metric,value,delta\n");
            for row in &c.rows {
                for m in Metric::ALL {
                    let delta = row.deltas.get(&m).map(|d| format_sig4(*d)).unwrap_or_default();
                    writeln!(
                        out,
                        "{},{},{},{},{}",
                        csv_field(&row.strategy),
                        csv_field(&row.model),
                        m,
                        csv_field(&cell(&row.report, m)),
                        delta
                    )
                    .unwrap();
                }
            }
        }
    }
    Ok(out)
}

impl Comparison {
    pub fn from_json(text: &str) -> Result<Comparison> {
        Ok(serde_json::from_str(text)?)
    }
}

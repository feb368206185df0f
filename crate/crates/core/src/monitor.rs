//! Fairness monitoring over successive batches.
//!
//! States are values: [`monitor_ingest`] returns a new state and never
//! touches its input, so a checkpoint is just the serialized state.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{FairError, Result};
use crate::metrics::{audit_tagged, FairnessReport, Metric, DI_ACCEPTABLE_BAND};
use crate::models::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorThresholds {
    pub di_band: (f64, f64),
    pub eod_abs_max: f64,
    pub aod_abs_max: f64,
    pub accuracy_min: f64,
    pub window: usize,
}

impl Default for MonitorThresholds {
    fn default() -> Self {
        MonitorThresholds {
            di_band: DI_ACCEPTABLE_BAND,
            eod_abs_max: 0.1,
            aod_abs_max: 0.1,
            accuracy_min: 0.7,
            window: 10,
        }
    }
}

impl MonitorThresholds {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.di_band;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(FairError::Config(format!("di_band lower bound {lo} must be below upper bound {hi}")));
        }
        for (name, v) in [
            ("eod_abs_max", self.eod_abs_max),
            ("aod_abs_max", self.aod_abs_max),
            ("accuracy_min", self.accuracy_min),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(FairError::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.window == 0 {
            return Err(FairError::Config("window must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub batch_id: String,
    pub metric: Metric,
    pub observed: f64,
    /// The bound that was crossed.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub batch_id: String,
    pub report: FairnessReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorState {
    pub history: Vec<HistoryEntry>,
    /// Alerts for batches still in the window.
    pub alerts: Vec<Alert>,
    pub thresholds: MonitorThresholds,
    pub batches_ingested: usize,
    pub total_alerts: usize,
}

impl MonitorState {
    pub fn alerts_for<'a>(&'a self, batch_id: &'a str) -> impl Iterator<Item = &'a Alert> + 'a {
        self.alerts.iter().filter(move |a| a.batch_id == batch_id)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<MonitorState> {
        let st: MonitorState = serde_json::from_str(text)?;
        st.thresholds.validate()?;
        Ok(st)
    }
}

pub fn monitor_new(thresholds: MonitorThresholds) -> Result<MonitorState> {
    thresholds.validate()?;
    Ok(MonitorState {
        history: Vec::new(),
        alerts: Vec::new(),
        thresholds,
        batches_ingested: 0,
        total_alerts: 0,
    })
}

/// Threshold violations among the defined metrics of `report`.
pub fn check_report(report: &FairnessReport, t: &MonitorThresholds, batch_id: &str) -> Vec<Alert> {
    let mut out = Vec::new();
    let mut push = |metric, observed, bound| {
        out.push(Alert {
            batch_id: batch_id.to_string(),
            metric,
            observed,
            bound,
        })
    };
    if report.accuracy < t.accuracy_min {
        push(Metric::Accuracy, report.accuracy, t.accuracy_min);
    }
    if let Some(di) = report.disparate_impact {
        if di < t.di_band.0 {
            push(Metric::DisparateImpact, di, t.di_band.0);
        } else if di > t.di_band.1 {
            push(Metric::DisparateImpact, di, t.di_band.1);
        }
    }
    for (metric, value, max) in [
        (Metric::EqualOpportunityDifference, report.equal_opportunity_difference, t.eod_abs_max),
        (Metric::AverageOddsDifference, report.average_odds_difference, t.aod_abs_max),
    ] {
        if let Some(v) = value {
            if v.abs() > max {
                push(metric, v, if v < 0.0 { -max } else { max });
            }
        }
    }
    out
}

/// Audits `batch`, appends it to the window and records violations.
pub fn monitor_ingest(st: &MonitorState, batch: &Dataset, m: &Model, batch_id: &str) -> Result<MonitorState> {
    let report = audit_tagged(m, batch, m.kind().as_str(), batch_id)?;
    Ok(ingest_report(st, report, batch_id))
}

/// Like [`monitor_ingest`] for an already computed report.
pub fn ingest_report(st: &MonitorState, report: FairnessReport, batch_id: &str) -> MonitorState {
    let mut next = st.clone();
    let fresh = check_report(&report, &st.thresholds, batch_id);
    next.total_alerts += fresh.len();
    next.alerts.extend(fresh);
    next.history.push(HistoryEntry {
        batch_id: batch_id.to_string(),
        report,
    });
    next.batches_ingested += 1;
    let excess = next.history.len().saturating_sub(next.thresholds.window);
    if excess > 0 {
        next.history.drain(..excess);
        let live = &next.history;
        next.alerts.retain(|a| live.iter().any(|h| h.batch_id == a.batch_id));
    }
    next
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Batches in the window where the metric was defined.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSummary {
    pub batches_in_window: usize,
    pub batches_ingested: usize,
    pub total_alerts: usize,
    pub metrics: Vec<MetricSummary>,
    pub latest: Option<FairnessReport>,
}

pub fn monitor_summary(st: &MonitorState) -> MonitorSummary {
    let metrics = Metric::ALL
        .iter()
        .filter_map(|&metric| {
            let vals: Vec<f64> = st.history.iter().filter_map(|h| h.report.get(metric)).collect();
            if vals.is_empty() {
                return None;
            }
            Some(MetricSummary {
                metric,
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                count: vals.len(),
            })
        })
        .collect();
    MonitorSummary {
        batches_in_window: st.history.len(),
        batches_ingested: st.batches_ingested,
        total_alerts: st.total_alerts,
        metrics,
        latest: st.history.last().map(|h| h.report.clone()),
    }
}

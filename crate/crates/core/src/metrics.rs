//! Performance and group-fairness metrics.
//!
//! Group `0` is privileged (male), group `1` unprivileged (female). Gaps are
//! always unprivileged minus privileged, so negative values mean the
//! unprivileged group is disadvantaged. Rates with a zero denominator are
//! undefined rather than NaN.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{FairError, Result};
use crate::models::Model;

/// Disparate-impact values inside this closed band are acceptable.
pub const DI_ACCEPTABLE_BAND: (f64, f64) = (0.8, 1.25);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl Confusion {
    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `(tp + fp) / n`.
    pub fn selection_rate(&self) -> Option<f64> {
        ratio(self.tp + self.fp, self.n())
    }

    pub fn tpr(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStats {
    #[serde(rename = "priv")]
    pub privileged: Confusion,
    #[serde(rename = "unpriv")]
    pub unprivileged: Confusion,
}

impl GroupStats {
    /// Swaps the roles of the two groups.
    pub fn swapped(&self) -> GroupStats {
        GroupStats {
            privileged: self.unprivileged,
            unprivileged: self.privileged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    RocAuc,
    DisparateImpact,
    EqualOpportunityDifference,
    AverageOddsDifference,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Accuracy,
        Metric::RocAuc,
        Metric::DisparateImpact,
        Metric::EqualOpportunityDifference,
        Metric::AverageOddsDifference,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::RocAuc => "roc_auc",
            Metric::DisparateImpact => "disparate_impact",
            Metric::EqualOpportunityDifference => "equal_opportunity_difference",
            Metric::AverageOddsDifference => "average_odds_difference",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Metric::Accuracy => "Accuracy",
            Metric::RocAuc => "ROC AUC",
            Metric::DisparateImpact => "Disparate Impact",
            Metric::EqualOpportunityDifference => "Equal Opportunity Difference",
            Metric::AverageOddsDifference => "Average Odds Difference",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check_lengths(a: usize, b: usize, c: Option<usize>) -> Result<()> {
    if a != b || c.is_some_and(|c| c != a) {
        return Err(FairError::Shape(format!(
            "sequence lengths differ: {a}, {b}{}",
            c.map(|c| format!(", {c}")).unwrap_or_default()
        )));
    }
    if a == 0 {
        return Err(FairError::Shape("sequences must be non-empty".into()));
    }
    Ok(())
}

pub fn confusion_by_group(preds: &[u8], labels: &[u8], sensitive: &[u8]) -> Result<GroupStats> {
    check_lengths(preds.len(), labels.len(), Some(sensitive.len()))?;
    let mut stats = GroupStats::default();
    for ((&p, &y), &s) in preds.iter().zip(labels).zip(sensitive) {
        let c = if s == 0 {
            &mut stats.privileged
        } else {
            &mut stats.unprivileged
        };
        match (p, y) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fp += 1,
            (_, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    Ok(stats)
}

pub fn accuracy(preds: &[u8], labels: &[u8]) -> Result<f64> {
    check_lengths(preds.len(), labels.len(), None)?;
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Mann–Whitney AUC: the fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half. Computed from mid-ranks in
/// `O(n log n)`.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores.len(), labels.len(), None)?;
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(FairError::MetricUndefined("roc_auc needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the positive rank sum keeps mid-ranks integral.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid2 = (i + 1 + j + 1) as u128;
        let pos_in_tie = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        rank_sum2 += mid2 * pos_in_tie;
        i = j + 1;
    }
    let (np, nn) = (n_pos as u128, n_neg as u128);
    // U = R − n₊(n₊+1)/2, scaled by 2.
    let u2 = rank_sum2 - np * (np + 1);
    Ok(u2 as f64 / (2 * np * nn) as f64)
}

pub fn disparate_impact(stats: &GroupStats) -> Result<f64> {
    if stats.privileged.n() == 0 || stats.unprivileged.n() == 0 {
        return Err(FairError::MetricUndefined("disparate_impact needs both groups".into()));
    }
    let u = stats.unprivileged.selection_rate().unwrap();
    let p = stats.privileged.selection_rate().unwrap();
    if p == 0.0 {
        return Err(FairError::MetricUndefined("zero privileged selection rate".into()));
    }
    Ok(u / p)
}

pub fn equal_opportunity_difference(stats: &GroupStats) -> Result<f64> {
    let u = stats
        .unprivileged
        .tpr()
        .ok_or_else(|| FairError::MetricUndefined("no positive labels in unprivileged group".into()))?;
    let p = stats
        .privileged
        .tpr()
        .ok_or_else(|| FairError::MetricUndefined("no positive labels in privileged group".into()))?;
    Ok(u - p)
}

/// Unprivileged-minus-privileged false positive rate gap.
pub fn fpr_gap(stats: &GroupStats) -> Result<f64> {
    let u = stats
        .unprivileged
        .fpr()
        .ok_or_else(|| FairError::MetricUndefined("no negative labels in unprivileged group".into()))?;
    let p = stats
        .privileged
        .fpr()
        .ok_or_else(|| FairError::MetricUndefined("no negative labels in privileged group".into()))?;
    Ok(u - p)
}

/// `½·[(fpr_u − fpr_p) + (tpr_u − tpr_p)]`.
pub fn average_odds_difference(stats: &GroupStats) -> Result<f64> {
    let fpr = fpr_gap(stats)?;
    let tpr = equal_opportunity_difference(stats)?;
    Ok(0.5 * (fpr + tpr))
}

/// One (model, dataset) evaluation. Undefined metrics are `null` in JSON
/// and listed by name in `undefined`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub model_tag: String,
    pub dataset_tag: String,
    pub accuracy: f64,
    pub roc_auc: Option<f64>,
    pub disparate_impact: Option<f64>,
    pub equal_opportunity_difference: Option<f64>,
    pub average_odds_difference: Option<f64>,
    pub group_stats: GroupStats,
    pub undefined: Vec<Metric>,
}

impl FairnessReport {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Accuracy => Some(self.accuracy),
            Metric::RocAuc => self.roc_auc,
            Metric::DisparateImpact => self.disparate_impact,
            Metric::EqualOpportunityDifference => self.equal_opportunity_difference,
            Metric::AverageOddsDifference => self.average_odds_difference,
        }
    }

    /// Why `metric` is undefined, recomputed from the group counts, or
    /// `None` when it is defined.
    pub fn undefined_reason(&self, metric: Metric) -> Option<String> {
        if self.get(metric).is_some() {
            return None;
        }
        let s = &self.group_stats;
        let err = match metric {
            Metric::Accuracy => return None,
            Metric::RocAuc => return Some("single-class labels".into()),
            Metric::DisparateImpact => disparate_impact(s).err(),
            Metric::EqualOpportunityDifference => equal_opportunity_difference(s).err(),
            Metric::AverageOddsDifference => average_odds_difference(s).err(),
        };
        Some(match err {
            Some(FairError::MetricUndefined(why)) => why,
            Some(e) => e.to_string(),
            None => "unknown".into(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<FairnessReport> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Builds a report from predictions, scores and ground truth.
pub fn report_from_predictions(
    preds: &[u8],
    scores: &[f64],
    labels: &[u8],
    sensitive: &[u8],
    model_tag: &str,
    dataset_tag: &str,
) -> Result<FairnessReport> {
    check_lengths(scores.len(), labels.len(), None)?;
    let group_stats = confusion_by_group(preds, labels, sensitive)?;
    let accuracy = accuracy(preds, labels)?;
    let mut undefined = Vec::new();
    let mut keep = |metric: Metric, r: Result<f64>| -> Result<Option<f64>> {
        match r {
            Ok(v) => Ok(Some(v)),
            Err(FairError::MetricUndefined(_)) => {
                undefined.push(metric);
                Ok(None)
            }
            Err(e) => Err(e),
        }
    };
    let roc = keep(Metric::RocAuc, roc_auc(scores, labels))?;
    let di = keep(Metric::DisparateImpact, disparate_impact(&group_stats))?;
    let eod = keep(Metric::EqualOpportunityDifference, equal_opportunity_difference(&group_stats))?;
    let aod = keep(Metric::AverageOddsDifference, average_odds_difference(&group_stats))?;
    Ok(FairnessReport {
        model_tag: model_tag.to_string(),
        dataset_tag: dataset_tag.to_string(),
        accuracy,
        roc_auc: roc,
        disparate_impact: di,
        equal_opportunity_difference: eod,
        average_odds_difference: aod,
        group_stats,
        undefined,
    })
}

/// Scores `test` with `m` and computes every metric. Never fails on 0/0.
pub fn audit(m: &Model, test: &Dataset) -> Result<FairnessReport> {
    audit_tagged(m, test, m.kind().as_str(), "")
}

pub fn audit_tagged(m: &Model, test: &Dataset, model_tag: &str, dataset_tag: &str) -> Result<FairnessReport> {
    let scores = m.predict_proba_ds(test)?;
    let preds: Vec<u8> = scores.iter().map(|&p| u8::from(p >= m.threshold)).collect();
    report_from_predictions(&preds, &scores, &test.labels, &test.sensitive, model_tag, dataset_tag)
}

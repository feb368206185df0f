//! Pre-processing mitigations: reweighing and counterfactual augmentation.
//!
//! Reweighing gives every row in cell `(a, y)` the weight
//! `P(a)·P(y) / P(a, y)`. Under those weights the empirical joint
//! distribution of group and label factorizes, so a learner minimizing
//! weighted loss sees no association between them.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, GENDER};
use crate::error::{FairError, Result};
use crate::models::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceWeights {
    pub weights: Vec<f64>,
    pub provenance: String,
}

impl InstanceWeights {
    pub fn validate_for(&self, ds: &Dataset) -> Result<()> {
        if self.weights.len() != ds.n() {
            return Err(FairError::Shape(format!(
                "{} weights for {} rows",
                self.weights.len(),
                ds.n()
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(FairError::Config("instance weights must be finite and > 0".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<InstanceWeights> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn reweigh(ds: &Dataset) -> Result<InstanceWeights> {
    let mut cells = [[0usize; 2]; 2];
    for (&a, &y) in ds.sensitive.iter().zip(&ds.labels) {
        cells[a as usize][y as usize] += 1;
    }
    let missing: Vec<String> = (0..2)
        .flat_map(|a| (0..2).map(move |y| (a, y)))
        .filter(|&(a, y)| cells[a][y] == 0)
        .map(|(a, y)| format!("(gender={a}, approved={y})"))
        .collect();
    if !missing.is_empty() {
        return Err(FairError::DegenerateData(format!("empty cells {}", missing.join(", "))));
    }
    let n = ds.n() as f64;
    let pa = |a: usize| (cells[a][0] + cells[a][1]) as f64 / n;
    let py = |y: usize| (cells[0][y] + cells[1][y]) as f64 / n;
    let mut w = [[0.0; 2]; 2];
    for a in 0..2 {
        for y in 0..2 {
            w[a][y] = pa(a) * py(y) / (cells[a][y] as f64 / n);
        }
    }
    Ok(InstanceWeights {
        weights: ds
            .sensitive
            .iter()
            .zip(&ds.labels)
            .map(|(&a, &y)| w[a as usize][y as usize])
            .collect(),
        provenance: "reweighing".into(),
    })
}

/// Maps gender `g → 1 − g` in both the feature column and the sensitive
/// vector. Standardized data are flipped in raw units and re-scaled, so only
/// the gender column changes.
pub fn flip_sensitive(ds: &Dataset) -> Result<Dataset> {
    let gi = ds
        .gender_index()
        .ok_or_else(|| FairError::Schema(format!("no {GENDER} column in {:?}", ds.feature_names)))?;
    let scale = match (&ds.scaler, ds.standardized) {
        (Some(s), true) => Some(s.columns[gi].clone()),
        (None, true) => {
            return Err(FairError::Schema("standardized dataset has no scaler to flip through".into()))
        }
        _ => None,
    };
    let mut out = ds.clone();
    for (r, s) in out.sensitive.iter_mut().enumerate() {
        *s = 1 - *s;
        let v = out.features.get(r, gi);
        let flipped = match &scale {
            Some(c) => c.apply(1.0 - c.invert(v).round()),
            None => 1.0 - v,
        };
        out.features.set(r, gi, flipped);
    }
    Ok(out)
}

/// `ds` followed by its gender-flipped copy; labels are kept.
pub fn augment_counterfactual(ds: &Dataset) -> Result<Dataset> {
    ds.concat(&flip_sensitive(ds)?)
}

/// Fraction of rows whose probability moves by at most `eps` when gender is
/// flipped.
pub fn counterfactual_consistency(m: &Model, ds: &Dataset, eps: f64) -> Result<f64> {
    if !(eps >= 0.0) {
        return Err(FairError::Config(format!("eps must be >= 0, got {eps}")));
    }
    let p = m.predict_proba_ds(ds)?;
    let q = m.predict_proba_ds(&flip_sensitive(ds)?)?;
    let ok = p.iter().zip(&q).filter(|(a, b)| (*a - *b).abs() <= eps).count();
    Ok(ok as f64 / ds.n() as f64)
}

/// Largest absolute probability change under a gender flip for each row.
pub fn counterfactual_gaps(m: &Model, ds: &Dataset) -> Result<Vec<f64>> {
    let p = m.predict_proba_ds(ds)?;
    let q = m.predict_proba_ds(&flip_sensitive(ds)?)?;
    Ok(p.iter().zip(&q).map(|(a, b)| (a - b).abs()).collect())
}

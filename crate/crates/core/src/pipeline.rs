//! End-to-end configuration and glue shared by the CLI and tests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{apply_scaler, Dataset, GenConfig, Record};
use crate::error::{FairError, Result};
use crate::inprocess::{encode, FairEncoder, FairRepConfig, PenaltySpec};
use crate::models::{Model, TrainConfig};
use crate::monitor::MonitorThresholds;

/// Offsets from the global seed, one per component.
pub const GEN_SEED_OFFSET: u64 = 0;
pub const SPLIT_SEED_OFFSET: u64 = 1;
pub const TRAIN_SEED_OFFSET: u64 = 2;
pub const FAIRREP_SEED_OFFSET: u64 = 3;
pub const EXPLAIN_SEED_OFFSET: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Probe {
    pub salary: f64,
    pub years_experience: f64,
}

impl Default for Probe {
    fn default() -> Self {
        Probe {
            salary: 16000.0,
            years_experience: 23.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub gen: GenConfig,
    pub train: TrainConfig,
    pub fairrep: FairRepConfig,
    pub penalty: PenaltySpec,
    pub thresholds: MonitorThresholds,
    pub paths: Paths,
    pub probe: Probe,
    /// Share of rows kept for training when a split is requested.
    pub split_ratio: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            gen: GenConfig::default(),
            train: TrainConfig::default(),
            fairrep: FairRepConfig::default(),
            penalty: PenaltySpec::default(),
            thresholds: MonitorThresholds::default(),
            paths: Paths::default(),
            probe: Probe::default(),
            split_ratio: 0.8,
            seed: GenConfig::default().seed,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        self.train.validate()?;
        self.fairrep.validate()?;
        self.penalty.validate()?;
        self.thresholds.validate()?;
        if !(self.probe.salary > 0.0) || !(self.probe.years_experience > 0.0) {
            return Err(FairError::Config("probe salary and years_experience must be positive".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(FairError::Config(format!("split_ratio {} not in (0, 1)", self.split_ratio)));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<PipelineConfig> {
        let cfg: PipelineConfig = serde_json::from_str(text)?;
        let seed = cfg.seed;
        Ok(cfg.with_seed(seed))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PipelineConfig> {
        PipelineConfig::from_json(&std::fs::read_to_string(path)?)
    }

    /// Threads one seed through every component.
    pub fn with_seed(mut self, seed: u64) -> PipelineConfig {
        self.seed = seed;
        self.gen.seed = seed + GEN_SEED_OFFSET;
        self.train.seed = seed + TRAIN_SEED_OFFSET;
        self.fairrep.seed = seed + FAIRREP_SEED_OFFSET;
        self
    }

    pub fn split_seed(&self) -> u64 {
        self.seed + SPLIT_SEED_OFFSET
    }

    pub fn explain_seed(&self) -> u64 {
        self.seed + EXPLAIN_SEED_OFFSET
    }
}

/// Maps raw (or already scaled) rows to what `m` consumes: the model's
/// scaler, then the encoder when the model was trained on encodings.
pub fn model_input(m: &Model, ds: &Dataset, encoder: Option<&FairEncoder>) -> Result<Dataset> {
    let scaler = encoder.and_then(|e| e.scaler.as_ref()).or(m.scaler.as_ref());
    let scaled = match scaler {
        Some(s) if !ds.standardized => apply_scaler(ds, s)?,
        _ => ds.clone(),
    };
    match encoder {
        Some(fe) => encode(fe, &scaled),
        None => Ok(scaled),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub salary: f64,
    pub years_experience: f64,
    pub p_male: f64,
    pub p_female: f64,
}

impl ProbeResult {
    pub fn gap(&self) -> f64 {
        self.p_male - self.p_female
    }
}

/// Approval probability of the probe applicant as a man and as a woman.
pub fn probe_probabilities(m: &Model, probe: &Probe, encoder: Option<&FairEncoder>) -> Result<ProbeResult> {
    let rec = |gender| Record {
        gender,
        years_experience: probe.years_experience,
        salary: probe.salary,
        approved: 0,
    };
    let ds = Dataset::from_records(&[rec(0), rec(1)])?;
    let p = m.predict_proba_ds(&model_input(m, &ds, encoder)?)?;
    Ok(ProbeResult {
        salary: probe.salary,
        years_experience: probe.years_experience,
        p_male: p[0],
        p_female: p[1],
    })
}

//! Tabular loan data: synthetic generation, CSV ingestion, splitting and
//! z-score standardization.
//!
//! Gender is coded `0 = male` (privileged) and `1 = female` (unprivileged).
//! It appears both as a feature column and as the separate `sensitive`
//! vector, which is never transformed.

use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::matrix::Matrix;

pub const GENDER: &str = "gender";
pub const YEARS_EXPERIENCE: &str = "years_experience";
pub const SALARY: &str = "salary";
pub const APPROVED: &str = "approved";

/// Canonical column order of the loan schema.
pub const LOAN_FEATURES: [&str; 3] = [GENDER, YEARS_EXPERIENCE, SALARY];

/// Latent-score coefficient on the salary z-score.
pub const SALARY_COEF: f64 = 1.5;
/// Latent-score coefficient on the experience z-score.
pub const EXPERIENCE_COEF: f64 = 1.0;

/// Train columns with a standard deviation below this are only centered.
pub const DEGENERATE_STD: f64 = 1e-12;

/// One applicant in raw units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub gender: u8,
    pub years_experience: f64,
    pub salary: f64,
    pub approved: u8,
}

impl Record {
    pub fn validate(&self) -> Result<()> {
        if self.gender > 1 {
            return Err(FairError::Config(format!("gender {} not in {{0,1}}", self.gender)));
        }
        if self.approved > 1 {
            return Err(FairError::Config(format!(
                "approved {} not in {{0,1}}",
                self.approved
            )));
        }
        if !(self.years_experience >= 0.0) {
            return Err(FairError::Config("years_experience must be >= 0".into()));
        }
        if !(self.salary > 0.0) {
            return Err(FairError::Config("salary must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: f64,
    /// Divisor applied after centering; 1.0 for degenerate columns.
    pub std: f64,
    /// Set when the train column was (numerically) constant.
    pub degenerate: bool,
}

impl ColumnScale {
    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    #[inline]
    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Per-column z-score parameters estimated on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub feature_names: Vec<String>,
    pub columns: Vec<ColumnScale>,
}

impl Scaler {
    pub fn fit(features: &Matrix, feature_names: &[String]) -> Scaler {
        let n = features.rows() as f64;
        let columns = (0..features.cols())
            .map(|c| {
                let col = features.column(c);
                let mean = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let std = var.sqrt();
                if std < DEGENERATE_STD {
                    ColumnScale {
                        mean,
                        std: 1.0,
                        degenerate: true,
                    }
                } else {
                    ColumnScale {
                        mean,
                        std,
                        degenerate: false,
                    }
                }
            })
            .collect();
        Scaler {
            feature_names: feature_names.to_vec(),
            columns,
        }
    }

    pub fn transform(&self, features: &Matrix) -> Result<Matrix> {
        self.check_width(features)?;
        let mut out = features.clone();
        for r in 0..out.rows() {
            for (v, s) in out.row_mut(r).iter_mut().zip(&self.columns) {
                *v = s.apply(*v);
            }
        }
        Ok(out)
    }

    pub fn inverse_transform(&self, features: &Matrix) -> Result<Matrix> {
        self.check_width(features)?;
        let mut out = features.clone();
        for r in 0..out.rows() {
            for (v, s) in out.row_mut(r).iter_mut().zip(&self.columns) {
                *v = s.invert(*v);
            }
        }
        Ok(out)
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.columns.len() {
            return Err(FairError::Shape(format!(
                "row width {} does not match scaler width {}",
                row.len(),
                self.columns.len()
            )));
        }
        Ok(row.iter().zip(&self.columns).map(|(v, s)| s.apply(*v)).collect())
    }

    fn check_width(&self, features: &Matrix) -> Result<()> {
        if features.cols() != self.columns.len() {
            return Err(FairError::Shape(format!(
                "matrix width {} does not match scaler width {}",
                features.cols(),
                self.columns.len()
            )));
        }
        Ok(())
    }
}

/// Feature matrix plus labels, sensitive attribute and column metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Matrix,
    pub feature_names: Vec<String>,
    pub labels: Vec<u8>,
    pub sensitive: Vec<u8>,
    pub standardized: bool,
    pub scaler: Option<Scaler>,
}

impl Dataset {
    /// Validating constructor for an un-standardized dataset.
    pub fn new(
        features: Matrix,
        feature_names: Vec<String>,
        labels: Vec<u8>,
        sensitive: Vec<u8>,
    ) -> Result<Dataset> {
        let n = features.rows();
        if n == 0 {
            return Err(FairError::Shape("dataset must have at least one row".into()));
        }
        if feature_names.len() != features.cols() {
            return Err(FairError::Shape(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.cols()
            )));
        }
        if labels.len() != n || sensitive.len() != n {
            return Err(FairError::Shape(format!(
                "{n} rows but {} labels and {} sensitive values",
                labels.len(),
                sensitive.len()
            )));
        }
        if labels.iter().chain(&sensitive).any(|&v| v > 1) {
            return Err(FairError::Shape("labels and sensitive values must be 0 or 1".into()));
        }
        Ok(Dataset {
            features,
            feature_names,
            labels,
            sensitive,
            standardized: false,
            scaler: None,
        })
    }

    pub fn from_records(records: &[Record]) -> Result<Dataset> {
        for r in records {
            r.validate()?;
        }
        let rows: Vec<[f64; 3]> = records
            .iter()
            .map(|r| [f64::from(r.gender), r.years_experience, r.salary])
            .collect();
        Dataset::new(
            Matrix::from_rows(&rows)?,
            LOAN_FEATURES.iter().map(|s| s.to_string()).collect(),
            records.iter().map(|r| r.approved).collect(),
            records.iter().map(|r| r.gender).collect(),
        )
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.features.rows()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.features.cols()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    pub fn gender_index(&self) -> Option<usize> {
        self.column_index(GENDER)
    }

    /// Rows picked by index; metadata is inherited.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            feature_names: self.feature_names.clone(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            sensitive: idx.iter().map(|&i| self.sensitive[i]).collect(),
            standardized: self.standardized,
            scaler: self.scaler.clone(),
        }
    }

    /// Row-wise concatenation; both sides must share schema and scaling.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.feature_names != other.feature_names || self.standardized != other.standardized {
            return Err(FairError::Shape("cannot concatenate datasets with different schemas".into()));
        }
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let mut sensitive = self.sensitive.clone();
        sensitive.extend_from_slice(&other.sensitive);
        Ok(Dataset {
            features: self.features.vstack(&other.features)?,
            feature_names: self.feature_names.clone(),
            labels,
            sensitive,
            standardized: self.standardized,
            scaler: self.scaler.clone(),
        })
    }

    /// Features in raw units, undoing standardization when present.
    pub fn raw_features(&self) -> Result<Matrix> {
        match (&self.scaler, self.standardized) {
            (Some(s), true) => s.inverse_transform(&self.features),
            _ => Ok(self.features.clone()),
        }
    }

    /// Same labels and sensitive vector, new features and names.
    pub fn with_features(&self, features: Matrix, feature_names: Vec<String>) -> Result<Dataset> {
        let mut ds = Dataset::new(features, feature_names, self.labels.clone(), self.sensitive.clone())?;
        ds.standardized = false;
        Ok(ds)
    }

    pub fn has_both_groups(&self) -> bool {
        self.sensitive.contains(&0) && self.sensitive.contains(&1)
    }

    pub fn has_both_labels(&self) -> bool {
        self.labels.contains(&0) && self.labels.contains(&1)
    }
}

/// Parameters of the synthetic biased loan generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n: usize,
    /// Logit penalty applied to the unprivileged group.
    pub bias_strength: f64,
    pub base_approval_rate: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub salary_range: (f64, f64),
    pub experience_range: (f64, f64),
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n: 2000,
            bias_strength: 4.0,
            base_approval_rate: 0.25,
            noise_std: 1.5,
            seed: 42,
            salary_range: (4000.0, 18000.0),
            experience_range: (0.0, 25.0),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(FairError::Config("n: must be at least 1".into()));
        }
        if !(self.bias_strength >= 0.0) || !self.bias_strength.is_finite() {
            return Err(FairError::Config("bias_strength: must be finite and >= 0".into()));
        }
        if !(self.base_approval_rate > 0.0 && self.base_approval_rate < 1.0) {
            return Err(FairError::Config("base_approval_rate: must lie in (0, 1)".into()));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(FairError::Config("noise_std: must be finite and >= 0".into()));
        }
        let (slo, shi) = self.salary_range;
        if !(slo < shi) || !(slo >= 0.0) || !shi.is_finite() {
            return Err(FairError::Config("salary_range: need 0 <= lo < hi".into()));
        }
        let (elo, ehi) = self.experience_range;
        if !(elo < ehi) || !(elo >= 0.0) || !ehi.is_finite() {
            return Err(FairError::Config("experience_range: need 0 <= lo < hi".into()));
        }
        Ok(())
    }
}

fn zscores(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std < DEGENERATE_STD {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - mean) / std).collect()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Draws the synthetic loan dataset.
///
/// Gender, salary and experience are drawn first (Bernoulli(0.5) and two
/// uniforms), so datasets that differ only in `bias_strength`,
/// `base_approval_rate` or `noise_std` share identical applicants. The
/// approval label is Bernoulli of `sigmoid(s)` with latent score
///
/// ```text
/// s = logit(base) + 1.5·z(salary) + 1.0·z(experience) − bias·gender + N(0, noise²)
/// ```
///
/// where `z` is the z-score within the generated sample.
pub fn generate_biased_loans(config: &GenConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n;
    let (slo, shi) = config.salary_range;
    let (elo, ehi) = config.experience_range;

    let mut gender = Vec::with_capacity(n);
    let mut salary = Vec::with_capacity(n);
    let mut experience = Vec::with_capacity(n);
    for _ in 0..n {
        gender.push(u8::from(rng.random_bool(0.5)));
        salary.push(rng.random_range(slo..shi));
        experience.push(rng.random_range(elo..ehi));
    }

    let zs = zscores(&salary);
    let ze = zscores(&experience);
    let base_logit = (config.base_approval_rate / (1.0 - config.base_approval_rate)).ln();
    // Normal::new only fails for non-finite std, which validate() excludes.
    let noise = Normal::new(0.0, config.noise_std).expect("validated noise_std");
    let labels: Vec<u8> = (0..n)
        .map(|i| {
            let s = base_logit + SALARY_COEF * zs[i] + EXPERIENCE_COEF * ze[i]
                - config.bias_strength * f64::from(gender[i])
                + noise.sample(&mut rng);
            u8::from(rng.random::<f64>() < sigmoid(s))
        })
        .collect();

    let rows: Vec<[f64; 3]> = (0..n)
        .map(|i| [f64::from(gender[i]), experience[i], salary[i]])
        .collect();
    Dataset::new(
        Matrix::from_rows(&rows)?,
        LOAN_FEATURES.iter().map(|s| s.to_string()).collect(),
        labels,
        gender,
    )
}

fn parse_gender(v: &str) -> Option<u8> {
    match v.trim() {
        "male" | "0" => Some(0),
        "female" | "1" => Some(1),
        _ => None,
    }
}

/// Parses the loan CSV schema from any reader. Row indices in errors are
/// 1-based data-row positions (the header is row 0).
pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| FairError::Ingestion {
            row: 0,
            column: "header".into(),
            detail: e.to_string(),
        })?
        .clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(FairError::Ingestion {
            row: 0,
            column: "header".into(),
            detail: "empty file".into(),
        });
    }
    let mut cols = [0usize; 4];
    for (slot, name) in cols.iter_mut().zip([GENDER, YEARS_EXPERIENCE, SALARY, APPROVED]) {
        *slot = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| FairError::Ingestion {
                row: 0,
                column: name.into(),
                detail: "missing column".into(),
            })?;
    }

    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| FairError::Ingestion {
            row,
            column: "*".into(),
            detail: e.to_string(),
        })?;
        let field = |c: usize, name: &str| -> Result<&str> {
            rec.get(c).ok_or_else(|| FairError::Ingestion {
                row,
                column: name.into(),
                detail: "missing value".into(),
            })
        };
        let bad = |name: &str, v: &str, why: &str| FairError::Ingestion {
            row,
            column: name.into(),
            detail: format!("{why}: {v:?}"),
        };

        let g = field(cols[0], GENDER)?;
        let gender = parse_gender(g).ok_or_else(|| bad(GENDER, g, "expected male, female, 0 or 1"))?;
        let e = field(cols[1], YEARS_EXPERIENCE)?;
        let years_experience: f64 = e
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| bad(YEARS_EXPERIENCE, e, "expected a decimal >= 0"))?;
        let s = field(cols[2], SALARY)?;
        let salary: f64 = s
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite() && *v > 0.0)
            .ok_or_else(|| bad(SALARY, s, "expected a decimal > 0"))?;
        let a = field(cols[3], APPROVED)?;
        let approved = match a {
            "0" => 0,
            "1" => 1,
            _ => return Err(bad(APPROVED, a, "expected 0 or 1")),
        };
        records.push(Record {
            gender,
            years_experience,
            salary,
            approved,
        });
    }
    if records.is_empty() {
        return Err(FairError::Ingestion {
            row: 1,
            column: "*".into(),
            detail: "no data rows".into(),
        });
    }
    Dataset::from_records(&records)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(std::io::BufReader::new(file))
}

/// Renders a dataset in the loan CSV schema. Standardized datasets are
/// written in raw units. Floats use the shortest round-trip representation.
pub fn to_csv_string(ds: &Dataset) -> Result<String> {
    let raw = ds.raw_features()?;
    let idx: Vec<usize> = [YEARS_EXPERIENCE, SALARY]
        .iter()
        .map(|c| {
            ds.column_index(c)
                .ok_or_else(|| FairError::Schema(format!("dataset has no {c} column")))
        })
        .collect::<Result<_>>()?;
    let mut out = String::from("gender,years_experience,salary,approved\n");
    for i in 0..ds.n() {
        let row = raw.row(i);
        out.push_str(&format!(
            "{},{},{},{}\n",
            ds.sensitive[i], row[idx[0]], row[idx[1]], ds.labels[i]
        ));
    }
    Ok(out)
}

pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_csv_string(ds)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    pub seed: u64,
    pub ratio: f64,
}

/// Seeded shuffle, then the first `⌈ratio·n⌉` rows go to train.
pub fn split(ds: &Dataset, ratio: f64, seed: u64) -> Result<SplitPair> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(FairError::Config(format!("split ratio {ratio} not in (0, 1)")));
    }
    let n = ds.n();
    if n < 2 {
        return Err(FairError::Config("split needs at least 2 rows".into()));
    }
    let n_train = (ratio * n as f64).ceil() as usize;
    if n_train >= n {
        return Err(FairError::Config(format!(
            "ratio {ratio} leaves no test rows out of {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(SplitPair {
        train: ds.select(&idx[..n_train]),
        test: ds.select(&idx[n_train..]),
        seed,
        ratio,
    })
}

/// Z-scores both sets with statistics from `train` only.
pub fn standardize(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset)> {
    if train.standardized || test.standardized {
        return Err(FairError::Config("dataset is already standardized".into()));
    }
    if train.feature_names != test.feature_names {
        return Err(FairError::Shape(format!(
            "train columns {:?} differ from test columns {:?}",
            train.feature_names, test.feature_names
        )));
    }
    let scaler = Scaler::fit(&train.features, &train.feature_names);
    Ok((apply_scaler(train, &scaler)?, apply_scaler(test, &scaler)?))
}

/// Standardizes `ds` with an existing scaler.
pub fn apply_scaler(ds: &Dataset, scaler: &Scaler) -> Result<Dataset> {
    if ds.standardized {
        return Err(FairError::Config("dataset is already standardized".into()));
    }
    if ds.feature_names != scaler.feature_names {
        return Err(FairError::Shape(format!(
            "dataset columns {:?} differ from scaler columns {:?}",
            ds.feature_names, scaler.feature_names
        )));
    }
    Ok(Dataset {
        features: scaler.transform(&ds.features)?,
        feature_names: ds.feature_names.clone(),
        labels: ds.labels.clone(),
        sensitive: ds.sensitive.clone(),
        standardized: true,
        scaler: Some(scaler.clone()),
    })
}

/// Approval rate of the unprivileged group over that of the privileged
/// group, from labels.
pub fn label_rate_ratio(ds: &Dataset) -> Option<f64> {
    let rate = |g: u8| {
        let (pos, n) = ds
            .labels
            .iter()
            .zip(&ds.sensitive)
            .filter(|(_, s)| **s == g)
            .fold((0usize, 0usize), |(p, n), (y, _)| (p + usize::from(*y), n + 1));
        (n > 0).then(|| pos as f64 / n as f64)
    };
    match (rate(1), rate(0)) {
        (Some(u), Some(p)) if p > 0.0 => Some(u / p),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, bias: f64, seed: u64) -> GenConfig {
        GenConfig {
            n,
            bias_strength: bias,
            seed,
            ..GenConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_biased_loans(&cfg(300, 4.0, 9)).unwrap();
        let b = generate_biased_loans(&cfg(300, 4.0, 9)).unwrap();
        assert_eq!(a, b);
        let c = generate_biased_loans(&cfg(300, 4.0, 10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generation_honors_n_and_record_invariants() {
        let ds = generate_biased_loans(&cfg(500, 4.0, 3)).unwrap();
        assert_eq!(ds.n(), 500);
        assert_eq!(ds.d(), 3);
        for i in 0..ds.n() {
            let row = ds.features.row(i);
            assert_eq!(row[0], f64::from(ds.sensitive[i]));
            assert!(row[1] >= 0.0);
            assert!(row[2] > 0.0);
        }
    }

    #[test]
    fn unbiased_generator_has_equal_group_rates() {
        let ds = generate_biased_loans(&cfg(20000, 0.0, 1)).unwrap();
        let r = label_rate_ratio(&ds).unwrap();
        assert!((0.95..=1.05).contains(&r), "ratio {r}");
    }

    #[test]
    fn strong_bias_halves_female_rate() {
        let ds = generate_biased_loans(&cfg(20000, 4.0, 1)).unwrap();
        let r = label_rate_ratio(&ds).unwrap();
        assert!(r < 0.5, "ratio {r}");
    }

    #[test]
    fn bad_config_names_the_field() {
        let mut c = GenConfig::default();
        c.salary_range = (10.0, 5.0);
        let err = generate_biased_loans(&c).unwrap_err().to_string();
        assert!(err.contains("salary_range"), "{err}");
        let c = GenConfig {
            base_approval_rate: 1.0,
            ..GenConfig::default()
        };
        assert!(generate_biased_loans(&c).unwrap_err().to_string().contains("base_approval_rate"));
    }

    #[test]
    fn csv_with_three_rows() {
        let text = "gender,years_experience,salary,approved\nmale,3,12000,1\nfemale,23,16000,0\r\n1,0.5,9000.25,1\n";
        let ds = read_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.d(), 3);
        assert_eq!(ds.feature_names, vec!["gender", "years_experience", "salary"]);
        assert_eq!(ds.features.get(1, 0), 1.0);
        assert_eq!(ds.sensitive, vec![0, 1, 1]);
        assert_eq!(ds.labels, vec![1, 0, 1]);
    }

    #[test]
    fn csv_domain_violation_cites_row() {
        let text = "gender,years_experience,salary,approved\nmale,3,12000,1\nfemale,2,100,2\n";
        match read_csv(text.as_bytes()).unwrap_err() {
            FairError::Ingestion { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "approved");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn csv_missing_column_and_empty_file() {
        let err = read_csv("gender,salary,approved\nmale,1,1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("years_experience"));
        assert!(matches!(read_csv("".as_bytes()).unwrap_err(), FairError::Ingestion { .. }));
        let header_only = "gender,years_experience,salary,approved\n";
        assert!(matches!(read_csv(header_only.as_bytes()).unwrap_err(), FairError::Ingestion { .. }));
        let bad_num = "gender,years_experience,salary,approved\nmale,abc,1,1\n";
        assert!(read_csv(bad_num.as_bytes()).unwrap_err().to_string().contains("row 1"));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let ds = generate_biased_loans(&cfg(50, 2.0, 5)).unwrap();
        let back = read_csv(to_csv_string(&ds).unwrap().as_bytes()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = generate_biased_loans(&cfg(10, 1.0, 2)).unwrap();
        let p = split(&ds, 0.8, 7).unwrap();
        assert_eq!((p.train.n(), p.test.n()), (8, 2));
        assert_eq!(p, split(&ds, 0.8, 7).unwrap());
        let mut all: Vec<Vec<u64>> = p
            .train
            .features
            .iter_rows()
            .chain(p.test.features.iter_rows())
            .map(|r| r.iter().map(|v| v.to_bits()).collect())
            .collect();
        let mut orig: Vec<Vec<u64>> = ds
            .features
            .iter_rows()
            .map(|r| r.iter().map(|v| v.to_bits()).collect())
            .collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
        assert!(split(&ds, 1.0, 1).is_err());
        assert!(split(&ds, 0.0, 1).is_err());
    }

    #[test]
    fn standardize_moments() {
        let ds = generate_biased_loans(&cfg(400, 2.0, 4)).unwrap();
        let p = split(&ds, 0.75, 1).unwrap();
        let (tr, te) = standardize(&p.train, &p.test).unwrap();
        assert!(tr.standardized && te.standardized);
        assert_eq!(tr.sensitive, p.train.sensitive);
        for c in 0..tr.d() {
            let col = tr.features.column(c);
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 1e-9);
            assert!((sd - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn standardize_constant_column_centers_only() {
        let m = Matrix::from_rows(&[[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]]).unwrap();
        let names = vec!["a".to_string(), "b".to_string()];
        let ds = Dataset::new(m, names, vec![0, 1, 0], vec![0, 1, 1]).unwrap();
        let (tr, _) = standardize(&ds, &ds).unwrap();
        assert_eq!(tr.features.column(0), vec![0.0, 0.0, 0.0]);
        let sc = tr.scaler.unwrap();
        assert!(sc.columns[0].degenerate);
        assert!(!sc.columns[1].degenerate);
    }

    #[test]
    fn test_row_at_train_mean_maps_to_zero() {
        let tr = Dataset::from_records(&[
            Record { gender: 0, years_experience: 2.0, salary: 100.0, approved: 0 },
            Record { gender: 1, years_experience: 4.0, salary: 300.0, approved: 1 },
        ])
        .unwrap();
        let te = Dataset::from_records(&[Record {
            gender: 0,
            years_experience: 3.0,
            salary: 200.0,
            approved: 1,
        }])
        .unwrap();
        // The gender mean is 0.5, so use a scaler-only check on the other two.
        let (_, te_z) = standardize(&tr, &te).unwrap();
        assert_eq!(te_z.features.get(0, 1), 0.0);
        assert_eq!(te_z.features.get(0, 2), 0.0);
        let mean_row = [0.5, 3.0, 200.0];
        let z = te_z.scaler.unwrap().transform_row(&mean_row).unwrap();
        assert_eq!(z, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn standardize_rejects_mismatched_schema() {
        let a = generate_biased_loans(&cfg(10, 1.0, 2)).unwrap();
        let mut b = a.clone();
        b.feature_names[2] = "income".into();
        assert!(matches!(standardize(&a, &b).unwrap_err(), FairError::Shape(_)));
        let (za, _) = standardize(&a, &a).unwrap();
        assert!(standardize(&za, &a).is_err());
    }
}

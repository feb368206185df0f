use std::fs;
use std::io::Write;
use std::path::Path;

use fairkit::dataset::{generate_biased_loans, load_csv, split, write_csv, Scaler};
use fairkit::explain::{default_kernel_width, local_surrogate, permutation_importance, shapley_exact, ImportanceMetric};
use fairkit::inprocess::{
    encode, train_adversarial_classifier, train_fair_representation, train_penalized_classifier, FairEncoder,
    PenaltyKind,
};
use fairkit::metrics::audit_tagged;
use fairkit::monitor::{monitor_ingest, monitor_new};
use fairkit::pipeline::{model_input, probe_probabilities, PipelineConfig};
use fairkit::preprocess::{augment_counterfactual, reweigh, InstanceWeights};
use fairkit::report::{compare_reports, render_report, ReportFormat, TaggedReport};
use fairkit::{dataset, fit, Dataset, FairError, FairnessReport, Model, Result};

use crate::{Cli, Command, DataArgs, ExplainMethod, FormatArg, Method, PenaltyArg};

/// Number of surrogate samples and importance repeats used by `explain`.
const SURROGATE_SAMPLES: usize = 1000;
const IMPORTANCE_REPEATS: usize = 10;

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    match cli.command {
        Command::Gen {
            n,
            bias,
            base_rate,
            noise,
            out,
        } => {
            let mut g = cfg.gen.clone();
            g.n = n.unwrap_or(g.n);
            g.bias_strength = bias.unwrap_or(g.bias_strength);
            g.base_approval_rate = base_rate.unwrap_or(g.base_approval_rate);
            g.noise_std = noise.unwrap_or(g.noise_std);
            write_csv(&generate_biased_loans(&g)?, out)
        }
        Command::Train {
            kind,
            data,
            weights,
            out,
        } => {
            cfg.validate()?;
            let train = training_side(&data, &cfg)?;
            let w = match weights {
                Some(p) => {
                    let w = InstanceWeights::from_json(&read(&p)?)?;
                    w.validate_for(&train)?;
                    Some(w.weights)
                }
                None => None,
            };
            let m = fit(kind, &standardized(&train)?, w.as_deref(), &cfg.train)?;
            write(&out, &m.to_json()?)
        }
        Command::Audit {
            model,
            data,
            encoder,
            tag,
            model_tag,
            out,
        } => {
            cfg.validate()?;
            let m = Model::from_json(&read(&model)?)?;
            let fe = load_encoder(encoder.as_deref())?;
            let test = evaluation_side(&data, &cfg)?;
            let input = model_input(&m, &test, fe.as_ref())?;
            let model_tag = model_tag.unwrap_or_else(|| m.kind().as_str().to_string());
            let report = audit_tagged(&m, &input, &model_tag, &tag)?;
            write(&out, &report.to_json()?)?;
            let p = probe_probabilities(&m, &cfg.probe, fe.as_ref())?;
            println!(
                "probe salary={} years_experience={} p_male={:.4} p_female={:.4}",
                p.salary, p.years_experience, p.p_male, p.p_female
            );
            Ok(())
        }
        Command::Mitigate {
            method,
            data,
            out,
            model_out,
            kind,
            encoded_out,
            penalty,
            mu,
            lambda,
        } => {
            if let Some(l) = lambda {
                cfg.fairrep.lambda_adv = l;
            }
            if let Some(mu) = mu {
                cfg.penalty.mu = mu;
            }
            if let Some(p) = penalty {
                cfg.penalty.kind = match p {
                    PenaltyArg::DemographicParity => PenaltyKind::DemographicParityGap,
                    PenaltyArg::Counterfactual => PenaltyKind::CounterfactualConsistency,
                };
            }
            cfg.validate()?;
            let train = training_side(&data, &cfg)?;
            mitigate(method, &train, &cfg, &out, model_out.as_deref(), kind, encoded_out.as_deref())
        }
        Command::Explain {
            model,
            data,
            row,
            encoder,
            method,
            out,
        } => {
            let m = Model::from_json(&read(&model)?)?;
            let fe = load_encoder(encoder.as_deref())?;
            let ds = model_input(&m, &evaluation_side(&data, &cfg)?, fe.as_ref())?;
            if row >= ds.n() {
                return Err(FairError::Shape(format!("row {row} out of range for {} rows", ds.n())));
            }
            let x = ds.features.row(row).to_vec();
            let json = out.extension().is_some_and(|e| e == "json");
            let text = match method {
                ExplainMethod::Shapley => {
                    let a = shapley_exact(&m, &x, &ds)?;
                    if json {
                        serde_json::to_string_pretty(&a)? + "\n"
                    } else {
                        let mut s = "feature,value,contribution\n".to_string();
                        for (i, name) in a.feature_names.iter().enumerate() {
                            s += &format!("{name},{},{}\n", x[i], a.contributions[i]);
                        }
                        s + &format!("base_value,,{}\ninstance_output,,{}\n", a.base_value, a.instance_output)
                    }
                }
                ExplainMethod::Surrogate => {
                    let width = default_kernel_width(&ds);
                    let e = local_surrogate(&m, &x, &ds, SURROGATE_SAMPLES, width, cfg.explain_seed())?;
                    if json {
                        serde_json::to_string_pretty(&e)? + "\n"
                    } else {
                        let mut s = "feature,coefficient\n".to_string();
                        for (name, c) in e.feature_names.iter().zip(&e.coefficients) {
                            s += &format!("{name},{c}\n");
                        }
                        s + &format!("intercept,{}\nlocal_fit_r2,{}\n", e.intercept, e.local_fit_r2)
                    }
                }
                ExplainMethod::Importance => {
                    let imp = permutation_importance(&m, &ds, ImportanceMetric::Accuracy, IMPORTANCE_REPEATS, cfg.explain_seed())?;
                    if json {
                        let map: serde_json::Map<String, serde_json::Value> =
                            ds.feature_names.iter().cloned().zip(imp.iter().map(|&v| v.into())).collect();
                        serde_json::to_string_pretty(&map)? + "\n"
                    } else {
                        let mut s = "feature,importance\n".to_string();
                        for (name, v) in ds.feature_names.iter().zip(&imp) {
                            s += &format!("{name},{v}\n");
                        }
                        s
                    }
                }
            };
            write(&out, &text)
        }
        Command::Monitor {
            model,
            batches,
            encoder,
            state,
        } => {
            cfg.validate()?;
            let m = Model::from_json(&read(&model)?)?;
            let fe = load_encoder(encoder.as_deref())?;
            let mut files: Vec<_> = fs::read_dir(&batches)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "csv"))
                .collect();
            files.sort();
            let mut st = monitor_new(cfg.thresholds.clone())?;
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            for f in files {
                let id = f.file_stem().unwrap().to_string_lossy().to_string();
                let batch = model_input(&m, &load_csv(&f)?, fe.as_ref())?;
                st = monitor_ingest(&st, &batch, &m, &id)?;
                for a in st.alerts_for(&id) {
                    writeln!(lock, "{}", serde_json::to_string(a)?)?;
                }
            }
            if let Some(p) = state {
                write(&p, &st.to_json()?)?;
            }
            Ok(())
        }
        Command::Report {
            dir,
            baseline,
            format,
            out,
        } => {
            let mut files: Vec<_> = fs::read_dir(&dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "json"))
                .collect();
            files.sort();
            let reports = files
                .iter()
                .map(|f| Ok(TaggedReport::from_report(FairnessReport::from_json(&read(f)?)?)))
                .collect::<Result<Vec<_>>>()?;
            let c = compare_reports(&reports, &baseline)?;
            let fmt = match format {
                FormatArg::Json => ReportFormat::Json,
                FormatArg::Markdown => ReportFormat::Markdown,
                FormatArg::Csv => ReportFormat::Csv,
            };
            let text = render_report(&c, fmt)?;
            match out {
                Some(p) => write(&p, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

fn mitigate(
    method: Method,
    train: &Dataset,
    cfg: &PipelineConfig,
    out: &Path,
    model_out: Option<&Path>,
    kind: fairkit::ModelKind,
    encoded_out: Option<&Path>,
) -> Result<()> {
    let std_train = standardized(train)?;
    match method {
        Method::Reweigh => {
            let w = reweigh(train)?;
            write(out, &w.to_json()?)?;
            if let Some(p) = model_out {
                write(p, &fit(kind, &std_train, Some(&w.weights), &cfg.train)?.to_json()?)?;
            }
        }
        Method::Counterfactual => {
            let aug = augment_counterfactual(train)?;
            write_csv(&aug, out)?;
            if let Some(p) = model_out {
                write(p, &fit(kind, &standardized(&aug)?, None, &cfg.train)?.to_json()?)?;
            }
        }
        Method::Fairrep => {
            let fe = train_fair_representation(&std_train, &cfg.fairrep)?;
            write(out, &fe.to_json()?)?;
            let enc = encode(&fe, &std_train)?;
            if let Some(p) = encoded_out {
                write(p, &encoded_csv(&enc))?;
            }
            if let Some(p) = model_out {
                write(p, &fit(kind, &enc, None, &cfg.train)?.to_json()?)?;
            }
        }
        Method::Adversarial => {
            write(out, &train_adversarial_classifier(&std_train, &cfg.fairrep, &cfg.train)?.to_json()?)?;
        }
        Method::Penalty => {
            write(out, &train_penalized_classifier(&std_train, &cfg.penalty, &cfg.train)?.to_json()?)?;
        }
    }
    Ok(())
}

/// Encoded features plus the carried labels and gender, for export.
fn encoded_csv(ds: &Dataset) -> String {
    let mut s = ds.feature_names.join(",");
    s += &format!(",{},{}\n", dataset::GENDER, dataset::APPROVED);
    for (r, row) in ds.features.iter_rows().enumerate() {
        let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s += &format!("{},{},{}\n", vals.join(","), ds.sensitive[r], ds.labels[r]);
    }
    s
}

fn standardized(ds: &Dataset) -> Result<Dataset> {
    dataset::apply_scaler(ds, &Scaler::fit(&ds.features, &ds.feature_names))
}

fn training_side(data: &DataArgs, cfg: &PipelineConfig) -> Result<Dataset> {
    let ds = load_csv(&data.data)?;
    if data.split {
        Ok(split(&ds, cfg.split_ratio, cfg.split_seed())?.train)
    } else {
        Ok(ds)
    }
}

fn evaluation_side(data: &DataArgs, cfg: &PipelineConfig) -> Result<Dataset> {
    let ds = load_csv(&data.data)?;
    if data.split {
        Ok(split(&ds, cfg.split_ratio, cfg.split_seed())?.test)
    } else {
        Ok(ds)
    }
}

fn load_encoder(path: Option<&Path>) -> Result<Option<FairEncoder>> {
    path.map(|p| FairEncoder::from_json(&read(p)?)).transpose()
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| FairError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fairkit::ModelKind;

mod commands;

#[derive(Parser, Debug)]
#[command(name = "fairkit", version, about = "Fairness auditing and bias mitigation for loan approval models")]
pub struct Cli {
    /// Global seed; every component derives its own from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON pipeline config; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Use the seeded train/test split of `--data`: training commands take
    /// the train side, evaluation commands the test side.
    #[arg(long)]
    pub split: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic biased loan dataset.
    Gen {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        bias: Option<f64>,
        #[arg(long)]
        base_rate: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a classifier and write it as JSON.
    Train {
        #[arg(long, value_parser = parse_kind)]
        kind: ModelKind,
        #[command(flatten)]
        data: DataArgs,
        /// Instance weights JSON from `mitigate --method reweigh`.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model on data and write a fairness report.
    Audit {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Encoder JSON when the model consumes fair encodings.
        #[arg(long)]
        encoder: Option<PathBuf>,
        /// Strategy tag recorded in the report.
        #[arg(long, default_value = "baseline")]
        tag: String,
        /// Model tag; defaults to the model kind.
        #[arg(long)]
        model_tag: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a bias mitigation.
    Mitigate {
        #[arg(long, value_enum)]
        method: Method,
        #[command(flatten)]
        data: DataArgs,
        /// Primary output: weights (reweigh), augmented CSV
        /// (counterfactual), encoder (fairrep) or model (others).
        #[arg(long)]
        out: PathBuf,
        /// Also train and write a classifier on the mitigated data.
        #[arg(long)]
        model_out: Option<PathBuf>,
        /// Classifier kind for `--model-out`.
        #[arg(long, value_parser = parse_kind, default_value = "logistic")]
        kind: ModelKind,
        /// Write the encoded dataset (fairrep only).
        #[arg(long)]
        encoded_out: Option<PathBuf>,
        #[arg(long, value_enum)]
        penalty: Option<PenaltyArg>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Explain one row of the data.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        row: usize,
        #[arg(long)]
        encoder: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "shapley")]
        method: ExplainMethod,
        /// `.json` for the full record, anything else for CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Audit a directory of batch CSVs in order, streaming alerts.
    Monitor {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        batches: PathBuf,
        #[arg(long)]
        encoder: Option<PathBuf>,
        /// Write the final monitor state here.
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Compare a directory of fairness reports.
    Report {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value = "baseline")]
        baseline: String,
        #[arg(long, value_enum, default_value = "markdown")]
        format: FormatArg,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Reweigh,
    Counterfactual,
    Fairrep,
    Adversarial,
    Penalty,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum PenaltyArg {
    DemographicParity,
    Counterfactual,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExplainMethod {
    Shapley,
    Surrogate,
    Importance,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormatArg {
    Json,
    Markdown,
    Csv,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = ModelKind::ALL.iter().map(|k| k.as_str()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            eprintln!("error: {line}");
            ExitCode::from(1)
        }
    }
}

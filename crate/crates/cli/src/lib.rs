//! Batch commands behind the `fee` binary. Every command prints JSON and
//! exits 0 on success, 1 on a validation error and 2 on an I/O error.

use std::fs;
use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use fee_core::dataset::{Dataset, DatasetError};
use fee_core::elicitation::{
    borda, threshold_stats, top1_category_counts, top1_metric_counts, weighted_rank_scores,
    PreferenceRecord,
};
use fee_core::german;
use fee_core::metrics::{ThresholdConfig, DEFAULT_NEIGHBORS};
use fee_core::model::{train, ModelConfig, ModelError, TrainedModel};
use fee_core::report::{audit, AuditOptions};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io { .. } => 2,
        }
    }

    fn invalid(e: impl ToString) -> Self {
        CliError::Invalid(e.to_string())
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(name = "fee", version, about = "Fairness exploration for credit models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the logistic model and write it as JSON.
    Train(TrainArgs),
    /// Compute every applicable fairness metric for a trained model.
    Audit(AuditArgs),
    /// Aggregate stakeholder preference records.
    Aggregate(AggregateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// German credit data file, or a dataset JSON.
    #[arg(long)]
    pub data: PathBuf,
    /// Model config JSON; missing keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Protected features, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "age,gender,foreign_worker")]
    pub features: Vec<String>,
    /// Group, subgroup and individual thresholds in percent.
    #[arg(long, value_parser = parse_thresholds, default_value = "10,10,95")]
    pub thresholds: ThresholdConfig,
    /// Legitimate features for conditional statistical parity.
    #[arg(long, value_delimiter = ',')]
    pub conditions: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
    pub neighbors: usize,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// JSON array of preference records.
    #[arg(long)]
    pub records: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub store: PathBuf,
}

pub fn parse_thresholds(s: &str) -> Result<ThresholdConfig, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
        .collect::<Result<_, _>>()?;
    let [group, subgroup, individual] = parts[..] else {
        return Err(format!("expected three values g,s,i, got {}", parts.len()));
    };
    let config = ThresholdConfig {
        group,
        subgroup,
        individual,
    };
    config.validate()?;
    Ok(config)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    german::load_file(path).map_err(|e| match e {
        DatasetError::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::Invalid(format!("{}: {other}", path.display())),
    })
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = read(path)?;
    TrainedModel::from_json(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json values serialize")
}

/// Trains, writes the model to `--out` and returns the summary.
pub fn cmd_train(args: &TrainArgs) -> Result<String> {
    let mut config = match &args.config {
        Some(p) => serde_json::from_str::<ModelConfig>(&read(p)?)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?,
        None => ModelConfig::default(),
    };
    if let Some(f) = args.folds {
        config.folds = f;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    config.validate().map_err(CliError::invalid)?;
    let ds = load_dataset(&args.data)?;
    let model = train(&ds, &config).map_err(|e: ModelError| CliError::invalid(e))?;
    let performance = model.evaluate(&ds).map_err(CliError::invalid)?;
    write(&args.out, &model.to_json())?;
    Ok(pretty(&json!({
        "model": args.out,
        "config": model.config,
        "dataset_fingerprint": model.dataset_fingerprint,
        "active_fold": model.active_fold,
        "train_size": ds.len() - performance.test_size,
        "test_size": performance.test_size,
        "performance": performance,
        "warnings": model.warnings,
    })))
}

pub fn cmd_audit(args: &AuditArgs) -> Result<String> {
    let ds = load_dataset(&args.data)?;
    let model = load_model(&args.model)?;
    model.check_dataset(&ds).map_err(CliError::invalid)?;
    let features: Vec<&str> = args.features.iter().map(String::as_str).collect();
    let conditions: Vec<&str> = args.conditions.iter().map(String::as_str).collect();
    let opts = AuditOptions {
        features: &features,
        conditions: &conditions,
        thresholds: args.thresholds,
        neighbors: args.neighbors,
    };
    let report = audit(&model, &ds, &opts).map_err(CliError::invalid)?;
    let text = report.to_json();
    match &args.out {
        Some(p) => {
            write(p, &text)?;
            Ok(pretty(&json!({
                "report": p,
                "results": report.results.len(),
                "skipped": report.skipped.len(),
                "fair": report.fair,
                "unfair": report.unfair,
            })))
        }
        None => Ok(text),
    }
}

pub fn aggregate_records(records: &[PreferenceRecord]) -> Result<Value> {
    for r in records {
        r.validate()
            .map_err(|e| CliError::Invalid(format!("{}: {e}", r.participant_id)))?;
    }
    let weighted = weighted_rank_scores(records).map_err(CliError::invalid)?;
    let ranked: Vec<Value> = weighted
        .ranked()
        .into_iter()
        .map(|(m, score)| json!({"metric_id": m, "score": score}))
        .collect();
    Ok(json!({
        "participants": records.len(),
        "weighted": {
            "weights": weighted.weights,
            "scores": weighted.scores,
            "ranked": ranked,
        },
        "borda": borda(records).map_err(CliError::invalid)?,
        "thresholds": threshold_stats(records).map_err(CliError::invalid)?,
        "top1_categories": top1_category_counts(records).map_err(CliError::invalid)?,
        "top1_metrics": top1_metric_counts(records),
    }))
}

pub fn cmd_aggregate(args: &AggregateArgs) -> Result<String> {
    let text = read(&args.records)?;
    let records: Vec<PreferenceRecord> = serde_json::from_str(&text)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", args.records.display())))?;
    aggregate_records(&records).map(|v| pretty(&v))
}

pub fn cmd_serve(args: &ServeArgs) -> Result<()> {
    // missing artifacts are I/O errors; everything else found at startup is invalid input
    for p in [&args.data, &args.model] {
        fs::metadata(p).map_err(|source| CliError::Io {
            path: p.clone(),
            source,
        })?;
    }
    let state = fee_service::AppState::load(&args.data, &args.model, &args.store)
        .map_err(CliError::invalid)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|source| CliError::Io {
        path: PathBuf::from("<runtime>"),
        source,
    })?;
    eprintln!("listening on http://{}", args.bind);
    runtime
        .block_on(fee_service::serve(args.bind, state))
        .map_err(|source| CliError::Io {
            path: PathBuf::from(args.bind.to_string()),
            source,
        })
}

/// Runs a parsed command, returning what should go to stdout.
pub fn run(cli: &Cli) -> Result<Option<String>> {
    match &cli.command {
        Command::Train(a) => cmd_train(a).map(Some),
        Command::Audit(a) => cmd_audit(a).map(Some),
        Command::Aggregate(a) => cmd_aggregate(a).map(Some),
        Command::Serve(a) => cmd_serve(a).map(|_| None),
    }
}

//! Command-line entry point.
//!
//! Exit codes: 0 success, 2 usage or configuration error (including corpora
//! that cannot be balanced), 3 joint training failed (every restart
//! degenerate), 4 I/O error, 5 malformed input file.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use modlens_core::eval::evaluate_model;
use modlens_core::models::{train_classifier, ClassifierModel};
use modlens_core::rationale::{train_joint, RationaleModel, RunStatus};
use modlens_core::text::{generate_synthetic_corpus, split_corpus, Comment, CorpusSplit};
use serde_json::json;

use crate::checkpoint::{load_classifier, load_rationale, save_classifier, save_rationale};
use crate::config::{self, Layers, Resolved, RunConfig};
use crate::corpus::{read_corpus, write_corpus, write_jsonl};
use crate::error::{Error, Result};
use crate::report::write_report;
use crate::scorer::Scorer;
use crate::service::{router, system_clock, AppState};
use crate::store::Store;

#[derive(Debug, Parser)]
#[command(name = "modlens", about = "Flag inappropriate comments and highlight the words responsible", disable_version_flag = true)]
pub struct Cli {
    /// TOML (or .json) configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set joint.epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Print the resolved configuration with the source of every value, then exit.
    #[arg(long, global = true)]
    pub config_dump: bool,
    /// Print name and version as JSON, then exit.
    #[arg(long)]
    pub version: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted-token corpus with gold rationales.
    Synth(SynthArgs),
    /// Train the comment classifier.
    TrainClassifier(TrainClassifierArgs),
    /// Train the rationale generator against a trained classifier's embeddings.
    TrainRationale(TrainRationaleArgs),
    /// Write accuracy, AUC, AP, the ROC curve and rationale precision series.
    Evaluate(EvaluateArgs),
    /// Read comments from standard input, write probabilities and spans as JSON lines.
    Highlight(HighlightArgs),
    /// Run the moderation service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub comments: Option<usize>,
    /// Size of the toxic vocabulary.
    #[arg(long)]
    pub toxic: Option<usize>,
    #[arg(long)]
    pub obfuscation: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainClassifierArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Training log (JSON lines).
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainRationaleArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Classifier checkpoint supplying the embeddings and the data split.
    #[arg(long)]
    pub classifier: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lambda_sparsity: Option<f64>,
    #[arg(long)]
    pub lambda_coherence: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub classifier: PathBuf,
    /// Rationale checkpoint, optionally named: `NAME=PATH`. Repeatable.
    #[arg(long)]
    pub rationale: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HighlightArgs {
    #[arg(long)]
    pub classifier: PathBuf,
    #[arg(long)]
    pub rationale: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long)]
    pub rationale: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub listen: Option<String>,
}

fn push<T: ToString>(flags: &mut Vec<(String, String)>, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        flags.push((key.to_string(), v.to_string()));
    }
}

fn quoted(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| serde_json::to_string(&p.to_string_lossy()).expect("string serializes"))
}

/// Config keys set by command-specific flags, after the generic `--set` ones.
fn flag_layer(cli: &Cli) -> Result<Vec<(String, String)>> {
    let mut flags = Vec::new();
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        flags.push((k.trim().to_string(), v.trim().to_string()));
    }
    match &cli.command {
        Some(Command::Synth(a)) => {
            push(&mut flags, "synth.comments", &a.comments);
            push(&mut flags, "synth.toxic_tokens", &a.toxic);
            push(&mut flags, "synth.obfuscation_rate", &a.obfuscation);
            push(&mut flags, "seed", &a.seed);
        }
        Some(Command::TrainClassifier(a)) => {
            push(&mut flags, "classifier_training.epochs", &a.epochs);
            push(&mut flags, "seed", &a.seed);
        }
        Some(Command::TrainRationale(a)) => {
            push(&mut flags, "joint.epochs", &a.epochs);
            push(&mut flags, "joint.lambda_sparsity", &a.lambda_sparsity);
            push(&mut flags, "joint.lambda_coherence", &a.lambda_coherence);
            push(&mut flags, "seed", &a.seed);
        }
        Some(Command::Serve(a)) => {
            push(&mut flags, "serve.classifier", &quoted(&a.classifier));
            push(&mut flags, "serve.rationale", &quoted(&a.rationale));
            push(&mut flags, "serve.data_dir", &quoted(&a.data_dir));
            push(&mut flags, "serve.listen", &a.listen.as_ref().map(|l| serde_json::to_string(l).expect("string")));
        }
        _ => {}
    }
    Ok(flags)
}

/// Parses `args` and runs the command, writing to `stdout`. Returns the exit code.
pub fn main_with(args: impl IntoIterator<Item = OsString>, env: Vec<(String, String)>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    match run(cli, env, &mut stdin.lock(), &mut stdout.lock()) {
        Ok(()) => crate::error::exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, env: Vec<(String, String)>, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    let io = |e| Error::io("<stdout>", e);
    if cli.version {
        writeln!(out, "{}", json!({ "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") })).map_err(io)?;
        return Ok(());
    }
    let layers = Layers { env, file: cli.config.clone(), flags: flag_layer(&cli)? };
    let resolved = config::resolve(&layers)?;
    if cli.config_dump {
        let dump = json!({ "config": resolved.config, "provenance": resolved.provenance });
        writeln!(out, "{}", serde_json::to_string_pretty(&dump).expect("dump serializes")).map_err(io)?;
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Error::Config("no command given (see --help)".into()));
    };
    match command {
        Command::Synth(a) => synth(&resolved, &a),
        Command::TrainClassifier(a) => train_classifier_cmd(&resolved, &a, out),
        Command::TrainRationale(a) => train_rationale_cmd(&resolved, &a, out),
        Command::Evaluate(a) => evaluate_cmd(&resolved, &a, out),
        Command::Highlight(a) => highlight(&a, input, out),
        Command::Serve(_) => serve(&resolved.config),
    }
}

fn synth(resolved: &Resolved, a: &SynthArgs) -> Result<()> {
    let corpus = generate_synthetic_corpus(&resolved.config.synth)?;
    write_corpus(&a.out, &corpus.comments)
}

fn split(comments: &[Comment], run: &RunConfig) -> Result<CorpusSplit> {
    Ok(split_corpus(comments, run.split.validation, run.split.test, run.seed)?)
}

/// The split a classifier was trained on, from its embedded run configuration.
fn classifier_split(corpus: &[Comment], path: &Path) -> Result<(ClassifierModel, RunConfig, CorpusSplit)> {
    let (model, header) = load_classifier(path)?;
    let run = config::from_json(&header.run)?;
    let s = split(corpus, &run)?;
    Ok((model, run, s))
}

fn train_classifier_cmd(resolved: &Resolved, a: &TrainClassifierArgs, out: &mut dyn Write) -> Result<()> {
    let run = &resolved.config;
    let corpus = read_corpus(&a.corpus)?;
    let s = split(&corpus, run)?;
    let (model, log) = train_classifier(run.classifier, &s.train, &s.validation, &run.classifier_training)?;
    save_classifier(&a.out, &model, run)?;
    if let Some(path) = &a.log {
        let mut records = vec![json!({ "record": "run", "config": run })];
        records.extend(log.epochs.iter().map(|e| json!({ "record": "epoch", "epoch": e })));
        records.push(json!({ "record": "summary", "best_epoch": log.best_epoch }));
        write_jsonl(path, records)?;
    }
    let best = &log.epochs[log.best_epoch];
    writeln!(out, "{}", json!({ "best_epoch": log.best_epoch, "val_loss": best.val_loss, "val_accuracy": best.val_accuracy }))
        .map_err(|e| Error::io("<stdout>", e))
}

fn train_rationale_cmd(resolved: &Resolved, a: &TrainRationaleArgs, out: &mut dyn Write) -> Result<()> {
    let run = &resolved.config;
    let corpus = read_corpus(&a.corpus)?;
    let (classifier, _, s) = classifier_split(&corpus, &a.classifier)?;
    let outcome = train_joint(&s.train, &s.validation, classifier.table(), &classifier.config.embedding, &run.joint)?;
    if let Some(path) = &a.log {
        let mut records = vec![json!({ "record": "run", "config": run })];
        records.extend(outcome.run.records().map(|r| json!({ "record": "check", "check": r })));
        records.push(json!({
            "record": "summary",
            "status": outcome.run.status,
            "restarts": outcome.run.restarts,
            "best_val_loss": outcome.run.best_val_loss,
        }));
        write_jsonl(path, records)?;
    }
    writeln!(
        out,
        "{}",
        json!({ "status": outcome.run.status, "restarts": outcome.run.restarts, "best_val_loss": outcome.run.best_val_loss })
    )
    .map_err(|e| Error::io("<stdout>", e))?;
    match (outcome.run.status, outcome.model) {
        (RunStatus::Converged, Some(model)) => save_rationale(&a.out, &model, run),
        _ => Err(Error::Training(format!("all {} attempts degenerated", outcome.run.attempts.len()))),
    }
}

fn evaluate_cmd(resolved: &Resolved, a: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = read_corpus(&a.corpus)?;
    let (classifier, _, s) = classifier_split(&corpus, &a.classifier)?;
    let mut models: Vec<(String, RationaleModel)> = Vec::new();
    for spec in &a.rationale {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => (spec.clone(), PathBuf::from(spec)),
        };
        let (model, _) = load_rationale(&path, classifier.config.embedding.dim)?;
        models.push((name, model));
    }
    let named: Vec<(String, &RationaleModel)> = models.iter().map(|(n, m)| (n.clone(), m)).collect();
    let highlights = highlight_set(&s.test);
    let report = evaluate_model(&classifier, &named, &s.test, &highlights)?;
    write_report(&a.out, &report, &resolved.config)?;
    let c = &report.classification;
    writeln!(out, "{}", json!({ "accuracy": c.accuracy, "auc": c.auc, "average_precision": c.average_precision }))
        .map_err(|e| Error::io("<stdout>", e))
}

/// Test comments whose gold rationale marks at least one word.
pub fn highlight_set(test: &[Comment]) -> Vec<Comment> {
    test.iter().filter(|c| c.gold_spans.as_ref().is_some_and(|g| !g.is_empty())).cloned().collect()
}

fn highlight(a: &HighlightArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    let scorer = Scorer::load(&a.classifier, &a.rationale)?;
    let io = |e| Error::io("<stdout>", e);
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<stdin>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        // A JSON object with `text` (and optionally `id`), or plain text.
        let parsed: Option<serde_json::Value> = line.trim_start().starts_with('{').then(|| serde_json::from_str(&line).ok()).flatten();
        let (id, text) = match &parsed {
            Some(v) => {
                let text = v["text"].as_str().ok_or_else(|| Error::Malformed {
                    path: "<stdin>".into(),
                    line: i + 1,
                    message: "JSON input needs a string `text`".into(),
                })?;
                (v.get("id").cloned().unwrap_or(json!(i + 1)), text.to_string())
            }
            None => (json!(i + 1), line.clone()),
        };
        let record = match scorer.score(&text) {
            Ok(s) => json!({ "id": id, "probability": s.probability, "tokens": s.tokens, "spans": s.spans }),
            Err(e) => json!({ "id": id, "error": e.to_string() }),
        };
        writeln!(out, "{record}").map_err(io)?;
    }
    Ok(())
}

fn serve(run: &RunConfig) -> Result<()> {
    let sc = &run.serve;
    let scorer = match (&sc.classifier, &sc.rationale) {
        (Some(c), Some(r)) => Some(Arc::new(Scorer::load(c, r)?)),
        (None, None) => None,
        _ => return Err(Error::Config("serve needs both a classifier and a rationale checkpoint, or neither".into())),
    };
    let store = Store::open(&sc.data_dir, sc.snapshot_every).map_err(|e| Error::bad_file(&sc.data_dir, e.to_string()))?;
    let state = AppState::new(store, scorer, system_clock());
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("<runtime>", e))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&sc.listen).await.map_err(|e| Error::io(&sc.listen, e))?;
        eprintln!("listening on {}", listener.local_addr().map_err(|e| Error::io(&sc.listen, e))?);
        axum::serve(listener, router(state.clone()))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| Error::io(&sc.listen, e))
    })?;
    let mut store = state.store.write().map_err(|_| Error::Config("store lock poisoned".into()))?;
    store.snapshot().map_err(|e| Error::bad_file(&sc.data_dir, e.to_string()))
}

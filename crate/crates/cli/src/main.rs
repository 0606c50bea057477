//! `coft` command-line driver.
//!
//! Exit codes:
//! * 0 success
//! * 2 usage or configuration error, missing or malformed input files
//! * 3 training failure
//! * 4 a collaborative filter produced an empty clean set

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use coft::config::{Mode, RunConfig};
use coft::data::{generate_synthetic, ingest_templates, load_dataset, load_ground_truth, truth_path, EmbeddingDataset};
use coft::diagnostics::{gradient_suite, SuiteOptions};
use coft::eval::{evaluate_parts, prediction_accuracy};
use coft::labels::{zero_shot_labels, PseudoLabelSet};
use coft::pipeline::{dataset_provider, restore_run, run_pipeline, zero_shot_text, EpochRecord, PipelineObserver};
use coft::train::{FilterOutcome, ModelId};
use coft::{Error, FrozenProvider, Vector};

const CONFIG_FILE: &str = "config.toml";
const METRICS_FILE: &str = "metrics.jsonl";
const LABELS_DIR: &str = "labels";
const CHECKPOINT_DIR: &str = "checkpoints";
const SEED_ENV: &str = "COFT_SEED";

#[derive(Parser)]
#[command(name = "coft", version, about = "Collaborative fine-tuning over frozen embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic clustered embedding dataset.
    Synth(SynthArgs),
    /// Run the full pipeline and write checkpoints, metrics and label exports.
    Run(RunArgs),
    /// Report accuracies against the ground-truth sidecar.
    Eval(EvalArgs),
    /// Verify every analytic gradient against finite differences.
    CheckGrads(CheckGradsArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.6)]
    alignment: f64,
    #[arg(long, default_value_t = 0.4)]
    sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    separation: f64,
    /// Use mutually orthogonal cluster centers (requires dim >= classes).
    #[arg(long)]
    orthogonal: bool,
    #[arg(long, default_value = "synthetic")]
    name: String,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Dataset manifest.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Dotted-key TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Prompt templates, one per line.
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` configuration override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory of a previous `run`; without it only zero-shot accuracy is reported.
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Also write the label exports, with ground truth attached, into this directory.
    #[arg(long, value_name = "DIR")]
    with_truth: Option<PathBuf>,
}

#[derive(Args)]
struct CheckGradsArgs {
    #[arg(long, default_value_t = 20)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::EmptyCleanSet { .. } => 4,
            Error::Config(_)
            | Error::Lookup(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Format(_)
            | Error::Integrity(_) => 2,
            _ => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => synth(args),
        Command::Run(args) => run(args),
        Command::Eval(args) => eval(args),
        Command::CheckGrads(args) => check_grads(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn emit(value: &Value) {
    println!("{value}");
}

fn synth(args: SynthArgs) -> CliResult<u8> {
    let spec = coft::data::SyntheticSpec {
        name: args.name,
        classes: args.classes,
        per_class: args.per_class,
        dim: args.dim,
        separation: args.separation,
        sigma: args.sigma,
        alignment: args.alignment,
        orthogonal: args.orthogonal,
        seed: args.seed,
    };
    let data = generate_synthetic(&spec)?;
    let path = data.dataset.save_with_truth(&args.out, &data.truth)?;
    emit(&json!({
        "manifest": path,
        "checksum": format!("{:016x}", data.dataset.manifest().checksum),
        "samples": data.dataset.manifest().num_samples,
        "classes": data.dataset.manifest().num_classes,
        "dim": data.dataset.manifest().dim,
    }));
    Ok(0)
}

fn parse_override(raw: &str) -> CliResult<(String, String)> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
        .ok_or_else(|| usage(format!("override `{raw}` is not KEY=VALUE")))
}

/// Seed precedence: flag, then config file, then the environment, then the default.
fn resolve_config(args: &RunArgs) -> CliResult<RunConfig> {
    let text = match &args.config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?,
        None => String::new(),
    };
    let file_has_seed = text
        .parse::<toml::Table>()
        .map(|t| t.contains_key("seed"))
        .unwrap_or(false);
    let mut overrides = Vec::new();
    if !file_has_seed {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            let seed: u64 = raw
                .trim()
                .parse()
                .map_err(|_| usage(format!("{SEED_ENV}=`{raw}` is not an unsigned integer")))?;
            overrides.push(("seed".to_owned(), seed.to_string()));
        }
    }
    for raw in &args.overrides {
        overrides.push(parse_override(raw)?);
    }
    if let Some(seed) = args.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(mode) = &args.mode {
        let mode: Mode = mode.parse()?;
        overrides.push(("mode".into(), format!("\"{}\"", mode.as_str())));
    }
    if let Some(rounds) = args.rounds {
        overrides.push(("iteration.rounds".into(), rounds.to_string()));
    }
    if let Some(gamma) = args.gamma {
        overrides.push(("phase2.gamma".into(), format!("{gamma:?}")));
    }
    let quoted = |p: &Path| format!("{:?}", p.to_string_lossy());
    if let Some(p) = &args.dataset {
        overrides.push(("paths.dataset".into(), quoted(p)));
    }
    if let Some(p) = &args.templates {
        overrides.push(("paths.templates".into(), quoted(p)));
    }
    if let Some(p) = &args.out {
        overrides.push(("paths.out".into(), quoted(p)));
    }
    Ok(RunConfig::from_toml(&text, &overrides)?)
}

fn open_dataset(path: &Path) -> CliResult<EmbeddingDataset> {
    if !path.exists() {
        return Err(usage(format!("dataset manifest {} does not exist", path.display())));
    }
    Ok(load_dataset(path)?)
}

fn text_embeddings(provider: &FrozenProvider, templates: Option<&Path>) -> CliResult<Vec<Vector>> {
    match templates {
        Some(path) => {
            let set = ingest_templates(path, provider)?;
            Ok(zero_shot_text(provider, Some(&set.anchors)))
        }
        None => Ok(zero_shot_text(provider, None)),
    }
}

struct RunWriter {
    metrics: BufWriter<File>,
    labels: PathBuf,
    error: Option<Error>,
}

impl RunWriter {
    fn write(&mut self, value: Value) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = writeln!(self.metrics, "{value}") {
            self.error = Some(e.into());
        }
    }
}

impl PipelineObserver for RunWriter {
    fn on_stage(&mut self, stage: &str) {
        log::info!("stage {stage}");
        self.write(json!({ "event": "stage", "stage": stage }));
    }

    fn on_labels(&mut self, name: &str, labels: &PseudoLabelSet) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = labels.write_jsonl(&self.labels.join(format!("{name}.jsonl")), None) {
            self.error = Some(e);
        }
    }

    fn on_epoch(&mut self, record: &EpochRecord<'_>) {
        match serde_json::to_value(record) {
            Ok(mut v) => {
                v["event"] = json!("epoch");
                self.write(v);
            }
            Err(e) => self.error = Some(e.into()),
        }
    }
}

fn run(args: RunArgs) -> CliResult<u8> {
    let config = resolve_config(&args)?;
    let dataset_path = config
        .paths
        .dataset
        .clone()
        .ok_or_else(|| usage("no dataset given; pass --dataset or set paths.dataset"))?;
    let out = config.paths.out.clone().unwrap_or_else(|| PathBuf::from("run"));
    let dataset = open_dataset(&dataset_path)?;
    let provider: FrozenProvider = dataset_provider(&dataset, &config)?;
    let text = text_embeddings(&provider, config.paths.templates.as_deref())?;

    let labels = out.join(LABELS_DIR);
    fs::create_dir_all(&labels).map_err(Error::from)?;
    fs::write(out.join(CONFIG_FILE), config.to_dotted()?).map_err(Error::from)?;
    let mut writer = RunWriter {
        metrics: BufWriter::new(File::create(out.join(METRICS_FILE)).map_err(Error::from)?),
        labels,
        error: None,
    };
    let outcome = run_pipeline(&config, &provider, &text, &mut writer);
    writer.metrics.flush().map_err(Error::from)?;
    if let Some(e) = writer.error.take() {
        return Err(e.into());
    }
    let outcome = outcome?;
    let checkpoints = out.join(CHECKPOINT_DIR);
    for (stem, checkpoint) in outcome.checkpoints() {
        checkpoint.save(&checkpoints, stem)?;
    }
    emit(&json!({
        "event": "done",
        "out": out,
        "mode": config.mode.as_str(),
        "seed": config.seed,
        "clean_sizes": [outcome.filters[0].clean().len(), outcome.filters[1].clean().len()],
    }));
    Ok(0)
}

fn read_run_config(run_dir: &Path) -> CliResult<RunConfig> {
    let path = run_dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(RunConfig::from_toml(&text, &[])?)
}

fn read_filter(run_dir: &Path, generator: ModelId) -> CliResult<FilterOutcome> {
    let validator = generator.other();
    let path = run_dir
        .join(LABELS_DIR)
        .join(format!("filter-{generator}-{validator}.jsonl"));
    let (labels, _) = PseudoLabelSet::read_jsonl(&path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(FilterOutcome {
        generator,
        validator,
        labels,
    })
}

fn eval(args: EvalArgs) -> CliResult<u8> {
    let dataset = open_dataset(&args.dataset)?;
    let truth = load_ground_truth(&args.dataset).map_err(|e| {
        usage(format!(
            "evaluation needs the ground-truth sidecar {}: {e}",
            truth_path(&args.dataset).display()
        ))
    })?;
    let config = match (&args.run_dir, &args.config) {
        (Some(dir), _) => read_run_config(dir)?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            RunConfig::from_toml(&text, &[])?
        }
        (None, None) => RunConfig::default(),
    };
    let templates = args.templates.clone().or_else(|| config.paths.templates.clone());
    let provider: FrozenProvider = dataset_provider(&dataset, &config)?;
    let text = text_embeddings(&provider, templates.as_deref())?;
    let ids = provider.sample_ids();
    let zero_shot = zero_shot_labels(&provider, &ids, config.selection.tau, &text)?;

    if let Some(dir) = &args.with_truth {
        fs::create_dir_all(dir).map_err(Error::from)?;
        zero_shot.write_jsonl(&dir.join("zero-shot.jsonl"), Some(&truth))?;
    }
    let Some(run_dir) = args.run_dir else {
        emit(&json!({ "metric": "zero_shot_accuracy", "value": zero_shot.accuracy(&truth) }));
        return Ok(0);
    };
    let restored = restore_run(&run_dir.join(CHECKPOINT_DIR), &config, &provider)?;
    let filters = [read_filter(&run_dir, ModelId::Model1)?, read_filter(&run_dir, ModelId::Model2)?];
    let report = evaluate_parts(&zero_shot, &filters, &restored.students, &provider, &truth)?;
    if let Some(dir) = &args.with_truth {
        for f in &filters {
            let name = format!("filter-{}-{}.jsonl", f.generator, f.validator);
            f.labels.write_jsonl(&dir.join(name), Some(&truth))?;
        }
    }
    emit(&json!({ "metric": "zero_shot_accuracy", "value": report.zero_shot_accuracy }));
    for (model, f) in restored.models.iter().zip(&filters) {
        let generated = model.generate(&provider, &ids)?;
        let preds: Vec<usize> = generated.iter().map(|r| r.label).collect();
        let value = prediction_accuracy(&preds, &ids, &truth);
        emit(&json!({ "metric": "model_accuracy", "model": f.generator.as_str(), "value": value }));
    }
    for c in &report.clean {
        emit(&json!({
            "metric": "clean_set",
            "direction": c.direction,
            "size": c.size,
            "precision": c.precision,
            "recall": c.recall,
            "candidate_accuracy": c.candidate_accuracy,
        }));
    }
    for (i, acc) in report.student_accuracy.iter().enumerate() {
        emit(&json!({ "metric": "student_accuracy", "student": format!("student{}", i + 1), "value": acc }));
    }
    emit(&json!({ "metric": "ensemble_accuracy", "value": report.ensemble_accuracy }));
    Ok(0)
}

fn check_grads(args: CheckGradsArgs) -> CliResult<u8> {
    let opts = SuiteOptions {
        instances: args.instances,
        eps: args.eps,
        tol: args.tol,
        seed: args.seed,
    };
    let start = std::time::Instant::now();
    let checks = gradient_suite(&opts)?;
    let mut ok = true;
    for c in &checks {
        ok &= c.passed();
        let mut v = serde_json::to_value(c).map_err(Error::from)?;
        v["passed"] = json!(c.passed());
        emit(&v);
    }
    emit(&json!({ "event": "done", "passed": ok, "seconds": start.elapsed().as_secs_f64() }));
    Ok(if ok { 0 } else { 3 })
}

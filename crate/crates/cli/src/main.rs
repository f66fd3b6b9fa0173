use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use spankey::candgen::{corpus_stats, labeled_candidates};
use spankey::corpus::{load_corpus_with, LoadOptions};
use spankey::eval::{self, read_predictions, score_predictions, write_predictions, EvalOptions};
use spankey::model::{load_word_vectors, toy_document, Head, ModelConfig, Vocab};
use spankey::tensor::gradcheck::{GradCheckConfig, GradCheckReport};
use spankey::train::{self, grid_search_margin, write_log, ObjectiveKind, TrainInputs};
use spankey::{Checkpoint, Corpus, Error, FeatureStore, Objective, SkeModel, TrainConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

/// Span-based keyphrase extraction.
#[derive(Parser)]
#[command(name = "spankey", version)]
struct Cli {
    /// Print JSON on stdout instead of the text report.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Candidate and keyphrase statistics of a corpus.
    Stats(StatsArgs),
    /// Train a model and write the best checkpoint.
    Train(TrainArgs),
    /// Train once per ranking margin and keep the best.
    Gridsearch(GridArgs),
    /// Write top-k predictions per document.
    Extract(ExtractArgs),
    /// Micro P/R/F1@k against gold keyphrases.
    Evaluate(EvaluateArgs),
    /// Finite-difference check of the full model gradient.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Truncate documents to this many tokens.
    #[arg(long)]
    max_doc_len: Option<usize>,
}

impl CorpusArgs {
    fn load(&self, fallback_len: usize) -> spankey::Result<Corpus> {
        load(&self.corpus, self.max_doc_len.unwrap_or(fallback_len))
    }
}

fn load(path: &Path, max_doc_len: usize) -> spankey::Result<Corpus> {
    load_corpus_with(path, LoadOptions { max_doc_len })
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value_t = spankey::candgen::DEFAULT_MAX_PHRASE_LEN)]
    max_phrase_len: usize,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML file of flat training keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// key=value override, repeatable; applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_phrase_len: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> spankey::Result<TrainConfig> {
        let base = match &self.config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::default(),
        };
        let mut cfg = base.with_overrides(&self.overrides)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.max_phrase_len {
            cfg.max_phrase_len = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct InputArgs {
    /// Precomputed token-feature file.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Word-vector text file used to initialize the embedding table.
    #[arg(long)]
    word_vectors: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    val_corpus: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    inputs: InputArgs,
    /// Output checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Epoch log (JSON lines); defaults to <checkpoint>.log.jsonl.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    val_corpus: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    inputs: InputArgs,
    /// Comma-separated margins in [0, 1].
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3, 0.5, 0.7, 0.9])]
    margins: Vec<f64>,
    /// Checkpoint of the best run.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory for best.toml and per-run logs.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Cut-offs to report; repeatable.
    #[arg(long = "k", default_values_t = eval::DEFAULT_KS)]
    ks: Vec<usize>,
    #[arg(long)]
    no_dedupe: bool,
    /// Defaults to the value stored in the checkpoint.
    #[arg(long)]
    max_phrase_len: Option<usize>,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    predict: PredictArgs,
    /// Predictions file (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    predict: PredictArgs,
    /// Score an existing predictions file instead of running a checkpoint.
    #[arg(long, conflicts_with = "checkpoint")]
    predictions: Option<PathBuf>,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Check on the first trainable document of this corpus instead of the
    /// built-in toy document.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    /// Coordinates sampled per parameter tensor; all when absent.
    #[arg(long)]
    max_coords: Option<usize>,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Smallest denominator of the relative error.
    #[arg(long, default_value_t = GradCheckConfig::default().denom_floor)]
    denom_floor: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(Error::Config(_)) => EXIT_USAGE,
        Some(Error::NonFinite(_) | Error::Nondeterministic { .. }) => EXIT_NUMERIC,
        Some(_) => EXIT_DATA,
        None => EXIT_USAGE,
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let json = cli.json;
    match cli.command {
        Command::Stats(a) => stats(a, json),
        Command::Train(a) => train_cmd(a, json),
        Command::Gridsearch(a) => gridsearch(a, json),
        Command::Extract(a) => extract(a, json),
        Command::Evaluate(a) => evaluate(a, json),
        Command::Gradcheck(a) => gradcheck(a, json),
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit<T: Serialize>(json: bool, value: &T, text: &str) -> anyhow::Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        print!("{text}");
    }
    Ok(())
}

fn stats(a: StatsArgs, json: bool) -> anyhow::Result<ExitCode> {
    let corpus = a.corpus.load(spankey::corpus::DEFAULT_MAX_DOC_LEN)?;
    let s = corpus_stats(&corpus, a.max_phrase_len)?;
    if let Some(out) = &a.out {
        write_json(&s, out)?;
    }
    emit(json, &s, &s.render_table(&corpus.name))?;
    Ok(ExitCode::SUCCESS)
}

type WordVectors = std::collections::HashMap<String, Vec<f64>>;

fn load_inputs(
    a: &InputArgs,
    cfg: &TrainConfig,
) -> anyhow::Result<(Option<FeatureStore>, Option<WordVectors>)> {
    let features = a.features.as_ref().map(FeatureStore::read).transpose()?;
    let vectors = a
        .word_vectors
        .as_ref()
        .map(|p| load_word_vectors(p, cfg.d))
        .transpose()?;
    Ok((features, vectors))
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    checkpoint: &'a Path,
    log: &'a Path,
    kept: usize,
    dropped: usize,
    best_epoch: usize,
    val_metric: f64,
    selection_metric: train::SelectionMetric,
}

fn train_cmd(a: TrainArgs, json: bool) -> anyhow::Result<ExitCode> {
    let cfg = a.config.resolve()?;
    let corpus = load(&a.corpus, cfg.max_doc_len)?;
    let val = a
        .val_corpus
        .as_ref()
        .map(|p| load(p, cfg.max_doc_len))
        .transpose()?;
    let (features, vectors) = load_inputs(&a.inputs, &cfg)?;
    let inputs = TrainInputs {
        features: features.as_ref(),
        word_vectors: vectors.as_ref(),
    };
    let outcome = train::train(&corpus, val.as_ref(), &cfg, inputs)?;
    outcome.checkpoint.save(&a.checkpoint)?;
    let log_path = a
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.log.jsonl", a.checkpoint.display())));
    write_log(&outcome.log, &log_path)?;
    let summary = TrainSummary {
        checkpoint: &a.checkpoint,
        log: &log_path,
        kept: outcome.kept,
        dropped: outcome.dropped,
        best_epoch: outcome.checkpoint.epoch,
        val_metric: outcome.checkpoint.val_metric,
        selection_metric: cfg.selection_metric,
    };
    let text = format!(
        "trained on {} documents ({} dropped without a matchable keyphrase)\nbest epoch {} with F1@{} = {:.4}\ncheckpoint {}\nlog {}\n",
        summary.kept,
        summary.dropped,
        summary.best_epoch,
        cfg.selection_metric.k(),
        summary.val_metric,
        a.checkpoint.display(),
        log_path.display()
    );
    emit(json, &summary, &text)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct GridSummary {
    best_margin: f64,
    best_metric: f64,
    runs: Vec<GridRunSummary>,
}

#[derive(Serialize)]
struct GridRunSummary {
    margin: f64,
    metric: f64,
    best_epoch: usize,
    log: PathBuf,
}

fn gridsearch(a: GridArgs, json: bool) -> anyhow::Result<ExitCode> {
    let mut cfg = a.config.resolve()?;
    if cfg.objective != ObjectiveKind::Ranking {
        eprintln!("note: margin search trains with objective = ranking");
        cfg.objective = ObjectiveKind::Ranking;
    }
    let corpus = load(&a.corpus, cfg.max_doc_len)?;
    let val = a
        .val_corpus
        .as_ref()
        .map(|p| load(p, cfg.max_doc_len))
        .transpose()?;
    let (features, vectors) = load_inputs(&a.inputs, &cfg)?;
    let inputs = TrainInputs {
        features: features.as_ref(),
        word_vectors: vectors.as_ref(),
    };
    let out = grid_search_margin(&corpus, val.as_ref(), &cfg, &a.margins, inputs)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    fs::write(a.out.join("best.toml"), out.best.to_toml())?;
    out.checkpoint.save(&a.checkpoint)?;
    let mut runs = Vec::new();
    for r in &out.runs {
        let log = a.out.join(format!("margin_{}.log.jsonl", r.margin));
        write_log(&r.log, &log)?;
        runs.push(GridRunSummary {
            margin: r.margin,
            metric: r.metric,
            best_epoch: r.epoch,
            log,
        });
    }
    let summary = GridSummary {
        best_margin: out.best.margin,
        best_metric: out.checkpoint.val_metric,
        runs,
    };
    write_json(&summary, &a.out.join("gridsearch.json"))?;
    let mut text = String::from("margin    metric  best_epoch\n");
    for r in &summary.runs {
        text.push_str(&format!(
            "{:<8}  {:.4}  {}\n",
            r.margin, r.metric, r.best_epoch
        ));
    }
    text.push_str(&format!("best margin {}\n", summary.best_margin));
    emit(json, &summary, &text)?;
    Ok(ExitCode::SUCCESS)
}

fn eval_options(p: &PredictArgs, model_max_phrase_len: usize) -> EvalOptions {
    EvalOptions {
        ks: p.ks.clone(),
        dedupe: !p.no_dedupe,
        max_phrase_len: p.max_phrase_len.unwrap_or(model_max_phrase_len),
        ..EvalOptions::default()
    }
}

fn load_model(p: &PredictArgs) -> anyhow::Result<(Checkpoint, Option<FeatureStore>)> {
    let Some(path) = &p.checkpoint else {
        bail!(Error::Config("--checkpoint is required".into()));
    };
    let ckpt = Checkpoint::load(path)?;
    let features = p.features.as_ref().map(FeatureStore::read).transpose()?;
    Ok((ckpt, features))
}

fn extract(a: ExtractArgs, json: bool) -> anyhow::Result<ExitCode> {
    let (ckpt, features) = load_model(&a.predict)?;
    let corpus = a.corpus.load(ckpt.train.max_doc_len)?;
    let opts = eval_options(&a.predict, ckpt.model.config.max_phrase_len);
    let preds = eval::extract(&ckpt.model, &corpus, &opts, features.as_ref())?;
    write_predictions(&preds, &a.out)?;
    let summary = serde_json::json!({ "documents": preds.len(), "out": a.out });
    emit(
        json,
        &summary,
        &format!(
            "wrote predictions for {} documents to {}\n",
            preds.len(),
            a.out.display()
        ),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn evaluate(a: EvaluateArgs, json: bool) -> anyhow::Result<ExitCode> {
    let (report, method) = match &a.predictions {
        Some(p) => {
            let corpus = a.corpus.load(spankey::corpus::DEFAULT_MAX_DOC_LEN)?;
            let opts = eval_options(&a.predict, spankey::candgen::DEFAULT_MAX_PHRASE_LEN);
            (
                score_predictions(&corpus, &read_predictions(p)?, &opts)?,
                p.display().to_string(),
            )
        }
        None => {
            let (ckpt, features) = load_model(&a.predict)?;
            let corpus = a.corpus.load(ckpt.train.max_doc_len)?;
            let opts = eval_options(&a.predict, ckpt.model.config.max_phrase_len);
            let method = match ckpt.model.config.head {
                Head::Classification => "span-rnn-cls",
                Head::Ranking => "span-rnn-rank",
            };
            (
                eval::evaluate(&ckpt.model, &corpus, &opts, features.as_ref())?,
                method.to_string(),
            )
        }
    };
    if let Some(out) = &a.out {
        write_json(&report, out)?;
    }
    emit(json, &report, &report.render_table(&method))?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct GradcheckRun {
    head: Head,
    objective: ObjectiveKind,
    report: GradCheckReport,
}

fn gradcheck(a: GradcheckArgs, json: bool) -> anyhow::Result<ExitCode> {
    let cfg = a.config.resolve()?;
    let doc = match &a.corpus {
        Some(p) => {
            let corpus = load(p, cfg.max_doc_len)?;
            let (kept, _) = train::filter_trainable(&corpus, cfg.max_phrase_len)?;
            kept.documents
                .into_iter()
                .next()
                .ok_or_else(|| Error::Data("no trainable document in corpus".into()))?
        }
        None => toy_document(),
    };
    let candidates = labeled_candidates(&doc, cfg.max_phrase_len)?;
    let vocab = Vocab::from_corpus(&Corpus {
        name: String::new(),
        documents: vec![doc.clone()],
    });
    let gc = GradCheckConfig {
        epsilon: a.epsilon,
        max_coords_per_param: a.max_coords,
        denom_floor: a.denom_floor,
        seed: cfg.seed,
    };
    let mut runs = Vec::new();
    for head in [Head::Classification, Head::Ranking] {
        for objective in [ObjectiveKind::Classification, ObjectiveKind::Ranking] {
            let model_cfg = ModelConfig {
                head,
                ..cfg.model_config(vocab.len())
            };
            let model = SkeModel::new(model_cfg, vocab.clone(), cfg.seed)?;
            let obj = match objective {
                ObjectiveKind::Classification => Objective::Classification {
                    pos_weight: cfg.pos_weight,
                },
                ObjectiveKind::Ranking => Objective::Ranking { margin: cfg.margin },
            };
            let report = model.check_gradients(&doc, &candidates, obj, None, &gc)?;
            runs.push(GradcheckRun {
                head,
                objective,
                report,
            });
        }
    }
    let worst = runs
        .iter()
        .map(|r| r.report.max_rel_error)
        .fold(0.0, f64::max);
    let mut text = format!(
        "document {:?}: {} tokens, {} candidates\n",
        doc.id,
        doc.len(),
        candidates.len()
    );
    for r in &runs {
        text.push_str(&format!(
            "head {:<14} objective {:<14} max rel error {:.3e} over {} coords (worst {})\n",
            format!("{:?}", r.head),
            format!("{:?}", r.objective),
            r.report.max_rel_error,
            r.report.coords_checked,
            r.report.worst_param.as_deref().unwrap_or("-")
        ));
    }
    let pass = worst < a.tolerance;
    text.push_str(&format!(
        "{} (max {:.3e}, tolerance {:.1e})\n",
        if pass { "PASS" } else { "FAIL" },
        worst,
        a.tolerance
    ));
    let value = serde_json::json!({ "runs": runs, "max_rel_error": worst, "tolerance": a.tolerance, "pass": pass });
    if let Some(out) = &a.out {
        write_json(&value, out)?;
    }
    emit(json, &value, &text)?;
    Ok(if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_NUMERIC)
    })
}

//! Command-line front end. Exit codes: 0 success, 2 config error, 3 data
//! error, 4 numeric failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::augment::{
    apply_augmentation, score_candidates, AugmentPlan, Verdict, DEFAULT_THRESHOLD,
};
use crate::corpus::{
    balance_binary, class_stats, merge, read_dataset, save_csv, stratified_split, Dataset,
    LabelHierarchy, LabelSpace, Task,
};
use crate::ensemble::{
    predict_ensemble, render_search_csv, render_search_text, search_subsets, EnsembleSpec,
    PredictionCache, PredictionMatrix, Registry, Strategy,
};
use crate::error::{Error, Result};
use crate::features::{fit_tfidf, EmbeddingTable, TfidfModel};
use crate::metrics::confusion;
use crate::models::{train_linear, train_nb, AdamWConfig, LossSpec, Model, TrainConfig};
use crate::pipeline::{restrict, run_file, RunOptions, OUTPUT_ENV};
use crate::textnorm::{normalize, substitute_lexical, NormConfig};

#[derive(Debug, Parser)]
#[command(
    name = "edos",
    version,
    about = "Imbalance-aware sexism classification toolkit"
)]
pub struct Cli {
    /// Seed for every randomized step; overrides a config's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Label hierarchy JSON; the canonical 4→11 taxonomy by default.
    #[arg(long, global = true)]
    pub hierarchy: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize the text column of a CSV.
    Normalize(NormalizeArgs),
    /// Merge, balance, split or describe datasets.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Grow a class with similar documents from a candidate pool.
    Augment(AugmentArgs),
    /// Train a model and its featurizer.
    Train(TrainArgs),
    /// Classification report of a model on a labeled CSV.
    Evaluate(EvaluateArgs),
    /// Voting ensembles.
    #[command(subcommand)]
    Ensemble(EnsembleCommand),
    /// Predict labels with one model or a soft/hard ensemble.
    Predict(PredictArgs),
    /// Run a whole experiment config.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// NormConfig JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also apply lexical substitutions.
    #[arg(long)]
    pub substitute: bool,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    Merge {
        #[arg(long, required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    Balance {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "a")]
        task: Task,
        /// Rows from this source are never removed.
        #[arg(long)]
        protected_source: String,
    },
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        task: Task,
        #[arg(long, default_value_t = 0.2)]
        fraction: f64,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        holdout_out: PathBuf,
    },
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        task: Task,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub base: PathBuf,
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub task: Task,
    #[arg(long)]
    pub target_class: String,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Admit only pool rows whose origin label is one of these.
    #[arg(long, num_args = 1..)]
    pub source_classes: Option<Vec<String>>,
    #[arg(long)]
    pub max_k: Option<usize>,
    #[arg(long)]
    pub output: PathBuf,
    /// Per-candidate selection report (id, score, origin label, verdict).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Linear,
    NaiveBayes,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    CrossEntropy,
    WeightedBce,
    Focal,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub task: Task,
    /// Train a fine-stage model over this category's children.
    #[arg(long)]
    pub category: Option<String>,
    #[arg(long, value_enum, default_value = "linear")]
    pub family: FamilyArg,
    #[arg(long, value_enum, default_value = "cross-entropy")]
    pub loss: LossArg,
    /// Positive-class weight for weighted BCE; total / positives when omitted.
    #[arg(long)]
    pub weight: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 1)]
    pub min_df: usize,
    #[arg(long, default_value_t = 1.0)]
    pub smoothing: f64,
    #[arg(long)]
    pub output: PathBuf,
    /// Where the fitted TF-IDF featurizer is written.
    #[arg(long)]
    pub featurizer_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model files, optionally as `id=path`.
    #[arg(long = "model", required = true, num_args = 1..)]
    pub models: Vec<String>,
    /// Featurizer files; each model picks the one it was trained with.
    #[arg(long = "featurizer", required = true, num_args = 1..)]
    pub featurizers: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "soft")]
    pub strategy: StrategyArg,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub confusion: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Soft,
    Hard,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Soft => Strategy::Soft,
            StrategyArg::Hard => Strategy::Hard,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum EnsembleCommand {
    /// Best validation macro-F1 subset for every ensemble size.
    Search {
        #[command(flatten)]
        models: ModelArgs,
        #[arg(long)]
        validation: PathBuf,
        #[arg(long, value_enum, default_value = "soft")]
        strategy: StrategyArg,
        /// Write the ranked table as CSV here as well.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    #[arg(long, value_enum, default_value = "soft")]
    pub strategy: StrategyArg,
    /// Classify this text.
    #[arg(long, conflicts_with = "input")]
    pub text: Option<String>,
    /// Classify every row of this CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Prediction CSV (id, label, probabilities); stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output root; falls back to the environment variable, then `runs`.
    #[arg(long, env = OUTPUT_ENV)]
    pub out: Option<PathBuf>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path.display().to_string(), e)
}

struct Context {
    seed: u64,
    hierarchy: Arc<LabelHierarchy>,
}

impl Context {
    fn read(&self, path: &Path) -> Result<Dataset> {
        read_dataset(path, self.hierarchy.clone())
    }
}

fn load_models(args: &ModelArgs) -> Result<(Registry, Vec<String>)> {
    let featurizers = args
        .featurizers
        .iter()
        .map(|p| TfidfModel::load(p).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;
    let mut registry = Registry::new();
    let mut ids = Vec::new();
    for spec in &args.models {
        let (id, path) = match spec.split_once('=') {
            Some((id, path)) => (id.to_string(), PathBuf::from(path)),
            None => {
                let p = PathBuf::from(spec);
                let stem = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                (stem, p)
            }
        };
        let model = Model::load(&path, &featurizers)?;
        registry.insert(id.clone(), Arc::new(model));
        ids.push(id);
    }
    Ok((registry, ids))
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let hierarchy = Arc::new(match &cli.hierarchy {
        Some(p) => LabelHierarchy::from_json_file(p)?,
        None => LabelHierarchy::canonical(),
    });
    let ctx = Context {
        seed: cli.seed.unwrap_or(0),
        hierarchy,
    };
    let w = |out: &mut dyn Write, s: String| {
        out.write_all(s.as_bytes())
            .map_err(|e| Error::io("stdout", e))
    };
    match cli.command {
        Command::Normalize(a) => {
            let cfg: NormConfig = match &a.config {
                Some(p) => serde_json::from_str(&fs::read_to_string(p).map_err(io_err(p))?)
                    .map_err(|e| Error::config(p.display().to_string(), e.to_string()))?,
                None => NormConfig::default(),
            };
            cfg.validate()?;
            let d = ctx.read(&a.input)?;
            let normalized = d.map_texts(|doc| {
                let t = normalize(&doc.text, &cfg);
                if a.substitute {
                    substitute_lexical(&t, &cfg)
                } else {
                    t
                }
            });
            save_csv(&normalized, &a.output)?;
            w(
                out,
                format!(
                    "normalized {} rows → {}\n",
                    normalized.len(),
                    a.output.display()
                ),
            )
        }
        Command::Dataset(cmd) => match cmd {
            DatasetCommand::Merge { inputs, output } => {
                let parts = inputs
                    .iter()
                    .map(|p| ctx.read(p))
                    .collect::<Result<Vec<_>>>()?;
                let merged = merge(&parts)?;
                save_csv(&merged, &output)?;
                w(
                    out,
                    format!("merged {} rows → {}\n", merged.len(), output.display()),
                )
            }
            DatasetCommand::Balance {
                input,
                output,
                task,
                protected_source,
            } => {
                let balanced =
                    balance_binary(&ctx.read(&input)?, task, &protected_source, ctx.seed)?;
                save_csv(&balanced, &output)?;
                w(out, format!("{}\n", class_stats(&balanced, task)?))
            }
            DatasetCommand::Split {
                input,
                task,
                fraction,
                train_out,
                holdout_out,
            } => {
                let (train, holdout) =
                    stratified_split(&ctx.read(&input)?, task, fraction, ctx.seed)?;
                save_csv(&train, &train_out)?;
                save_csv(&holdout, &holdout_out)?;
                w(
                    out,
                    format!(
                        "train {} rows, holdout {} rows\n",
                        train.len(),
                        holdout.len()
                    ),
                )
            }
            DatasetCommand::Stats { input, task, json } => {
                let stats = class_stats(&ctx.read(&input)?, task)?;
                if json {
                    w(out, serde_json::to_string_pretty(&stats)? + "\n")
                } else {
                    w(out, format!("{stats}\n"))
                }
            }
        },
        Command::Augment(a) => {
            let base = ctx.read(&a.base)?;
            let pool = ctx.read(&a.pool)?.renamed("pool");
            let mut plan = AugmentPlan::from_base(&base, a.task, &a.target_class, pool.clone())
                .with_threshold(a.threshold);
            plan.source_classes = a.source_classes.clone();
            plan.max_k = a.max_k;
            let texts: Vec<&str> = base.texts().into_iter().chain(pool.texts()).collect();
            let space = fit_tfidf(&texts, 1, true)?;
            let embeddings = EmbeddingTable::from_tfidf(
                &space,
                base.documents()
                    .iter()
                    .chain(pool.documents())
                    .map(|d| (d.id.as_str(), d.text.as_str())),
            )?;
            let scores = score_candidates(&plan, &embeddings)?;
            if let Some(path) = &a.report {
                let mut wr = csv::Writer::from_path(path)?;
                wr.write_record(["id", "score", "origin_label", "verdict"])?;
                for s in &scores {
                    wr.write_record([
                        s.id.as_str(),
                        &format!("{:.6}", s.score),
                        s.origin_label.as_deref().unwrap_or(""),
                        &format!("{:?}", s.verdict),
                    ])?;
                }
                wr.flush().map_err(io_err(path))?;
            }
            let augmented = apply_augmentation(&base, &plan, &embeddings)?;
            save_csv(&augmented, &a.output)?;
            let admitted = scores
                .iter()
                .filter(|s| s.verdict == Verdict::Admitted)
                .count();
            w(
                out,
                format!(
                    "admitted {admitted} of {} candidates; {} rows → {}\n",
                    scores.len(),
                    augmented.len(),
                    a.output.display()
                ),
            )
        }
        Command::Train(a) => {
            let space = match &a.category {
                Some(c) => LabelSpace::children_of(&ctx.hierarchy, c)?,
                None => LabelSpace::for_task(&ctx.hierarchy, a.task),
            };
            let train = restrict(&ctx.read(&a.train)?, &space);
            let featurizer = Arc::new(fit_tfidf(&train.texts(), a.min_df, true)?);
            let model = match a.family {
                FamilyArg::NaiveBayes => {
                    Model::NaiveBayes(train_nb(&train, featurizer.clone(), &space, a.smoothing)?)
                }
                FamilyArg::Linear => {
                    let loss = match a.loss {
                        LossArg::CrossEntropy => LossSpec::CrossEntropy,
                        LossArg::Focal => LossSpec::Focal {
                            gamma: a.gamma,
                            alpha: a.alpha,
                        },
                        LossArg::WeightedBce => {
                            let weight = match a.weight {
                                Some(w) => w,
                                None => {
                                    let pos = train
                                        .documents()
                                        .iter()
                                        .filter(|d| space.label_of(d) == Some(1))
                                        .count();
                                    crate::corpus::weight_from_counts(train.len(), pos).ok_or_else(
                                        || {
                                            Error::NoPositives(
                                                space.classes.last().cloned().unwrap_or_default(),
                                            )
                                        },
                                    )?
                                }
                            };
                            LossSpec::WeightedBce { weight }
                        }
                    };
                    let cfg = TrainConfig {
                        loss,
                        epochs: a.epochs,
                        batch_size: a.batch_size,
                        optimizer: AdamWConfig {
                            lr: a.lr,
                            weight_decay: a.weight_decay,
                            ..Default::default()
                        },
                        seed: ctx.seed,
                    };
                    Model::Linear(train_linear(&train, featurizer.clone(), &space, &cfg)?)
                }
            };
            featurizer.save(&a.featurizer_out)?;
            model.save(&a.output)?;
            w(
                out,
                format!(
                    "trained on {} rows, {} features → {}\n",
                    train.len(),
                    featurizer.dim(),
                    a.output.display()
                ),
            )
        }
        Command::Evaluate(a) => {
            let (registry, ids) = load_models(&a.models)?;
            let spec = EnsembleSpec::new(ids, a.strategy.into(), None)?;
            let (_, space) = registry.resolve(spec.members(), None)?;
            let data = restrict(&ctx.read(&a.data)?, &space);
            let golds: Vec<String> = data
                .documents()
                .iter()
                .map(|d| d.label(space.task).unwrap_or_default().to_string())
                .collect();
            let preds = data
                .documents()
                .iter()
                .map(|d| predict_ensemble(&spec, &registry, &d.text).map(|p| p.label))
                .collect::<Result<Vec<_>>>()?;
            let cm = confusion(&golds, &preds, &space.classes)?;
            let report = cm.report()?;
            if let Some(path) = &a.confusion {
                cm.write_csv(fs::File::create(path).map_err(io_err(path))?)?;
            }
            if a.json {
                w(out, report.to_json() + "\n")
            } else {
                w(out, report.to_string())
            }
        }
        Command::Ensemble(EnsembleCommand::Search {
            models,
            validation,
            strategy,
            csv,
        }) => {
            let (registry, ids) = load_models(&models)?;
            let (_, space) = registry.resolve(&ids, None)?;
            let data = restrict(&ctx.read(&validation)?, &space);
            let matrix =
                PredictionMatrix::evaluate(&registry, &ids, &data, &PredictionCache::new())?;
            let rows = search_subsets(&matrix, strategy.into())?;
            if let Some(path) = &csv {
                fs::write(path, render_search_csv(&rows)?).map_err(io_err(path))?;
            }
            let best = crate::pipeline::best_overall(&rows);
            w(
                out,
                format!(
                    "{}\nselected: {}\n",
                    render_search_text(&rows),
                    best.members.join(", ")
                ),
            )
        }
        Command::Predict(a) => {
            let (registry, ids) = load_models(&a.models)?;
            let spec = EnsembleSpec::new(ids, a.strategy.into(), None)?;
            let (_, space) = registry.resolve(spec.members(), None)?;
            let rows: Vec<(String, String)> = match (&a.text, &a.input) {
                (Some(t), _) => vec![("text".into(), t.clone())],
                (None, Some(p)) => ctx
                    .read(p)?
                    .documents()
                    .iter()
                    .map(|d| (d.id.clone(), d.text.clone()))
                    .collect(),
                (None, None) => return Err(Error::config("predict", "give --text or --input")),
            };
            let mut wr = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["id".to_string(), "label".to_string()];
            header.extend(space.classes.iter().map(|c| format!("p({c})")));
            wr.write_record(&header)?;
            for (id, text) in rows {
                let p = predict_ensemble(&spec, &registry, &text)?;
                let mut rec = vec![id, p.label];
                rec.extend(p.probs.values().iter().map(|v| format!("{v:.6}")));
                wr.write_record(&rec)?;
            }
            let bytes = wr
                .into_inner()
                .map_err(|e| Error::io("writing predictions", e.into_error()))?;
            match &a.output {
                Some(path) => fs::write(path, bytes).map_err(io_err(path)),
                None => out.write_all(&bytes).map_err(|e| Error::io("stdout", e)),
            }
        }
        Command::Run(a) => {
            let mut opts = RunOptions::from_env();
            if let Some(root) = a.out {
                opts.output_root = root;
            }
            opts.seed = cli.seed;
            let outcome = run_file(&a.config, &opts)?;
            let mut summary = format!("run directory: {}\n", outcome.dir.display());
            for e in &outcome.manifest.evaluations {
                summary.push_str(&format!(
                    "{:<24} {:<16} macro-F1 {:.4}  accuracy {:.4}\n",
                    e.target, e.dataset, e.macro_f1, e.accuracy
                ));
            }
            w(out, summary)
        }
    }
}

/// Parse arguments, run, report errors on stderr and return the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, &mut std::io::stdout().lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

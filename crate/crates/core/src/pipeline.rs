//! Declarative experiments: build datasets, fit featurizers, train models,
//! search ensembles and evaluate, writing every artifact plus a manifest.
//!
//! Artifacts land in `<output root>/<config fingerprint prefix>/`. Trained
//! models are also cached under `<output root>/cache/models/`, keyed by
//! everything that determines them, so editing only the ensemble or
//! evaluation sections of a config reuses them.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::augment::{
    apply_augmentation, score_candidates, AugmentPlan, Verdict, DEFAULT_THRESHOLD,
};
use crate::corpus::{
    balance_binary, load_csv, merge, read_dataset, stratified_split, weight_from_counts, write_csv,
    ColumnMap, Dataset, LabelHierarchy, LabelSpace, Task,
};
use crate::ensemble::{
    predict_hierarchical, search_subsets, EnsembleSpec, HierarchicalSpec, PredictionCache,
    PredictionMatrix, Registry, Strategy, SubsetScore, MAX_SEARCH_CANDIDATES,
};
use crate::error::{Error, Result};
use crate::features::{fit_tfidf, EmbeddingTable, TfidfModel};
use crate::metrics::{confusion, Report};
use crate::models::{
    train_linear_tracked, train_nb, AdamWConfig, Classifier, LossSpec, Model, TrainConfig,
};
use crate::synth::{generate, SynthSpec};
use crate::textnorm::{normalize, substitute_lexical_seeded, NormConfig};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "EDOS_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Hierarchy JSON file; the canonical taxonomy when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hierarchy: Option<PathBuf>,
    #[serde(default)]
    pub normalization: NormConfig,
    pub datasets: Vec<DatasetStep>,
    pub featurizers: Vec<FeaturizerConfig>,
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub ensembles: Vec<EnsembleConfig>,
    #[serde(default)]
    pub hierarchical: Vec<HierarchicalConfig>,
    #[serde(default)]
    pub evaluate: Vec<EvalTarget>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPart {
    Train,
    Holdout,
}

fn default_task_a() -> Task {
    Task::A
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_min_df() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetStep {
    Load {
        id: String,
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        columns: Option<ColumnMap>,
    },
    Synthetic {
        id: String,
        spec: SynthSpec,
    },
    Merge {
        id: String,
        inputs: Vec<String>,
    },
    Balance {
        id: String,
        input: String,
        #[serde(default = "default_task_a")]
        task: Task,
        protected_source: String,
    },
    Split {
        id: String,
        input: String,
        task: Task,
        fraction: f64,
        part: SplitPart,
    },
    Select {
        id: String,
        input: String,
        task: Task,
        classes: Vec<String>,
    },
    Normalize {
        id: String,
        input: String,
        #[serde(default)]
        substitute: bool,
    },
    Augment {
        id: String,
        input: String,
        pool: String,
        task: Task,
        target_class: String,
        #[serde(default = "default_threshold")]
        threshold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        source_classes: Option<Vec<String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_k: Option<usize>,
        /// min_df of the TF-IDF space used for similarity.
        #[serde(default = "default_min_df")]
        min_df: usize,
    },
}

impl DatasetStep {
    pub fn id(&self) -> &str {
        match self {
            DatasetStep::Load { id, .. }
            | DatasetStep::Synthetic { id, .. }
            | DatasetStep::Merge { id, .. }
            | DatasetStep::Balance { id, .. }
            | DatasetStep::Split { id, .. }
            | DatasetStep::Select { id, .. }
            | DatasetStep::Normalize { id, .. }
            | DatasetStep::Augment { id, .. } => id,
        }
    }

    pub fn op(&self) -> &'static str {
        match self {
            DatasetStep::Load { .. } => "load",
            DatasetStep::Synthetic { .. } => "synthetic",
            DatasetStep::Merge { .. } => "merge",
            DatasetStep::Balance { .. } => "balance",
            DatasetStep::Split { .. } => "split",
            DatasetStep::Select { .. } => "select",
            DatasetStep::Normalize { .. } => "normalize",
            DatasetStep::Augment { .. } => "augment",
        }
    }

    /// Referenced dataset ids with the key they appear under.
    fn inputs(&self) -> Vec<(String, &str)> {
        match self {
            DatasetStep::Load { .. } | DatasetStep::Synthetic { .. } => vec![],
            DatasetStep::Merge { inputs, .. } => inputs
                .iter()
                .enumerate()
                .map(|(i, s)| (format!("inputs[{i}]"), s.as_str()))
                .collect(),
            DatasetStep::Balance { input, .. }
            | DatasetStep::Split { input, .. }
            | DatasetStep::Select { input, .. }
            | DatasetStep::Normalize { input, .. } => vec![("input".into(), input.as_str())],
            DatasetStep::Augment { input, pool, .. } => {
                vec![
                    ("input".into(), input.as_str()),
                    ("pool".into(), pool.as_str()),
                ]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturizerConfig {
    pub id: String,
    pub fit_on: String,
    #[serde(default = "default_min_df")]
    pub min_df: usize,
    #[serde(default = "default_true")]
    pub lowercase: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Linear,
    NaiveBayes,
}

/// A positive-class weight, or `"auto"` for total / positives of the
/// training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSetting {
    Value(f64),
    Named(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossConfig {
    #[default]
    CrossEntropy,
    WeightedBce {
        weight: WeightSetting,
    },
    Focal {
        #[serde(default = "focal_gamma")]
        gamma: f64,
        #[serde(default = "focal_alpha")]
        alpha: f64,
    },
}

fn focal_gamma() -> f64 {
    2.0
}

fn focal_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub id: String,
    pub family: Family,
    pub task: Task,
    /// Fine-stage models predict over the children of this category.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub train_on: String,
    pub featurizer: String,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub optimizer: AdamWConfig,
    /// Additive smoothing for naive Bayes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<f64>,
    /// Keep the epoch with the best macro-F1 on this dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub candidates: Vec<String>,
    pub validation: String,
}

/// Either a fixed member list or a subset search whose overall best subset
/// becomes the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<String>>,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchicalConfig {
    pub id: String,
    pub category: EnsembleConfig,
    pub fine: BTreeMap<String, EnsembleConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalTarget {
    /// A model, ensemble or hierarchical id.
    pub target: String,
    pub dataset: String,
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json)
            .map_err(|e| Error::config(format!("line {}", e.line()), e.to_string()))
    }

    /// Parse a config file; relative paths inside resolve against its directory.
    pub fn from_file(path: &Path) -> Result<(Self, PathBuf)> {
        let json = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let cfg = ExperimentConfig::from_json(&json).map_err(|e| match e {
            Error::ConfigInvalid { path: p, reason } => {
                Error::config(format!("{}:{p}", path.display()), reason)
            }
            other => other,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn fingerprint(&self) -> String {
        crate::models::sha256_json(self)
    }

    /// Check every cross-reference and return the dataset build order.
    pub fn validate(&self, hierarchy: &LabelHierarchy) -> Result<Vec<usize>> {
        self.normalization
            .validate()
            .map_err(|e| Error::config("normalization", e.to_string()))?;

        let mut dataset_ids = HashSet::new();
        for (i, step) in self.datasets.iter().enumerate() {
            if step.id().is_empty() {
                return Err(Error::config(format!("datasets[{i}].id"), "empty id"));
            }
            if !dataset_ids.insert(step.id()) {
                return Err(Error::config(
                    format!("datasets[{i}].id"),
                    format!("dataset `{}` defined twice", step.id()),
                ));
            }
        }
        let need_dataset = |path: String, id: &str| {
            if dataset_ids.contains(id) {
                Ok(())
            } else {
                Err(Error::config(path, format!("undefined dataset `{id}`")))
            }
        };
        for (i, step) in self.datasets.iter().enumerate() {
            for (key, id) in step.inputs() {
                need_dataset(format!("datasets[{i}].{key}"), id)?;
            }
            match step {
                DatasetStep::Split { fraction, .. } if !(*fraction > 0.0 && *fraction < 1.0) => {
                    return Err(Error::config(
                        format!("datasets[{i}].fraction"),
                        "must lie in (0, 1)",
                    ));
                }
                DatasetStep::Select { task, classes, .. } => {
                    if let Some(c) = classes.iter().find(|c| !hierarchy.contains(*task, c)) {
                        return Err(Error::config(
                            format!("datasets[{i}].classes"),
                            format!("unknown class `{c}` for task {task}"),
                        ));
                    }
                }
                DatasetStep::Augment {
                    task, target_class, ..
                } if !hierarchy.contains(*task, target_class) => {
                    return Err(Error::config(
                        format!("datasets[{i}].target_class"),
                        format!("unknown class `{target_class}` for task {task}"),
                    ));
                }
                _ => {}
            }
        }
        let order = build_order(&self.datasets)?;

        let mut featurizer_ids = HashSet::new();
        for (i, f) in self.featurizers.iter().enumerate() {
            if !featurizer_ids.insert(f.id.as_str()) {
                return Err(Error::config(
                    format!("featurizers[{i}].id"),
                    format!("featurizer `{}` defined twice", f.id),
                ));
            }
            need_dataset(format!("featurizers[{i}].fit_on"), &f.fit_on)?;
        }

        let mut targets: HashSet<&str> = HashSet::new();
        let mut model_ids = HashSet::new();
        for (i, m) in self.models.iter().enumerate() {
            if !targets.insert(m.id.as_str()) {
                return Err(Error::config(
                    format!("models[{i}].id"),
                    format!("id `{}` defined twice", m.id),
                ));
            }
            model_ids.insert(m.id.as_str());
            need_dataset(format!("models[{i}].train_on"), &m.train_on)?;
            if let Some(v) = &m.validation {
                need_dataset(format!("models[{i}].validation"), v)?;
            }
            if !featurizer_ids.contains(m.featurizer.as_str()) {
                return Err(Error::config(
                    format!("models[{i}].featurizer"),
                    format!("undefined featurizer `{}`", m.featurizer),
                ));
            }
            model_space(m, hierarchy)
                .map_err(|e| Error::config(format!("models[{i}]"), e.to_string()))?;
        }

        let check_ensemble = |path: &str, e: &EnsembleConfig| -> Result<()> {
            match (&e.members, &e.search) {
                (Some(members), None) => {
                    EnsembleSpec::new(members.clone(), e.strategy, e.weights.clone())
                        .map_err(|err| Error::config(format!("{path}.members"), err.to_string()))?;
                    for (j, m) in members.iter().enumerate() {
                        if !model_ids.contains(m.as_str()) {
                            return Err(Error::config(
                                format!("{path}.members[{j}]"),
                                format!("undefined model `{m}`"),
                            ));
                        }
                    }
                }
                (None, Some(s)) => {
                    if s.candidates.is_empty() || s.candidates.len() > MAX_SEARCH_CANDIDATES {
                        return Err(Error::config(
                            format!("{path}.search.candidates"),
                            format!(
                                "need 1..={MAX_SEARCH_CANDIDATES} candidates, got {}",
                                s.candidates.len()
                            ),
                        ));
                    }
                    for (j, m) in s.candidates.iter().enumerate() {
                        if !model_ids.contains(m.as_str()) {
                            return Err(Error::config(
                                format!("{path}.search.candidates[{j}]"),
                                format!("undefined model `{m}`"),
                            ));
                        }
                    }
                    if e.weights.is_some() {
                        return Err(Error::config(
                            format!("{path}.weights"),
                            "weights apply to fixed member lists only",
                        ));
                    }
                    need_dataset(format!("{path}.search.validation"), &s.validation)?;
                }
                _ => {
                    return Err(Error::config(
                        path,
                        "give exactly one of `members` or `search`",
                    ))
                }
            }
            Ok(())
        };
        for (i, e) in self.ensembles.iter().enumerate() {
            if e.id.is_empty() {
                return Err(Error::config(format!("ensembles[{i}].id"), "missing id"));
            }
            if !targets.insert(e.id.as_str()) {
                return Err(Error::config(
                    format!("ensembles[{i}].id"),
                    format!("id `{}` defined twice", e.id),
                ));
            }
            check_ensemble(&format!("ensembles[{i}]"), e)?;
        }
        for (i, h) in self.hierarchical.iter().enumerate() {
            if !targets.insert(h.id.as_str()) {
                return Err(Error::config(
                    format!("hierarchical[{i}].id"),
                    format!("id `{}` defined twice", h.id),
                ));
            }
            check_ensemble(&format!("hierarchical[{i}].category"), &h.category)?;
            for c in hierarchy.classes(Task::B) {
                if !h.fine.contains_key(c) {
                    return Err(Error::config(
                        format!("hierarchical[{i}].fine"),
                        format!("category `{c}` has no fine-stage ensemble"),
                    ));
                }
            }
            for (c, e) in &h.fine {
                let path = format!("hierarchical[{i}].fine.{c}");
                if !hierarchy.contains(Task::B, c) {
                    return Err(Error::config(path, format!("`{c}` is not a category")));
                }
                check_ensemble(&path, e)?;
            }
        }
        for (i, t) in self.evaluate.iter().enumerate() {
            if !targets.contains(t.target.as_str()) {
                return Err(Error::config(
                    format!("evaluate[{i}].target"),
                    format!("undefined target `{}`", t.target),
                ));
            }
            need_dataset(format!("evaluate[{i}].dataset"), &t.dataset)?;
        }
        Ok(order)
    }
}

/// Declaration order, except that each step waits for its inputs.
fn build_order(steps: &[DatasetStep]) -> Result<Vec<usize>> {
    let mut done: HashSet<&str> = HashSet::new();
    let mut order = Vec::with_capacity(steps.len());
    while order.len() < steps.len() {
        let next = steps.iter().enumerate().find(|(i, s)| {
            !order.contains(i) && s.inputs().iter().all(|(_, id)| done.contains(id))
        });
        match next {
            Some((i, s)) => {
                done.insert(s.id());
                order.push(i);
            }
            None => {
                let (i, stuck) = steps
                    .iter()
                    .enumerate()
                    .find(|(i, _)| !order.contains(i))
                    .expect("some step is unbuilt");
                return Err(Error::config(
                    format!("datasets[{i}]"),
                    format!("cyclic reference through dataset `{}`", stuck.id()),
                ));
            }
        }
    }
    Ok(order)
}

fn model_space(m: &ModelConfig, h: &LabelHierarchy) -> Result<LabelSpace> {
    match &m.category {
        Some(c) if m.task == Task::C => LabelSpace::children_of(h, c),
        Some(_) => Err(Error::config(
            "category",
            "only task C models take a category",
        )),
        None => Ok(LabelSpace::for_task(h, m.task)),
    }
}

/// Documents of `d` that carry a label inside `space`.
pub fn restrict(d: &Dataset, space: &LabelSpace) -> Dataset {
    d.select(space.task, &space.classes).renamed(d.name())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub op: String,
    pub inputs: Vec<String>,
    pub fingerprint: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentRecord {
    pub id: String,
    pub candidates: usize,
    pub admitted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizerRecord {
    pub id: String,
    pub fit_on: String,
    pub fingerprint: String,
    pub vocabulary: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub id: String,
    pub family: Family,
    pub space: LabelSpace,
    pub loss: String,
    pub train_on: String,
    pub train_fingerprint: String,
    pub featurizer: String,
    pub fingerprint: String,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub id: String,
    pub strategy: Strategy,
    pub members: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<Vec<SubsetScore>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub target: String,
    pub dataset: String,
    pub dataset_fingerprint: String,
    pub task: Task,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub report: String,
    /// Hierarchical targets: category-stage macro-F1 and whether every fine
    /// prediction was a child of its predicted category.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_macro_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistent: Option<bool>,
}

/// Everything that identifies a run's inputs and results. Wall-clock
/// timings go to a separate `timings.json` so reruns compare byte-for-byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub config_fingerprint: String,
    pub seed: u64,
    pub datasets: Vec<DatasetRecord>,
    pub augmentations: Vec<AugmentRecord>,
    pub featurizers: Vec<FeaturizerRecord>,
    pub models: Vec<ModelRecord>,
    pub ensembles: Vec<EnsembleRecord>,
    pub hierarchical: Vec<String>,
    pub evaluations: Vec<EvaluationRecord>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub stages: Vec<(String, f64)>,
    pub models_trained: Vec<String>,
    pub models_reused: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub output_root: PathBuf,
    pub seed: Option<u64>,
}

impl RunOptions {
    /// Output root from the environment, else `runs`.
    pub fn from_env() -> Self {
        RunOptions {
            output_root: std::env::var_os(OUTPUT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| "runs".into()),
            seed: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub timings: Timings,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Per-document seed so substitutions do not depend on document order.
fn document_seed(base: u64, id: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(id.as_bytes());
    base ^ u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// File-name-safe rendering of an id.
fn slug(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    base: &'a Path,
    dir: PathBuf,
    cache_dir: PathBuf,
    hierarchy: Arc<LabelHierarchy>,
    datasets: BTreeMap<String, Dataset>,
    featurizers: BTreeMap<String, Arc<TfidfModel>>,
    registry: Registry,
    ensembles: BTreeMap<String, EnsembleSpec>,
    hierarchical: BTreeMap<String, HierarchicalSpec>,
    predictions: PredictionCache,
    manifest: RunManifest,
    timings: Timings,
}

pub fn run(config: &ExperimentConfig, base_dir: &Path, opts: &RunOptions) -> Result<RunOutcome> {
    let mut cfg = config.clone();
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    let hierarchy = Arc::new(match &cfg.hierarchy {
        Some(p) => LabelHierarchy::from_json_file(&base_dir.join(p))
            .map_err(|e| Error::config("hierarchy", e.to_string()))?,
        None => LabelHierarchy::canonical(),
    });
    let order = cfg.validate(&hierarchy)?;
    let fingerprint = cfg.fingerprint();
    let dir = opts.output_root.join(&fingerprint[..16]);
    let mut r = Runner {
        cfg: &cfg,
        base: base_dir,
        dir: dir.clone(),
        cache_dir: opts.output_root.join("cache").join("models"),
        hierarchy,
        datasets: BTreeMap::new(),
        featurizers: BTreeMap::new(),
        registry: Registry::new(),
        ensembles: BTreeMap::new(),
        hierarchical: BTreeMap::new(),
        predictions: PredictionCache::new(),
        manifest: RunManifest {
            toolkit_version: TOOLKIT_VERSION.to_string(),
            config_fingerprint: fingerprint,
            seed: cfg.seed,
            datasets: vec![],
            augmentations: vec![],
            featurizers: vec![],
            models: vec![],
            ensembles: vec![],
            hierarchical: vec![],
            evaluations: vec![],
        },
        timings: Timings::default(),
    };
    write(
        &dir.join("config.json"),
        serde_json::to_string_pretty(&cfg)? + "\n",
    )?;

    r.timed("datasets", |r| {
        for i in order {
            let step = &r.cfg.datasets[i];
            r.build_dataset(step)
                .map_err(|e| e.in_stage(format!("dataset `{}`", step.id())))?;
        }
        Ok(())
    })?;
    r.timed("featurizers", |r| {
        for f in &r.cfg.featurizers {
            r.fit_featurizer(f)
                .map_err(|e| e.in_stage(format!("featurizer `{}`", f.id)))?;
        }
        Ok(())
    })?;
    r.timed("models", |r| {
        for m in &r.cfg.models {
            r.train_model(m)
                .map_err(|e| e.in_stage(format!("model `{}`", m.id)))?;
        }
        Ok(())
    })?;
    r.timed("ensembles", |r| {
        for e in &r.cfg.ensembles {
            let spec = r
                .resolve_ensemble(&e.id, e, None)
                .map_err(|err| err.in_stage(format!("ensemble `{}`", e.id)))?;
            r.ensembles.insert(e.id.clone(), spec);
        }
        for h in &r.cfg.hierarchical {
            r.build_hierarchical(h)
                .map_err(|e| e.in_stage(format!("hierarchical `{}`", h.id)))?;
        }
        Ok(())
    })?;
    r.timed("evaluate", |r| {
        for t in &r.cfg.evaluate {
            r.evaluate(t)
                .map_err(|e| e.in_stage(format!("evaluate `{}` on `{}`", t.target, t.dataset)))?;
        }
        Ok(())
    })?;

    write(&dir.join("manifest.json"), r.manifest.to_json())?;
    write(
        &dir.join("timings.json"),
        serde_json::to_string_pretty(&r.timings)? + "\n",
    )?;
    Ok(RunOutcome {
        dir,
        manifest: r.manifest,
        timings: r.timings,
    })
}

/// Parse a config file and run it.
pub fn run_file(path: &Path, opts: &RunOptions) -> Result<RunOutcome> {
    let (cfg, base) = ExperimentConfig::from_file(path)?;
    run(&cfg, &base, opts)
}

impl<'a> Runner<'a> {
    fn timed(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<()>) -> Result<()> {
        let start = Instant::now();
        f(self)?;
        self.timings
            .stages
            .push((stage.to_string(), start.elapsed().as_secs_f64()));
        Ok(())
    }

    fn dataset(&self, id: &str) -> &Dataset {
        &self.datasets[id]
    }

    fn build_dataset(&mut self, step: &DatasetStep) -> Result<()> {
        let seed = self.cfg.seed;
        let built = match step {
            DatasetStep::Load { path, columns, .. } => {
                let path = self.base.join(path);
                match columns {
                    Some(map) => load_csv(&path, map, self.hierarchy.clone())?,
                    None => read_dataset(&path, self.hierarchy.clone())?,
                }
            }
            DatasetStep::Synthetic { spec, .. } => generate(spec, self.hierarchy.clone())?,
            DatasetStep::Merge { inputs, .. } => {
                let parts: Vec<Dataset> = inputs.iter().map(|i| self.dataset(i).clone()).collect();
                merge(&parts)?
            }
            DatasetStep::Balance {
                input,
                task,
                protected_source,
                ..
            } => balance_binary(self.dataset(input), *task, protected_source, seed)?,
            DatasetStep::Split {
                input,
                task,
                fraction,
                part,
                ..
            } => {
                let (train, holdout) =
                    stratified_split(self.dataset(input), *task, *fraction, seed)?;
                match part {
                    SplitPart::Train => train,
                    SplitPart::Holdout => holdout,
                }
            }
            DatasetStep::Select {
                input,
                task,
                classes,
                ..
            } => self.dataset(input).select(*task, classes),
            DatasetStep::Normalize {
                input, substitute, ..
            } => {
                let norm = &self.cfg.normalization;
                self.dataset(input).map_texts(|d| {
                    let text = normalize(&d.text, norm);
                    if *substitute {
                        substitute_lexical_seeded(
                            &text,
                            norm,
                            document_seed(norm.substitution_seed, &d.id),
                        )
                    } else {
                        text
                    }
                })
            }
            DatasetStep::Augment {
                id,
                input,
                pool,
                task,
                target_class,
                threshold,
                source_classes,
                max_k,
                min_df,
            } => {
                let base = self.dataset(input);
                let pool = self.dataset(pool);
                let mut plan = AugmentPlan::from_base(base, *task, target_class, pool.clone())
                    .with_threshold(*threshold);
                plan.source_classes = source_classes.clone();
                plan.max_k = *max_k;
                let texts: Vec<&str> = base.texts().into_iter().chain(pool.texts()).collect();
                let space = fit_tfidf(&texts, *min_df, true)?;
                let embeddings = EmbeddingTable::from_tfidf(
                    &space,
                    base.documents()
                        .iter()
                        .chain(pool.documents())
                        .map(|d| (d.id.as_str(), d.text.as_str())),
                )?;
                let scores = score_candidates(&plan, &embeddings)?;
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["id", "score", "origin_label", "verdict"])?;
                for s in &scores {
                    w.write_record([
                        s.id.as_str(),
                        &format!("{:.6}", s.score),
                        s.origin_label.as_deref().unwrap_or(""),
                        &format!("{:?}", s.verdict),
                    ])?;
                }
                let bytes = w
                    .into_inner()
                    .map_err(|e| Error::io("writing selection report", e.into_error()))?;
                write(
                    &self.dir.join("augment").join(format!("{}.csv", slug(id))),
                    bytes,
                )?;
                let augmented = apply_augmentation(base, &plan, &embeddings)?;
                self.manifest.augmentations.push(AugmentRecord {
                    id: id.clone(),
                    candidates: scores.len(),
                    admitted: scores
                        .iter()
                        .filter(|s| s.verdict == Verdict::Admitted)
                        .count(),
                });
                augmented
            }
        };
        let built = built.renamed(step.id());
        let inputs = step
            .inputs()
            .iter()
            .map(|(_, id)| self.dataset(id).fingerprint())
            .collect();
        let mut csv_bytes = Vec::new();
        write_csv(&built, &mut csv_bytes)?;
        write(
            &self
                .dir
                .join("datasets")
                .join(format!("{}.csv", slug(step.id()))),
            csv_bytes,
        )?;
        self.manifest.datasets.push(DatasetRecord {
            id: step.id().to_string(),
            op: step.op().to_string(),
            inputs,
            fingerprint: built.fingerprint(),
            rows: built.len(),
        });
        self.datasets.insert(step.id().to_string(), built);
        Ok(())
    }

    fn fit_featurizer(&mut self, f: &FeaturizerConfig) -> Result<()> {
        let model = fit_tfidf(&self.dataset(&f.fit_on).texts(), f.min_df, f.lowercase)?;
        write(
            &self
                .dir
                .join("featurizers")
                .join(format!("{}.json", slug(&f.id))),
            model.to_json(),
        )?;
        self.manifest.featurizers.push(FeaturizerRecord {
            id: f.id.clone(),
            fit_on: f.fit_on.clone(),
            fingerprint: model.fingerprint(),
            vocabulary: model.dim(),
        });
        self.featurizers.insert(f.id.clone(), Arc::new(model));
        Ok(())
    }

    fn loss_spec(&self, m: &ModelConfig, train: &Dataset, space: &LabelSpace) -> Result<LossSpec> {
        let spec = match &m.loss {
            LossConfig::CrossEntropy => LossSpec::CrossEntropy,
            LossConfig::Focal { gamma, alpha } => LossSpec::Focal {
                gamma: *gamma,
                alpha: *alpha,
            },
            LossConfig::WeightedBce { weight } => {
                let weight = match weight {
                    WeightSetting::Value(w) => *w,
                    WeightSetting::Named(s) if s == "auto" => {
                        if space.len() != 2 {
                            return Err(Error::SpecTaskMismatch {
                                loss: "weighted_bce".into(),
                                classes: space.len(),
                            });
                        }
                        let positives = train
                            .documents()
                            .iter()
                            .filter(|d| space.label_of(d) == Some(1))
                            .count();
                        weight_from_counts(train.len(), positives)
                            .ok_or_else(|| Error::NoPositives(space.classes[1].clone()))?
                    }
                    WeightSetting::Named(other) => {
                        return Err(Error::config(
                            "loss.weight",
                            format!("expected a number or \"auto\", got `{other}`"),
                        ))
                    }
                };
                LossSpec::WeightedBce { weight }
            }
        };
        spec.validate(space.len())?;
        Ok(spec)
    }

    fn train_model(&mut self, m: &ModelConfig) -> Result<()> {
        let space = model_space(m, &self.hierarchy)?;
        let train = restrict(self.dataset(&m.train_on), &space);
        let validation = m
            .validation
            .as_ref()
            .map(|v| restrict(self.dataset(v), &space));
        let featurizer = self.featurizers[&m.featurizer].clone();
        let loss = self.loss_spec(m, &train, &space)?;
        let defaults = TrainConfig::default();
        let train_cfg = TrainConfig {
            loss,
            epochs: m.epochs.unwrap_or(defaults.epochs),
            batch_size: m.batch_size.unwrap_or(defaults.batch_size),
            optimizer: m.optimizer,
            seed: self.cfg.seed,
        };
        let smoothing = m.smoothing.unwrap_or(1.0);

        let key = crate::models::sha256_json(&(
            TOOLKIT_VERSION,
            m.family,
            &space,
            &train_cfg,
            smoothing,
            train.fingerprint(),
            featurizer.fingerprint(),
            validation.as_ref().map(Dataset::fingerprint),
        ));
        let cached_path = self.cache_dir.join(format!("{key}.json"));
        let cached = cached_path
            .exists()
            .then(|| Model::load(&cached_path, std::slice::from_ref(&featurizer)).ok())
            .flatten();
        let model = match cached {
            Some(model) => {
                self.timings.models_reused.push(m.id.clone());
                model
            }
            None => {
                let trained = match m.family {
                    Family::Linear => Model::Linear(
                        train_linear_tracked(
                            &train,
                            featurizer.clone(),
                            &space,
                            &train_cfg,
                            validation.as_ref(),
                        )?
                        .model,
                    ),
                    Family::NaiveBayes => {
                        Model::NaiveBayes(train_nb(&train, featurizer.clone(), &space, smoothing)?)
                    }
                };
                write(&cached_path, trained.to_json())?;
                self.timings.models_trained.push(m.id.clone());
                trained
            }
        };
        let file = format!("models/{}.json", slug(&m.id));
        write(&self.dir.join(&file), model.to_json())?;
        self.manifest.models.push(ModelRecord {
            id: m.id.clone(),
            family: m.family,
            space: space.clone(),
            loss: match m.family {
                Family::Linear => train_cfg.loss.name(),
                Family::NaiveBayes => "multinomial".into(),
            },
            train_on: m.train_on.clone(),
            train_fingerprint: train.fingerprint(),
            featurizer: m.featurizer.clone(),
            fingerprint: model.fingerprint(),
            file,
        });
        self.registry.insert(m.id.clone(), Arc::new(model));
        Ok(())
    }

    /// Turn a fixed or searched ensemble config into a spec. `category`
    /// restricts search validation data to one category's documents.
    fn resolve_ensemble(
        &mut self,
        id: &str,
        e: &EnsembleConfig,
        expected: Option<&LabelSpace>,
    ) -> Result<EnsembleSpec> {
        let (spec, search) = match (&e.members, &e.search) {
            (Some(members), _) => (
                EnsembleSpec::new(members.clone(), e.strategy, e.weights.clone())?,
                None,
            ),
            (None, Some(s)) => {
                let (_, space) = self.registry.resolve(&s.candidates, expected)?;
                let validation = restrict(self.dataset(&s.validation), &space);
                let matrix = PredictionMatrix::evaluate(
                    &self.registry,
                    &s.candidates,
                    &validation,
                    &self.predictions,
                )?;
                let rows = search_subsets(&matrix, e.strategy)?;
                let best = best_overall(&rows);
                let mut text = crate::ensemble::render_search_text(&rows);
                text.push_str(&format!("\nselected: {}\n", best.members.join(", ")));
                let stem = self.dir.join("ensembles").join(slug(id));
                write(
                    &stem.with_extension("csv"),
                    crate::ensemble::render_search_csv(&rows)?,
                )?;
                write(&stem.with_extension("txt"), text)?;
                (
                    EnsembleSpec::new(best.members.clone(), e.strategy, None)?,
                    Some(rows),
                )
            }
            (None, None) => return Err(Error::config(id, "no members")),
        };
        self.registry.resolve(spec.members(), expected)?;
        self.manifest.ensembles.push(EnsembleRecord {
            id: id.to_string(),
            strategy: spec.strategy(),
            members: spec.members().to_vec(),
            search,
        });
        Ok(spec)
    }

    fn build_hierarchical(&mut self, h: &HierarchicalConfig) -> Result<()> {
        let cat_space = LabelSpace::for_task(&self.hierarchy, Task::B);
        let category =
            self.resolve_ensemble(&format!("{}/category", h.id), &h.category, Some(&cat_space))?;
        let mut fine = BTreeMap::new();
        for (c, e) in &h.fine {
            let space = LabelSpace::children_of(&self.hierarchy, c)?;
            let spec = self.resolve_ensemble(&format!("{}/{c}", h.id), e, Some(&space))?;
            fine.insert(c.clone(), spec);
        }
        let spec = HierarchicalSpec::new(self.hierarchy.clone(), category, fine)?;
        spec.resolve(&self.registry)?;
        self.manifest.hierarchical.push(h.id.clone());
        self.hierarchical.insert(h.id.clone(), spec);
        Ok(())
    }

    fn evaluate(&mut self, t: &EvalTarget) -> Result<()> {
        let data = self.dataset(&t.dataset).clone();
        let stem = format!("reports/{}__{}", slug(&t.target), slug(&t.dataset));
        let record = if let Some(spec) = self.hierarchical.get(&t.target) {
            let data = restrict(&data, &LabelSpace::for_task(&self.hierarchy, Task::C));
            let preds = data
                .documents()
                .iter()
                .map(|d| predict_hierarchical(spec, &self.registry, &d.text))
                .collect::<Result<Vec<_>>>()?;
            let consistent = preds
                .iter()
                .all(|p| self.hierarchy.parent(&p.fine) == Some(p.category.as_str()));
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["id", "gold_category", "gold_fine", "category", "fine"])?;
            for (d, p) in data.documents().iter().zip(&preds) {
                w.write_record([
                    d.id.as_str(),
                    d.label(Task::B).unwrap_or(""),
                    d.label(Task::C).unwrap_or(""),
                    &p.category,
                    &p.fine,
                ])?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| Error::io("writing predictions", e.into_error()))?;
            write(&self.dir.join(format!("{stem}.predictions.csv")), bytes)?;

            let gold_b: Vec<&str> = data
                .documents()
                .iter()
                .map(|d| d.label(Task::B).unwrap_or(""))
                .collect();
            let pred_b: Vec<&str> = preds.iter().map(|p| p.category.as_str()).collect();
            let cat_report =
                confusion(&gold_b, &pred_b, self.hierarchy.classes(Task::B))?.report()?;
            let gold_c: Vec<&str> = data
                .documents()
                .iter()
                .map(|d| d.label(Task::C).unwrap_or(""))
                .collect();
            let pred_c: Vec<&str> = preds.iter().map(|p| p.fine.as_str()).collect();
            let cm = confusion(&gold_c, &pred_c, self.hierarchy.classes(Task::C))?;
            let report = cm.report()?;
            self.write_report(&stem, &report, &cm)?;
            EvaluationRecord {
                target: t.target.clone(),
                dataset: t.dataset.clone(),
                dataset_fingerprint: data.fingerprint(),
                task: Task::C,
                macro_f1: report.macro_avg.f1,
                accuracy: report.accuracy,
                report: format!("{stem}.json"),
                category_macro_f1: Some(cat_report.macro_avg.f1),
                consistent: Some(consistent),
            }
        } else {
            let members = match self.ensembles.get(&t.target) {
                Some(spec) => spec.clone(),
                None => EnsembleSpec::new(vec![t.target.clone()], Strategy::Soft, None)?,
            };
            let (_, space) = self.registry.resolve(members.members(), None)?;
            let data = restrict(&data, &space);
            let golds: Vec<&str> = data
                .documents()
                .iter()
                .map(|d| d.label(space.task).unwrap_or(""))
                .collect();
            let preds = data
                .documents()
                .iter()
                .map(|d| {
                    crate::ensemble::predict_ensemble(&members, &self.registry, &d.text)
                        .map(|p| p.label)
                })
                .collect::<Result<Vec<_>>>()?;
            let cm = confusion(
                &golds,
                &preds.iter().map(String::as_str).collect::<Vec<_>>(),
                &space.classes,
            )?;
            let report = cm.report()?;
            self.write_report(&stem, &report, &cm)?;
            EvaluationRecord {
                target: t.target.clone(),
                dataset: t.dataset.clone(),
                dataset_fingerprint: data.fingerprint(),
                task: space.task,
                macro_f1: report.macro_avg.f1,
                accuracy: report.accuracy,
                report: format!("{stem}.json"),
                category_macro_f1: None,
                consistent: None,
            }
        };
        self.manifest.evaluations.push(record);
        Ok(())
    }

    fn write_report(
        &self,
        stem: &str,
        report: &Report,
        cm: &crate::metrics::ConfusionMatrix,
    ) -> Result<()> {
        write(
            &self.dir.join(format!("{stem}.json")),
            report.to_json() + "\n",
        )?;
        write(&self.dir.join(format!("{stem}.txt")), report.to_string())?;
        let mut buf = Vec::new();
        cm.write_csv(&mut buf)?;
        write(&self.dir.join(format!("{stem}.confusion.csv")), buf)
    }
}

/// Highest score; ties prefer fewer members, then the smaller id list.
pub fn best_overall(rows: &[SubsetScore]) -> &SubsetScore {
    let mut best = &rows[0];
    for r in &rows[1..] {
        if r.macro_f1 > best.macro_f1 + crate::ensemble::SCORE_TIE {
            best = r;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "seed": 5,
                "datasets": [
                    {"id": "train", "op": "split", "input": "all", "task": "A", "fraction": 0.25, "part": "train"},
                    {"id": "dev", "op": "split", "input": "all", "task": "A", "fraction": 0.25, "part": "holdout"},
                    {"id": "all", "op": "synthetic", "spec": {"per_fine_class": 6, "non_sexist": 60, "seed": 2}}
                ],
                "featurizers": [{"id": "tf", "fit_on": "train"}],
                "models": [
                    {"id": "lin", "family": "linear", "task": "A", "train_on": "train", "featurizer": "tf",
                     "loss": {"kind": "weighted_bce", "weight": "auto"}, "epochs": 3},
                    {"id": "nb", "family": "naive_bayes", "task": "A", "train_on": "train", "featurizer": "tf"}
                ],
                "ensembles": [{"id": "both", "search": {"candidates": ["lin", "nb"], "validation": "dev"}}],
                "evaluate": [{"target": "both", "dataset": "dev"}, {"target": "nb", "dataset": "dev"}]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn build_order_follows_references() {
        let cfg = minimal();
        assert_eq!(
            cfg.validate(&LabelHierarchy::canonical()).unwrap(),
            vec![2, 0, 1]
        );
    }

    #[test]
    fn undefined_dataset_is_named() {
        let mut cfg = minimal();
        cfg.models[0].train_on = "missing-set".into();
        match cfg.validate(&LabelHierarchy::canonical()) {
            Err(Error::ConfigInvalid { path, reason }) => {
                assert_eq!(path, "models[0].train_on");
                assert!(reason.contains("missing-set"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cycles_are_rejected() {
        let mut cfg = minimal();
        cfg.datasets.push(DatasetStep::Merge {
            id: "x".into(),
            inputs: vec!["y".into()],
        });
        cfg.datasets.push(DatasetStep::Merge {
            id: "y".into(),
            inputs: vec!["x".into()],
        });
        assert!(matches!(
            cfg.validate(&LabelHierarchy::canonical()),
            Err(Error::ConfigInvalid { reason, .. }) if reason.contains("cyclic")
        ));
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let err = ExperimentConfig::from_json(
            r#"{"datasets": [], "featurizers": [], "models": [], "colour": 1}"#,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn run_writes_manifest_and_reuses_models() {
        let tmp = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            output_root: tmp.path().to_path_buf(),
            seed: None,
        };
        let cfg = minimal();
        let first = run(&cfg, tmp.path(), &opts).unwrap();
        assert_eq!(first.timings.models_trained, vec!["lin", "nb"]);
        assert!(first.dir.join("manifest.json").exists());
        assert_eq!(first.manifest.evaluations.len(), 2);
        let search = first.manifest.ensembles[0].search.as_ref().unwrap();
        assert_eq!(search.len(), 2);

        // a new ensemble section changes the run directory but not the models
        let mut edited = cfg.clone();
        edited.ensembles[0].strategy = Strategy::Hard;
        let second = run(&edited, tmp.path(), &opts).unwrap();
        assert_ne!(second.dir, first.dir);
        assert!(second.timings.models_trained.is_empty());
        assert_eq!(second.timings.models_reused, vec!["lin", "nb"]);
        assert_eq!(
            first
                .manifest
                .models
                .iter()
                .map(|m| &m.fingerprint)
                .collect::<Vec<_>>(),
            second
                .manifest
                .models
                .iter()
                .map(|m| &m.fingerprint)
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn seed_override_changes_fingerprint() {
        let tmp = tempfile::tempdir().unwrap();
        let a = run(
            &minimal(),
            tmp.path(),
            &RunOptions {
                output_root: tmp.path().into(),
                seed: None,
            },
        )
        .unwrap();
        let b = run(
            &minimal(),
            tmp.path(),
            &RunOptions {
                output_root: tmp.path().into(),
                seed: Some(99),
            },
        )
        .unwrap();
        assert_ne!(a.manifest.config_fingerprint, b.manifest.config_fingerprint);
        assert_eq!(b.manifest.seed, 99);
    }
}

//! Labeled text datasets: ingestion, merging, balancing, stratified splits and
//! class statistics.
//!
//! A [`Dataset`] is immutable once built. Every transformation returns a new
//! dataset; survivors keep their relative order so that outputs are stable
//! across save/load cycles.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const NON_SEXIST: &str = "non-sexist";
pub const SEXIST: &str = "sexist";

/// One of the three label layers: binary (A), category (B), fine vector (C).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(alias = "a")]
    A,
    #[serde(alias = "b")]
    B,
    #[serde(alias = "c")]
    C,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::A, Task::B, Task::C];

    pub fn column(self) -> &'static str {
        match self {
            Task::A => "label_a",
            Task::B => "label_b",
            Task::C => "label_c",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Task::A => "A",
            Task::B => "B",
            Task::C => "C",
        };
        f.write_str(s)
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" | "task_a" => Ok(Task::A),
            "b" | "task_b" => Ok(Task::B),
            "c" | "task_c" => Ok(Task::C),
            other => Err(Error::config("task", format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineClass {
    pub name: String,
    pub parent: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HierarchyFile {
    task_b: Vec<String>,
    task_c: Vec<FineClass>,
}

/// The binary → category → fine-vector class tree.
///
/// Task A is always `{non-sexist, sexist}`. Every fine class has exactly one
/// parent category and every category has at least one child.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "HierarchyFile", into = "HierarchyFile")]
pub struct LabelHierarchy {
    task_a: Vec<String>,
    task_b: Vec<String>,
    task_c: Vec<String>,
    parents: Vec<usize>,
}

impl TryFrom<HierarchyFile> for LabelHierarchy {
    type Error = Error;

    fn try_from(file: HierarchyFile) -> Result<Self> {
        LabelHierarchy::new(file.task_b, file.task_c)
    }
}

impl From<LabelHierarchy> for HierarchyFile {
    fn from(h: LabelHierarchy) -> Self {
        let task_c = h
            .task_c
            .iter()
            .zip(&h.parents)
            .map(|(name, &p)| FineClass {
                name: name.clone(),
                parent: h.task_b[p].clone(),
            })
            .collect();
        HierarchyFile {
            task_b: h.task_b,
            task_c,
        }
    }
}

impl LabelHierarchy {
    pub fn new(categories: Vec<String>, fine: Vec<FineClass>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &categories {
            if c.is_empty() || !seen.insert(c.as_str()) {
                return Err(Error::InvalidHierarchy(format!(
                    "category `{c}` is empty or repeated"
                )));
            }
        }
        let mut fine_seen = HashSet::new();
        let mut parents = Vec::with_capacity(fine.len());
        for f in &fine {
            if f.name.is_empty() || !fine_seen.insert(f.name.as_str()) {
                return Err(Error::InvalidHierarchy(format!(
                    "fine class `{}` is empty or repeated",
                    f.name
                )));
            }
            let p = categories
                .iter()
                .position(|c| *c == f.parent)
                .ok_or_else(|| {
                    Error::InvalidHierarchy(format!(
                        "fine class `{}` has unknown parent `{}`",
                        f.name, f.parent
                    ))
                })?;
            parents.push(p);
        }
        for (i, c) in categories.iter().enumerate() {
            if !parents.contains(&i) {
                return Err(Error::InvalidHierarchy(format!(
                    "category `{c}` has no fine classes"
                )));
            }
        }
        Ok(LabelHierarchy {
            task_a: vec![NON_SEXIST.to_string(), SEXIST.to_string()],
            task_b: categories,
            task_c: fine.into_iter().map(|f| f.name).collect(),
            parents,
        })
    }

    /// The 4-category, 11-vector taxonomy of the shared task.
    pub fn canonical() -> Self {
        let tree: [(&str, &[&str]); 4] = [
            (
                "threats, plans to harm and incitement",
                &["threats of harm", "incitement and encouragement of harm"],
            ),
            (
                "derogation",
                &[
                    "descriptive attacks",
                    "aggressive and emotive attacks",
                    "dehumanising attacks & overt sexual objectification",
                ],
            ),
            (
                "animosity",
                &[
                    "casual use of gendered slurs, profanities, and insults",
                    "immutable gender differences and gender stereotypes",
                    "backhanded gendered compliments",
                    "condescending explanations or unwelcome advice",
                ],
            ),
            (
                "prejudiced discussions",
                &[
                    "supporting mistreatment of individual women",
                    "supporting systemic discrimination against women as a group",
                ],
            ),
        ];
        let categories = tree.iter().map(|(c, _)| c.to_string()).collect();
        let fine = tree
            .iter()
            .flat_map(|(c, kids)| {
                kids.iter().map(move |k| FineClass {
                    name: k.to_string(),
                    parent: c.to_string(),
                })
            })
            .collect();
        LabelHierarchy::new(categories, fine).expect("canonical hierarchy is valid")
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn classes(&self, task: Task) -> &[String] {
        match task {
            Task::A => &self.task_a,
            Task::B => &self.task_b,
            Task::C => &self.task_c,
        }
    }

    pub fn class_index(&self, task: Task, name: &str) -> Option<usize> {
        self.classes(task).iter().position(|c| c == name)
    }

    pub fn contains(&self, task: Task, name: &str) -> bool {
        self.class_index(task, name).is_some()
    }

    /// Parent category of a fine class.
    pub fn parent(&self, fine: &str) -> Option<&str> {
        let i = self.class_index(Task::C, fine)?;
        Some(&self.task_b[self.parents[i]])
    }

    /// Fine classes under a category, in hierarchy order.
    pub fn children(&self, category: &str) -> Vec<String> {
        let Some(p) = self.class_index(Task::B, category) else {
            return Vec::new();
        };
        self.task_c
            .iter()
            .zip(&self.parents)
            .filter(|(_, &q)| q == p)
            .map(|(n, _)| n.clone())
            .collect()
    }

    /// Labels implied by assigning `class` on `task`: the class itself plus
    /// every ancestor.
    pub fn with_ancestors(&self, task: Task, class: &str) -> Vec<(Task, String)> {
        let mut out = vec![(task, class.to_string())];
        match task {
            Task::A => {}
            Task::B => out.push((Task::A, SEXIST.to_string())),
            Task::C => {
                if let Some(p) = self.parent(class) {
                    out.push((Task::B, p.to_string()));
                }
                out.push((Task::A, SEXIST.to_string()));
            }
        }
        out
    }
}

/// The class list a model predicts over: a whole task, or the children of
/// one category for a fine-stage model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    pub task: Task,
    pub classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl LabelSpace {
    pub fn for_task(h: &LabelHierarchy, task: Task) -> Self {
        LabelSpace {
            task,
            classes: h.classes(task).to_vec(),
            category: None,
        }
    }

    pub fn children_of(h: &LabelHierarchy, category: &str) -> Result<Self> {
        let classes = h.children(category);
        if classes.is_empty() {
            return Err(Error::UnknownLabel(category.to_string()));
        }
        Ok(LabelSpace {
            task: Task::C,
            classes,
            category: Some(category.to_string()),
        })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index_of(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    /// Index of the document's label in this space, if it has one here.
    pub fn label_of(&self, doc: &Document) -> Option<usize> {
        doc.label(self.task).and_then(|l| self.index_of(l))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub source: String,
    pub labels: BTreeMap<Task, String>,
    /// Label from the originating corpus when it has its own scheme
    /// (e.g. an external sexism category). Not validated against the hierarchy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_label: Option<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, source: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            source: source.into(),
            labels: BTreeMap::new(),
            origin_label: None,
        }
    }

    pub fn with_label(mut self, task: Task, class: impl Into<String>) -> Self {
        self.labels.insert(task, class.into());
        self
    }

    pub fn label(&self, task: Task) -> Option<&str> {
        self.labels.get(&task).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    hierarchy: Arc<LabelHierarchy>,
    documents: Vec<Document>,
}

impl Dataset {
    /// Validates id uniqueness and that every label exists in the hierarchy.
    pub fn new(
        name: impl Into<String>,
        hierarchy: Arc<LabelHierarchy>,
        documents: Vec<Document>,
    ) -> Result<Self> {
        let mut ids = HashSet::with_capacity(documents.len());
        for (i, doc) in documents.iter().enumerate() {
            if doc.id.is_empty() {
                return Err(Error::EmptyId(i + 1));
            }
            if !ids.insert(doc.id.as_str()) {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
            for (&task, label) in &doc.labels {
                if !hierarchy.contains(task, label) {
                    return Err(Error::UnknownClass {
                        row: i + 1,
                        task,
                        label: label.clone(),
                    });
                }
            }
        }
        Ok(Dataset {
            name: name.into(),
            hierarchy,
            documents,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn hierarchy(&self) -> &Arc<LabelHierarchy> {
        &self.hierarchy
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    pub fn texts(&self) -> Vec<&str> {
        self.documents.iter().map(|d| d.text.as_str()).collect()
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Keep documents whose `task` label is one of `classes`.
    pub fn select(&self, task: Task, classes: &[String]) -> Dataset {
        let documents = self
            .documents
            .iter()
            .filter(|d| {
                d.label(task)
                    .is_some_and(|l| classes.iter().any(|c| c == l))
            })
            .cloned()
            .collect();
        Dataset {
            name: format!("{}-select", self.name),
            hierarchy: self.hierarchy.clone(),
            documents,
        }
    }

    /// Rewrite every text; ids and labels are untouched.
    pub fn map_texts(&self, mut f: impl FnMut(&Document) -> String) -> Dataset {
        let documents = self
            .documents
            .iter()
            .map(|d| Document {
                text: f(d),
                ..d.clone()
            })
            .collect();
        Dataset {
            name: self.name.clone(),
            hierarchy: self.hierarchy.clone(),
            documents,
        }
    }

    /// SHA-256 over the hierarchy and documents in order.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&*self.hierarchy).expect("hierarchy serializes"));
        for doc in &self.documents {
            hasher.update(serde_json::to_vec(doc).expect("document serializes"));
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

/// Maps CSV columns onto document fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    /// Id column; when absent ids are the 1-based row numbers.
    #[serde(default)]
    pub id: Option<String>,
    pub text: String,
    #[serde(default)]
    pub source: Option<String>,
    /// Source tag for every row when there is no source column.
    #[serde(default)]
    pub default_source: Option<String>,
    #[serde(default)]
    pub labels: BTreeMap<Task, String>,
    #[serde(default)]
    pub origin_label: Option<String>,
}

impl ColumnMap {
    /// The layout written by [`save_csv`], restricted to columns present in
    /// `headers`.
    pub fn standard_for(headers: &csv::StringRecord) -> Self {
        let has = |c: &str| headers.iter().any(|h| h == c);
        ColumnMap {
            id: has("id").then(|| "id".to_string()),
            text: "text".to_string(),
            source: has("source").then(|| "source".to_string()),
            default_source: None,
            labels: Task::ALL
                .into_iter()
                .filter(|t| has(t.column()))
                .map(|t| (t, t.column().to_string()))
                .collect(),
            origin_label: has("origin_label").then(|| "origin_label".to_string()),
        }
    }
}

fn column_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
}

/// Read a CSV dataset. Empty label cells mean "unlabeled for that task".
pub fn load_csv(
    path: &Path,
    columns: &ColumnMap,
    hierarchy: Arc<LabelHierarchy>,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let text_col = column_index(&headers, &columns.text, path)?;
    let id_col = columns
        .id
        .as_deref()
        .map(|c| column_index(&headers, c, path))
        .transpose()?;
    let source_col = columns
        .source
        .as_deref()
        .map(|c| column_index(&headers, c, path))
        .transpose()?;
    let origin_col = columns
        .origin_label
        .as_deref()
        .map(|c| column_index(&headers, c, path))
        .transpose()?;
    let label_cols = columns
        .labels
        .iter()
        .map(|(&t, c)| Ok((t, column_index(&headers, c, path)?)))
        .collect::<Result<Vec<_>>>()?;
    let default_source = columns.default_source.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });

    let mut documents = Vec::new();
    let mut ids = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let field = |c: usize| record.get(c).unwrap_or("");
        let id = match id_col {
            Some(c) => field(c).to_string(),
            None => row.to_string(),
        };
        if id.is_empty() {
            return Err(Error::EmptyId(row));
        }
        if !ids.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        let mut doc = Document::new(
            id,
            field(text_col),
            source_col.map_or(default_source.clone(), |c| field(c).to_string()),
        );
        for &(task, c) in &label_cols {
            let value = field(c).trim();
            if value.is_empty() {
                continue;
            }
            if !hierarchy.contains(task, value) {
                return Err(Error::UnknownClass {
                    row,
                    task,
                    label: value.to_string(),
                });
            }
            doc.labels.insert(task, value.to_string());
        }
        if let Some(c) = origin_col {
            let v = field(c).trim();
            if !v.is_empty() {
                doc.origin_label = Some(v.to_string());
            }
        }
        documents.push(doc);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    Dataset::new(name, hierarchy, documents)
}

/// Read a CSV in the standard layout written by [`save_csv`].
pub fn read_dataset(path: &Path, hierarchy: Arc<LabelHierarchy>) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    load_csv(path, &ColumnMap::standard_for(&headers), hierarchy)
}

pub const STANDARD_HEADER: [&str; 7] = [
    "id",
    "text",
    "source",
    "label_a",
    "label_b",
    "label_c",
    "origin_label",
];

pub fn write_csv<W: std::io::Write>(d: &Dataset, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(STANDARD_HEADER)?;
    for doc in &d.documents {
        writer.write_record([
            doc.id.as_str(),
            doc.text.as_str(),
            doc.source.as_str(),
            doc.label(Task::A).unwrap_or(""),
            doc.label(Task::B).unwrap_or(""),
            doc.label(Task::C).unwrap_or(""),
            doc.origin_label.as_deref().unwrap_or(""),
        ])?;
    }
    writer.flush().map_err(|e| Error::io("writing csv", e))?;
    Ok(())
}

pub fn save_csv(d: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    write_csv(d, file)
}

/// Concatenate parts in order. Ids become `<part name>:<id>`.
pub fn merge(parts: &[Dataset]) -> Result<Dataset> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Precondition("merge needs at least one dataset".into()))?;
    for p in &parts[1..] {
        if p.hierarchy != first.hierarchy {
            return Err(Error::HierarchyMismatch {
                left: first.name.clone(),
                right: p.name.clone(),
            });
        }
    }
    let documents = parts
        .iter()
        .flat_map(|p| {
            p.documents.iter().map(move |d| Document {
                id: format!("{}:{}", p.name, d.id),
                ..d.clone()
            })
        })
        .collect();
    let name = parts
        .iter()
        .map(|p| p.name.as_str())
        .collect::<Vec<_>>()
        .join("+");
    Dataset::new(name, first.hierarchy.clone(), documents)
}

fn require_labels(d: &Dataset, task: Task) -> Result<Vec<usize>> {
    let classes = d.hierarchy.classes(task);
    d.documents
        .iter()
        .map(|doc| {
            doc.label(task)
                .and_then(|l| classes.iter().position(|c| c == l))
                .ok_or_else(|| Error::Unlabeled {
                    id: doc.id.clone(),
                    task,
                })
        })
        .collect()
}

/// Downsample the majority class to the minority count.
///
/// Removed rows come from the majority class only, never from
/// `protected_source`. Survivors keep their relative order.
pub fn balance_binary(
    d: &Dataset,
    task: Task,
    protected_source: &str,
    seed: u64,
) -> Result<Dataset> {
    if d.hierarchy.classes(task).len() != 2 {
        return Err(Error::NotBinary(task));
    }
    let labels = require_labels(d, task)?;
    let count1 = labels.iter().filter(|&&l| l == 1).count();
    let count0 = labels.len() - count1;
    let (majority, minority_count, majority_count) = if count1 > count0 {
        (1, count0, count1)
    } else {
        (0, count1, count0)
    };
    let excess = majority_count - minority_count;
    if excess == 0 {
        return Ok(d.clone().renamed(format!("{}-balanced", d.name)));
    }
    let removable: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|&(i, &l)| l == majority && d.documents[i].source != protected_source)
        .map(|(i, _)| i)
        .collect();
    if removable.len() < excess {
        return Err(Error::CannotBalance {
            protected: majority_count - removable.len(),
            target: minority_count,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drop: HashSet<usize> = rand::seq::index::sample(&mut rng, removable.len(), excess)
        .into_iter()
        .map(|k| removable[k])
        .collect();
    let documents = d
        .documents
        .iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, doc)| doc.clone())
        .collect();
    Ok(Dataset {
        name: format!("{}-balanced", d.name),
        hierarchy: d.hierarchy.clone(),
        documents,
    })
}

/// Per-class holdout sizes by the largest-remainder method: each class gets
/// `floor(fraction × count)`, and the leftover seats up to
/// `round(fraction × total)` go to the largest fractional parts.
pub fn holdout_quotas(counts: &[usize], fraction: f64) -> Vec<usize> {
    let total: usize = counts.iter().sum();
    let target = (fraction * total as f64).round() as usize;
    let exact: Vec<f64> = counts.iter().map(|&c| fraction * c as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().take(target.saturating_sub(assigned)) {
        quotas[k] += 1;
    }
    quotas
}

/// Class-proportional train/holdout partition, deterministic under `seed`.
pub fn stratified_split(
    d: &Dataset,
    task: Task,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::Precondition(format!(
            "holdout fraction {holdout_fraction} outside (0, 1)"
        )));
    }
    let labels = require_labels(d, task)?;
    let classes = d.hierarchy.classes(task);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes.len()];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    for (k, m) in members.iter().enumerate() {
        if m.len() == 1 {
            return Err(Error::DegenerateClass {
                class: classes[k].clone(),
                count: 1,
            });
        }
    }
    let counts: Vec<usize> = members.iter().map(Vec::len).collect();
    let quotas = holdout_quotas(&counts, holdout_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_holdout = vec![false; d.len()];
    for (m, &q) in members.iter_mut().zip(&quotas) {
        m.shuffle(&mut rng);
        for &i in m.iter().take(q) {
            in_holdout[i] = true;
        }
    }
    let (mut train, mut holdout) = (Vec::new(), Vec::new());
    for (doc, &h) in d.documents.iter().zip(&in_holdout) {
        if h {
            holdout.push(doc.clone());
        } else {
            train.push(doc.clone());
        }
    }
    Ok((
        Dataset {
            name: format!("{}-train", d.name),
            hierarchy: d.hierarchy.clone(),
            documents: train,
        },
        Dataset {
            name: format!("{}-holdout", d.name),
            hierarchy: d.hierarchy.clone(),
            documents: holdout,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub task: Task,
    pub classes: Vec<String>,
    pub counts: Vec<usize>,
    pub total: usize,
}

impl ClassDistribution {
    pub fn fraction(&self, class: &str) -> Option<f64> {
        let i = self.classes.iter().position(|c| c == class)?;
        Some(self.counts[i] as f64 / self.total as f64)
    }

    pub fn fractions(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 / self.total as f64)
            .collect()
    }

    pub fn count(&self, class: &str) -> usize {
        self.classes
            .iter()
            .position(|c| c == class)
            .map_or(0, |i| self.counts[i])
    }
}

impl fmt::Display for ClassDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .classes
            .iter()
            .map(|c| c.len())
            .max()
            .unwrap_or(5)
            .max(5);
        writeln!(f, "task {} ({} labeled)", self.task, self.total)?;
        for (c, frac) in self.classes.iter().zip(self.fractions()) {
            writeln!(
                f,
                "  {c:<width$}  {:>7}  {:>6.2}%",
                self.count(c),
                100.0 * frac
            )?;
        }
        Ok(())
    }
}

/// Counts over documents labeled for `task`; unlabeled documents are skipped.
pub fn class_stats(d: &Dataset, task: Task) -> Result<ClassDistribution> {
    let classes = d.hierarchy.classes(task).to_vec();
    let index: HashMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let mut counts = vec![0usize; classes.len()];
    for doc in &d.documents {
        if let Some(l) = doc.label(task) {
            counts[index[l]] += 1;
        }
    }
    let total = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyTask(task));
    }
    Ok(ClassDistribution {
        task,
        classes,
        counts,
        total,
    })
}

/// `total / positives` over the documents labeled for a binary task.
pub fn imbalance_weight(d: &Dataset, task: Task, positive_class: &str) -> Result<f64> {
    if d.hierarchy.classes(task).len() != 2 {
        return Err(Error::NotBinary(task));
    }
    if !d.hierarchy.contains(task, positive_class) {
        return Err(Error::UnknownLabel(positive_class.to_string()));
    }
    let stats = class_stats(d, task).map_err(|_| Error::NoPositives(positive_class.into()))?;
    weight_from_counts(stats.total, stats.count(positive_class))
        .ok_or_else(|| Error::NoPositives(positive_class.to_string()))
}

pub fn weight_from_counts(total: usize, positives: usize) -> Option<f64> {
    (positives > 0).then(|| total as f64 / positives as f64)
}

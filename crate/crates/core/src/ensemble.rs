//! Soft and hard voting, exhaustive subset search and two-stage routing.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, LabelHierarchy, LabelSpace, Task};
use crate::error::{Error, Result};
use crate::metrics::ConfusionMatrix;
use crate::models::{argmax, Classifier, ProbVector};

/// Exhaustive search enumerates `2^M - 1` subsets.
pub const MAX_SEARCH_CANDIDATES: usize = 16;

/// Scores closer than this are treated as tied during subset search.
pub const SCORE_TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Soft,
    Hard,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(Strategy::Soft),
            "hard" => Ok(Strategy::Hard),
            other => Err(Error::InvalidSpec(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecFile")]
pub struct EnsembleSpec {
    members: Vec<String>,
    #[serde(default)]
    strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct SpecFile {
    members: Vec<String>,
    #[serde(default)]
    strategy: Strategy,
    #[serde(default)]
    weights: Option<Vec<f64>>,
}

impl TryFrom<SpecFile> for EnsembleSpec {
    type Error = Error;

    fn try_from(f: SpecFile) -> Result<Self> {
        EnsembleSpec::new(f.members, f.strategy, f.weights)
    }
}

impl EnsembleSpec {
    pub fn new(
        members: Vec<String>,
        strategy: Strategy,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidSpec(
                "an ensemble needs at least one member".into(),
            ));
        }
        for (i, m) in members.iter().enumerate() {
            if members[..i].contains(m) {
                return Err(Error::InvalidSpec(format!("member `{m}` listed twice")));
            }
        }
        if let Some(w) = &weights {
            if w.len() != members.len() {
                return Err(Error::WeightCountMismatch(format!(
                    "{} weights for {} members",
                    w.len(),
                    members.len()
                )));
            }
            if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::InvalidSpec(format!(
                    "weights must be positive, got {w:?}"
                )));
            }
        }
        Ok(EnsembleSpec {
            members,
            strategy,
            weights,
        })
    }

    pub fn soft(members: &[&str]) -> Self {
        EnsembleSpec::new(
            members.iter().map(|m| m.to_string()).collect(),
            Strategy::Soft,
            None,
        )
        .expect("distinct members")
    }

    pub fn members(&self) -> &[String] {
        &self.members
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }
}

/// Order-independent sum: addends are sorted before accumulation.
fn sorted_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.into_iter().sum()
}

fn check_panel(probs: &[ProbVector]) -> Result<usize> {
    let first = probs
        .first()
        .ok_or_else(|| Error::Precondition("voting needs at least one member".into()))?;
    let k = first.len();
    if let Some(p) = probs.iter().find(|p| p.len() != k) {
        return Err(Error::DimensionMismatch {
            left: k,
            right: p.len(),
        });
    }
    Ok(k)
}

/// Per-class (weighted) mean of the member distributions.
pub fn soft_vote(probs: &[ProbVector], weights: Option<&[f64]>) -> Result<ProbVector> {
    let k = check_panel(probs)?;
    let mut mean: Vec<f64> = match weights {
        None => (0..k)
            .map(|j| sorted_sum(probs.iter().map(|p| p.values()[j]).collect()) / probs.len() as f64)
            .collect(),
        Some(w) => {
            if w.len() != probs.len() {
                return Err(Error::WeightCountMismatch(format!(
                    "{} weights for {} members",
                    w.len(),
                    probs.len()
                )));
            }
            let total = sorted_sum(w.to_vec());
            (0..k)
                .map(|j| {
                    sorted_sum(
                        probs
                            .iter()
                            .zip(w)
                            .map(|(p, wi)| wi * p.values()[j])
                            .collect(),
                    ) / total
                })
                .collect()
        }
    };
    let s: f64 = mean.iter().sum();
    if weights.is_some() && s > 0.0 {
        for v in &mut mean {
            *v /= s;
        }
    }
    Ok(ProbVector::from_normalized(mean))
}

/// Majority over member argmaxes. Any tie among the top vote-getters goes to
/// the tied class with the highest unweighted soft-vote probability.
pub fn hard_vote(probs: &[ProbVector]) -> Result<usize> {
    let k = check_panel(probs)?;
    let mut votes = vec![0usize; k];
    for p in probs {
        votes[p.argmax()] += 1;
    }
    let top = *votes.iter().max().expect("k > 0");
    let tied: Vec<usize> = (0..k).filter(|&c| votes[c] == top).collect();
    if tied.len() == 1 {
        return Ok(tied[0]);
    }
    let mean = soft_vote(probs, None)?;
    let restricted: Vec<f64> = tied.iter().map(|&c| mean.values()[c]).collect();
    Ok(tied[argmax(&restricted)])
}

fn combine(
    strategy: Strategy,
    probs: &[ProbVector],
    weights: Option<&[f64]>,
) -> Result<(usize, ProbVector)> {
    let mean = soft_vote(probs, weights)?;
    let label = match strategy {
        Strategy::Soft => mean.argmax(),
        Strategy::Hard => hard_vote(probs)?,
    };
    Ok((label, mean))
}

/// Trained models addressable by id.
#[derive(Clone, Default)]
pub struct Registry {
    models: BTreeMap<String, Arc<dyn Classifier>>,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, model: Arc<dyn Classifier>) {
        self.models.insert(id.into(), model);
    }

    pub fn get(&self, id: &str) -> Result<&Arc<dyn Classifier>> {
        self.models
            .get(id)
            .ok_or_else(|| Error::UnknownModel(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Resolve members that all share one label space, optionally a required one.
    pub fn resolve(
        &self,
        ids: &[String],
        expected: Option<&LabelSpace>,
    ) -> Result<(Vec<Arc<dyn Classifier>>, LabelSpace)> {
        let models = ids
            .iter()
            .map(|id| self.get(id).cloned())
            .collect::<Result<Vec<_>>>()?;
        let space = match expected {
            Some(s) => s.clone(),
            None => models
                .first()
                .ok_or_else(|| Error::Precondition("no members to resolve".into()))?
                .label_space()
                .clone(),
        };
        for (id, m) in ids.iter().zip(&models) {
            let got = m.label_space();
            if got != &space {
                return Err(Error::TaskMismatch {
                    model: id.clone(),
                    reason: format!(
                        "expected task {} over {:?}, found task {} over {:?}",
                        space.task, space.classes, got.task, got.classes
                    ),
                });
            }
        }
        Ok((models, space))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePrediction {
    pub label: String,
    /// The (weighted) soft mean, also for hard voting.
    pub probs: ProbVector,
}

pub fn predict_ensemble(
    spec: &EnsembleSpec,
    registry: &Registry,
    text: &str,
) -> Result<EnsemblePrediction> {
    let (models, space) = registry.resolve(&spec.members, None)?;
    predict_resolved(spec, &models, &space, text)
}

fn predict_resolved(
    spec: &EnsembleSpec,
    models: &[Arc<dyn Classifier>],
    space: &LabelSpace,
    text: &str,
) -> Result<EnsemblePrediction> {
    let probs: Vec<ProbVector> = models.iter().map(|m| m.predict_proba(text)).collect();
    let (label, probs) = combine(spec.strategy, &probs, spec.weights())?;
    Ok(EnsemblePrediction {
        label: space.classes[label].clone(),
        probs,
    })
}

type CacheKey = (String, String);

/// Per-model validation predictions keyed by (model, dataset) fingerprints.
#[derive(Default)]
pub struct PredictionCache {
    entries: Mutex<HashMap<CacheKey, Arc<Vec<ProbVector>>>>,
    misses: Mutex<usize>,
}

impl PredictionCache {
    pub fn new() -> Self {
        PredictionCache::default()
    }

    pub fn predictions(&self, model: &dyn Classifier, data: &Dataset) -> Arc<Vec<ProbVector>> {
        let key = (model.fingerprint(), data.fingerprint());
        if let Some(hit) = self.entries.lock().expect("cache lock").get(&key) {
            return hit.clone();
        }
        let computed: Arc<Vec<ProbVector>> = Arc::new(
            data.documents()
                .par_iter()
                .map(|d| model.predict_proba(&d.text))
                .collect(),
        );
        *self.misses.lock().expect("cache lock") += 1;
        self.entries
            .lock()
            .expect("cache lock")
            .entry(key)
            .or_insert(computed)
            .clone()
    }

    /// Number of evaluation passes actually run.
    pub fn misses(&self) -> usize {
        *self.misses.lock().expect("cache lock")
    }
}

/// Candidate predictions on one labeled dataset, computed once.
#[derive(Debug, Clone)]
pub struct PredictionMatrix {
    classes: Vec<String>,
    golds: Vec<usize>,
    ids: Vec<String>,
    /// `probs[model][sample]`
    probs: Vec<Arc<Vec<ProbVector>>>,
}

impl PredictionMatrix {
    pub fn new(
        classes: Vec<String>,
        golds: Vec<usize>,
        ids: Vec<String>,
        probs: Vec<Vec<ProbVector>>,
    ) -> Result<Self> {
        if ids.len() != probs.len() {
            return Err(Error::LengthMismatch {
                left: ids.len(),
                right: probs.len(),
            });
        }
        let m = PredictionMatrix {
            classes,
            golds,
            ids,
            probs: probs.into_iter().map(Arc::new).collect(),
        };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        if self.golds.is_empty() {
            return Err(Error::Precondition("empty validation set".into()));
        }
        for (i, id) in self.ids.iter().enumerate() {
            if self.ids[..i].contains(id) {
                return Err(Error::InvalidSpec(format!("candidate `{id}` listed twice")));
            }
        }
        let k = self.classes.len();
        if let Some(&g) = self.golds.iter().find(|&&g| g >= k) {
            return Err(Error::UnknownLabel(g.to_string()));
        }
        for row in &self.probs {
            if row.len() != self.golds.len() {
                return Err(Error::LengthMismatch {
                    left: self.golds.len(),
                    right: row.len(),
                });
            }
            if let Some(p) = row.iter().find(|p| p.len() != k) {
                return Err(Error::DimensionMismatch {
                    left: k,
                    right: p.len(),
                });
            }
        }
        Ok(())
    }

    pub fn evaluate(
        registry: &Registry,
        ids: &[String],
        validation: &Dataset,
        cache: &PredictionCache,
    ) -> Result<Self> {
        let (models, space) = registry.resolve(ids, None)?;
        let golds = validation
            .documents()
            .iter()
            .map(|d| {
                space.label_of(d).ok_or_else(|| Error::Unlabeled {
                    id: d.id.clone(),
                    task: space.task,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let probs = models
            .iter()
            .map(|m| cache.predictions(m.as_ref(), validation))
            .collect();
        let m = PredictionMatrix {
            classes: space.classes,
            golds,
            ids: ids.to_vec(),
            probs,
        };
        m.check()?;
        Ok(m)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn golds(&self) -> &[usize] {
        &self.golds
    }

    pub fn predictions(&self, model: usize) -> &[ProbVector] {
        &self.probs[model]
    }

    /// Predicted class per sample for the ensemble of the given member indices.
    pub fn ensemble_predictions(
        &self,
        members: &[usize],
        strategy: Strategy,
    ) -> Result<Vec<usize>> {
        (0..self.golds.len())
            .map(|n| {
                let panel: Vec<ProbVector> =
                    members.iter().map(|&m| self.probs[m][n].clone()).collect();
                combine(strategy, &panel, None).map(|(label, _)| label)
            })
            .collect()
    }

    pub fn score(&self, members: &[usize], strategy: Strategy) -> Result<f64> {
        let preds = self.ensemble_predictions(members, strategy)?;
        ConfusionMatrix::from_indices(&self.golds, &preds, self.classes.clone())?.macro_f1()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetScore {
    pub size: usize,
    /// Sorted member ids.
    pub members: Vec<String>,
    pub macro_f1: f64,
}

/// Best validation macro-F1 subset for every size 1..=M. Ties go to the
/// lexicographically smallest sorted member list.
pub fn search_subsets(matrix: &PredictionMatrix, strategy: Strategy) -> Result<Vec<SubsetScore>> {
    let m = matrix.ids.len();
    if m > MAX_SEARCH_CANDIDATES {
        return Err(Error::TooManyCandidates(m));
    }
    if m == 0 {
        return Err(Error::Precondition("no candidates to search".into()));
    }
    let scored = (1u32..(1 << m))
        .into_par_iter()
        .map(|mask| {
            let members: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            let score = matrix.score(&members, strategy)?;
            let mut names: Vec<String> = members.iter().map(|&i| matrix.ids[i].clone()).collect();
            names.sort();
            Ok(SubsetScore {
                size: members.len(),
                members: names,
                macro_f1: score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best: Vec<Option<SubsetScore>> = vec![None; m + 1];
    for s in scored {
        let slot = &mut best[s.size];
        let better = match slot {
            None => true,
            Some(b) => {
                s.macro_f1 > b.macro_f1 + SCORE_TIE
                    || ((s.macro_f1 - b.macro_f1).abs() <= SCORE_TIE && s.members < b.members)
            }
        };
        if better {
            *slot = Some(s);
        }
    }
    Ok(best.into_iter().flatten().collect())
}

pub fn render_search_csv(rows: &[SubsetScore]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["size", "members", "macro_f1"])?;
    for r in rows {
        w.write_record([
            r.size.to_string(),
            r.members.join("+"),
            format!("{:.6}", r.macro_f1),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io("writing search table", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn render_search_text(rows: &[SubsetScore]) -> String {
    let width = rows
        .iter()
        .map(|r| r.members.join(", ").len())
        .chain([7])
        .max()
        .unwrap_or(7);
    let mut out = format!("{:>4}  {:width$}  {:>8}\n", "size", "members", "macro-F1");
    for r in rows {
        out.push_str(&format!(
            "{:>4}  {:width$}  {:>8.4}\n",
            r.size,
            r.members.join(", "),
            r.macro_f1
        ));
    }
    out
}

/// A category-stage ensemble plus one fine-stage ensemble per category.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalSpec {
    hierarchy: Arc<LabelHierarchy>,
    category: EnsembleSpec,
    fine: BTreeMap<String, EnsembleSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalPrediction {
    pub category: String,
    pub fine: String,
    pub category_probs: ProbVector,
    pub fine_probs: ProbVector,
}

impl HierarchicalSpec {
    pub fn new(
        hierarchy: Arc<LabelHierarchy>,
        category: EnsembleSpec,
        fine: BTreeMap<String, EnsembleSpec>,
    ) -> Result<Self> {
        let categories = hierarchy.classes(Task::B);
        if let Some(c) = categories.iter().find(|c| !fine.contains_key(*c)) {
            return Err(Error::InvalidSpec(format!(
                "category `{c}` has no fine-stage ensemble"
            )));
        }
        if let Some(extra) = fine.keys().find(|k| !categories.contains(k)) {
            return Err(Error::InvalidSpec(format!("`{extra}` is not a category")));
        }
        Ok(HierarchicalSpec {
            hierarchy,
            category,
            fine,
        })
    }

    pub fn hierarchy(&self) -> &Arc<LabelHierarchy> {
        &self.hierarchy
    }

    pub fn category_stage(&self) -> &EnsembleSpec {
        &self.category
    }

    pub fn fine_stage(&self, category: &str) -> Option<&EnsembleSpec> {
        self.fine.get(category)
    }

    /// Check every stage against the registry before predicting.
    pub fn resolve(&self, registry: &Registry) -> Result<()> {
        registry.resolve(
            &self.category.members,
            Some(&LabelSpace::for_task(&self.hierarchy, Task::B)),
        )?;
        for (cat, spec) in &self.fine {
            registry.resolve(
                &spec.members,
                Some(&LabelSpace::children_of(&self.hierarchy, cat)?),
            )?;
        }
        Ok(())
    }
}

pub fn predict_hierarchical(
    spec: &HierarchicalSpec,
    registry: &Registry,
    text: &str,
) -> Result<HierarchicalPrediction> {
    let cat_space = LabelSpace::for_task(&spec.hierarchy, Task::B);
    let (models, _) = registry.resolve(&spec.category.members, Some(&cat_space))?;
    let category = predict_resolved(&spec.category, &models, &cat_space, text)?;
    let fine_spec = &spec.fine[&category.label];
    let fine_space = LabelSpace::children_of(&spec.hierarchy, &category.label)?;
    let (models, _) = registry.resolve(&fine_spec.members, Some(&fine_space))?;
    let fine = predict_resolved(fine_spec, &models, &fine_space, text)?;
    Ok(HierarchicalPrediction {
        category: category.label,
        fine: fine.label,
        category_probs: category.probs,
        fine_probs: fine.probs,
    })
}

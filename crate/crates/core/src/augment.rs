//! Minority-class growth from an external candidate pool.
//!
//! Each candidate is scored by its mean cosine similarity to the anchor
//! documents of the target class (the mean of the per-anchor similarities,
//! not the similarity to the mean anchor vector). Candidates at or above the
//! threshold, and optionally within a set of origin classes, are relabeled
//! and appended to the base dataset.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Document, Task};
use crate::error::{Error, Result};
use crate::features::{cosine_similarity, DenseVector, EmbeddingTable};

pub const DEFAULT_THRESHOLD: f64 = 0.45;

#[derive(Debug, Clone)]
pub struct AugmentPlan {
    pub task: Task,
    pub target_class: String,
    pub anchors: Vec<String>,
    pub pool: Dataset,
    pub threshold: f64,
    /// Admit only pool documents whose origin label is listed.
    pub source_classes: Option<Vec<String>>,
    /// Keep at most this many of the best-scoring admitted candidates.
    pub max_k: Option<usize>,
}

impl AugmentPlan {
    pub fn new(
        task: Task,
        target_class: impl Into<String>,
        anchors: Vec<String>,
        pool: Dataset,
    ) -> Self {
        AugmentPlan {
            task,
            target_class: target_class.into(),
            anchors,
            pool,
            threshold: DEFAULT_THRESHOLD,
            source_classes: None,
            max_k: None,
        }
    }

    /// Anchors are the base documents already labeled with the target class.
    pub fn from_base(base: &Dataset, task: Task, target_class: &str, pool: Dataset) -> Self {
        let anchors = base
            .documents()
            .iter()
            .filter(|d| d.label(task) == Some(target_class))
            .map(|d| d.id.clone())
            .collect();
        AugmentPlan::new(task, target_class, anchors, pool)
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_source_classes(mut self, classes: Vec<String>) -> Self {
        self.source_classes = Some(classes);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.anchors.is_empty() {
            return Err(Error::Precondition(
                "augmentation needs at least one anchor".into(),
            ));
        }
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(Error::Precondition(format!(
                "threshold {} outside [-1, 1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Mean of `cosine_similarity(candidate, anchor)` over the anchors.
pub fn mean_similarity(candidate: &DenseVector, anchors: &[&DenseVector]) -> Result<f64> {
    if anchors.is_empty() {
        return Err(Error::Precondition("no anchors".into()));
    }
    let mut sum = 0.0;
    for a in anchors {
        sum += cosine_similarity(candidate, a)?;
    }
    Ok(sum / anchors.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Admitted,
    BelowThreshold,
    FilteredByClass,
    OverCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub id: String,
    pub score: f64,
    pub origin_label: Option<String>,
    pub verdict: Verdict,
}

/// Score every pool document, sorted by descending score then id.
pub fn score_candidates(
    plan: &AugmentPlan,
    embeddings: &EmbeddingTable,
) -> Result<Vec<CandidateScore>> {
    plan.validate()?;
    let anchors = plan
        .anchors
        .iter()
        .map(|id| {
            embeddings
                .get(id)
                .ok_or_else(|| Error::MissingEmbedding(id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let docs = plan.pool.documents();
    let mut scored = docs
        .par_iter()
        .map(|doc| {
            let v = embeddings
                .get(&doc.id)
                .ok_or_else(|| Error::MissingEmbedding(doc.id.clone()))?;
            Ok(CandidateScore {
                id: doc.id.clone(),
                score: mean_similarity(v, &anchors)?,
                origin_label: doc.origin_label.clone(),
                verdict: Verdict::BelowThreshold,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| match b.score.total_cmp(&a.score) {
        Ordering::Equal => a.id.cmp(&b.id),
        o => o,
    });
    let mut admitted = 0usize;
    for c in &mut scored {
        c.verdict = if c.score < plan.threshold {
            Verdict::BelowThreshold
        } else if plan.source_classes.as_ref().is_some_and(|allowed| {
            !c.origin_label
                .as_ref()
                .is_some_and(|l| allowed.iter().any(|a| a == l))
        }) {
            Verdict::FilteredByClass
        } else if plan.max_k.is_some_and(|k| admitted >= k) {
            Verdict::OverCap
        } else {
            admitted += 1;
            Verdict::Admitted
        };
    }
    Ok(scored)
}

/// Ids of the admitted candidates, best first.
pub fn select_candidates(plan: &AugmentPlan, embeddings: &EmbeddingTable) -> Result<Vec<String>> {
    Ok(score_candidates(plan, embeddings)?
        .into_iter()
        .filter(|c| c.verdict == Verdict::Admitted)
        .map(|c| c.id)
        .collect())
}

/// Append the selected pool documents relabeled as the target class (plus
/// its ancestors). Their other labels are dropped; the source tag is kept.
pub fn apply_augmentation(
    base: &Dataset,
    plan: &AugmentPlan,
    embeddings: &EmbeddingTable,
) -> Result<Dataset> {
    let hierarchy = base.hierarchy();
    if !hierarchy.contains(plan.task, &plan.target_class) {
        return Err(Error::UnknownLabel(plan.target_class.clone()));
    }
    let selected = select_candidates(plan, embeddings)?;
    let implied = hierarchy.with_ancestors(plan.task, &plan.target_class);
    let mut documents = base.documents().to_vec();
    for id in &selected {
        let src = plan.pool.get(id).expect("selected ids come from the pool");
        let mut doc = Document {
            labels: Default::default(),
            ..src.clone()
        };
        for (task, class) in &implied {
            doc.labels.insert(*task, class.clone());
        }
        documents.push(doc);
    }
    Dataset::new(
        format!("{}+{}", base.name(), plan.pool.name()),
        hierarchy.clone(),
        documents,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelHierarchy;
    use std::sync::Arc;

    fn dv(v: &[f64]) -> DenseVector {
        DenseVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn mean_similarity_examples() {
        let a = dv(&[0.3, 0.4]);
        assert!((mean_similarity(&a, &[&a]).unwrap() - 1.0).abs() < 1e-12);
        let (e1, e2) = (dv(&[1.0, 0.0]), dv(&[0.0, 1.0]));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let c = dv(&[s, s]);
        assert!((mean_similarity(&c, &[&e1, &e2]).unwrap() - s).abs() < 1e-12);
        let orth = dv(&[0.0, 0.0, 1.0]);
        let a3 = [dv(&[1.0, 0.0, 0.0]), dv(&[0.0, 2.0, 0.0])];
        assert_eq!(mean_similarity(&orth, &[&a3[0], &a3[1]]).unwrap(), 0.0);
    }

    fn fixture() -> (Dataset, Dataset, EmbeddingTable) {
        let h = Arc::new(LabelHierarchy::canonical());
        let threat = "threats, plans to harm and incitement";
        let base = Dataset::new(
            "base",
            h.clone(),
            vec![
                Document::new("b1", "t", "edos").with_label(Task::B, threat),
                Document::new("b2", "t", "edos").with_label(Task::B, "derogation"),
            ],
        )
        .unwrap();
        let mut p3 = Document::new("p3", "t", "exist");
        p3.origin_label = Some("sexual-violence".into());
        let pool = Dataset::new(
            "pool",
            h,
            vec![
                Document::new("p1", "t", "exist").with_label(Task::A, "sexist"),
                Document::new("p2", "t", "exist"),
                p3,
            ],
        )
        .unwrap();
        let mut t = EmbeddingTable::new(2);
        t.insert("b1", dv(&[1.0, 0.0])).unwrap();
        t.insert("b2", dv(&[0.0, 1.0])).unwrap();
        t.insert("p1", dv(&[1.0, 0.1])).unwrap();
        t.insert("p2", dv(&[0.1, 1.0])).unwrap();
        t.insert("p3", dv(&[1.0, 0.5])).unwrap();
        (base, pool, t)
    }

    #[test]
    fn threshold_extremes() {
        let (base, pool, t) = fixture();
        let plan = AugmentPlan::from_base(
            &base,
            Task::B,
            "threats, plans to harm and incitement",
            pool,
        );
        assert_eq!(plan.anchors, ["b1"]);
        let all = select_candidates(&plan.clone().with_threshold(-1.0), &t).unwrap();
        assert_eq!(all, ["p1", "p3", "p2"]);
        assert!(select_candidates(&plan.with_threshold(1.0), &t)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn source_class_filter_and_cap() {
        let (base, pool, t) = fixture();
        let plan = AugmentPlan::from_base(
            &base,
            Task::B,
            "threats, plans to harm and incitement",
            pool,
        )
        .with_threshold(0.5)
        .with_source_classes(vec!["sexual-violence".into()]);
        let scores = score_candidates(&plan, &t).unwrap();
        let verdicts: Vec<_> = scores.iter().map(|c| (c.id.as_str(), c.verdict)).collect();
        assert_eq!(
            verdicts,
            [
                ("p1", Verdict::FilteredByClass),
                ("p3", Verdict::Admitted),
                ("p2", Verdict::BelowThreshold)
            ]
        );
        let mut capped = plan.clone();
        capped.source_classes = None;
        capped.max_k = Some(1);
        assert_eq!(select_candidates(&capped, &t).unwrap(), ["p1"]);
    }

    #[test]
    fn augmentation_relabels_and_appends() {
        let (base, pool, t) = fixture();
        let threat = "threats, plans to harm and incitement";
        let plan = AugmentPlan::from_base(&base, Task::B, threat, pool).with_threshold(0.5);
        let out = apply_augmentation(&base, &plan, &t).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(&out.documents()[..2], base.documents());
        let added = &out.documents()[2];
        assert_eq!(added.id, "p1");
        assert_eq!(added.source, "exist");
        assert_eq!(added.label(Task::B), Some(threat));
        assert_eq!(added.label(Task::A), Some("sexist"));
    }

    #[test]
    fn empty_selection_is_identity() {
        let (base, pool, t) = fixture();
        let plan = AugmentPlan::from_base(
            &base,
            Task::B,
            "threats, plans to harm and incitement",
            pool,
        )
        .with_threshold(1.0);
        let out = apply_augmentation(&base, &plan, &t).unwrap();
        assert_eq!(out.documents(), base.documents());
    }

    #[test]
    fn missing_embedding_is_reported() {
        let (base, pool, mut t) = fixture();
        t = {
            let mut u = EmbeddingTable::new(2);
            for (id, v) in t.iter().filter(|(id, _)| *id != "p2") {
                u.insert(id, v.clone()).unwrap();
            }
            u
        };
        let plan = AugmentPlan::from_base(
            &base,
            Task::B,
            "threats, plans to harm and incitement",
            pool,
        );
        assert!(
            matches!(select_candidates(&plan, &t), Err(Error::MissingEmbedding(id)) if id == "p2")
        );
    }

    #[test]
    fn plan_validation() {
        let (_, pool, t) = fixture();
        let plan = AugmentPlan::new(Task::B, "derogation", vec![], pool.clone());
        assert!(select_candidates(&plan, &t).is_err());
        let plan =
            AugmentPlan::new(Task::B, "derogation", vec!["b1".into()], pool).with_threshold(1.5);
        assert!(select_candidates(&plan, &t).is_err());
    }
}

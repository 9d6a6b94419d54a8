use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::loss::softmax;
use super::{sha256_json, Classifier, ProbVector};
use crate::corpus::{Dataset, LabelSpace};
use crate::error::{Error, Result};
use crate::features::TfidfModel;

/// Multinomial Naive Bayes over raw token counts with additive smoothing.
/// Only the featurizer's vocabulary is used, not its idf weights.
#[derive(Debug, Clone, PartialEq)]
pub struct NbModel {
    space: LabelSpace,
    smoothing: f64,
    doc_counts: Vec<u64>,
    token_counts: Vec<Vec<f64>>,
    /// `-inf` for classes without training documents.
    log_prior: Vec<f64>,
    log_likelihood: Vec<Vec<f64>>,
    featurizer: Arc<TfidfModel>,
    featurizer_fingerprint: String,
}

#[derive(Serialize, Deserialize)]
pub(super) struct NbFile {
    space: LabelSpace,
    smoothing: f64,
    pub(super) featurizer_fingerprint: String,
    doc_counts: Vec<u64>,
    token_counts: Vec<Vec<f64>>,
}

impl NbModel {
    fn build(
        space: LabelSpace,
        smoothing: f64,
        doc_counts: Vec<u64>,
        token_counts: Vec<Vec<f64>>,
        featurizer: Arc<TfidfModel>,
        featurizer_fingerprint: String,
    ) -> Result<Self> {
        if !(smoothing.is_finite() && smoothing > 0.0) {
            return Err(Error::Precondition(format!(
                "smoothing {smoothing} must be > 0"
            )));
        }
        let vocab = featurizer.dim();
        if doc_counts.len() != space.len()
            || token_counts.len() != space.len()
            || token_counts.iter().any(|c| c.len() != vocab)
        {
            return Err(Error::ShapeMismatch("naive bayes counts".into()));
        }
        let n_docs: u64 = doc_counts.iter().sum();
        if n_docs == 0 {
            return Err(Error::Precondition("no training documents".into()));
        }
        let log_prior = doc_counts
            .iter()
            .map(|&c| (c as f64 / n_docs as f64).ln())
            .collect();
        let log_likelihood = token_counts
            .iter()
            .map(|counts| {
                let total: f64 = counts.iter().sum();
                let denom = (total + smoothing * vocab as f64).ln();
                counts
                    .iter()
                    .map(|&c| (c + smoothing).ln() - denom)
                    .collect()
            })
            .collect();
        Ok(NbModel {
            space,
            smoothing,
            doc_counts,
            token_counts,
            log_prior,
            log_likelihood,
            featurizer,
            featurizer_fingerprint,
        })
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn log_prior(&self) -> &[f64] {
        &self.log_prior
    }

    pub fn log_likelihood(&self, class: usize) -> &[f64] {
        &self.log_likelihood[class]
    }

    pub fn featurizer_fingerprint(&self) -> &str {
        &self.featurizer_fingerprint
    }

    pub(super) fn to_file(&self) -> NbFile {
        NbFile {
            space: self.space.clone(),
            smoothing: self.smoothing,
            featurizer_fingerprint: self.featurizer_fingerprint.clone(),
            doc_counts: self.doc_counts.clone(),
            token_counts: self.token_counts.clone(),
        }
    }

    pub(super) fn from_file(f: NbFile, featurizer: Arc<TfidfModel>) -> Result<Self> {
        NbModel::build(
            f.space,
            f.smoothing,
            f.doc_counts,
            f.token_counts,
            featurizer,
            f.featurizer_fingerprint,
        )
    }
}

impl Classifier for NbModel {
    fn label_space(&self) -> &LabelSpace {
        &self.space
    }

    fn predict_proba(&self, text: &str) -> ProbVector {
        let counts = self.featurizer.counts(text);
        let scores: Vec<f64> = self
            .log_prior
            .iter()
            .zip(&self.log_likelihood)
            .map(|(&prior, lik)| {
                if prior == f64::NEG_INFINITY {
                    prior
                } else {
                    prior + counts.iter().map(|&(i, c)| c * lik[i]).sum::<f64>()
                }
            })
            .collect();
        ProbVector::from_normalized(softmax(&scores))
    }

    fn fingerprint(&self) -> String {
        sha256_json(&self.to_file())
    }
}

pub fn train_nb(
    train: &Dataset,
    featurizer: Arc<TfidfModel>,
    space: &LabelSpace,
    smoothing: f64,
) -> Result<NbModel> {
    let vocab = featurizer.dim();
    let mut doc_counts = vec![0u64; space.len()];
    let mut token_counts = vec![vec![0.0; vocab]; space.len()];
    for doc in train.documents() {
        let k = space.label_of(doc).ok_or_else(|| Error::Unlabeled {
            id: doc.id.clone(),
            task: space.task,
        })?;
        doc_counts[k] += 1;
        for (i, c) in featurizer.counts(&doc.text) {
            token_counts[k][i] += c;
        }
    }
    let fp = featurizer.fingerprint();
    NbModel::build(
        space.clone(),
        smoothing,
        doc_counts,
        token_counts,
        featurizer,
        fp,
    )
}

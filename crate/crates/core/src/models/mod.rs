//! Desk-scale classifiers behind a common probability-prediction contract.

mod linear;
pub mod loss;
mod nb;
pub mod optim;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::LabelSpace;
use crate::error::{Error, Result};
use crate::features::TfidfModel;

pub use linear::{train_linear, train_linear_tracked, LinearModel, TrainConfig, TrainOutcome};
pub use loss::{loss_gradient, loss_value, LossSpec};
pub use nb::{train_nb, NbModel};
pub use optim::{AdamW, AdamWConfig};

/// A probability distribution over a label space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub const TOLERANCE: f64 = 1e-9;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::NonFinite(format!("probability vector {values:?}")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > Self::TOLERANCE {
            return Err(Error::NonFinite(format!("probabilities sum to {sum}")));
        }
        Ok(ProbVector(values))
    }

    /// For values already produced by a softmax or sigmoid.
    pub(crate) fn from_normalized(values: Vec<f64>) -> Self {
        debug_assert!((values.iter().sum::<f64>() - 1.0).abs() <= Self::TOLERANCE);
        ProbVector(values)
    }

    pub fn uniform(k: usize) -> Self {
        ProbVector(vec![1.0 / k as f64; k])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest probability; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Anything that maps text to a distribution over a fixed label space.
pub trait Classifier: Send + Sync {
    fn label_space(&self) -> &LabelSpace;
    fn predict_proba(&self, text: &str) -> ProbVector;
    /// Stable identity of the trained parameters.
    fn fingerprint(&self) -> String;

    fn predict(&self, text: &str) -> usize {
        self.predict_proba(text).argmax()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    NaiveBayes(NbModel),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
enum ModelFile {
    Linear(linear::LinearFile),
    NaiveBayes(nb::NbFile),
}

impl Model {
    pub fn featurizer_fingerprint(&self) -> &str {
        match self {
            Model::Linear(m) => m.featurizer_fingerprint(),
            Model::NaiveBayes(m) => m.featurizer_fingerprint(),
        }
    }

    fn to_file(&self) -> ModelFile {
        match self {
            Model::Linear(m) => ModelFile::Linear(m.to_file()),
            Model::NaiveBayes(m) => ModelFile::NaiveBayes(m.to_file()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("model serializes")
    }

    /// Parse a model file; the featurizer whose fingerprint the file records
    /// is picked from `featurizers`.
    pub fn from_json(json: &str, featurizers: &[Arc<TfidfModel>]) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(json)?;
        let expected = match &file {
            ModelFile::Linear(f) => f.featurizer_fingerprint.clone(),
            ModelFile::NaiveBayes(f) => f.featurizer_fingerprint.clone(),
        };
        let featurizer = featurizers
            .iter()
            .find(|f| f.fingerprint() == expected)
            .cloned()
            .ok_or_else(|| Error::FeaturizerMismatch {
                expected,
                found: featurizers
                    .iter()
                    .map(|f| f.fingerprint())
                    .collect::<Vec<_>>()
                    .join(","),
            })?;
        match file {
            ModelFile::Linear(f) => Ok(Model::Linear(LinearModel::from_file(f, featurizer)?)),
            ModelFile::NaiveBayes(f) => Ok(Model::NaiveBayes(NbModel::from_file(f, featurizer)?)),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path, featurizers: &[Arc<TfidfModel>]) -> Result<Self> {
        let json = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Model::from_json(&json, featurizers)
    }
}

impl Classifier for Model {
    fn label_space(&self) -> &LabelSpace {
        match self {
            Model::Linear(m) => m.label_space(),
            Model::NaiveBayes(m) => m.label_space(),
        }
    }

    fn predict_proba(&self, text: &str) -> ProbVector {
        match self {
            Model::Linear(m) => m.predict_proba(text),
            Model::NaiveBayes(m) => m.predict_proba(text),
        }
    }

    fn fingerprint(&self) -> String {
        match self {
            Model::Linear(m) => m.fingerprint(),
            Model::NaiveBayes(m) => m.fingerprint(),
        }
    }
}

pub(crate) fn sha256_json<T: Serialize>(value: &T) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(value).expect("value serializes"));
    hex::encode(h.finalize())
}

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{link, loss_from_logits, loss_gradient, LossSpec};
use super::optim::{AdamW, AdamWConfig};
use super::{sha256_json, Classifier, ProbVector};
use crate::corpus::{Dataset, LabelSpace};
use crate::error::{Error, Result};
use crate::features::{SparseVector, TfidfModel};
use crate::metrics::ConfusionMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossSpec::CrossEntropy,
            epochs: 10,
            batch_size: 8,
            optimizer: AdamWConfig::default(),
            seed: 0,
        }
    }
}

/// Linear scores over TF-IDF features. Binary spaces use a single sigmoid
/// row; larger spaces use one softmax row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    space: LabelSpace,
    config: TrainConfig,
    dim: usize,
    /// Row-major `rows × dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    featurizer: Arc<TfidfModel>,
    featurizer_fingerprint: String,
}

#[derive(Serialize, Deserialize)]
pub(super) struct LinearFile {
    space: LabelSpace,
    training: TrainConfig,
    pub(super) featurizer_fingerprint: String,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

fn head_rows(classes: usize) -> usize {
    if classes == 2 {
        1
    } else {
        classes
    }
}

impl LinearModel {
    /// All-zero parameters.
    pub fn zeros(space: LabelSpace, featurizer: Arc<TfidfModel>, config: TrainConfig) -> Self {
        let rows = head_rows(space.len());
        let dim = featurizer.dim();
        LinearModel {
            featurizer_fingerprint: featurizer.fingerprint(),
            space,
            config,
            dim,
            weights: vec![0.0; rows * dim],
            bias: vec![0.0; rows],
            featurizer,
        }
    }

    pub fn rows(&self) -> usize {
        self.bias.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn set_bias(&mut self, bias: Vec<f64>) -> Result<()> {
        if bias.len() != self.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} bias values for {} rows",
                bias.len(),
                self.rows()
            )));
        }
        self.bias = bias;
        Ok(())
    }

    pub fn training_config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn featurizer(&self) -> &Arc<TfidfModel> {
        &self.featurizer
    }

    pub fn featurizer_fingerprint(&self) -> &str {
        &self.featurizer_fingerprint
    }

    fn logits(&self, x: &SparseVector) -> Vec<f64> {
        (0..self.rows())
            .map(|r| {
                let row = &self.weights[r * self.dim..(r + 1) * self.dim];
                self.bias[r] + x.entries().iter().map(|&(i, v)| row[i] * v).sum::<f64>()
            })
            .collect()
    }

    fn proba_features(&self, x: &SparseVector) -> ProbVector {
        ProbVector::from_normalized(link(&self.logits(x)))
    }

    pub(super) fn to_file(&self) -> LinearFile {
        LinearFile {
            space: self.space.clone(),
            training: self.config,
            featurizer_fingerprint: self.featurizer_fingerprint.clone(),
            weights: self
                .weights
                .chunks(self.dim.max(1))
                .map(<[f64]>::to_vec)
                .collect(),
            bias: self.bias.clone(),
        }
    }

    pub(super) fn from_file(f: LinearFile, featurizer: Arc<TfidfModel>) -> Result<Self> {
        let rows = head_rows(f.space.len());
        let dim = featurizer.dim();
        if f.bias.len() != rows
            || f.weights.len() != rows
            || f.weights.iter().any(|w| w.len() != dim)
        {
            return Err(Error::ShapeMismatch("linear model parameters".into()));
        }
        let weights: Vec<f64> = f.weights.into_iter().flatten().collect();
        if weights.iter().chain(&f.bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear model parameters".into()));
        }
        Ok(LinearModel {
            space: f.space,
            config: f.training,
            dim,
            weights,
            bias: f.bias,
            featurizer,
            featurizer_fingerprint: f.featurizer_fingerprint,
        })
    }
}

impl Classifier for LinearModel {
    fn label_space(&self) -> &LabelSpace {
        &self.space
    }

    fn predict_proba(&self, text: &str) -> ProbVector {
        self.proba_features(&self.featurizer.transform(text))
    }

    fn fingerprint(&self) -> String {
        sha256_json(&self.to_file())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: LinearModel,
    /// Mean training loss after each epoch.
    pub epoch_losses: Vec<f64>,
    /// Validation macro-F1 after each epoch, when a validation set was given.
    pub validation_f1: Vec<f64>,
    /// 1-based epoch whose parameters were returned.
    pub chosen_epoch: usize,
}

fn encode(
    d: &Dataset,
    featurizer: &TfidfModel,
    space: &LabelSpace,
) -> Result<(Vec<SparseVector>, Vec<usize>)> {
    d.documents()
        .iter()
        .map(|doc| {
            let gold = space.label_of(doc).ok_or_else(|| Error::Unlabeled {
                id: doc.id.clone(),
                task: space.task,
            })?;
            Ok((featurizer.transform(&doc.text), gold))
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().unzip())
}

/// Mini-batch AdamW on the mean per-sample loss; returns final-epoch parameters.
pub fn train_linear(
    train: &Dataset,
    featurizer: Arc<TfidfModel>,
    space: &LabelSpace,
    config: &TrainConfig,
) -> Result<LinearModel> {
    Ok(train_linear_tracked(train, featurizer, space, config, None)?.model)
}

/// Like [`train_linear`], also recording per-epoch losses. With a validation
/// set the parameters of the best validation macro-F1 epoch are returned
/// (earliest epoch on ties).
pub fn train_linear_tracked(
    train: &Dataset,
    featurizer: Arc<TfidfModel>,
    space: &LabelSpace,
    config: &TrainConfig,
    validation: Option<&Dataset>,
) -> Result<TrainOutcome> {
    if config.epochs == 0 {
        return Err(Error::Precondition("epochs must be at least 1".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Precondition("batch size must be at least 1".into()));
    }
    if train.is_empty() {
        return Err(Error::Precondition("empty training set".into()));
    }
    config.loss.validate(space.len())?;

    let (xs, golds) = encode(train, &featurizer, space)?;
    let val = validation
        .map(|v| encode(v, &featurizer, space))
        .transpose()?;

    let mut model = LinearModel::zeros(space.clone(), featurizer, *config);
    let (rows, dim) = (model.rows(), model.dim);
    let n_weights = rows * dim;
    let mut params = vec![0.0; n_weights + rows];
    let mut grads = vec![0.0; params.len()];
    let mut opt = AdamW::new(config.optimizer, params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut validation_f1 = Vec::new();
    let mut best: Option<(f64, usize, Vec<f64>)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let logits = model.logits(&xs[i]);
                let g = loss_gradient(&config.loss, &logits, golds[i])?;
                for (r, gr) in g.iter().enumerate() {
                    let gr = gr * scale;
                    grads[n_weights + r] += gr;
                    let row = &mut grads[r * dim..(r + 1) * dim];
                    for &(j, v) in xs[i].entries() {
                        row[j] += gr * v;
                    }
                }
            }
            opt.step(&mut params, &grads)?;
            model.weights.copy_from_slice(&params[..n_weights]);
            model.bias.copy_from_slice(&params[n_weights..]);
        }

        let mut total = 0.0;
        for (x, &g) in xs.iter().zip(&golds) {
            total += loss_from_logits(&config.loss, &model.logits(x), g)?;
        }
        let mean = total / xs.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
        }
        epoch_losses.push(mean);

        if let Some((vx, vg)) = &val {
            let preds: Vec<usize> = vx
                .iter()
                .map(|x| model.proba_features(x).argmax())
                .collect();
            let f1 =
                ConfusionMatrix::from_indices(vg, &preds, space.classes.clone())?.macro_f1()?;
            validation_f1.push(f1);
            if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
                best = Some((f1, epoch, params.clone()));
            }
        }
    }

    let chosen_epoch = match best {
        Some((_, epoch, p)) => {
            model.weights.copy_from_slice(&p[..n_weights]);
            model.bias.copy_from_slice(&p[n_weights..]);
            epoch
        }
        None => config.epochs,
    };
    Ok(TrainOutcome {
        model,
        epoch_losses,
        validation_f1,
        chosen_epoch,
    })
}

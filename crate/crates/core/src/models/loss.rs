//! Per-sample losses and their analytic gradients with respect to logits.
//!
//! One logit means a sigmoid head over `[negative, positive]`; two or more
//! logits mean a softmax head. For the focal loss `p_t` is the probability of
//! the gold class under either head.

use serde::{Deserialize, Serialize};

use super::ProbVector;
use crate::error::{Error, Result};

/// Clamp applied to probabilities before taking logarithms.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    CrossEntropy,
    /// Binary cross-entropy with the positive term scaled by `weight`.
    WeightedBce {
        weight: f64,
    },
    Focal {
        gamma: f64,
        alpha: f64,
    },
}

impl LossSpec {
    pub const FOCAL_DEFAULT: LossSpec = LossSpec::Focal {
        gamma: 2.0,
        alpha: 1.0,
    };

    pub fn validate(&self, classes: usize) -> Result<()> {
        let ok = match *self {
            LossSpec::CrossEntropy => true,
            LossSpec::WeightedBce { weight } => {
                if classes != 2 {
                    return Err(Error::SpecTaskMismatch {
                        loss: self.name(),
                        classes,
                    });
                }
                weight.is_finite() && weight > 0.0
            }
            LossSpec::Focal { gamma, alpha } => {
                gamma.is_finite() && gamma >= 0.0 && alpha.is_finite() && alpha > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("loss parameters of {self:?}")))
        }
    }

    pub fn name(&self) -> String {
        match self {
            LossSpec::CrossEntropy => "cross_entropy".into(),
            LossSpec::WeightedBce { weight } => format!("weighted_bce(w={weight})"),
            LossSpec::Focal { gamma, alpha } => format!("focal(gamma={gamma}, alpha={alpha})"),
        }
    }
}

fn ln_clamped(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS).ln()
}

fn check_gold(gold: usize, classes: usize) -> Result<()> {
    if gold >= classes {
        return Err(Error::ShapeMismatch(format!(
            "gold class {gold} out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// Loss of one sample given its predicted distribution.
pub fn loss_value(spec: &LossSpec, probs: &ProbVector, gold: usize) -> Result<f64> {
    let k = probs.len();
    spec.validate(k)?;
    check_gold(gold, k)?;
    let p = probs.values();
    Ok(match *spec {
        LossSpec::CrossEntropy => -ln_clamped(p[gold]),
        LossSpec::WeightedBce { weight } => {
            let y = if gold == 1 { 1.0 } else { 0.0 };
            -(weight * y * ln_clamped(p[1]) + (1.0 - y) * ln_clamped(p[0]))
        }
        LossSpec::Focal { gamma, alpha } => {
            let pt = p[gold];
            -alpha * (1.0 - pt).powf(gamma) * ln_clamped(pt)
        }
    })
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Distribution produced by a head: sigmoid pair for one logit, softmax
/// otherwise.
pub fn link(logits: &[f64]) -> Vec<f64> {
    if logits.len() == 1 {
        let p = sigmoid(logits[0]);
        vec![1.0 - p, p]
    } else {
        softmax(logits)
    }
}

pub fn loss_from_logits(spec: &LossSpec, logits: &[f64], gold: usize) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::ShapeMismatch("empty logits".into()));
    }
    loss_value(spec, &ProbVector::from_normalized(link(logits)), gold)
}

/// `∂L/∂p_t · p_t`, the factor shared by the focal gradient under both heads.
fn focal_factor(gamma: f64, alpha: f64, pt: f64) -> f64 {
    let q = 1.0 - pt;
    // the modulating term vanishes at gamma = 0 and in the limit p_t → 1
    let modulating = if gamma == 0.0 || q == 0.0 {
        0.0
    } else {
        alpha * gamma * q.powf(gamma - 1.0) * pt * ln_clamped(pt)
    };
    modulating - alpha * q.powf(gamma)
}

/// Exact gradient of `loss_value ∘ link` at `logits`.
pub fn loss_gradient(spec: &LossSpec, logits: &[f64], gold: usize) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::ShapeMismatch("empty logits".into()));
    }
    let classes = logits.len().max(2);
    spec.validate(classes)?;
    check_gold(gold, classes)?;

    if logits.len() == 1 {
        let p = sigmoid(logits[0]);
        let y = if gold == 1 { 1.0 } else { 0.0 };
        let g = match *spec {
            LossSpec::CrossEntropy => p - y,
            LossSpec::WeightedBce { weight } => -weight * y * (1.0 - p) + (1.0 - y) * p,
            LossSpec::Focal { gamma, alpha } => {
                // dp_t/dz = ±p_t(1 - p_t)
                let pt = if gold == 1 { p } else { 1.0 - p };
                let sign = if gold == 1 { 1.0 } else { -1.0 };
                sign * focal_factor(gamma, alpha, pt) * (1.0 - pt)
            }
        };
        return Ok(vec![g]);
    }

    let p = softmax(logits);
    let onehot = |j: usize| if j == gold { 1.0 } else { 0.0 };
    Ok(match *spec {
        LossSpec::CrossEntropy => (0..p.len()).map(|j| p[j] - onehot(j)).collect(),
        LossSpec::WeightedBce { weight } => {
            let scale = if gold == 1 { weight } else { 1.0 };
            (0..p.len()).map(|j| scale * (p[j] - onehot(j))).collect()
        }
        LossSpec::Focal { gamma, alpha } => {
            // dp_g/dz_j = p_g (δ_gj - p_j)
            let f = focal_factor(gamma, alpha, p[gold]);
            (0..p.len()).map(|j| f * (onehot(j) - p[j])).collect()
        }
    })
}

//! Classification heads and their losses.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numeric::{sigmoid_scalar, softmax, Vector};

/// Probabilities are floored at this value before taking logs.
pub const PROB_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    /// Single logistic unit; output is the probability of class 1.
    Sigmoid,
    /// Softmax over this many classes.
    Softmax(usize),
}

impl HeadKind {
    pub fn outputs(&self) -> usize {
        match self {
            HeadKind::Sigmoid => 1,
            HeadKind::Softmax(c) => *c,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            HeadKind::Sigmoid => 2,
            HeadKind::Softmax(c) => *c,
        }
    }

    pub fn activate(&self, logits: &[f64]) -> Vector {
        match self {
            HeadKind::Sigmoid => Vector::from_vec(vec![sigmoid_scalar(logits[0])]),
            HeadKind::Softmax(_) => softmax(logits),
        }
    }

    /// Threshold 0.5 (strictly above picks class 1) or argmax with ties to
    /// the lowest index.
    pub fn predict(&self, probs: &[f64]) -> usize {
        match self {
            HeadKind::Sigmoid => usize::from(probs[0] > 0.5),
            HeadKind::Softmax(_) => argmax(probs),
        }
    }

    /// Probability mass assigned to `class`.
    pub fn class_probability(&self, probs: &[f64], class: usize) -> f64 {
        match self {
            HeadKind::Sigmoid if class == 1 => probs[0],
            HeadKind::Sigmoid => 1.0 - probs[0],
            HeadKind::Softmax(_) => probs[class],
        }
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    BinaryCrossEntropy,
    /// Targets expanded to one-hot vectors.
    CategoricalCrossEntropy,
    /// Targets used as integer class indices.
    SparseCategoricalCrossEntropy,
    /// Squared error against one-hot targets; not a classification default.
    MeanSquaredError,
}

impl LossKind {
    pub fn compatible_with(&self, head: HeadKind) -> bool {
        match self {
            LossKind::BinaryCrossEntropy => head == HeadKind::Sigmoid,
            LossKind::CategoricalCrossEntropy | LossKind::SparseCategoricalCrossEntropy => {
                matches!(head, HeadKind::Softmax(_))
            }
            LossKind::MeanSquaredError => true,
        }
    }

    pub fn default_for(head: HeadKind) -> Self {
        match head {
            HeadKind::Sigmoid => LossKind::BinaryCrossEntropy,
            HeadKind::Softmax(_) => LossKind::SparseCategoricalCrossEntropy,
        }
    }

    /// Loss of one example and its gradient with respect to the head logits.
    pub fn loss_and_logit_grad(&self, head: HeadKind, probs: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
        if label >= head.num_classes() {
            return Err(Error::Contract(format!(
                "label {label} out of range for {} classes",
                head.num_classes()
            )));
        }
        match self {
            LossKind::BinaryCrossEntropy => {
                let y = label as f64;
                Ok((bce_loss(probs[0], y)?, vec![probs[0] - y]))
            }
            LossKind::CategoricalCrossEntropy => {
                let target = one_hot(label, probs.len());
                let grad = probs.iter().zip(&target).map(|(p, y)| p - y).collect();
                Ok((cce_loss(probs, &target)?, grad))
            }
            LossKind::SparseCategoricalCrossEntropy => {
                let mut grad = probs.to_vec();
                grad[label] -= 1.0;
                Ok((sparse_cce_loss(probs, label)?, grad))
            }
            LossKind::MeanSquaredError => {
                let target: Vec<f64> = match head {
                    HeadKind::Sigmoid => vec![label as f64],
                    HeadKind::Softmax(c) => one_hot(label, c),
                };
                let n = probs.len() as f64;
                let loss = probs.iter().zip(&target).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / n;
                let dp: Vec<f64> = probs.iter().zip(&target).map(|(p, y)| 2.0 * (p - y) / n).collect();
                let grad = match head {
                    HeadKind::Sigmoid => vec![dp[0] * probs[0] * (1.0 - probs[0])],
                    HeadKind::Softmax(_) => {
                        let inner: f64 = dp.iter().zip(probs).map(|(d, p)| d * p).sum();
                        probs.iter().zip(&dp).map(|(p, d)| p * (d - inner)).collect()
                    }
                };
                Ok((loss, grad))
            }
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary_crossentropy" | "bce" => Ok(LossKind::BinaryCrossEntropy),
            "categorical_crossentropy" | "cce" => Ok(LossKind::CategoricalCrossEntropy),
            "sparse_categorical_crossentropy" | "sparse_cce" => Ok(LossKind::SparseCategoricalCrossEntropy),
            "mse" => Ok(LossKind::MeanSquaredError),
            other => Err(Error::Config(format!(
                "unknown loss {other:?} (binary_crossentropy|categorical_crossentropy|sparse_categorical_crossentropy|mse)"
            ))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::BinaryCrossEntropy => "binary_crossentropy",
            LossKind::CategoricalCrossEntropy => "categorical_crossentropy",
            LossKind::SparseCategoricalCrossEntropy => "sparse_categorical_crossentropy",
            LossKind::MeanSquaredError => "mse",
        })
    }
}

pub fn one_hot(class: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[class] = 1.0;
    v
}

/// `−y ln ŷ − (1 − y) ln(1 − ŷ)`, with zero-weight terms skipped and
/// log arguments floored at [`PROB_EPSILON`].
/// Floor at `PROB_EPSILON` that lets NaN through, unlike `f64::max`.
fn floor_prob(p: f64) -> f64 {
    if p < PROB_EPSILON {
        PROB_EPSILON
    } else {
        p
    }
}

pub fn bce_loss(y_hat: f64, y: f64) -> Result<f64> {
    if y != 0.0 && y != 1.0 {
        return Err(Error::Contract(format!("binary target must be 0 or 1, got {y}")));
    }
    Ok(if y == 1.0 {
        -floor_prob(y_hat).ln()
    } else {
        -floor_prob(1.0 - y_hat).ln()
    })
}

/// `−Σ y_j ln ŷ_j` over a one-hot target.
pub fn cce_loss(probs: &[f64], target: &[f64]) -> Result<f64> {
    if probs.len() != target.len() {
        return Err(Error::Contract(format!(
            "target has {} classes, prediction has {}",
            target.len(),
            probs.len()
        )));
    }
    Ok(probs
        .iter()
        .zip(target)
        .filter(|(_, &y)| y != 0.0)
        .map(|(&p, &y)| -y * floor_prob(p).ln())
        .sum::<f64>())
}

pub fn sparse_cce_loss(probs: &[f64], class: usize) -> Result<f64> {
    match probs.get(class) {
        Some(&p) => Ok(-floor_prob(p).ln()),
        None => Err(Error::Contract(format!(
            "class index {class} out of range for {} classes",
            probs.len()
        ))),
    }
}

/// Mean of per-example losses.
pub fn cost(losses: &[f64]) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::Contract("cost of an empty batch".into()));
    }
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

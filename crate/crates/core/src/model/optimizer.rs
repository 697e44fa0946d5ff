//! SGD, RMSProp and Adam over named parameter blocks.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::params::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    RmsProp,
    Adam,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "rmsprop" => Ok(OptimizerKind::RmsProp),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?} (sgd|rmsprop|adam)"))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::RmsProp => "rmsprop",
            OptimizerKind::Adam => "adam",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub rho: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Completed steps.
    pub t: u64,
    /// Per block: first moment (Adam) and mean square (RMSProp, Adam).
    slots: Vec<(Vec<f64>, Vec<f64>)>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {learning_rate}")));
        }
        Ok(OptimizerState {
            kind,
            learning_rate,
            rho: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            slots: Vec::new(),
        })
    }

    /// Accumulator shapes, one entry per block, empty before the first step.
    pub fn slot_lengths(&self) -> Vec<(usize, usize)> {
        self.slots.iter().map(|(m, v)| (m.len(), v.len())).collect()
    }

    /// Descends along `grads`, which must list one slice per block in the
    /// order of `params.blocks()`. Frozen blocks are left untouched.
    pub fn step<P: Parameters + ?Sized>(&mut self, params: &mut P, grads: &[Vec<f64>]) -> Result<()> {
        let mut blocks = params.blocks_mut();
        if blocks.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} gradient blocks for {} parameter blocks",
                grads.len(),
                blocks.len()
            )));
        }
        for (b, g) in blocks.iter().zip(grads) {
            if b.data.len() != g.len() {
                return Err(Error::Shape(format!(
                    "gradient for {} has {} values, expected {}",
                    b.name,
                    g.len(),
                    b.data.len()
                )));
            }
            if b.trainable && g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract(format!("non-finite gradient in block {}", b.name)));
            }
        }
        if self.slots.is_empty() {
            self.slots = blocks
                .iter()
                .map(|b| match self.kind {
                    OptimizerKind::Sgd => (Vec::new(), Vec::new()),
                    OptimizerKind::RmsProp => (Vec::new(), vec![0.0; b.data.len()]),
                    OptimizerKind::Adam => (vec![0.0; b.data.len()], vec![0.0; b.data.len()]),
                })
                .collect();
        }
        self.t += 1;
        let lr = self.learning_rate;
        let eps = self.epsilon;
        let (bias1, bias2) = (
            1.0 - self.beta1.powi(self.t as i32),
            1.0 - self.beta2.powi(self.t as i32),
        );
        for ((block, g), (m, s)) in blocks.iter_mut().zip(grads).zip(&mut self.slots) {
            if !block.trainable {
                continue;
            }
            match self.kind {
                OptimizerKind::Sgd => {
                    for (p, gi) in block.data.iter_mut().zip(g) {
                        *p -= lr * gi;
                    }
                }
                OptimizerKind::RmsProp => {
                    let rho = self.rho;
                    for ((p, gi), si) in block.data.iter_mut().zip(g).zip(s.iter_mut()) {
                        *si = rho * *si + (1.0 - rho) * gi * gi;
                        *p -= lr * gi / (si.sqrt() + eps);
                    }
                }
                OptimizerKind::Adam => {
                    let (b1, b2) = (self.beta1, self.beta2);
                    for (((p, gi), mi), vi) in block.data.iter_mut().zip(g).zip(m.iter_mut()).zip(s.iter_mut()) {
                        *mi = b1 * *mi + (1.0 - b1) * gi;
                        *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                        let m_hat = *mi / bias1;
                        let v_hat = *vi / bias2;
                        *p -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        grads.iter_mut().flat_map(|g| g.iter_mut()).for_each(|v| *v *= k);
    }
    norm
}

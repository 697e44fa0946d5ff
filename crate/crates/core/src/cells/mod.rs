//! Recurrent cells (Elman RNN, peephole LSTM, GRU) with full-sequence
//! forward passes and backpropagation through time.

mod gru;
mod lstm;
mod rnn;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

pub use gru::{GruParams, GruTrace};
pub use lstm::{LstmParams, LstmTrace};
pub use rnn::{RnnActivation, RnnParams, RnnTrace};

use crate::error::{Error, Result};
use crate::numeric::{Matrix, Vector};
use crate::params::{Block, BlockMut, Parameters};

/// Weight initialization. `Literal` draws from `U(0, 1)`; `Scaled` divides
/// that by `√fan_in`. All-positive weights feed back positively through the
/// recurrence and saturate the hidden state over long sequences, so the
/// default is `Centered`, which draws from `U(-1, 1) / √fan_in`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    Scaled,
    Literal,
    /// U(-1, 1) / √fan_in.
    Centered,
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scaled" => Ok(InitScheme::Scaled),
            "literal" => Ok(InitScheme::Literal),
            "centered" => Ok(InitScheme::Centered),
            other => Err(Error::Config(format!("unknown init scheme {other:?} (scaled|literal|centered)"))),
        }
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitScheme::Scaled => "scaled",
            InitScheme::Literal => "literal",
            InitScheme::Centered => "centered",
        })
    }
}

pub(crate) fn init_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, init: InitScheme, rng: &mut R) -> Matrix {
    let low = if init == InitScheme::Centered { -1.0 } else { 0.0 };
    let mut m = Matrix::random_uniform(rows, cols, low, 1.0, rng);
    if init != InitScheme::Literal && cols > 0 {
        m.scale(1.0 / (cols as f64).sqrt());
    }
    m
}

pub(crate) fn check_len(what: &str, v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Shape(format!("{what} has length {}, expected {expected}", v.len())));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Rnn,
    Lstm,
    Gru,
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rnn" => Ok(CellKind::Rnn),
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(Error::Config(format!("unknown cell {other:?} (rnn|lstm|gru)"))),
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Rnn => "rnn",
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellParams {
    Rnn(RnnParams),
    Lstm(LstmParams),
    Gru(GruParams),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SequenceTrace {
    Rnn(Vec<RnnTrace>),
    Lstm(Vec<LstmTrace>),
    Gru(Vec<GruTrace>),
}

impl SequenceTrace {
    pub fn len(&self) -> usize {
        match self {
            SequenceTrace::Rnn(t) => t.len(),
            SequenceTrace::Lstm(t) => t.len(),
            SequenceTrace::Gru(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Hidden state after each step.
    pub fn hidden_states(&self) -> Vec<&[f64]> {
        match self {
            SequenceTrace::Rnn(t) => t.iter().map(|s| s.h.as_slice()).collect(),
            SequenceTrace::Lstm(t) => t.iter().map(|s| s.h.as_slice()).collect(),
            SequenceTrace::Gru(t) => t.iter().map(|s| s.h.as_slice()).collect(),
        }
    }
}

impl CellParams {
    pub fn kind(&self) -> CellKind {
        match self {
            CellParams::Rnn(_) => CellKind::Rnn,
            CellParams::Lstm(_) => CellKind::Lstm,
            CellParams::Gru(_) => CellKind::Gru,
        }
    }

    pub fn input_size(&self) -> usize {
        match self {
            CellParams::Rnn(p) => p.input_size(),
            CellParams::Lstm(p) => p.input_size(),
            CellParams::Gru(p) => p.input_size(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        match self {
            CellParams::Rnn(p) => p.hidden_size(),
            CellParams::Lstm(p) => p.hidden_size(),
            CellParams::Gru(p) => p.hidden_size(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CellParams::Rnn(p) => p.validate(),
            CellParams::Lstm(p) => p.validate(),
            CellParams::Gru(p) => p.validate(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            CellParams::Rnn(p) => CellParams::Rnn(p.zeros_like()),
            CellParams::Lstm(p) => CellParams::Lstm(p.zeros_like()),
            CellParams::Gru(p) => CellParams::Gru(p.zeros_like()),
        }
    }

    /// Folds the step over `xs` starting from zero hidden (and cell) state.
    pub fn run_sequence<X: AsRef<[f64]>>(&self, xs: &[X]) -> Result<(Vector, SequenceTrace)> {
        if xs.is_empty() {
            return Err(Error::Contract("run_sequence needs at least one time step".into()));
        }
        let input = self.input_size();
        for (t, x) in xs.iter().enumerate() {
            check_len(&format!("input at step {t}"), x.as_ref(), input)?;
        }
        let hidden = self.hidden_size();
        let mut h = vec![0.0; hidden];
        let trace = match self {
            CellParams::Rnn(p) => {
                let mut steps = Vec::with_capacity(xs.len());
                for x in xs {
                    let s = p.step_unchecked(x.as_ref(), &h);
                    h.clone_from(&s.h);
                    steps.push(s);
                }
                SequenceTrace::Rnn(steps)
            }
            CellParams::Lstm(p) => {
                let mut c = vec![0.0; hidden];
                let mut steps = Vec::with_capacity(xs.len());
                for x in xs {
                    let s = p.step_unchecked(x.as_ref(), &h, &c);
                    h.clone_from(&s.h);
                    c.clone_from(&s.c);
                    steps.push(s);
                }
                SequenceTrace::Lstm(steps)
            }
            CellParams::Gru(p) => {
                let mut steps = Vec::with_capacity(xs.len());
                for x in xs {
                    let s = p.step_unchecked(x.as_ref(), &h);
                    h.clone_from(&s.h);
                    steps.push(s);
                }
                SequenceTrace::Gru(steps)
            }
        };
        Ok((Vector::from_vec(h), trace))
    }

    /// Reverse-mode gradients of a loss whose only dependence on the
    /// sequence is through the final hidden state. Returns parameter
    /// gradients (same shapes as `self`) and one input gradient per step.
    pub fn backward_sequence(&self, trace: &SequenceTrace, grad_h_final: &[f64]) -> Result<(CellParams, Vec<Vector>)> {
        check_len("grad_h_final", grad_h_final, self.hidden_size())?;
        let mut grads = self.zeros_like();
        let mut dxs = vec![Vector::zeros(0); trace.len()];
        let mut dh = grad_h_final.to_vec();
        match (self, trace, &mut grads) {
            (CellParams::Rnn(p), SequenceTrace::Rnn(steps), CellParams::Rnn(g)) => {
                for (t, s) in steps.iter().enumerate().rev() {
                    let (dx, dh_prev) = p.step_backward(s, &dh, g);
                    dxs[t] = Vector::from_vec(dx);
                    dh = dh_prev;
                }
            }
            (CellParams::Lstm(p), SequenceTrace::Lstm(steps), CellParams::Lstm(g)) => {
                let mut dc = vec![0.0; p.hidden_size()];
                for (t, s) in steps.iter().enumerate().rev() {
                    let (dx, dh_prev, dc_prev) = p.step_backward(s, &dh, &dc, g);
                    dxs[t] = Vector::from_vec(dx);
                    dh = dh_prev;
                    dc = dc_prev;
                }
            }
            (CellParams::Gru(p), SequenceTrace::Gru(steps), CellParams::Gru(g)) => {
                for (t, s) in steps.iter().enumerate().rev() {
                    let (dx, dh_prev) = p.step_backward(s, &dh, g);
                    dxs[t] = Vector::from_vec(dx);
                    dh = dh_prev;
                }
            }
            _ => {
                return Err(Error::Contract(format!(
                    "trace does not belong to a {} cell",
                    self.kind()
                )))
            }
        }
        Ok((grads, dxs))
    }
}

impl Parameters for CellParams {
    fn blocks(&self) -> Vec<Block<'_>> {
        match self {
            CellParams::Rnn(p) => p.blocks(),
            CellParams::Lstm(p) => p.blocks(),
            CellParams::Gru(p) => p.blocks(),
        }
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        match self {
            CellParams::Rnn(p) => p.blocks_mut(),
            CellParams::Lstm(p) => p.blocks_mut(),
            CellParams::Gru(p) => p.blocks_mut(),
        }
    }
}

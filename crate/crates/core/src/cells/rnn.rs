use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{sigmoid_scalar, Matrix, Vector};
use crate::params::{matrix_block, matrix_block_mut, vector_block, vector_block_mut, Block, BlockMut, Parameters};

use super::{check_len, init_matrix, InitScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RnnActivation {
    Tanh,
    Sigmoid,
}

impl RnnActivation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            RnnActivation::Tanh => x.tanh(),
            RnnActivation::Sigmoid => sigmoid_scalar(x),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            RnnActivation::Tanh => 1.0 - y * y,
            RnnActivation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Elman cell `h = g(W x + U h_prev + b)`.
///
/// In literal mode the recurrence is unweighted, `h = g(W x + h_prev)`:
/// `U` stays the identity, `b` stays zero and neither is trained.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vector,
    pub activation: RnnActivation,
    pub literal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnTrace {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub h: Vec<f64>,
}

impl RnnParams {
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        activation: RnnActivation,
        literal: bool,
        init: InitScheme,
        rng: &mut R,
    ) -> Self {
        let w = init_matrix(hidden, input, init, rng);
        let u = if literal {
            Matrix::identity(hidden)
        } else {
            init_matrix(hidden, hidden, init, rng)
        };
        RnnParams {
            w,
            u,
            b: Vector::zeros(hidden),
            activation,
            literal,
        }
    }

    pub fn zeros(input: usize, hidden: usize, activation: RnnActivation, literal: bool) -> Self {
        RnnParams {
            w: Matrix::zeros(hidden, input),
            u: if literal { Matrix::identity(hidden) } else { Matrix::zeros(hidden, hidden) },
            b: Vector::zeros(hidden),
            activation,
            literal,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.scale_all(0.0);
        g
    }

    pub fn input_size(&self) -> usize {
        self.w.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden_size();
        if self.u.shape() != (h, h) || self.b.len() != h {
            return Err(Error::Shape(format!(
                "RNN blocks disagree on hidden size: W {:?}, U {:?}, b {}",
                self.w.shape(),
                self.u.shape(),
                self.b.len()
            )));
        }
        Ok(())
    }

    pub fn step(&self, x: &[f64], h_prev: &[f64]) -> Result<(Vector, RnnTrace)> {
        check_len("x", x, self.input_size())?;
        check_len("h_prev", h_prev, self.hidden_size())?;
        let trace = self.step_unchecked(x, h_prev);
        Ok((Vector::from_vec(trace.h.clone()), trace))
    }

    pub(crate) fn step_unchecked(&self, x: &[f64], h_prev: &[f64]) -> RnnTrace {
        let mut pre = vec![0.0; self.hidden_size()];
        self.w.matvec_acc(x, &mut pre);
        if self.literal {
            for (p, h) in pre.iter_mut().zip(h_prev) {
                *p += h;
            }
        } else {
            self.u.matvec_acc(h_prev, &mut pre);
            for (p, b) in pre.iter_mut().zip(self.b.iter()) {
                *p += b;
            }
        }
        let h = pre.into_iter().map(|v| self.activation.apply(v)).collect();
        RnnTrace {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            h,
        }
    }

    /// Accumulates parameter gradients into `grads`; returns `(dx, dh_prev)`.
    pub fn step_backward(&self, trace: &RnnTrace, dh: &[f64], grads: &mut RnnParams) -> (Vec<f64>, Vec<f64>) {
        let dpre: Vec<f64> = dh
            .iter()
            .zip(&trace.h)
            .map(|(d, &h)| d * self.activation.derivative_from_output(h))
            .collect();
        grads.w.add_outer(&dpre, &trace.x);
        let mut dx = vec![0.0; self.input_size()];
        self.w.matvec_t_acc(&dpre, &mut dx);
        let dh_prev = if self.literal {
            dpre
        } else {
            grads.u.add_outer(&dpre, &trace.h_prev);
            for (g, d) in grads.b.iter_mut().zip(&dpre) {
                *g += d;
            }
            let mut dh_prev = vec![0.0; self.hidden_size()];
            self.u.matvec_t_acc(&dpre, &mut dh_prev);
            dh_prev
        };
        (dx, dh_prev)
    }
}

impl Parameters for RnnParams {
    fn blocks(&self) -> Vec<Block<'_>> {
        let trainable = !self.literal;
        vec![
            matrix_block("W", &self.w, true),
            matrix_block("U", &self.u, trainable),
            vector_block("b", &self.b, trainable),
        ]
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        let trainable = !self.literal;
        vec![
            matrix_block_mut("W", &mut self.w, true),
            matrix_block_mut("U", &mut self.u, trainable),
            vector_block_mut("b", &mut self.b, trainable),
        ]
    }
}

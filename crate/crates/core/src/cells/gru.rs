use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{sigmoid_scalar, Matrix, Vector};
use crate::params::{matrix_block, matrix_block_mut, vector_block, vector_block_mut, Block, BlockMut, Parameters};

use super::{check_len, init_matrix, InitScheme};

/// GRU with the reset gate applied to `h_prev` before the recurrent weight:
/// `h̃ = tanh(W x + U (r ⊙ h_prev) + b)`, `h = (1 − z) ⊙ h_prev + z ⊙ h̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_z: Matrix,
    pub w_r: Matrix,
    pub w: Matrix,
    pub u_z: Matrix,
    pub u_r: Matrix,
    pub u: Matrix,
    pub b_z: Vector,
    pub b_r: Vector,
    pub b: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruTrace {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub reset_h: Vec<f64>,
    pub h_tilde: Vec<f64>,
    pub h: Vec<f64>,
}

impl GruParams {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, init: InitScheme, rng: &mut R) -> Self {
        let mut w = || init_matrix(hidden, input, init, rng);
        let (w_z, w_r, w_h) = (w(), w(), w());
        let mut u = || init_matrix(hidden, hidden, init, rng);
        let (u_z, u_r, u_h) = (u(), u(), u());
        GruParams {
            w_z,
            w_r,
            w: w_h,
            u_z,
            u_r,
            u: u_h,
            b_z: Vector::zeros(hidden),
            b_r: Vector::zeros(hidden),
            b: Vector::zeros(hidden),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruParams {
            w_z: Matrix::zeros(hidden, input),
            w_r: Matrix::zeros(hidden, input),
            w: Matrix::zeros(hidden, input),
            u_z: Matrix::zeros(hidden, hidden),
            u_r: Matrix::zeros(hidden, hidden),
            u: Matrix::zeros(hidden, hidden),
            b_z: Vector::zeros(hidden),
            b_r: Vector::zeros(hidden),
            b: Vector::zeros(hidden),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_size(), self.hidden_size())
    }

    pub fn input_size(&self) -> usize {
        self.w.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, x) = (self.hidden_size(), self.input_size());
        for b in self.blocks() {
            let expected = match b.name.as_bytes()[0] {
                b'W' => (h, x),
                b'U' => (h, h),
                _ => (h, 1),
            };
            if (b.rows, b.cols) != expected {
                return Err(Error::Shape(format!(
                    "GRU block {} is {}x{}, expected {}x{}",
                    b.name, b.rows, b.cols, expected.0, expected.1
                )));
            }
        }
        Ok(())
    }

    pub fn step(&self, x: &[f64], h_prev: &[f64]) -> Result<(Vector, GruTrace)> {
        check_len("x", x, self.input_size())?;
        check_len("h_prev", h_prev, self.hidden_size())?;
        let t = self.step_unchecked(x, h_prev);
        Ok((Vector::from_vec(t.h.clone()), t))
    }

    pub(crate) fn step_unchecked(&self, x: &[f64], h_prev: &[f64]) -> GruTrace {
        let gate = |w: &Matrix, u: &Matrix, b: &Vector| -> Vec<f64> {
            let mut pre = b.as_slice().to_vec();
            w.matvec_acc(x, &mut pre);
            u.matvec_acc(h_prev, &mut pre);
            pre.into_iter().map(sigmoid_scalar).collect()
        };
        let z = gate(&self.w_z, &self.u_z, &self.b_z);
        let r = gate(&self.w_r, &self.u_r, &self.b_r);
        let reset_h: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        let mut cand = self.b.as_slice().to_vec();
        self.w.matvec_acc(x, &mut cand);
        self.u.matvec_acc(&reset_h, &mut cand);
        let h_tilde: Vec<f64> = cand.into_iter().map(f64::tanh).collect();
        let h = (0..h_prev.len())
            .map(|k| (1.0 - z[k]) * h_prev[k] + z[k] * h_tilde[k])
            .collect();
        GruTrace {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            z,
            r,
            reset_h,
            h_tilde,
            h,
        }
    }

    /// Accumulates parameter gradients; returns `(dx, dh_prev)`.
    pub fn step_backward(&self, t: &GruTrace, dh: &[f64], grads: &mut GruParams) -> (Vec<f64>, Vec<f64>) {
        let n = self.hidden_size();
        let mut dh_prev: Vec<f64> = (0..n).map(|k| dh[k] * (1.0 - t.z[k])).collect();
        let dz_pre: Vec<f64> = (0..n)
            .map(|k| dh[k] * (t.h_tilde[k] - t.h_prev[k]) * t.z[k] * (1.0 - t.z[k]))
            .collect();
        let dcand: Vec<f64> = (0..n)
            .map(|k| dh[k] * t.z[k] * (1.0 - t.h_tilde[k] * t.h_tilde[k]))
            .collect();

        let mut d_reset_h = vec![0.0; n];
        self.u.matvec_t_acc(&dcand, &mut d_reset_h);
        let dr_pre: Vec<f64> = (0..n)
            .map(|k| d_reset_h[k] * t.h_prev[k] * t.r[k] * (1.0 - t.r[k]))
            .collect();
        for k in 0..n {
            dh_prev[k] += d_reset_h[k] * t.r[k];
        }

        grads.w.add_outer(&dcand, &t.x);
        grads.u.add_outer(&dcand, &t.reset_h);
        grads.w_z.add_outer(&dz_pre, &t.x);
        grads.u_z.add_outer(&dz_pre, &t.h_prev);
        grads.w_r.add_outer(&dr_pre, &t.x);
        grads.u_r.add_outer(&dr_pre, &t.h_prev);
        for k in 0..n {
            grads.b[k] += dcand[k];
            grads.b_z[k] += dz_pre[k];
            grads.b_r[k] += dr_pre[k];
        }

        let mut dx = vec![0.0; self.input_size()];
        self.w.matvec_t_acc(&dcand, &mut dx);
        self.w_z.matvec_t_acc(&dz_pre, &mut dx);
        self.w_r.matvec_t_acc(&dr_pre, &mut dx);
        self.u_z.matvec_t_acc(&dz_pre, &mut dh_prev);
        self.u_r.matvec_t_acc(&dr_pre, &mut dh_prev);
        (dx, dh_prev)
    }
}

impl Parameters for GruParams {
    fn blocks(&self) -> Vec<Block<'_>> {
        vec![
            matrix_block("W_z", &self.w_z, true),
            matrix_block("W_r", &self.w_r, true),
            matrix_block("W", &self.w, true),
            matrix_block("U_z", &self.u_z, true),
            matrix_block("U_r", &self.u_r, true),
            matrix_block("U", &self.u, true),
            vector_block("b_z", &self.b_z, true),
            vector_block("b_r", &self.b_r, true),
            vector_block("b", &self.b, true),
        ]
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        vec![
            matrix_block_mut("W_z", &mut self.w_z, true),
            matrix_block_mut("W_r", &mut self.w_r, true),
            matrix_block_mut("W", &mut self.w, true),
            matrix_block_mut("U_z", &mut self.u_z, true),
            matrix_block_mut("U_r", &mut self.u_r, true),
            matrix_block_mut("U", &mut self.u, true),
            vector_block_mut("b_z", &mut self.b_z, true),
            vector_block_mut("b_r", &mut self.b_r, true),
            vector_block_mut("b", &mut self.b, true),
        ]
    }
}

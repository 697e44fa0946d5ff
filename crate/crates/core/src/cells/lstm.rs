use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{sigmoid_scalar, Matrix, Vector};
use crate::params::{matrix_block, matrix_block_mut, vector_block, vector_block_mut, Block, BlockMut, Parameters};

use super::{check_len, init_matrix, InitScheme};

/// LSTM with full-matrix peephole connections.
///
/// Forward order is i, f, c̃, c, o, h: the output gate peeks at the new
/// cell state while the input and forget gates see the previous one.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_i: Matrix,
    pub w_f: Matrix,
    pub w_o: Matrix,
    pub w_c: Matrix,
    pub u_i: Matrix,
    pub u_f: Matrix,
    pub u_o: Matrix,
    pub u_c: Matrix,
    pub v_i: Matrix,
    pub v_f: Matrix,
    pub v_o: Matrix,
    pub b_i: Vector,
    pub b_f: Vector,
    pub b_o: Vector,
    pub b_c: Vector,
    /// When off, the `v_*` blocks stay zero and are not trained.
    pub peepholes: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmTrace {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub c_tilde: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmParams {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, peepholes: bool, init: InitScheme, rng: &mut R) -> Self {
        let mut w = || init_matrix(hidden, input, init, rng);
        let (w_i, w_f, w_o, w_c) = (w(), w(), w(), w());
        let mut u = || init_matrix(hidden, hidden, init, rng);
        let (u_i, u_f, u_o, u_c) = (u(), u(), u(), u());
        let mut v = || {
            if peepholes {
                init_matrix(hidden, hidden, init, rng)
            } else {
                Matrix::zeros(hidden, hidden)
            }
        };
        let (v_i, v_f, v_o) = (v(), v(), v());
        LstmParams {
            w_i,
            w_f,
            w_o,
            w_c,
            u_i,
            u_f,
            u_o,
            u_c,
            v_i,
            v_f,
            v_o,
            b_i: Vector::zeros(hidden),
            b_f: Vector::zeros(hidden),
            b_o: Vector::zeros(hidden),
            b_c: Vector::zeros(hidden),
            peepholes,
        }
    }

    pub fn zeros(input: usize, hidden: usize, peepholes: bool) -> Self {
        let w = || Matrix::zeros(hidden, input);
        let u = || Matrix::zeros(hidden, hidden);
        let b = || Vector::zeros(hidden);
        LstmParams {
            w_i: w(),
            w_f: w(),
            w_o: w(),
            w_c: w(),
            u_i: u(),
            u_f: u(),
            u_o: u(),
            u_c: u(),
            v_i: u(),
            v_f: u(),
            v_o: u(),
            b_i: b(),
            b_f: b(),
            b_o: b(),
            b_c: b(),
            peepholes,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_size(), self.hidden_size(), self.peepholes)
    }

    pub fn input_size(&self) -> usize {
        self.w_i.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_i.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, x) = (self.hidden_size(), self.input_size());
        for b in self.blocks() {
            let expected = match b.name.as_bytes()[0] {
                b'W' => (h, x),
                b'U' | b'V' => (h, h),
                _ => (h, 1),
            };
            if (b.rows, b.cols) != expected {
                return Err(Error::Shape(format!(
                    "LSTM block {} is {}x{}, expected {}x{}",
                    b.name, b.rows, b.cols, expected.0, expected.1
                )));
            }
        }
        Ok(())
    }

    pub fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vector, Vector, LstmTrace)> {
        check_len("x", x, self.input_size())?;
        check_len("h_prev", h_prev, self.hidden_size())?;
        check_len("c_prev", c_prev, self.hidden_size())?;
        let t = self.step_unchecked(x, h_prev, c_prev);
        Ok((Vector::from_vec(t.h.clone()), Vector::from_vec(t.c.clone()), t))
    }

    fn gate_pre(&self, w: &Matrix, u: &Matrix, b: &Vector, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
        let mut pre = b.as_slice().to_vec();
        w.matvec_acc(x, &mut pre);
        u.matvec_acc(h_prev, &mut pre);
        pre
    }

    pub(crate) fn step_unchecked(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmTrace {
        let mut i_pre = self.gate_pre(&self.w_i, &self.u_i, &self.b_i, x, h_prev);
        let mut f_pre = self.gate_pre(&self.w_f, &self.u_f, &self.b_f, x, h_prev);
        if self.peepholes {
            self.v_i.matvec_acc(c_prev, &mut i_pre);
            self.v_f.matvec_acc(c_prev, &mut f_pre);
        }
        let i: Vec<f64> = i_pre.into_iter().map(sigmoid_scalar).collect();
        let f: Vec<f64> = f_pre.into_iter().map(sigmoid_scalar).collect();
        let c_tilde: Vec<f64> = self
            .gate_pre(&self.w_c, &self.u_c, &self.b_c, x, h_prev)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let c: Vec<f64> = (0..c_prev.len())
            .map(|k| f[k] * c_prev[k] + i[k] * c_tilde[k])
            .collect();
        let mut o_pre = self.gate_pre(&self.w_o, &self.u_o, &self.b_o, x, h_prev);
        if self.peepholes {
            self.v_o.matvec_acc(&c, &mut o_pre);
        }
        let o: Vec<f64> = o_pre.into_iter().map(sigmoid_scalar).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h = o.iter().zip(&tanh_c).map(|(a, b)| a * b).collect();
        LstmTrace {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            i,
            f,
            o,
            c_tilde,
            c,
            tanh_c,
            h,
        }
    }

    /// Accumulates parameter gradients; returns `(dx, dh_prev, dc_prev)`.
    /// `dc` is the gradient reaching this step's cell state from later steps.
    pub fn step_backward(
        &self,
        t: &LstmTrace,
        dh: &[f64],
        dc: &[f64],
        grads: &mut LstmParams,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.hidden_size();
        let mut do_pre = vec![0.0; n];
        let mut dc_total = dc.to_vec();
        for k in 0..n {
            let d_o = dh[k] * t.tanh_c[k];
            do_pre[k] = d_o * t.o[k] * (1.0 - t.o[k]);
            dc_total[k] += dh[k] * t.o[k] * (1.0 - t.tanh_c[k] * t.tanh_c[k]);
        }
        if self.peepholes {
            self.v_o.matvec_t_acc(&do_pre, &mut dc_total);
            grads.v_o.add_outer(&do_pre, &t.c);
        }

        let mut di_pre = vec![0.0; n];
        let mut df_pre = vec![0.0; n];
        let mut dg_pre = vec![0.0; n];
        let mut dc_prev = vec![0.0; n];
        for k in 0..n {
            let dck = dc_total[k];
            di_pre[k] = dck * t.c_tilde[k] * t.i[k] * (1.0 - t.i[k]);
            df_pre[k] = dck * t.c_prev[k] * t.f[k] * (1.0 - t.f[k]);
            dg_pre[k] = dck * t.i[k] * (1.0 - t.c_tilde[k] * t.c_tilde[k]);
            dc_prev[k] = dck * t.f[k];
        }
        if self.peepholes {
            self.v_i.matvec_t_acc(&di_pre, &mut dc_prev);
            self.v_f.matvec_t_acc(&df_pre, &mut dc_prev);
            grads.v_i.add_outer(&di_pre, &t.c_prev);
            grads.v_f.add_outer(&df_pre, &t.c_prev);
        }

        let mut dx = vec![0.0; self.input_size()];
        let mut dh_prev = vec![0.0; n];
        let gates: [(&[f64], &Matrix, &Matrix); 4] = [
            (&di_pre, &self.w_i, &self.u_i),
            (&df_pre, &self.w_f, &self.u_f),
            (&do_pre, &self.w_o, &self.u_o),
            (&dg_pre, &self.w_c, &self.u_c),
        ];
        for (d, w, u) in gates {
            w.matvec_t_acc(d, &mut dx);
            u.matvec_t_acc(d, &mut dh_prev);
        }
        let grad_slots = [
            (&di_pre, &mut grads.w_i, &mut grads.u_i, &mut grads.b_i),
            (&df_pre, &mut grads.w_f, &mut grads.u_f, &mut grads.b_f),
            (&do_pre, &mut grads.w_o, &mut grads.u_o, &mut grads.b_o),
            (&dg_pre, &mut grads.w_c, &mut grads.u_c, &mut grads.b_c),
        ];
        for (d, gw, gu, gb) in grad_slots {
            gw.add_outer(d, &t.x);
            gu.add_outer(d, &t.h_prev);
            for (g, v) in gb.iter_mut().zip(d.iter()) {
                *g += v;
            }
        }
        (dx, dh_prev, dc_prev)
    }
}

impl Parameters for LstmParams {
    fn blocks(&self) -> Vec<Block<'_>> {
        let p = self.peepholes;
        vec![
            matrix_block("W_i", &self.w_i, true),
            matrix_block("W_f", &self.w_f, true),
            matrix_block("W_o", &self.w_o, true),
            matrix_block("W_c", &self.w_c, true),
            matrix_block("U_i", &self.u_i, true),
            matrix_block("U_f", &self.u_f, true),
            matrix_block("U_o", &self.u_o, true),
            matrix_block("U_c", &self.u_c, true),
            matrix_block("V_i", &self.v_i, p),
            matrix_block("V_f", &self.v_f, p),
            matrix_block("V_o", &self.v_o, p),
            vector_block("b_i", &self.b_i, true),
            vector_block("b_f", &self.b_f, true),
            vector_block("b_o", &self.b_o, true),
            vector_block("b_c", &self.b_c, true),
        ]
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        let p = self.peepholes;
        vec![
            matrix_block_mut("W_i", &mut self.w_i, true),
            matrix_block_mut("W_f", &mut self.w_f, true),
            matrix_block_mut("W_o", &mut self.w_o, true),
            matrix_block_mut("W_c", &mut self.w_c, true),
            matrix_block_mut("U_i", &mut self.u_i, true),
            matrix_block_mut("U_f", &mut self.u_f, true),
            matrix_block_mut("U_o", &mut self.u_o, true),
            matrix_block_mut("U_c", &mut self.u_c, true),
            matrix_block_mut("V_i", &mut self.v_i, p),
            matrix_block_mut("V_f", &mut self.v_f, p),
            matrix_block_mut("V_o", &mut self.v_o, p),
            vector_block_mut("b_i", &mut self.b_i, true),
            vector_block_mut("b_f", &mut self.b_f, true),
            vector_block_mut("b_o", &mut self.b_o, true),
            vector_block_mut("b_c", &mut self.b_c, true),
        ]
    }
}

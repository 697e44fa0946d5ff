//! Embedding → recurrent cell → dense ReLU layer → sigmoid/softmax head.

mod loss;
mod optimizer;

use std::collections::BTreeMap;

use rand::Rng;

pub use loss::{
    argmax, bce_loss, cce_loss, cost, one_hot, sparse_cce_loss, HeadKind, LossKind, PROB_EPSILON,
};
pub use optimizer::{clip_global_norm, OptimizerKind, OptimizerState};

use crate::cells::{CellKind, CellParams, GruParams, InitScheme, LstmParams, RnnActivation, RnnParams, SequenceTrace};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::numeric::{relu_scalar, Matrix, Vector};
use crate::params::{matrix_block, matrix_block_mut, vector_block, vector_block_mut, Block, BlockMut, Parameters};
use crate::text::PAD_INDEX;

/// Architecture of a [`ClassifierModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub cell: CellKind,
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub hidden_size: usize,
    pub dense_size: usize,
    pub head: HeadKind,
    pub loss: LossKind,
    pub peepholes: bool,
    pub literal_rnn: bool,
    pub rnn_activation: RnnActivation,
    pub init: InitScheme,
    pub dropout: f64,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("embedding_dim", self.embedding_dim),
            ("hidden_size", self.hidden_size),
            ("dense_size", self.dense_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if let HeadKind::Softmax(c) = self.head {
            if c < 2 {
                return Err(Error::Config(format!("softmax head needs at least 2 classes, got {c}")));
            }
        }
        if !self.loss.compatible_with(self.head) {
            return Err(Error::Config(format!("loss {} cannot be used with a {:?} head", self.loss, self.head)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.literal_rnn && self.cell != CellKind::Rnn {
            return Err(Error::Config("literal recurrence only applies to the rnn cell".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub embedding: EmbeddingMatrix,
    pub cell: CellParams,
    pub dense_w: Matrix,
    pub dense_b: Vector,
    pub head_w: Matrix,
    pub head_b: Vector,
    pub head: HeadKind,
    pub loss: LossKind,
    pub dropout: f64,
}

/// Intermediates of one document's forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub indices: Vec<usize>,
    pub cell_trace: SequenceTrace,
    pub h_final: Vector,
    pub dense_pre: Vec<f64>,
    /// Dense activation after dropout; this is what the head sees.
    pub dense_out: Vec<f64>,
    pub dropout_mask: Option<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probs: Vector,
}

/// Gradients shaped like [`ClassifierModel`]. Embedding rows are kept
/// sparse because a document touches only a few of them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub embedding_rows: BTreeMap<usize, Vec<f64>>,
    pub cell: CellParams,
    pub dense_w: Matrix,
    pub dense_b: Vector,
    pub head_w: Matrix,
    pub head_b: Vector,
}

impl ClassifierModel {
    pub fn new<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let embedding = EmbeddingMatrix::random(arch.vocab_size, arch.embedding_dim, rng);
        Self::with_embedding(arch, embedding, rng)
    }

    /// Builds around an existing (e.g. pretrained) embedding matrix.
    pub fn with_embedding<R: Rng + ?Sized>(arch: &Architecture, embedding: EmbeddingMatrix, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let (e, h) = (arch.embedding_dim, arch.hidden_size);
        let cell = match arch.cell {
            CellKind::Rnn => CellParams::Rnn(RnnParams::new(e, h, arch.rnn_activation, arch.literal_rnn, arch.init, rng)),
            CellKind::Lstm => CellParams::Lstm(LstmParams::new(e, h, arch.peepholes, arch.init, rng)),
            CellKind::Gru => CellParams::Gru(GruParams::new(e, h, arch.init, rng)),
        };
        let dense_w = crate::cells::init_matrix(arch.dense_size, h, arch.init, rng);
        let head_w = crate::cells::init_matrix(arch.head.outputs(), arch.dense_size, arch.init, rng);
        let model = ClassifierModel {
            embedding,
            cell,
            dense_w,
            dense_b: Vector::zeros(arch.dense_size),
            head_w,
            head_b: Vector::zeros(arch.head.outputs()),
            head: arch.head,
            loss: arch.loss,
            dropout: arch.dropout,
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks the dimension chain embedding → cell → dense → head.
    pub fn validate(&self) -> Result<()> {
        self.cell.validate()?;
        let chain = [
            ("embedding dim vs cell input", self.embedding.dim(), self.cell.input_size()),
            ("cell hidden vs dense input", self.cell.hidden_size(), self.dense_w.cols()),
            ("dense output vs dense bias", self.dense_w.rows(), self.dense_b.len()),
            ("dense output vs head input", self.dense_w.rows(), self.head_w.cols()),
            ("head units", self.head.outputs(), self.head_w.rows()),
            ("head bias", self.head.outputs(), self.head_b.len()),
        ];
        for (what, a, b) in chain {
            if a != b {
                return Err(Error::Config(format!("dimension chain broken at {what}: {a} != {b}")));
            }
        }
        if !self.loss.compatible_with(self.head) {
            return Err(Error::Config(format!("loss {} cannot be used with a {:?} head", self.loss, self.head)));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.head.num_classes()
    }

    /// Evaluation-mode forward pass (no dropout).
    pub fn forward(&self, indices: &[usize]) -> Result<ForwardTrace> {
        self.forward_impl(indices, None::<&mut rand_chacha::ChaCha8Rng>)
    }

    /// Training-mode forward pass; draws a dropout mask from `rng` when
    /// dropout is enabled.
    pub fn forward_train<R: Rng + ?Sized>(&self, indices: &[usize], rng: &mut R) -> Result<ForwardTrace> {
        self.forward_impl(indices, Some(rng))
    }

    fn forward_impl<R: Rng + ?Sized>(&self, indices: &[usize], rng: Option<&mut R>) -> Result<ForwardTrace> {
        let xs = self.embedding.lookup_rows(indices)?;
        let (h_final, cell_trace) = self.cell.run_sequence(&xs)?;
        let mut dense_pre = self.dense_b.as_slice().to_vec();
        self.dense_w.matvec_acc(&h_final, &mut dense_pre);
        let mut dense_out: Vec<f64> = dense_pre.iter().map(|&v| relu_scalar(v)).collect();
        let dropout_mask = match rng {
            Some(rng) if self.dropout > 0.0 => {
                let keep = 1.0 - self.dropout;
                let mask: Vec<f64> = (0..dense_out.len())
                    .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                for (a, m) in dense_out.iter_mut().zip(&mask) {
                    *a *= m;
                }
                Some(mask)
            }
            _ => None,
        };
        let mut logits = self.head_b.as_slice().to_vec();
        self.head_w.matvec_acc(&dense_out, &mut logits);
        let probs = self.head.activate(&logits);
        Ok(ForwardTrace {
            indices: indices.to_vec(),
            cell_trace,
            h_final,
            dense_pre,
            dense_out,
            dropout_mask,
            logits,
            probs,
        })
    }

    pub fn predict(&self, indices: &[usize]) -> Result<(usize, Vector)> {
        let trace = self.forward(indices)?;
        Ok((self.head.predict(&trace.probs), trace.probs))
    }

    /// Loss for `label` and the gradient at the head logits.
    pub fn loss_and_logit_grad(&self, trace: &ForwardTrace, label: usize) -> Result<(f64, Vec<f64>)> {
        self.loss.loss_and_logit_grad(self.head, &trace.probs, label)
    }

    /// Backpropagates a logit gradient through head, dense layer, cell and
    /// embedding. The pad row never receives gradient.
    pub fn backward(&self, trace: &ForwardTrace, grad_logits: &[f64]) -> Result<ModelGrads> {
        if grad_logits.len() != self.head.outputs() {
            return Err(Error::Shape(format!(
                "logit gradient has {} entries, head has {}",
                grad_logits.len(),
                self.head.outputs()
            )));
        }
        let mut head_w = Matrix::zeros(self.head_w.rows(), self.head_w.cols());
        head_w.add_outer(grad_logits, &trace.dense_out);
        let head_b = Vector::from_vec(grad_logits.to_vec());

        let mut d_dense = vec![0.0; self.dense_w.rows()];
        self.head_w.matvec_t_acc(grad_logits, &mut d_dense);
        if let Some(mask) = &trace.dropout_mask {
            for (d, m) in d_dense.iter_mut().zip(mask) {
                *d *= m;
            }
        }
        for (d, &pre) in d_dense.iter_mut().zip(&trace.dense_pre) {
            if pre <= 0.0 {
                *d = 0.0;
            }
        }
        let mut dense_w = Matrix::zeros(self.dense_w.rows(), self.dense_w.cols());
        dense_w.add_outer(&d_dense, &trace.h_final);
        let mut dh = vec![0.0; self.dense_w.cols()];
        self.dense_w.matvec_t_acc(&d_dense, &mut dh);

        let (cell, dxs) = self.cell.backward_sequence(&trace.cell_trace, &dh)?;

        let mut embedding_rows: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        if self.embedding.trainable {
            for (&idx, dx) in trace.indices.iter().zip(&dxs) {
                if idx == PAD_INDEX {
                    continue;
                }
                let row = embedding_rows
                    .entry(idx)
                    .or_insert_with(|| vec![0.0; self.embedding.dim()]);
                for (r, d) in row.iter_mut().zip(dx.iter()) {
                    *r += d;
                }
            }
        }
        Ok(ModelGrads {
            embedding_rows,
            cell,
            dense_w,
            dense_b: Vector::from_vec(d_dense),
            head_w,
            head_b,
        })
    }

    /// Loss and full gradient for one labelled document.
    pub fn example_gradient(&self, indices: &[usize], label: usize) -> Result<(f64, ModelGrads)> {
        let trace = self.forward(indices)?;
        let (loss, g) = self.loss_and_logit_grad(&trace, label)?;
        Ok((loss, self.backward(&trace, &g)?))
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            embedding_rows: BTreeMap::new(),
            cell: self.cell.zeros_like(),
            dense_w: Matrix::zeros(self.dense_w.rows(), self.dense_w.cols()),
            dense_b: Vector::zeros(self.dense_b.len()),
            head_w: Matrix::zeros(self.head_w.rows(), self.head_w.cols()),
            head_b: Vector::zeros(self.head_b.len()),
        }
    }
}

impl ModelGrads {
    pub fn accumulate(&mut self, other: &ModelGrads) {
        for (&idx, row) in &other.embedding_rows {
            let dst = self.embedding_rows.entry(idx).or_insert_with(|| vec![0.0; row.len()]);
            for (a, b) in dst.iter_mut().zip(row) {
                *a += b;
            }
        }
        self.cell.accumulate(&other.cell);
        self.dense_w.add_assign(&other.dense_w);
        self.dense_b.add_assign(&other.dense_b);
        self.head_w.add_assign(&other.head_w);
        self.head_b.add_assign(&other.head_b);
    }

    pub fn scale(&mut self, k: f64) {
        self.embedding_rows.values_mut().flat_map(|r| r.iter_mut()).for_each(|v| *v *= k);
        self.cell.scale_all(k);
        self.dense_w.scale(k);
        self.dense_b.iter_mut().for_each(|v| *v *= k);
        self.head_w.scale(k);
        self.head_b.iter_mut().for_each(|v| *v *= k);
    }

    /// Dense gradient slices in the block order of `model.blocks()`.
    pub fn to_flat(&self, model: &ClassifierModel) -> Vec<Vec<f64>> {
        let dim = model.embedding.dim();
        let mut emb = vec![0.0; model.embedding.vocab_size() * dim];
        for (&idx, row) in &self.embedding_rows {
            emb[idx * dim..(idx + 1) * dim].copy_from_slice(row);
        }
        let mut flat = vec![emb];
        flat.extend(self.cell.blocks().into_iter().map(|b| b.data.to_vec()));
        flat.push(self.dense_w.as_slice().to_vec());
        flat.push(self.dense_b.as_slice().to_vec());
        flat.push(self.head_w.as_slice().to_vec());
        flat.push(self.head_b.as_slice().to_vec());
        flat
    }

    /// Name of the first block holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<String> {
        if self.embedding_rows.values().flatten().any(|v| !v.is_finite()) {
            return Some("embedding".into());
        }
        if let Some(name) = self.cell.first_non_finite() {
            return Some(format!("cell.{name}"));
        }
        [
            ("dense.W", self.dense_w.is_finite()),
            ("dense.b", self.dense_b.is_finite()),
            ("head.W", self.head_w.is_finite()),
            ("head.b", self.head_b.is_finite()),
        ]
        .into_iter()
        .find(|(_, ok)| !ok)
        .map(|(n, _)| n.to_string())
    }
}

impl Parameters for ClassifierModel {
    fn blocks(&self) -> Vec<Block<'_>> {
        let mut v = vec![matrix_block("embedding", &self.embedding.weights, self.embedding.trainable)];
        v.extend(self.cell.blocks().into_iter().map(|mut b| {
            b.name = format!("cell.{}", b.name);
            b
        }));
        v.push(matrix_block("dense.W", &self.dense_w, true));
        v.push(vector_block("dense.b", &self.dense_b, true));
        v.push(matrix_block("head.W", &self.head_w, true));
        v.push(vector_block("head.b", &self.head_b, true));
        v
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        let trainable = self.embedding.trainable;
        let mut v = vec![matrix_block_mut("embedding", &mut self.embedding.weights, trainable)];
        v.extend(self.cell.blocks_mut().into_iter().map(|mut b| {
            b.name = format!("cell.{}", b.name);
            b
        }));
        v.push(matrix_block_mut("dense.W", &mut self.dense_w, true));
        v.push(vector_block_mut("dense.b", &mut self.dense_b, true));
        v.push(matrix_block_mut("head.W", &mut self.head_w, true));
        v.push(vector_block_mut("head.b", &mut self.head_b, true));
        v
    }
}

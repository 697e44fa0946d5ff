//! Token-index → dense-vector lookup table.

use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{Matrix, Vector};
use crate::text::{Vocabulary, PAD_INDEX};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub weights: Matrix,
    pub trainable: bool,
}

impl EmbeddingMatrix {
    /// Rows drawn from `U(0, 1) / dim`; the pad row is zero.
    ///
    /// Unscaled `U(0, 1)` rows push summed gate inputs deep into tanh
    /// saturation once `dim` reaches 16, hence the `1/dim` factor.
    pub fn random<R: Rng + ?Sized>(vocab_size: usize, dim: usize, rng: &mut R) -> Self {
        let mut weights = Matrix::random_uniform(vocab_size, dim, 0.0, 1.0, rng);
        weights.scale(1.0 / dim as f64);
        let mut emb = EmbeddingMatrix {
            weights,
            trainable: true,
        };
        emb.zero_pad_row();
        emb
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn zero_pad_row(&mut self) {
        if self.weights.rows() > PAD_INDEX {
            self.weights.row_mut(PAD_INDEX).fill(0.0);
        }
    }

    /// Row selection; equivalent to one-hot × weights.
    pub fn lookup(&self, indices: &[usize]) -> Result<Vec<Vector>> {
        self.lookup_rows(indices)
            .map(|rows| rows.into_iter().map(|r| Vector::from_vec(r.to_vec())).collect())
    }

    /// Borrowing variant of [`lookup`](Self::lookup).
    pub fn lookup_rows(&self, indices: &[usize]) -> Result<Vec<&[f64]>> {
        let size = self.vocab_size();
        indices
            .iter()
            .enumerate()
            .map(|(position, &index)| {
                if index < size {
                    Ok(self.weights.row(index))
                } else {
                    Err(Error::Index {
                        position,
                        index,
                        size,
                    })
                }
            })
            .collect()
    }

    /// Copies vectors for tokens found in `vocab` out of a textual
    /// word-vector file (`token v1 .. v_dim` per line, optional `count dim`
    /// header). Unmatched rows keep their random values. Returns the matrix
    /// and how many vocabulary rows were overwritten.
    pub fn load_pretrained<R: Rng + ?Sized>(
        path: &Path,
        vocab: &Vocabulary,
        dim: usize,
        rng: &mut R,
    ) -> Result<(Self, usize)> {
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        let mut emb = EmbeddingMatrix::random(vocab.len(), dim, rng);
        let matched = emb.read_vectors(BufReader::new(file), vocab)?;
        Ok((emb, matched))
    }

    /// Overwrites rows from a word-vector stream; see [`load_pretrained`](Self::load_pretrained).
    pub fn read_vectors<B: BufRead>(&mut self, reader: B, vocab: &Vocabulary) -> Result<usize> {
        let dim = self.dim();
        let mut matched = 0;
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = n + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if line_no == 1 && fields.len() == 2 {
                if let (Ok(_count), Ok(file_dim)) = (fields[0].parse::<u64>(), fields[1].parse::<usize>()) {
                    if file_dim != dim {
                        return Err(Error::Config(format!(
                            "word-vector file has dimension {file_dim}, expected {dim}"
                        )));
                    }
                    continue;
                }
            }
            if fields.len() != dim + 1 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected a token and {dim} values, found {} fields", fields.len()),
                });
            }
            let mut values = Vec::with_capacity(dim);
            for f in &fields[1..] {
                let v: f64 = f.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("unparsable number {f:?}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("non-finite value {f:?}"),
                    });
                }
                values.push(v);
            }
            if let Some(idx) = vocab.index_of(fields[0]) {
                self.weights.row_mut(idx).copy_from_slice(&values);
                matched += 1;
            }
        }
        self.zero_pad_row();
        Ok(matched)
    }
}

/// Fourth root of the vocabulary size, rounded, at least 1.
pub fn embedding_dim_heuristic(vocab_size: usize) -> usize {
    ((vocab_size.max(1) as f64).powf(0.25).round() as usize).max(1)
}

//! Named enumeration of parameter blocks, shared by the optimizers, the
//! checkpoint format and gradient checking.

use crate::numeric::{Matrix, Vector};

#[derive(Debug)]
pub struct Block<'a> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
    pub trainable: bool,
}

#[derive(Debug)]
pub struct BlockMut<'a> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a mut [f64],
    pub trainable: bool,
}

pub trait Parameters {
    /// Blocks in a fixed order; `blocks_mut` must yield the same order.
    fn blocks(&self) -> Vec<Block<'_>>;
    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>>;

    fn num_parameters(&self) -> usize {
        self.blocks().iter().map(|b| b.data.len()).sum()
    }

    /// Sum of squares over trainable blocks.
    fn squared_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .filter(|b| b.trainable)
            .flat_map(|b| b.data.iter())
            .map(|v| v * v)
            .sum()
    }

    fn scale_all(&mut self, k: f64) {
        for b in self.blocks_mut() {
            b.data.iter_mut().for_each(|v| *v *= k);
        }
    }

    /// Element-wise `self += other`; both must come from the same shape family.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            debug_assert_eq!(dst.name, src.name);
            for (a, b) in dst.data.iter_mut().zip(src.data) {
                *a += b;
            }
        }
    }

    /// First trainable block holding a non-finite value.
    fn first_non_finite(&self) -> Option<String> {
        self.blocks()
            .into_iter()
            .find(|b| b.data.iter().any(|v| !v.is_finite()))
            .map(|b| b.name)
    }
}

pub(crate) fn matrix_block<'a>(name: impl Into<String>, m: &'a Matrix, trainable: bool) -> Block<'a> {
    Block {
        name: name.into(),
        rows: m.rows(),
        cols: m.cols(),
        data: m.as_slice(),
        trainable,
    }
}

pub(crate) fn matrix_block_mut<'a>(name: impl Into<String>, m: &'a mut Matrix, trainable: bool) -> BlockMut<'a> {
    let (rows, cols) = m.shape();
    BlockMut {
        name: name.into(),
        rows,
        cols,
        data: m.as_mut_slice(),
        trainable,
    }
}

pub(crate) fn vector_block<'a>(name: impl Into<String>, v: &'a Vector, trainable: bool) -> Block<'a> {
    Block {
        name: name.into(),
        rows: v.len(),
        cols: 1,
        data: v.as_slice(),
        trainable,
    }
}

pub(crate) fn vector_block_mut<'a>(name: impl Into<String>, v: &'a mut Vector, trainable: bool) -> BlockMut<'a> {
    BlockMut {
        name: name.into(),
        rows: v.len(),
        cols: 1,
        data: v.as_mut_slice(),
        trainable,
    }
}

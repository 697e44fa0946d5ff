//! Recurrent text classification from scratch: a preprocessing pipeline,
//! word embeddings, RNN/LSTM/GRU cells with hand-derived backpropagation
//! through time, sigmoid and softmax heads, optimizers, metrics and a
//! deterministic training engine.

pub mod cells;
pub mod embedding;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod par;
pub mod params;
pub mod text;

pub use error::{Error, Result};

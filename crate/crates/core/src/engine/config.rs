use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::cells::{CellKind, InitScheme, RnnActivation};
use crate::embedding::embedding_dim_heuristic;
use crate::error::{Error, Result};
use crate::metrics::Averaging;
use crate::model::{Architecture, HeadKind, LossKind, OptimizerKind};
use crate::text::{load_stopwords, PipelineConfig, DEFAULT_OOV_TOKEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Binary,
    Multiclass,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Task::Binary),
            "multiclass" => Ok(Task::Multiclass),
            other => Err(Error::Config(format!("unknown task {other:?} (binary|multiclass)"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Binary => "binary",
            Task::Multiclass => "multiclass",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingDim {
    /// Fourth root of the vocabulary size.
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Fixed(usize),
}

/// Every experiment option. `learning_rate` and `loss` default per task
/// when left unset.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub cell: CellKind,
    pub vocab_size: usize,
    pub max_len: usize,
    pub embedding_dim: EmbeddingDim,
    pub hidden_size: usize,
    pub dense_size: usize,
    pub learning_rate: Option<f64>,
    pub optimizer: OptimizerKind,
    pub loss: Option<LossKind>,
    pub epochs: usize,
    pub batch_size: BatchSize,
    pub seed: u64,
    pub gradient_clip: Option<f64>,
    pub pretrained_vectors: Option<PathBuf>,
    pub trainable_embeddings: bool,
    pub literal_eq2: bool,
    pub peepholes: bool,
    pub rnn_activation: RnnActivation,
    pub init: InitScheme,
    pub dropout: f64,
    pub train_fraction: f64,
    pub text_column: String,
    pub label_column: String,
    pub lowercase: bool,
    pub strip_nonalpha: bool,
    pub stopwords: Option<PathBuf>,
    pub oov_token: String,
    pub averaging: Averaging,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: Task::Binary,
            cell: CellKind::Gru,
            vocab_size: 10_000,
            max_len: 250,
            embedding_dim: EmbeddingDim::Fixed(16),
            hidden_size: 16,
            dense_size: 8,
            learning_rate: None,
            optimizer: OptimizerKind::Adam,
            loss: None,
            epochs: 30,
            batch_size: BatchSize::Fixed(32),
            seed: 42,
            gradient_clip: None,
            pretrained_vectors: None,
            trainable_embeddings: true,
            literal_eq2: false,
            peepholes: true,
            rnn_activation: RnnActivation::Tanh,
            init: InitScheme::Centered,
            dropout: 0.0,
            train_fraction: 0.5,
            text_column: "text".into(),
            label_column: "label".into(),
            lowercase: true,
            strip_nonalpha: true,
            stopwords: None,
            oov_token: DEFAULT_OOV_TOKEN.into(),
            averaging: Averaging::Macro,
        }
    }
}

/// Recognized keys, in the order `to_text` writes them.
pub const CONFIG_KEYS: &[&str] = &[
    "task",
    "cell",
    "vocab_size",
    "max_len",
    "embedding_dim",
    "hidden_size",
    "dense_size",
    "learning_rate",
    "optimizer",
    "loss",
    "epochs",
    "batch_size",
    "seed",
    "gradient_clip",
    "pretrained_vectors",
    "trainable_embeddings",
    "literal_eq2",
    "peepholes",
    "rnn_activation",
    "init",
    "dropout",
    "train_fraction",
    "text_column",
    "label_column",
    "lowercase",
    "strip_nonalpha",
    "stopwords",
    "oov_token",
    "averaging",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

fn optional(value: &str) -> Option<&str> {
    match value {
        "" | "none" => None,
        v => Some(v),
    }
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unknown keys are
    /// rejected by name.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: format!("expected key = value, got {raw:?}"),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "task" => self.task = value.parse()?,
            "cell" => self.cell = value.parse()?,
            "vocab_size" => self.vocab_size = parse_num(key, value)?,
            "max_len" => self.max_len = parse_num(key, value)?,
            "embedding_dim" => {
                self.embedding_dim = match value {
                    "auto" => EmbeddingDim::Auto,
                    v => EmbeddingDim::Fixed(parse_num(key, v)?),
                }
            }
            "hidden_size" => self.hidden_size = parse_num(key, value)?,
            "dense_size" => self.dense_size = parse_num(key, value)?,
            "learning_rate" => {
                self.learning_rate = match value {
                    "auto" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "optimizer" => self.optimizer = value.parse()?,
            "loss" => {
                self.loss = match value {
                    "auto" => None,
                    v => Some(v.parse()?),
                }
            }
            "epochs" => self.epochs = parse_num(key, value)?,
            "batch_size" => {
                self.batch_size = match value {
                    "full" => BatchSize::Full,
                    v => BatchSize::Fixed(parse_num(key, v)?),
                }
            }
            "seed" => self.seed = parse_num(key, value)?,
            "gradient_clip" => {
                self.gradient_clip = optional(value).map(|v| parse_num(key, v)).transpose()?
            }
            "pretrained_vectors" => self.pretrained_vectors = optional(value).map(PathBuf::from),
            "trainable_embeddings" => self.trainable_embeddings = parse_bool(key, value)?,
            "literal_eq2" => self.literal_eq2 = parse_bool(key, value)?,
            "peepholes" => self.peepholes = parse_bool(key, value)?,
            "rnn_activation" => {
                self.rnn_activation = match value {
                    "tanh" => RnnActivation::Tanh,
                    "sigmoid" => RnnActivation::Sigmoid,
                    v => return Err(Error::Config(format!("invalid rnn_activation {v:?} (tanh|sigmoid)"))),
                }
            }
            "init" => self.init = value.parse()?,
            "dropout" => self.dropout = parse_num(key, value)?,
            "train_fraction" => self.train_fraction = parse_num(key, value)?,
            "text_column" => self.text_column = value.to_string(),
            "label_column" => self.label_column = value.to_string(),
            "lowercase" => self.lowercase = parse_bool(key, value)?,
            "strip_nonalpha" => self.strip_nonalpha = parse_bool(key, value)?,
            "stopwords" => self.stopwords = optional(value).map(PathBuf::from),
            "oov_token" => self.oov_token = value.to_string(),
            "averaging" => self.averaging = value.parse()?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn resolved_learning_rate(&self) -> f64 {
        self.learning_rate.unwrap_or(match self.task {
            Task::Binary => 0.001,
            Task::Multiclass => 0.005,
        })
    }

    pub fn head(&self, num_classes: usize) -> HeadKind {
        match self.task {
            Task::Binary => HeadKind::Sigmoid,
            Task::Multiclass => HeadKind::Softmax(num_classes),
        }
    }

    pub fn resolved_loss(&self) -> LossKind {
        self.loss.unwrap_or(match self.task {
            Task::Binary => LossKind::BinaryCrossEntropy,
            Task::Multiclass => LossKind::SparseCategoricalCrossEntropy,
        })
    }

    pub fn resolved_embedding_dim(&self, vocab_size: usize) -> usize {
        match self.embedding_dim {
            EmbeddingDim::Auto => embedding_dim_heuristic(vocab_size),
            EmbeddingDim::Fixed(d) => d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs > 0 && matches!(self.batch_size, BatchSize::Fixed(0)) {
            return Err(Error::Config("batch_size must be positive or \"full\"".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must be in (0, 1], got {}",
                self.train_fraction
            )));
        }
        if let Some(c) = self.gradient_clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("gradient_clip must be positive, got {c}")));
            }
        }
        if self.literal_eq2 && self.cell != CellKind::Rnn {
            return Err(Error::Config("literal_eq2 requires cell = rnn".into()));
        }
        let lr = self.resolved_learning_rate();
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {lr}")));
        }
        self.pipeline_without_stopwords().validate()
    }

    fn pipeline_without_stopwords(&self) -> PipelineConfig {
        PipelineConfig {
            vocab_size: self.vocab_size,
            max_len: self.max_len,
            lowercase: self.lowercase,
            strip_nonalpha: self.strip_nonalpha,
            stopwords: None,
            oov_token: self.oov_token.clone(),
        }
    }

    /// Text-pipeline settings, reading the stopword file if one is named.
    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let mut p = self.pipeline_without_stopwords();
        if let Some(path) = &self.stopwords {
            p.stopwords = Some(load_stopwords(path)?);
        }
        Ok(p)
    }

    pub fn architecture(&self, vocab_len: usize, num_classes: usize) -> Architecture {
        let head = self.head(num_classes);
        Architecture {
            cell: self.cell,
            vocab_size: vocab_len,
            embedding_dim: self.resolved_embedding_dim(self.vocab_size),
            hidden_size: self.hidden_size,
            dense_size: self.dense_size,
            head,
            loss: self.resolved_loss(),
            peepholes: self.peepholes,
            literal_rnn: self.literal_eq2,
            rnn_activation: self.rnn_activation,
            init: self.init,
            dropout: self.dropout,
        }
    }

    /// `key = value` listing of every key. Task-derived settings that were
    /// never set are written as `auto`, so a file saved for one task still
    /// resolves correctly after `task` changes.
    pub fn to_text(&self) -> String {
        self.listing(false)
    }

    /// Like `to_text` with every `auto` replaced by the value in effect.
    pub fn to_resolved_text(&self) -> String {
        self.listing(true)
    }

    fn listing(&self, resolved: bool) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let _ = writeln!(out, "{key} = {}", self.value_of(key, resolved));
        }
        out
    }

    fn value_of(&self, key: &str, resolved: bool) -> String {
        let opt_path = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        match key {
            "task" => self.task.to_string(),
            "cell" => self.cell.to_string(),
            "vocab_size" => self.vocab_size.to_string(),
            "max_len" => self.max_len.to_string(),
            "embedding_dim" => match self.embedding_dim {
                EmbeddingDim::Auto => "auto".into(),
                EmbeddingDim::Fixed(d) => d.to_string(),
            },
            "hidden_size" => self.hidden_size.to_string(),
            "dense_size" => self.dense_size.to_string(),
            "learning_rate" if self.learning_rate.is_none() && !resolved => "auto".into(),
            "learning_rate" => self.resolved_learning_rate().to_string(),
            "optimizer" => self.optimizer.to_string(),
            "loss" if self.loss.is_none() && !resolved => "auto".into(),
            "loss" => self.resolved_loss().to_string(),
            "epochs" => self.epochs.to_string(),
            "batch_size" => match self.batch_size {
                BatchSize::Full => "full".into(),
                BatchSize::Fixed(b) => b.to_string(),
            },
            "seed" => self.seed.to_string(),
            "gradient_clip" => self.gradient_clip.map_or("none".into(), |c| c.to_string()),
            "pretrained_vectors" => opt_path(&self.pretrained_vectors),
            "trainable_embeddings" => self.trainable_embeddings.to_string(),
            "literal_eq2" => self.literal_eq2.to_string(),
            "peepholes" => self.peepholes.to_string(),
            "rnn_activation" => match self.rnn_activation {
                RnnActivation::Tanh => "tanh".into(),
                RnnActivation::Sigmoid => "sigmoid".into(),
            },
            "init" => self.init.to_string(),
            "dropout" => self.dropout.to_string(),
            "train_fraction" => self.train_fraction.to_string(),
            "text_column" => self.text_column.clone(),
            "label_column" => self.label_column.clone(),
            "lowercase" => self.lowercase.to_string(),
            "strip_nonalpha" => self.strip_nonalpha.to_string(),
            "stopwords" => opt_path(&self.stopwords),
            "oov_token" => self.oov_token.clone(),
            "averaging" => self.averaging.to_string(),
            _ => unreachable!("unlisted key {key}"),
        }
    }
}

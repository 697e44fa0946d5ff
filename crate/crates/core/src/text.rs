//! Text preprocessing: cleaning, tokenization, vocabulary construction and
//! fixed-length encoding with pre-padding and tail truncation.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD_INDEX: usize = 0;
pub const OOV_INDEX: usize = 1;
pub const PAD_TOKEN: &str = "<PAD>";
pub const DEFAULT_OOV_TOKEN: &str = "<UNK>";

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub vocab_size: usize,
    pub max_len: usize,
    pub lowercase: bool,
    pub strip_nonalpha: bool,
    pub stopwords: Option<HashSet<String>>,
    pub oov_token: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            vocab_size: 10_000,
            max_len: 250,
            lowercase: true,
            strip_nonalpha: true,
            stopwords: None,
            oov_token: DEFAULT_OOV_TOKEN.to_string(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 3 {
            return Err(Error::Config(format!(
                "vocab_size must be at least 3 (pad, OOV and one token), got {}",
                self.vocab_size
            )));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        if self.oov_token.is_empty() || self.oov_token == PAD_TOKEN {
            return Err(Error::Config(format!(
                "invalid oov_token {:?}",
                self.oov_token
            )));
        }
        Ok(())
    }

    /// Cleans and tokenizes one raw document.
    pub fn clean(&self, raw: &str) -> Vec<String> {
        let text = if self.lowercase {
            raw.to_lowercase()
        } else {
            raw.to_string()
        };
        let text: String = if self.strip_nonalpha {
            text.chars()
                .map(|c| if c.is_alphanumeric() { c } else { ' ' })
                .collect()
        } else {
            text
        };
        text.split_whitespace()
            .filter(|t| {
                self.stopwords
                    .as_ref()
                    .map_or(true, |sw| !sw.contains(*t))
            })
            .map(str::to_string)
            .collect()
    }
}

/// Reads a stopword file: one token per line, blank lines ignored.
pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    frequencies: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps the `vocab_size - 2` most frequent tokens, ties broken
    /// lexicographically. The OOV slot's frequency counts every dropped
    /// occurrence.
    pub fn build<S: AsRef<str>>(corpus: &[Vec<S>], cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        if corpus.is_empty() {
            return Err(Error::Config("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for doc in corpus {
            for tok in doc {
                *counts.entry(tok.as_ref()).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, u64)> = counts
            .into_iter()
            .filter(|(t, _)| *t != PAD_TOKEN && *t != cfg.oov_token)
            .collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let keep = cfg.vocab_size - 2;
        let dropped: u64 = ranked.iter().skip(keep).map(|(_, c)| c).sum();
        ranked.truncate(keep);

        let mut tokens = vec![PAD_TOKEN.to_string(), cfg.oov_token.clone()];
        let mut frequencies = vec![0, dropped];
        for (tok, count) in ranked {
            tokens.push(tok.to_string());
            frequencies.push(count);
        }
        Ok(Self::from_parts(tokens, frequencies))
    }

    fn from_parts(tokens: Vec<String>, frequencies: Vec<u64>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            tokens,
            frequencies,
            index,
        }
    }

    /// Number of indices in use (pad and OOV included).
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn oov_token(&self) -> &str {
        &self.tokens[OOV_INDEX]
    }

    /// Index of a real token, `None` for OOV.
    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn frequency(&self, index: usize) -> Option<u64> {
        self.frequencies.get(index).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Tab-separated `index, token, frequency` lines, in index order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, (t, f)) in self.tokens.iter().zip(&self.frequencies).enumerate() {
            let _ = writeln!(out, "{i}\t{t}\t{f}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut frequencies = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let parse_err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(parse_err(format!("expected 3 tab-separated fields, found {}", fields.len())));
            }
            let idx: usize = fields[0]
                .parse()
                .map_err(|_| parse_err(format!("bad index {:?}", fields[0])))?;
            if idx != n {
                return Err(parse_err(format!("index {idx} out of order, expected {n}")));
            }
            let freq: u64 = fields[2]
                .parse()
                .map_err(|_| parse_err(format!("bad frequency {:?}", fields[2])))?;
            tokens.push(fields[1].to_string());
            frequencies.push(freq);
        }
        if tokens.len() < 3 {
            return Err(Error::Config(format!(
                "vocabulary needs at least 3 entries, found {}",
                tokens.len()
            )));
        }
        if tokens[PAD_INDEX] != PAD_TOKEN {
            return Err(Error::Parse {
                line: 1,
                message: format!("index 0 must be {PAD_TOKEN}"),
            });
        }
        Ok(Self::from_parts(tokens, frequencies))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_text(&text)
    }

    /// SHA-256 of the persisted form, hex encoded.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Maps tokens to indices, truncating at `max_len` and pre-padding
    /// shorter sequences. Returns the indices and the pre-pad length.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S], max_len: usize) -> (Vec<usize>, usize) {
        let original_length = tokens.len();
        let kept = original_length.min(max_len);
        let mut indices = vec![PAD_INDEX; max_len - kept];
        indices.extend(
            tokens[..kept]
                .iter()
                .map(|t| self.index_of(t.as_ref()).unwrap_or(OOV_INDEX)),
        );
        (indices, original_length)
    }

    /// Inverse of `encode` over the non-pad suffix.
    pub fn decode(&self, indices: &[usize]) -> Vec<String> {
        indices
            .iter()
            .skip_while(|&&i| i == PAD_INDEX)
            .map(|&i| self.tokens.get(i).cloned().unwrap_or_else(|| self.oov_token().to_string()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedDocument {
    pub indices: Vec<usize>,
    pub label: usize,
    pub original_length: usize,
}

impl TokenizedDocument {
    pub fn encode<S: AsRef<str>>(tokens: &[S], label: usize, vocab: &Vocabulary, max_len: usize) -> Self {
        let (indices, original_length) = vocab.encode(tokens, max_len);
        TokenizedDocument {
            indices,
            label,
            original_length,
        }
    }
}

//! Binary checkpoint: everything needed to predict on raw text.
//!
//! Layout: `SEQCKPT1`, u32 version, u64 payload length, payload, then the
//! SHA-256 of the payload. All integers and floats are little-endian. The
//! payload holds the resolved config text, class names, the stopword list,
//! the vocabulary text and its hash, then every parameter block as name,
//! shape and data.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ClassifierModel, HeadKind};
use crate::params::Parameters;
use crate::text::{PipelineConfig, Vocabulary};

use super::config::ExperimentConfig;
use super::dataset::Dataset;

const MAGIC: &[u8; 8] = b"SEQCKPT1";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub class_names: Vec<String>,
    /// Embedded so prediction does not depend on the stopword file.
    pub stopwords: Option<Vec<String>>,
    pub vocab: Vocabulary,
    pub model: ClassifierModel,
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Integrity("checkpoint payload truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&n| n <= self.buf.len())
            .ok_or_else(|| Error::Integrity(format!("implausible length {v}")))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Integrity("invalid utf-8 in checkpoint".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn new(config: ExperimentConfig, dataset: &Dataset, model: ClassifierModel) -> Result<Self> {
        let stopwords = config.pipeline()?.stopwords.map(|set| {
            let mut words: Vec<String> = set.into_iter().collect();
            words.sort();
            words
        });
        Ok(Checkpoint {
            config,
            class_names: dataset.class_names.clone(),
            stopwords,
            vocab: dataset.vocab.clone(),
            model,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut p = Writer::default();
        p.str(&self.config.to_text());
        p.u64(self.class_names.len() as u64);
        for c in &self.class_names {
            p.str(c);
        }
        match &self.stopwords {
            None => p.u64(u64::MAX),
            Some(words) => {
                p.u64(words.len() as u64);
                for w in words {
                    p.str(w);
                }
            }
        }
        p.str(&self.vocab.to_text());
        p.str(&self.vocab.content_hash());
        let blocks = self.model.blocks();
        p.u64(blocks.len() as u64);
        for b in blocks {
            p.str(&b.name);
            p.u64(b.rows as u64);
            p.u64(b.cols as u64);
            for v in b.data {
                p.0.extend_from_slice(&v.to_le_bytes());
            }
        }
        let payload = p.0;
        let mut out = Vec::with_capacity(payload.len() + 52);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&Sha256::digest(&payload));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(Error::Integrity("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Integrity(format!("unsupported checkpoint version {version}")));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let rest = &bytes[20..];
        if rest.len() as u64 != len + 32 {
            return Err(Error::Integrity(format!(
                "payload length {} does not match header {len}",
                rest.len().saturating_sub(32)
            )));
        }
        let (payload, digest) = rest.split_at(len as usize);
        if Sha256::digest(payload).as_slice() != digest {
            return Err(Error::Integrity("checksum mismatch".into()));
        }

        let mut r = Reader { buf: payload, pos: 0 };
        let config = ExperimentConfig::parse(&r.str()?)?;
        let n_classes = r.len()?;
        let class_names = (0..n_classes).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let stopwords = match r.u64()? {
            u64::MAX => None,
            _ => {
                r.pos -= 8;
                let n = r.len()?;
                Some((0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?)
            }
        };
        let vocab = Vocabulary::from_text(&r.str()?)?;
        let hash = r.str()?;
        if hash != vocab.content_hash() {
            return Err(Error::VocabMismatch {
                expected: hash,
                found: vocab.content_hash(),
            });
        }

        // Shape the model from the config echo, then overwrite every block.
        let arch = config.architecture(vocab.len(), class_names.len());
        let mut model = ClassifierModel::new(&arch, &mut ChaCha8Rng::seed_from_u64(0))?;
        model.embedding.trainable = config.trainable_embeddings;
        let n_blocks = r.len()?;
        let mut blocks = model.blocks_mut();
        if n_blocks != blocks.len() {
            return Err(Error::Integrity(format!(
                "checkpoint has {n_blocks} blocks, architecture expects {}",
                blocks.len()
            )));
        }
        for b in blocks.iter_mut() {
            let name = r.str()?;
            let (rows, cols) = (r.len()?, r.len()?);
            if name != b.name || rows != b.rows || cols != b.cols {
                return Err(Error::Integrity(format!(
                    "block {name} ({rows}x{cols}) does not match {} ({}x{})",
                    b.name, b.rows, b.cols
                )));
            }
            for v in b.data.iter_mut() {
                *v = r.f64()?;
            }
        }
        drop(blocks);
        if r.pos != payload.len() {
            return Err(Error::Integrity("trailing bytes in checkpoint payload".into()));
        }
        Ok(Checkpoint {
            config,
            class_names,
            stopwords,
            vocab,
            model,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Refuse a dataset encoded with a different vocabulary.
    pub fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        let (expected, found) = (self.vocab.content_hash(), dataset.vocab.content_hash());
        if expected != found {
            return Err(Error::VocabMismatch { expected, found });
        }
        if dataset.class_names != self.class_names {
            return Err(Error::Config(format!(
                "dataset classes {:?} differ from checkpoint classes {:?}",
                dataset.class_names, self.class_names
            )));
        }
        Ok(())
    }

    /// Cleaning settings as they were at training time.
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            vocab_size: self.config.vocab_size,
            max_len: self.config.max_len,
            lowercase: self.config.lowercase,
            strip_nonalpha: self.config.strip_nonalpha,
            stopwords: self.stopwords.as_ref().map(|w| w.iter().cloned().collect()),
            oov_token: self.config.oov_token.clone(),
        }
    }

    /// Classify raw text. The probability is `ŷ` of the positive class for
    /// a sigmoid head and the winning class's softmax mass otherwise.
    pub fn predict_text(&self, pipeline: &PipelineConfig, text: &str) -> Result<(usize, f64)> {
        let tokens = pipeline.clean(text);
        let (indices, _) = self.vocab.encode(&tokens, self.config.max_len);
        let (class, probs) = self.model.predict(&indices)?;
        let p = match self.model.head {
            HeadKind::Sigmoid => probs[0],
            HeadKind::Softmax(_) => probs[class],
        };
        Ok((class, p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{train, BatchSize};

    fn trained() -> (Checkpoint, Dataset) {
        let rows: Vec<(String, String)> = (0..10)
            .map(|i| {
                let l = ["sport", "tech", "arts"][i % 3];
                (format!("{l} story number {i}"), l.to_string())
            })
            .collect();
        let mut cfg = ExperimentConfig::default();
        cfg.task = super::super::config::Task::Multiclass;
        cfg.max_len = 6;
        cfg.cell = crate::cells::CellKind::Lstm;
        cfg.epochs = 1;
        cfg.batch_size = BatchSize::Fixed(4);
        let ds = Dataset::from_rows(&rows, &cfg.pipeline().unwrap()).unwrap();
        let split = ds.split(0.5, 3).unwrap();
        let out = train(&cfg, &ds, &split).unwrap();
        (Checkpoint::new(cfg, &ds, out.model).unwrap(), ds)
    }

    #[test]
    fn round_trip_is_exact() {
        let (ck, ds) = trained();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back.model, ck.model);
        assert_eq!(back.class_names, ck.class_names);
        back.check_dataset(&ds).unwrap();
        assert_eq!(back.to_bytes(), ck.to_bytes());
    }

    #[test]
    fn corruption_is_detected() {
        let (ck, _) = trained();
        let bytes = ck.to_bytes();
        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 0x40;
        assert!(matches!(Checkpoint::from_bytes(&flipped), Err(Error::Integrity(_))));
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 5]),
            Err(Error::Integrity(_))
        ));
        assert!(matches!(Checkpoint::from_bytes(b"garbage"), Err(Error::Integrity(_))));
    }

    #[test]
    fn foreign_vocabulary_is_rejected() {
        let (ck, _) = trained();
        let rows = vec![("other words".to_string(), "sport".to_string())];
        let other = Dataset::from_rows(&rows, &ck.config.pipeline().unwrap()).unwrap();
        assert!(matches!(ck.check_dataset(&other), Err(Error::VocabMismatch { .. })));
    }

    #[test]
    fn predicts_raw_text() {
        let (ck, _) = trained();
        let (class, p) = ck.predict_text(&ck.pipeline(), "A tech story!").unwrap();
        assert!(class < 3);
        assert!((0.0..=1.0).contains(&p));
    }
}

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::text::{PipelineConfig, TokenizedDocument, Vocabulary, OOV_INDEX, PAD_INDEX};

const ENCODED_MAGIC: &str = "#seqclass-encoded v1";

/// Encoded documents plus the vocabulary and label names that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub documents: Vec<TokenizedDocument>,
    pub class_names: Vec<String>,
    pub vocab: Vocabulary,
    pub max_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub documents: usize,
    pub class_counts: Vec<(String, usize)>,
    pub average_length: f64,
    pub vocabulary_size: usize,
    /// Fraction of kept (non-truncated) tokens mapped to OOV.
    pub oov_rate: f64,
    pub truncated: usize,
}

/// Raw `(text, label)` rows from a header-bearing CSV file.
pub fn read_csv_rows<R: Read>(reader: R, text_column: &str, label_column: &str) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| {
            Error::Config(format!(
                "column {name:?} not found; available: {}",
                headers.iter().collect::<Vec<_>>().join(", ")
            ))
        })
    };
    let (ti, li) = (find(text_column)?, find(label_column)?);
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            // header is line 1
            line: e.position().map_or(n + 2, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        rows.push((rec[ti].to_string(), rec[li].trim().to_string()));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "dataset has no rows".into(),
        });
    }
    Ok(rows)
}

impl Dataset {
    /// Cleans every row, builds the vocabulary over the whole file and
    /// encodes. Labels are numbered by first appearance.
    pub fn from_rows(rows: &[(String, String)], pipeline: &PipelineConfig) -> Result<Self> {
        let tokens: Vec<Vec<String>> = rows.iter().map(|(t, _)| pipeline.clean(t)).collect();
        let vocab = Vocabulary::build(&tokens, pipeline)?;
        Self::encode_rows(rows, &tokens, vocab, pipeline.max_len)
    }

    /// Encodes with an existing vocabulary (e.g. one stored in a checkpoint).
    pub fn from_rows_with_vocab(
        rows: &[(String, String)],
        pipeline: &PipelineConfig,
        vocab: Vocabulary,
        class_names: &[String],
    ) -> Result<Self> {
        let tokens: Vec<Vec<String>> = rows.iter().map(|(t, _)| pipeline.clean(t)).collect();
        let mut ds = Self::encode_rows(rows, &tokens, vocab, pipeline.max_len)?;
        // remap labels onto the given class order
        let remap: Vec<usize> = ds
            .class_names
            .iter()
            .map(|name| {
                class_names
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| Error::Config(format!("label {name:?} unknown to the model")))
            })
            .collect::<Result<_>>()?;
        for d in &mut ds.documents {
            d.label = remap[d.label];
        }
        ds.class_names = class_names.to_vec();
        Ok(ds)
    }

    fn encode_rows(rows: &[(String, String)], tokens: &[Vec<String>], vocab: Vocabulary, max_len: usize) -> Result<Self> {
        let mut class_names: Vec<String> = Vec::new();
        let mut class_index: HashMap<&str, usize> = HashMap::new();
        let mut documents = Vec::with_capacity(rows.len());
        for ((_, label), toks) in rows.iter().zip(tokens) {
            let next = class_names.len();
            let idx = *class_index.entry(label.as_str()).or_insert_with(|| {
                class_names.push(label.clone());
                next
            });
            documents.push(TokenizedDocument::encode(toks, idx, &vocab, max_len));
        }
        Ok(Dataset {
            documents,
            class_names,
            vocab,
            max_len,
        })
    }

    pub fn load_csv(path: &Path, text_column: &str, label_column: &str, pipeline: &PipelineConfig) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        let rows = read_csv_rows(file, text_column, label_column)?;
        Self::from_rows(&rows, pipeline)
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.documents.iter().map(|d| d.label).collect()
    }

    pub fn stats(&self) -> CorpusStats {
        let mut counts = vec![0usize; self.num_classes()];
        let mut kept = 0usize;
        let mut oov = 0usize;
        let mut total_len = 0usize;
        let mut truncated = 0usize;
        for d in &self.documents {
            counts[d.label] += 1;
            total_len += d.original_length;
            if d.original_length > self.max_len {
                truncated += 1;
            }
            for &i in &d.indices {
                if i != PAD_INDEX {
                    kept += 1;
                    oov += usize::from(i == OOV_INDEX);
                }
            }
        }
        let n = self.documents.len().max(1) as f64;
        CorpusStats {
            documents: self.documents.len(),
            class_counts: self.class_names.iter().cloned().zip(counts).collect(),
            average_length: total_len as f64 / n,
            vocabulary_size: self.vocab.len(),
            oov_rate: if kept == 0 { 0.0 } else { oov as f64 / kept as f64 },
            truncated,
        }
    }

    /// Encoded-dataset text format: a magic line, `max_len`, `vocab_hash`
    /// and `classes` header lines (tab separated), then one
    /// `label<TAB>original_length<TAB>space-separated indices` line per
    /// document.
    pub fn encoded_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{ENCODED_MAGIC}");
        let _ = writeln!(out, "max_len\t{}", self.max_len);
        let _ = writeln!(out, "vocab_hash\t{}", self.vocab.content_hash());
        let _ = writeln!(out, "classes\t{}", self.class_names.join("\t"));
        for d in &self.documents {
            let idx: Vec<String> = d.indices.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{}\t{}\t{}", d.label, d.original_length, idx.join(" "));
        }
        out
    }

    /// Reads the encoded form and checks it against `vocab`.
    pub fn from_encoded_text(text: &str, vocab: Vocabulary) -> Result<Self> {
        let mut it = text.lines().enumerate();
        match it.next() {
            Some((_, l)) if l == ENCODED_MAGIC => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: "not an encoded dataset file".into(),
                })
            }
        }
        let mut field = |key: &str| -> Result<(usize, String)> {
            let (n, line) = it.next().ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("missing {key} header"),
            })?;
            match line.split_once('\t') {
                Some((k, v)) if k == key => Ok((n + 1, v.to_string())),
                _ => Err(Error::Parse {
                    line: n + 1,
                    message: format!("expected {key} header"),
                }),
            }
        };
        let (ln, max_len) = field("max_len")?;
        let max_len: usize = max_len.parse().map_err(|_| Error::Parse {
            line: ln,
            message: "bad max_len".into(),
        })?;
        let (_, hash) = field("vocab_hash")?;
        let (_, classes) = field("classes")?;
        if hash != vocab.content_hash() {
            return Err(Error::VocabMismatch {
                expected: hash,
                found: vocab.content_hash(),
            });
        }
        let class_names: Vec<String> = classes.split('\t').map(str::to_string).collect();
        let mut documents = Vec::new();
        for (n, line) in it {
            let line_no = n + 1;
            let bad = |m: &str| Error::Parse {
                line: line_no,
                message: m.to_string(),
            };
            let mut parts = line.splitn(3, '\t');
            let label: usize = parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad("bad label"))?;
            let original_length: usize =
                parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad("bad length"))?;
            let indices: Vec<usize> = parts
                .next()
                .ok_or_else(|| bad("missing indices"))?
                .split(' ')
                .map(|v| v.parse().map_err(|_| bad("bad index")))
                .collect::<Result<_>>()?;
            if indices.len() != max_len {
                return Err(bad(&format!("{} indices, expected {max_len}", indices.len())));
            }
            if label >= class_names.len() {
                return Err(bad(&format!("label {label} out of range")));
            }
            if let Some(&i) = indices.iter().find(|&&i| i >= vocab.len()) {
                return Err(bad(&format!("index {i} outside vocabulary")));
            }
            documents.push(TokenizedDocument {
                indices,
                label,
                original_length,
            });
        }
        if documents.is_empty() {
            return Err(Error::Parse {
                line: 4,
                message: "encoded dataset has no documents".into(),
            });
        }
        Ok(Dataset {
            documents,
            class_names,
            vocab,
            max_len,
        })
    }

    /// Writes `vocab.tsv` and `dataset.tsv` into `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        self.vocab.save(&dir.join("vocab.tsv"))?;
        let p = dir.join("dataset.tsv");
        std::fs::write(&p, self.encoded_text()).map_err(|e| Error::file(&p, e))
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let vocab = Vocabulary::load(&dir.join("vocab.tsv"))?;
        let p = dir.join("dataset.tsv");
        let text = std::fs::read_to_string(&p).map_err(|e| Error::file(&p, e))?;
        Self::from_encoded_text(&text, vocab)
    }

    /// Stratified, seeded split. Each class contributes
    /// `round(n_c * fraction)` documents to train, clamped so that every
    /// class keeps at least one document on each side when `fraction < 1`.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<Split> {
        if !(train_fraction > 0.0 && train_fraction <= 1.0) {
            return Err(Error::Config(format!("train fraction must be in (0, 1], got {train_fraction}")));
        }
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); self.num_classes()];
        for (i, d) in self.documents.iter().enumerate() {
            by_class[d.label].push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (c, mut members) in by_class.into_iter().enumerate() {
            if train_fraction < 1.0 && members.len() < 2 {
                return Err(Error::Config(format!(
                    "class {:?} has {} example(s); stratified splitting needs at least 2",
                    self.class_names[c],
                    members.len()
                )));
            }
            members.shuffle(&mut rng);
            let n = members.len();
            let mut k = (n as f64 * train_fraction).round() as usize;
            if train_fraction < 1.0 {
                k = k.clamp(1, n - 1);
            }
            train.extend_from_slice(&members[..k]);
            test.extend_from_slice(&members[k..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok(Split { train, test })
    }

    /// Explicit per-split sizes; classes are interleaved proportionally.
    pub fn split_counts(&self, train: usize, test: usize, seed: u64) -> Result<Split> {
        let n = self.documents.len();
        if train == 0 || train + test > n {
            return Err(Error::Config(format!("cannot take {train} + {test} documents from {n}")));
        }
        let full = self.split(train as f64 / (train + test) as f64, seed)?;
        let mut split = full;
        split.train.truncate(train);
        split.test.truncate(test);
        Ok(split)
    }

    /// Indices of every document, for evaluating on the whole set.
    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.documents.len()).collect()
    }
}

impl CorpusStats {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "documents={}", self.documents);
        let _ = writeln!(out, "classes={}", self.class_counts.len());
        for (name, count) in &self.class_counts {
            let _ = writeln!(out, "class.{name}={count}");
        }
        let _ = writeln!(out, "average_length={:.2}", self.average_length);
        let _ = writeln!(out, "vocabulary_size={}", self.vocabulary_size);
        let _ = writeln!(out, "oov_rate={:.4}", self.oov_rate);
        let _ = writeln!(out, "truncated={}", self.truncated);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(t, l)| (t.to_string(), l.to_string())).collect()
    }

    fn pipeline() -> PipelineConfig {
        PipelineConfig {
            vocab_size: 50,
            max_len: 6,
            ..Default::default()
        }
    }

    #[test]
    fn labels_by_first_appearance() {
        let ds = Dataset::from_rows(&rows(&[("good film", "pos"), ("bad film", "neg")]), &pipeline()).unwrap();
        assert_eq!(ds.class_names, vec!["pos", "neg"]);
        assert_eq!(ds.labels(), vec![0, 1]);
    }

    #[test]
    fn csv_columns_and_quoting() {
        let csv = "id,text,label\n1,\"Hello, \"\"world\"\"\",a\n2,plain,b\n3,more,c\n4,x,d\n5,y,e\n";
        let r = read_csv_rows(csv.as_bytes(), "text", "label").unwrap();
        assert_eq!(r[0].0, "Hello, \"world\"");
        let ds = Dataset::from_rows(&r, &pipeline()).unwrap();
        assert_eq!(ds.num_classes(), 5);
        let err = read_csv_rows(csv.as_bytes(), "body", "label").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(read_csv_rows("text,label\n".as_bytes(), "text", "label").is_err());
        let ragged = "text,label\na,b\nc\n";
        assert!(matches!(read_csv_rows(ragged.as_bytes(), "text", "label"), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn split_arithmetic() {
        let data: Vec<(String, String)> = (0..10)
            .map(|i| (format!("doc {i}"), if i % 2 == 0 { "a" } else { "b" }.to_string()))
            .collect();
        let ds = Dataset::from_rows(&data, &pipeline()).unwrap();
        let s = ds.split(0.8, 3).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
        for c in 0..2 {
            assert_eq!(s.train.iter().filter(|&&i| ds.documents[i].label == c).count(), 4);
            assert_eq!(s.test.iter().filter(|&&i| ds.documents[i].label == c).count(), 1);
        }
        assert_eq!(s, ds.split(0.8, 3).unwrap());
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, ds.all_indices());
    }

    #[test]
    fn split_needs_two_per_class() {
        let ds = Dataset::from_rows(&rows(&[("a", "x"), ("b", "y"), ("c", "y")]), &pipeline()).unwrap();
        assert!(matches!(ds.split(0.5, 0), Err(Error::Config(_))));
        assert_eq!(ds.split(1.0, 0).unwrap().train.len(), 3);
    }

    #[test]
    fn split_halves_large_corpus() {
        let docs = (0..50_000)
            .map(|i| TokenizedDocument {
                indices: vec![0],
                label: i % 2,
                original_length: 0,
            })
            .collect();
        let vocab = Vocabulary::build(&[vec!["a"]], &pipeline()).unwrap();
        let ds = Dataset {
            documents: docs,
            class_names: vec!["pos".into(), "neg".into()],
            vocab,
            max_len: 1,
        };
        let s = ds.split(0.5, 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (25_000, 25_000));
    }

    #[test]
    fn encoded_round_trip_and_vocab_check() {
        let ds = Dataset::from_rows(&rows(&[("one two three", "a"), ("four", "b")]), &pipeline()).unwrap();
        let text = ds.encoded_text();
        let back = Dataset::from_encoded_text(&text, ds.vocab.clone()).unwrap();
        assert_eq!(back, ds);
        let other = Vocabulary::build(&[vec!["zzz"]], &pipeline()).unwrap();
        assert!(matches!(Dataset::from_encoded_text(&text, other), Err(Error::VocabMismatch { .. })));
    }

    #[test]
    fn stats() {
        let ds = Dataset::from_rows(&rows(&[("a b c d e f g h", "x"), ("a", "y")]), &PipelineConfig {
            vocab_size: 4,
            max_len: 6,
            ..Default::default()
        })
        .unwrap();
        let s = ds.stats();
        assert_eq!(s.documents, 2);
        assert_eq!(s.average_length, 4.5);
        assert_eq!(s.truncated, 1);
        // kept tokens: a b c d e f + a; real vocabulary is {a, b}
        assert!((s.oov_rate - 4.0 / 7.0).abs() < 1e-12);
    }
}

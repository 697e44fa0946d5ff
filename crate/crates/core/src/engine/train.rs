use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::metrics::{evaluate_predictions, EvalReport};
use crate::model::{clip_global_norm, ClassifierModel, ModelGrads, OptimizerState};
use crate::params::Parameters;
use crate::par::{map_ordered, Parallelism};
use crate::text::TokenizedDocument;

use super::config::{BatchSize, ExperimentConfig};
use super::dataset::{Dataset, Split};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    /// Percent.
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearningCurve {
    pub records: Vec<EpochRecord>,
}

pub const CURVE_HEADER: &str = "epoch,train_loss,train_acc,test_loss,test_acc";

impl LearningCurve {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CURVE_HEADER}\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?}",
                r.epoch, r.train_loss, r.train_acc, r.test_loss, r.test_acc
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::file(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ClassifierModel,
    pub curve: LearningCurve,
}

/// Mean loss, report and predictions over a set of documents.
#[derive(Debug, Clone)]
pub struct SplitEvaluation {
    pub loss: f64,
    pub report: EvalReport,
    pub predictions: Vec<usize>,
}

/// Fresh model for `dataset` under `config`, loading pretrained vectors
/// when configured. Draws its initial weights from `rng`.
pub fn initial_model(config: &ExperimentConfig, dataset: &Dataset, rng: &mut ChaCha8Rng) -> Result<ClassifierModel> {
    let arch = config.architecture(dataset.vocab.len(), dataset.num_classes());
    if config.task == super::config::Task::Binary && dataset.num_classes() != 2 {
        return Err(Error::Config(format!(
            "binary task needs exactly 2 classes, dataset has {}",
            dataset.num_classes()
        )));
    }
    let mut embedding = match &config.pretrained_vectors {
        Some(path) => EmbeddingMatrix::load_pretrained(path, &dataset.vocab, arch.embedding_dim, rng)?.0,
        None => {
            arch.validate()?;
            EmbeddingMatrix::random(arch.vocab_size, arch.embedding_dim, rng)
        }
    };
    embedding.trainable = config.trainable_embeddings;
    ClassifierModel::with_embedding(&arch, embedding, rng)
}

fn mix_seed(parts: &[u64]) -> u64 {
    // splitmix64 over the parts
    let mut z = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        z = z.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Mean loss and mean gradient over `docs`. Per-document work may run in
/// parallel; the reduction is always in document order. `dropout_seed`
/// enables training-mode dropout with per-document masks derived from it.
pub fn batch_gradient(
    model: &ClassifierModel,
    docs: &[&TokenizedDocument],
    mode: Parallelism,
    dropout_seed: Option<u64>,
) -> Result<(f64, ModelGrads)> {
    if docs.is_empty() {
        return Err(Error::Contract("gradient of an empty batch".into()));
    }
    let per_doc = map_ordered(docs, mode, |i, doc| -> Result<(f64, ModelGrads)> {
        let trace = match dropout_seed {
            Some(seed) if model.dropout > 0.0 => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, i as u64]));
                model.forward_train(&doc.indices, &mut rng)?
            }
            _ => model.forward(&doc.indices)?,
        };
        let (loss, g) = model.loss_and_logit_grad(&trace, doc.label)?;
        Ok((loss, model.backward(&trace, &g)?))
    });
    let mut total = model.zero_grads();
    let mut loss_sum = 0.0;
    for r in per_doc {
        let (loss, g) = r?;
        loss_sum += loss;
        total.accumulate(&g);
    }
    let m = docs.len() as f64;
    total.scale(1.0 / m);
    Ok((loss_sum / m, total))
}

/// One optimizer update on one batch. Divergence errors carry epoch and
/// batch 0; the caller fills in the real position.
fn train_step(
    model: &mut ClassifierModel,
    optimizer: &mut OptimizerState,
    docs: &[&TokenizedDocument],
    mode: Parallelism,
    dropout_seed: u64,
    clip: Option<f64>,
) -> Result<f64> {
    let diverged = |detail: String| Error::Divergence { epoch: 0, batch: 0, detail };
    let (loss, grads) = batch_gradient(model, docs, mode, Some(dropout_seed))?;
    if !loss.is_finite() {
        return Err(diverged(format!("loss is {loss}")));
    }
    if let Some(block) = grads.first_non_finite() {
        return Err(diverged(format!("non-finite gradient in block {block}")));
    }
    let mut flat = grads.to_flat(model);
    if let Some(max_norm) = clip {
        clip_global_norm(&mut flat, max_norm);
    }
    optimizer.step(model, &flat).map_err(|e| diverged(e.to_string()))?;
    model.embedding.zero_pad_row();
    if let Some(block) = Parameters::first_non_finite(model) {
        return Err(diverged(format!("non-finite parameter in block {block} after update")));
    }
    Ok(loss)
}

pub fn evaluate_split(
    model: &ClassifierModel,
    dataset: &Dataset,
    indices: &[usize],
    mode: Parallelism,
) -> Result<SplitEvaluation> {
    if indices.is_empty() {
        return Err(Error::Contract("cannot evaluate an empty split".into()));
    }
    let outputs = map_ordered(indices, mode, |_, &i| -> Result<(usize, f64)> {
        let doc = &dataset.documents[i];
        let trace = model.forward(&doc.indices)?;
        let (loss, _) = model.loss_and_logit_grad(&trace, doc.label)?;
        Ok((model.head.predict(&trace.probs), loss))
    });
    let mut predictions = Vec::with_capacity(indices.len());
    let mut loss_sum = 0.0;
    for o in outputs {
        let (p, l) = o?;
        predictions.push(p);
        loss_sum += l;
    }
    let labels: Vec<usize> = indices.iter().map(|&i| dataset.documents[i].label).collect();
    let report = evaluate_predictions(&predictions, &labels, model.num_classes())?;
    Ok(SplitEvaluation {
        loss: loss_sum / indices.len() as f64,
        report,
        predictions,
    })
}

pub fn evaluate(model: &ClassifierModel, dataset: &Dataset, indices: &[usize]) -> Result<EvalReport> {
    Ok(evaluate_split(model, dataset, indices, Parallelism::Auto)?.report)
}

pub fn train(config: &ExperimentConfig, dataset: &Dataset, split: &Split) -> Result<TrainOutcome> {
    train_with(config, dataset, split, Parallelism::Auto, |_| {})
}

/// The epoch loop: seeded reshuffle, mini-batch mean gradient, one
/// optimizer step per batch, then a full evaluation of both splits.
pub fn train_with(
    config: &ExperimentConfig,
    dataset: &Dataset,
    split: &Split,
    mode: Parallelism,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::Contract("training split is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = initial_model(config, dataset, &mut rng)?;
    let mut optimizer = OptimizerState::new(config.optimizer, config.resolved_learning_rate())?;
    let batch = match config.batch_size {
        BatchSize::Full => split.train.len(),
        BatchSize::Fixed(b) => b,
    };
    let mut curve = LearningCurve::default();
    let mut order = split.train.clone();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(batch).enumerate() {
            let docs: Vec<&TokenizedDocument> = chunk.iter().map(|&i| &dataset.documents[i]).collect();
            let dropout_seed = mix_seed(&[config.seed, epoch as u64, b as u64]);
            train_step(&mut model, &mut optimizer, &docs, mode, dropout_seed, config.gradient_clip).map_err(|e| match e {
                Error::Divergence { detail, .. } => Error::Divergence { epoch, batch: b, detail },
                other => other,
            })?;
        }
        let tr = evaluate_split(&model, dataset, &split.train, mode)?;
        let (test_loss, test_acc) = if split.test.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let te = evaluate_split(&model, dataset, &split.test, mode)?;
            (te.loss, te.report.accuracy)
        };
        if !tr.loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: order.len().div_ceil(batch),
                detail: format!("training loss is {}", tr.loss),
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss: tr.loss,
            train_acc: tr.report.accuracy,
            test_loss,
            test_acc,
        };
        on_epoch(&record);
        curve.records.push(record);
    }
    Ok(TrainOutcome { model, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::dataset::Dataset;
    use crate::params::Parameters;
    use crate::text::PipelineConfig;

    fn tiny() -> (ExperimentConfig, Dataset) {
        let rows: Vec<(String, String)> = (0..12)
            .map(|i| {
                if i % 2 == 0 {
                    (format!("good great fine {i}"), "pos".to_string())
                } else {
                    (format!("bad awful poor {i}"), "neg".to_string())
                }
            })
            .collect();
        let mut cfg = ExperimentConfig::default();
        cfg.max_len = 5;
        cfg.epochs = 2;
        cfg.batch_size = BatchSize::Fixed(4);
        let pipe = PipelineConfig {
            vocab_size: 100,
            max_len: 5,
            ..Default::default()
        };
        (cfg, Dataset::from_rows(&rows, &pipe).unwrap())
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let (mut cfg, ds) = tiny();
        cfg.epochs = 0;
        let split = ds.split(0.5, 1).unwrap();
        let out = train(&cfg, &ds, &split).unwrap();
        assert!(out.curve.records.is_empty());
        let init = initial_model(&cfg, &ds, &mut ChaCha8Rng::seed_from_u64(cfg.seed)).unwrap();
        assert_eq!(out.model, init);
        assert_eq!(out.curve.to_csv(), format!("{CURVE_HEADER}\n"));
    }

    #[test]
    fn curve_has_one_record_per_epoch() {
        let (cfg, ds) = tiny();
        let split = ds.split(0.5, 1).unwrap();
        let out = train(&cfg, &ds, &split).unwrap();
        assert_eq!(out.curve.records.len(), 2);
        assert_eq!(out.curve.to_csv().lines().count(), 3);
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let (mut cfg, ds) = tiny();
        cfg.dropout = 0.3;
        let split = ds.split(0.5, 1).unwrap();
        let a = train_with(&cfg, &ds, &split, Parallelism::Auto, |_| {}).unwrap();
        let b = train_with(&cfg, &ds, &split, Parallelism::Sequential, |_| {}).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.curve, b.curve);
    }

    #[test]
    fn divergence_is_reported() {
        let (cfg, ds) = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut model = initial_model(&cfg, &ds, &mut rng).unwrap();
        let mut opt = OptimizerState::new(cfg.optimizer, 0.001).unwrap();
        let docs: Vec<&TokenizedDocument> = ds.documents.iter().take(4).collect();
        assert!(train_step(&mut model, &mut opt, &docs, Parallelism::Sequential, 1, None).is_ok());
        model.head_b[0] = f64::NAN;
        let err = train_step(&mut model, &mut opt, &docs, Parallelism::Sequential, 1, None).unwrap_err();
        assert!(err.to_string().contains("loss is NaN"), "{err}");
        model.head_b[0] = 0.0;
        model.dense_w.set(0, 0, f64::INFINITY);
        let err = train_step(&mut model, &mut opt, &docs, Parallelism::Sequential, 1, None).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn pad_row_stays_zero_through_training() {
        let (cfg, ds) = tiny();
        let split = ds.split(0.5, 1).unwrap();
        let out = train(&cfg, &ds, &split).unwrap();
        assert!(out.model.embedding.weights.row(0).iter().all(|&v| v == 0.0));
        assert!(out.model.squared_norm().is_finite());
    }

    #[test]
    fn binary_task_rejects_three_classes() {
        let (cfg, _) = tiny();
        let rows: Vec<(String, String)> =
            ["a", "b", "c"].iter().map(|l| (format!("x {l}"), l.to_string())).collect();
        let ds = Dataset::from_rows(&rows, &cfg.pipeline().unwrap()).unwrap();
        let split = ds.split(1.0, 0).unwrap();
        assert!(matches!(train(&cfg, &ds, &split), Err(Error::Config(_))));
    }
}

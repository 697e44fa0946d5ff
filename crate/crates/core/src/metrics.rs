//! Confusion matrices and accuracy / precision / recall / F1 reports.
//!
//! All reported scores are percentages. For two classes, class 1 is the
//! positive class and the headline precision/recall/F1 refer to it.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    /// Row = true class, column = predicted class.
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(preds: &[usize], labels: &[usize], classes: usize) -> Result<Self> {
        if preds.len() != labels.len() {
            return Err(Error::Contract(format!(
                "{} predictions for {} labels",
                preds.len(),
                labels.len()
            )));
        }
        if preds.is_empty() {
            return Err(Error::Contract("confusion matrix of zero examples".into()));
        }
        let mut counts = vec![0; classes * classes];
        for (i, (&p, &l)) in preds.iter().zip(labels).enumerate() {
            if p >= classes || l >= classes {
                return Err(Error::Contract(format!(
                    "example {i}: class out of range (pred {p}, label {l}, {classes} classes)"
                )));
            }
            counts[l * classes + p] += 1;
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    /// From explicit counts, `rows[true][pred]`.
    pub fn from_counts(rows: &[Vec<u64>]) -> Result<Self> {
        let classes = rows.len();
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::Contract("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix {
            classes,
            counts: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (0..self.classes).map(|p| self.get(truth, p)).sum()
    }

    pub fn column_sum(&self, pred: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, pred)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes.max(1)).map(<[u64]>::to_vec).collect()
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Round half away from zero to two decimals, as printed in reports.
pub fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    #[default]
    Macro,
    Weighted,
}

impl FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macro" => Ok(Averaging::Macro),
            "weighted" => Ok(Averaging::Weighted),
            other => Err(Error::Config(format!("unknown averaging {other:?} (macro|weighted)"))),
        }
    }
}

impl std::fmt::Display for Averaging {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Averaging::Macro => "macro",
            Averaging::Weighted => "weighted",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassScores>,
    pub macro_avg: ClassScores,
    pub weighted_avg: ClassScores,
    /// Set when some precision or recall had a zero denominator.
    pub zero_division: bool,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    /// The single precision/recall/F1 triple a table row shows: the
    /// positive class for binary tasks, the chosen average otherwise.
    pub fn headline(&self, averaging: Averaging) -> ClassScores {
        if self.per_class.len() == 2 {
            return self.per_class[1];
        }
        match averaging {
            Averaging::Macro => self.macro_avg,
            Averaging::Weighted => self.weighted_avg,
        }
    }

    /// Human-readable table: headline row, per-class rows, confusion matrix.
    pub fn to_table(&self, model_name: &str, class_names: &[String], averaging: Averaging) -> String {
        let h = self.headline(averaging);
        let mut out = String::new();
        out.push_str(&table_header());
        out.push_str(&table_row(model_name, self.accuracy, h.precision, h.recall, h.f1));
        out.push('\n');
        let _ = writeln!(out, "{:<16}{:>10}{:>10}{:>10}{:>10}", "Class", "Precision", "Recall", "F1 Score", "Support");
        for (c, s) in self.per_class.iter().enumerate() {
            let name = class_names.get(c).map_or_else(|| c.to_string(), Clone::clone);
            let _ = writeln!(
                out,
                "{:<16}{:>10.2}{:>10.2}{:>10.2}{:>10}",
                name, s.precision, s.recall, s.f1, s.support
            );
        }
        out.push_str("\nConfusion (rows = true, columns = predicted)\n");
        for row in self.confusion.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>8}")).collect();
            let _ = writeln!(out, "{}", cells.join(""));
        }
        if self.zero_division {
            out.push_str("warning: some classes were never predicted or never present; their scores are 0\n");
        }
        out
    }

    /// `name=value` lines with full precision.
    pub fn to_metrics_text(&self, class_names: &[String], averaging: Averaging) -> String {
        let h = self.headline(averaging);
        let mut out = String::new();
        let _ = writeln!(out, "accuracy={}", self.accuracy);
        let _ = writeln!(out, "precision={}", h.precision);
        let _ = writeln!(out, "recall={}", h.recall);
        let _ = writeln!(out, "f1={}", h.f1);
        let _ = writeln!(out, "averaging={averaging}");
        for (label, s) in [("macro", self.macro_avg), ("weighted", self.weighted_avg)] {
            let _ = writeln!(out, "{label}_precision={}", s.precision);
            let _ = writeln!(out, "{label}_recall={}", s.recall);
            let _ = writeln!(out, "{label}_f1={}", s.f1);
        }
        for (c, s) in self.per_class.iter().enumerate() {
            let name = class_names.get(c).map_or_else(|| c.to_string(), Clone::clone);
            let _ = writeln!(out, "class.{name}.precision={}", s.precision);
            let _ = writeln!(out, "class.{name}.recall={}", s.recall);
            let _ = writeln!(out, "class.{name}.f1={}", s.f1);
            let _ = writeln!(out, "class.{name}.support={}", s.support);
        }
        let _ = writeln!(out, "total={}", self.confusion.total());
        let _ = writeln!(out, "zero_division={}", self.zero_division);
        out
    }
}

pub fn table_header() -> String {
    format!("{:<16}{:>10}{:>10}{:>10}{:>10}\n", "Model", "Accuracy", "Precision", "Recall", "F1 Score")
}

/// One report row; F1 is derived from the given precision and recall.
pub fn table_row(model_name: &str, accuracy: f64, precision: f64, recall: f64, f1: f64) -> String {
    format!("{model_name:<16}{accuracy:>10.2}{precision:>10.2}{recall:>10.2}{f1:>10.2}\n")
}

fn ratio(num: u64, den: u64, zero_division: &mut bool) -> f64 {
    if den == 0 {
        *zero_division = true;
        0.0
    } else {
        num as f64 / den as f64 * 100.0
    }
}

fn averages(per_class: &[ClassScores]) -> (ClassScores, ClassScores) {
    let n = per_class.len() as f64;
    let total: u64 = per_class.iter().map(|s| s.support).sum();
    let mean = |f: fn(&ClassScores) -> f64| per_class.iter().map(f).sum::<f64>() / n;
    let wmean = |f: fn(&ClassScores) -> f64| {
        per_class.iter().map(|s| f(s) * s.support as f64).sum::<f64>() / total as f64
    };
    (
        ClassScores {
            precision: mean(|s| s.precision),
            recall: mean(|s| s.recall),
            f1: mean(|s| s.f1),
            support: total,
        },
        ClassScores {
            precision: wmean(|s| s.precision),
            recall: wmean(|s| s.recall),
            f1: wmean(|s| s.f1),
            support: total,
        },
    )
}

pub fn scores(cm: &ConfusionMatrix) -> Result<EvalReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Contract("cannot score an empty confusion matrix".into()));
    }
    let mut zero_division = false;
    let per_class: Vec<ClassScores> = (0..cm.classes())
        .map(|c| {
            let tp = cm.get(c, c);
            let precision = ratio(tp, cm.column_sum(c), &mut zero_division);
            let recall = ratio(tp, cm.row_sum(c), &mut zero_division);
            ClassScores {
                precision,
                recall,
                f1: f1_score(precision, recall),
                support: cm.row_sum(c),
            }
        })
        .collect();
    let (macro_avg, weighted_avg) = averages(&per_class);
    Ok(EvalReport {
        accuracy: cm.trace() as f64 / total as f64 * 100.0,
        per_class,
        macro_avg,
        weighted_avg,
        zero_division,
        confusion: cm.clone(),
    })
}

pub fn evaluate_predictions(preds: &[usize], labels: &[usize], classes: usize) -> Result<EvalReport> {
    scores(&ConfusionMatrix::new(preds, labels, classes)?)
}

/// Recomputes the report by direct counting over the prediction/label
/// pairs, without going through a confusion matrix.
pub fn brute_force_scores_oracle(preds: &[usize], labels: &[usize], classes: usize) -> Result<EvalReport> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(Error::Contract("predictions and labels must be equal-length and nonempty".into()));
    }
    if preds.iter().chain(labels).any(|&c| c >= classes) {
        return Err(Error::Contract("class out of range".into()));
    }
    let pairs: Vec<(usize, usize)> = preds.iter().copied().zip(labels.iter().copied()).collect();
    let mut zero_division = false;
    let mut per_class = Vec::with_capacity(classes);
    for c in 0..classes {
        let tp = pairs.iter().filter(|&&(p, l)| p == c && l == c).count() as u64;
        let predicted = pairs.iter().filter(|&&(p, _)| p == c).count() as u64;
        let actual = pairs.iter().filter(|&&(_, l)| l == c).count() as u64;
        let precision = ratio(tp, predicted, &mut zero_division);
        let recall = ratio(tp, actual, &mut zero_division);
        per_class.push(ClassScores {
            precision,
            recall,
            f1: f1_score(precision, recall),
            support: actual,
        });
    }
    let correct = pairs.iter().filter(|(p, l)| p == l).count();
    let (macro_avg, weighted_avg) = averages(&per_class);
    let mut rows = vec![vec![0u64; classes]; classes];
    for &(p, l) in &pairs {
        rows[l][p] += 1;
    }
    Ok(EvalReport {
        accuracy: correct as f64 / pairs.len() as f64 * 100.0,
        per_class,
        macro_avg,
        weighted_avg,
        zero_division,
        confusion: ConfusionMatrix::from_counts(&rows)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn confusion_examples() {
        let cm = ConfusionMatrix::new(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(cm.rows(), vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);

        let cm = ConfusionMatrix::new(&[1, 0, 0, 1], &[1, 1, 0, 0], 2).unwrap();
        let (tp, fn_, tn, fp) = (cm.get(1, 1), cm.get(1, 0), cm.get(0, 0), cm.get(0, 1));
        assert_eq!((tp, fn_, tn, fp), (1, 1, 1, 1));

        let cm = ConfusionMatrix::new(&[0, 0, 0], &[0, 1, 2], 3).unwrap();
        assert_eq!(cm.column_sum(0), 3);
        assert_eq!(cm.column_sum(1) + cm.column_sum(2), 0);
    }

    #[test]
    fn confusion_errors() {
        assert!(ConfusionMatrix::new(&[0], &[0, 1], 2).is_err());
        assert!(ConfusionMatrix::new(&[0, 2], &[0, 1], 2).is_err());
        assert!(ConfusionMatrix::new(&[], &[], 2).is_err());
        let empty = ConfusionMatrix::from_counts(&[vec![0, 0], vec![0, 0]]).unwrap();
        assert!(matches!(scores(&empty), Err(Error::Contract(_))));
    }

    #[test]
    fn f1_from_published_precision_recall() {
        for (p, r, f) in [(88.30, 85.10, 86.67), (87.51, 84.19, 85.82), (86.27, 84.40, 85.32)] {
            assert!((round2(f1_score(p, r)) - f).abs() <= 0.01 + 1e-9, "{p} {r}");
        }
    }

    #[test]
    fn symmetric_confusion() {
        let cm = ConfusionMatrix::from_counts(&[vec![1, 1], vec![1, 1]]).unwrap();
        let r = scores(&cm).unwrap();
        for s in &r.per_class {
            assert_eq!((s.precision, s.recall, s.f1), (50.0, 50.0, 50.0));
        }
        assert_eq!(r.accuracy, 50.0);
    }

    #[test]
    fn perfect_predictor() {
        let r = evaluate_predictions(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(r.accuracy, 100.0);
        assert!(r.per_class.iter().all(|s| s.f1 == 100.0));
        assert_eq!(r, brute_force_scores_oracle(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap());
    }

    #[test]
    fn zero_division_flagged() {
        let r = evaluate_predictions(&[0, 0], &[0, 1], 3).unwrap();
        assert!(r.zero_division);
        assert_eq!(r.per_class[2].f1, 0.0);
    }

    #[test]
    fn single_example_paths_agree() {
        let a = evaluate_predictions(&[1], &[0], 2).unwrap();
        let b = brute_force_scores_oracle(&[1], &[0], 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn table_row_format() {
        let row = table_row("RNN", 86.42, 88.30, 85.10, f1_score(88.30, 85.10));
        assert!(row.ends_with("86.42     88.30     85.10     86.67\n"), "{row}");
    }

    #[test]
    fn metrics_text_lines() {
        let r = evaluate_predictions(&[1, 0, 1, 1], &[1, 0, 0, 1], 2).unwrap();
        let text = r.to_metrics_text(&["neg".into(), "pos".into()], Averaging::Macro);
        assert!(text.lines().all(|l| l.contains('=')));
        assert!(text.contains("accuracy=75\n"));
        assert!(text.contains("class.pos.recall=100\n"));
    }

    fn instance() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (2usize..7).prop_flat_map(|c| (Just(c), proptest::collection::vec((0..c, 0..c), 1..60)))
    }

    proptest! {
        #[test]
        fn scores_invariants((c, pairs) in instance()) {
            let (preds, labels): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let r = evaluate_predictions(&preds, &labels, c).unwrap();
            prop_assert_eq!(r.confusion.total(), pairs.len() as u64);
            prop_assert_eq!(r.accuracy, r.confusion.trace() as f64 / r.confusion.total() as f64 * 100.0);
            for s in &r.per_class {
                prop_assert_eq!(s.f1, f1_score(s.precision, s.recall));
                if s.precision > 0.0 && s.recall > 0.0 {
                    prop_assert!(s.f1 >= s.precision.min(s.recall) - 1e-9);
                    prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-9);
                }
            }
            if c == 2 {
                let cm = &r.confusion;
                let (tn, fp, fn_, tp) = (cm.get(0, 0), cm.get(0, 1), cm.get(1, 0), cm.get(1, 1));
                prop_assert_eq!(r.accuracy, (tp + tn) as f64 / (tp + tn + fp + fn_) as f64 * 100.0);
            }
        }

        #[test]
        fn permutation_invariant((c, pairs) in instance(), rot in 0usize..60) {
            let (preds, labels): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let mut shuffled = pairs.clone();
            shuffled.rotate_left(rot % pairs.len());
            shuffled.reverse();
            let (p2, l2): (Vec<usize>, Vec<usize>) = shuffled.into_iter().unzip();
            prop_assert_eq!(
                evaluate_predictions(&preds, &labels, c).unwrap(),
                evaluate_predictions(&p2, &l2, c).unwrap()
            );
        }
    }
}

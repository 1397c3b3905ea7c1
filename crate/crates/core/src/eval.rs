//! Evaluation: confusion matrices, overall and per-class accuracy, and
//! their CSV rendering.

use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::model::{Architecture, MultiViewSample};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Index of the largest value; ties break to the lowest index.
pub fn argmax<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Evaluation results over one split: a C x C confusion matrix with rows
/// indexed by true class, plus the class-name table.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    class_names: Vec<String>,
    /// confusion[true * classes + predicted]
    confusion: Vec<usize>,
}

impl EvalReport {
    pub fn new(class_names: Vec<String>) -> Self {
        let c = class_names.len();
        EvalReport {
            class_names,
            confusion: vec![0; c * c],
        }
    }

    pub fn record(&mut self, true_class: usize, predicted: usize) {
        let c = self.class_names.len();
        self.confusion[true_class * c + predicted] += 1;
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn confusion(&self, true_class: usize, predicted: usize) -> usize {
        self.confusion[true_class * self.class_count() + predicted]
    }

    /// Samples whose true class is `class` (confusion-matrix row sum).
    pub fn class_total(&self, class: usize) -> usize {
        let c = self.class_count();
        self.confusion[class * c..(class + 1) * c].iter().sum()
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().sum()
    }

    /// Diagonal sum over total.
    pub fn overall_accuracy(&self) -> f64 {
        let c = self.class_count();
        let trace: usize = (0..c).map(|i| self.confusion[i * c + i]).sum();
        trace as f64 / self.total() as f64
    }

    /// Per-class accuracy; `None` for classes with no samples in the split.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        let c = self.class_count();
        (0..c)
            .map(|i| {
                let total = self.class_total(i);
                if total == 0 {
                    None
                } else {
                    Some(self.confusion[i * c + i] as f64 / total as f64)
                }
            })
            .collect()
    }

    /// CSV rendering: an overall section, a per-class table and the
    /// confusion matrix, each with a header row.
    pub fn to_csv(&self) -> String {
        let c = self.class_count();
        let mut out = String::new();
        out.push_str("metric,value\n");
        out.push_str(&format!("overall_accuracy,{:.6}\n", self.overall_accuracy()));
        out.push_str(&format!("samples,{}\n", self.total()));
        out.push('\n');
        out.push_str("class,count,correct,accuracy\n");
        for i in 0..c {
            let total = self.class_total(i);
            let correct = self.confusion[i * c + i];
            let acc = if total == 0 {
                "".to_string()
            } else {
                format!("{:.6}", correct as f64 / total as f64)
            };
            out.push_str(&format!(
                "{},{total},{correct},{acc}\n",
                self.class_names[i]
            ));
        }
        out.push('\n');
        out.push_str("confusion_true\\pred");
        for name in &self.class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for i in 0..c {
            out.push_str(&self.class_names[i]);
            for j in 0..c {
                out.push_str(&format!(",{}", self.confusion[i * c + j]));
            }
            out.push('\n');
        }
        out
    }
}

/// Batch size used when walking an evaluation split.
const EVAL_BATCH: usize = 32;

/// Runs the model over every sample of a split and fills the confusion
/// matrix. Read-only on the model.
pub fn evaluate<S: Scalar>(
    arch: &Architecture<S>,
    corpus: &Corpus,
    split: Split,
) -> Result<EvalReport> {
    let samples = corpus.samples_in(split);
    if samples.is_empty() {
        return Err(Error::Validation(format!(
            "split {:?} has no samples",
            split.as_str()
        )));
    }
    if corpus.class_count() != arch.class_count() {
        return Err(Error::Validation(format!(
            "corpus has {} classes but the model expects {}",
            corpus.class_count(),
            arch.class_count()
        )));
    }
    let mut report = EvalReport::new(corpus.class_names().to_vec());
    for chunk in samples.chunks(EVAL_BATCH) {
        let probs = arch.infer_batch(chunk)?;
        record_batch(&mut report, &probs, chunk);
    }
    Ok(report)
}

fn record_batch<S: Scalar>(
    report: &mut EvalReport,
    probs: &Tensor<S>,
    samples: &[&MultiViewSample],
) {
    let c = report.class_count();
    for (row, sample) in probs.data().chunks(c).zip(samples) {
        report.record(sample.label, argmax(row));
    }
}

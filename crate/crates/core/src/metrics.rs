//! ICBHI-style evaluation.
//!
//! Specificity is the recall of the normal class. Sensitivity is the number of
//! abnormal examples predicted as their exact abnormal class, divided by the
//! number of abnormal examples. The score is the arithmetic mean of the two.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{forward, predict, ClassifierParams};
use crate::par;
use crate::store::{ClassLabel, LabeledExample};
use crate::NUM_CLASSES;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (ClassLabel, ClassLabel)>) -> Self {
        let mut cm = ConfusionMatrix::default();
        for (truth, pred) in pairs {
            cm.record(truth, pred);
        }
        cm
    }

    pub fn record(&mut self, truth: ClassLabel, pred: ClassLabel) {
        self.counts[truth.index()][pred.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, class: ClassLabel) -> u64 {
        self.counts[class.index()].iter().sum()
    }

    pub fn correct(&self, class: ClassLabel) -> u64 {
        self.counts[class.index()][class.index()]
    }
}

pub fn score_of(sp: f64, se: f64) -> f64 {
    (sp + se) / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub sp: f64,
    pub se: f64,
    pub score: f64,
    pub accuracy: f64,
    /// Recall per class; `None` when the class has no examples.
    pub per_class_acc: [Option<f64>; NUM_CLASSES],
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self> {
        let normal_total = confusion.row_total(ClassLabel::Normal);
        if normal_total == 0 {
            return Err(Error::UndefinedMetric("specificity needs at least one normal example"));
        }
        let abnormal = &ClassLabel::ALL[1..];
        let abnormal_total: u64 = abnormal.iter().map(|&c| confusion.row_total(c)).sum();
        if abnormal_total == 0 {
            return Err(Error::UndefinedMetric("sensitivity needs at least one abnormal example"));
        }
        let abnormal_correct: u64 = abnormal.iter().map(|&c| confusion.correct(c)).sum();

        let sp = confusion.correct(ClassLabel::Normal) as f64 / normal_total as f64;
        let se = abnormal_correct as f64 / abnormal_total as f64;
        let all_correct: u64 = ClassLabel::ALL.iter().map(|&c| confusion.correct(c)).sum();
        let per_class_acc = ClassLabel::ALL.map(|c| {
            let n = confusion.row_total(c);
            (n > 0).then(|| confusion.correct(c) as f64 / n as f64)
        });
        Ok(EvalReport {
            confusion,
            sp,
            se,
            score: score_of(sp, se),
            accuracy: all_correct as f64 / confusion.total() as f64,
            per_class_acc,
        })
    }
}

/// Classifies every example with the argmax of the head's logits.
pub fn evaluate(params: &ClassifierParams, test: &[LabeledExample]) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    let preds = par::map(test, |e| forward(params, e.feature.as_slice()).map(|l| predict(&l)));
    let mut cm = ConfusionMatrix::default();
    for (e, p) in test.iter().zip(preds) {
        cm.record(e.label, p?);
    }
    EvalReport::from_confusion(cm)
}

/// Mean, population variance and standard deviation of one metric over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub var: f64,
    pub std: f64,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MetricSummary {
            mean,
            var,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub runs: usize,
    pub sp: MetricSummary,
    pub se: MetricSummary,
    /// Statistics of the per-seed scores.
    pub score: MetricSummary,
    /// Score recomputed from the mean specificity and mean sensitivity.
    pub score_of_means: f64,
    pub accuracy: MetricSummary,
    pub per_class_acc: [Option<MetricSummary>; NUM_CLASSES],
}

impl SeedAggregate {
    pub fn from_reports(reports: &[EvalReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::InvalidConfig("need at least one run to aggregate".into()));
        }
        let collect = |f: &dyn Fn(&EvalReport) -> f64| -> MetricSummary {
            MetricSummary::from_values(&reports.iter().map(f).collect::<Vec<_>>())
        };
        let sp = collect(&|r| r.sp);
        let se = collect(&|r| r.se);
        let per_class_acc = std::array::from_fn(|c| {
            let vals: Option<Vec<f64>> = reports.iter().map(|r| r.per_class_acc[c]).collect();
            vals.map(|v| MetricSummary::from_values(&v))
        });
        Ok(SeedAggregate {
            runs: reports.len(),
            sp,
            se,
            score: collect(&|r| r.score),
            score_of_means: score_of(sp.mean, se.mean),
            accuracy: collect(&|r| r.accuracy),
            per_class_acc,
        })
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn pct_pm(m: &MetricSummary) -> String {
    format!("{}±{}", pct(m.mean), pct(m.std))
}

/// One `Sp | Se | Score` row, percentages with two decimals, `±` = std.
pub fn table_row(name: &str, agg: &SeedAggregate) -> String {
    format!(
        "{name:<14} | {:>13} | {:>13} | {:>13}",
        pct_pm(&agg.sp),
        pct_pm(&agg.se),
        pct_pm(&agg.score)
    )
}

pub fn table_header() -> String {
    format!("{:<14} | {:>13} | {:>13} | {:>13}", "method", "Sp (%)", "Se (%)", "Score (%)")
}

/// Per-class recall table: class, share of the test split, recall mean±std.
pub fn per_class_table(agg: &SeedAggregate, class_counts: &[usize; NUM_CLASSES]) -> String {
    let total: usize = class_counts.iter().sum();
    let mut out = format!("{:<8} | {:>9} | {:>13}\n", "class", "ratio (%)", "recall (%)");
    for label in ClassLabel::ALL {
        let ratio = if total == 0 {
            0.0
        } else {
            class_counts[label.index()] as f64 / total as f64
        };
        let recall = agg.per_class_acc[label.index()]
            .as_ref()
            .map_or_else(|| "-".to_string(), pct_pm);
        let _ = writeln!(out, "{:<8} | {:>9} | {:>13}", label.name(), pct(ratio), recall);
    }
    out
}

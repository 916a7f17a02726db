//! Confusion-matrix bookkeeping and skill scores. XM is the positive class.

use std::ops::Mul;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }

    /// Matrix of the classifier with every prediction flipped.
    pub fn flipped(&self) -> Self {
        ConfusionMatrix {
            tp: self.fn_,
            fn_: self.tp,
            fp: self.tn,
            tn: self.fp,
        }
    }

    pub fn record(&mut self, predicted_positive: bool, actually_positive: bool) {
        match (predicted_positive, actually_positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

impl Mul<u64> for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn mul(self, m: u64) -> Self {
        ConfusionMatrix::new(self.tp * m, self.fp * m, self.tn * m, self.fn_ * m)
    }
}

/// Counts outcomes of `predictions` against `truths` (`true` = positive).
pub fn confusion(predictions: &[bool], truths: &[bool]) -> Result<ConfusionMatrix> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truths.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Empty("no predictions to score".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predictions.iter().zip(truths) {
        cm.record(p, t);
    }
    Ok(cm)
}

fn ratio<F: Scalar>(num: u64, den: u64, measure: &'static str) -> Result<F> {
    if den == 0 {
        return Err(Error::UndefinedMetric { measure });
    }
    Ok(F::from_u64(num).unwrap() / F::from_u64(den).unwrap())
}

/// True skill statistic, `TP/(TP+FN) - FP/(FP+TN)`.
pub fn tss<F: Scalar>(cm: &ConfusionMatrix) -> Result<F> {
    if cm.positives() == 0 || cm.negatives() == 0 {
        return Err(Error::UndefinedMetric { measure: "TSS" });
    }
    Ok(ratio::<F>(cm.tp, cm.positives(), "TSS")? - ratio::<F>(cm.fp, cm.negatives(), "TSS")?)
}

/// Heidke skill score,
/// `2 (TP TN - FN FP) / [(TP+FN)(FN+TN) + (TP+FP)(FP+TN)]`.
pub fn hss<F: Scalar>(cm: &ConfusionMatrix) -> Result<F> {
    let f = |v: u64| F::from_u64(v).unwrap();
    let (tp, fp, tn, fn_) = (f(cm.tp), f(cm.fp), f(cm.tn), f(cm.fn_));
    let den = (tp + fn_) * (fn_ + tn) + (tp + fp) * (fp + tn);
    if den == F::zero() {
        return Err(Error::UndefinedMetric { measure: "HSS" });
    }
    Ok(F::lit(2.0) * (tp * tn - fn_ * fp) / den)
}

pub fn accuracy<F: Scalar>(cm: &ConfusionMatrix) -> Result<F> {
    ratio(cm.tp + cm.tn, cm.total(), "accuracy")
}

pub fn precision<F: Scalar>(cm: &ConfusionMatrix) -> Result<F> {
    ratio(cm.tp, cm.tp + cm.fp, "precision")
}

pub fn recall<F: Scalar>(cm: &ConfusionMatrix) -> Result<F> {
    ratio(cm.tp, cm.tp + cm.fn_, "recall")
}

/// `2 TP / (2 TP + FP + FN)`, the harmonic mean of precision and recall.
pub fn f1<F: Scalar>(cm: &ConfusionMatrix) -> Result<F> {
    ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_, "f1")
}

/// Every score of one matrix; `None` where the score is undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores<F> {
    pub tss: Option<F>,
    pub hss: Option<F>,
    pub accuracy: Option<F>,
    pub precision: Option<F>,
    pub recall: Option<F>,
    pub f1: Option<F>,
}

impl<F: Scalar> Scores<F> {
    pub fn from_matrix(cm: &ConfusionMatrix) -> Self {
        Scores {
            tss: tss(cm).ok(),
            hss: hss(cm).ok(),
            accuracy: accuracy(cm).ok(),
            precision: precision(cm).ok(),
            recall: recall(cm).ok(),
            f1: f1(cm).ok(),
        }
    }
}

/// Mean and sample variance (`n - 1`; 0 for a single value).
pub fn mean_and_variance<F: Scalar>(values: &[F]) -> Result<(F, F)> {
    if values.is_empty() {
        return Err(Error::Empty("no values to aggregate".into()));
    }
    let n = F::count(values.len());
    let mean = values.iter().copied().sum::<F>() / n;
    if values.len() == 1 {
        return Ok((mean, F::zero()));
    }
    let ss: F = values.iter().map(|&v| (v - mean) * (v - mean)).sum();
    Ok((mean, ss / (n - F::one())))
}

use serde::{Deserialize, Serialize};

use super::ensemble::{predict, EnsembleModel};
use crate::corpus::Label;
use crate::embedding::EmbeddingRecord;
use crate::error::{Error, Result};

/// Counts with Acceptable as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub count: usize,
    pub accuracy: f64,
    pub f1_acceptable: f64,
    pub f1_unacceptable: f64,
    pub macro_f1: f64,
    pub confusion: Confusion,
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

pub fn evaluate_predictions(truth: &[Label], predicted: &[Label]) -> Result<ClassifierReport> {
    if truth.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if truth.len() != predicted.len() {
        return Err(Error::InvalidInput("one prediction per test label".into()));
    }
    let mut c = Confusion::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        if !t.is_labeled() {
            return Err(Error::InvalidInput("test records must be labeled".into()));
        }
        match (t == Label::Acceptable, p == Label::Acceptable) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    let f1_acceptable = f1(c.tp, c.fp, c.fn_);
    let f1_unacceptable = f1(c.tn, c.fn_, c.fp);
    Ok(ClassifierReport {
        count: c.total(),
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        f1_acceptable,
        f1_unacceptable,
        macro_f1: (f1_acceptable + f1_unacceptable) / 2.0,
        confusion: c,
    })
}

pub fn evaluate_classifier(model: &EnsembleModel, test: &[EmbeddingRecord]) -> Result<ClassifierReport> {
    let test: Vec<&EmbeddingRecord> = test.iter().filter(|r| r.label.is_labeled()).collect();
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let predicted = test.iter().map(|r| predict(model, &r.vector).map(|p| p.label)).collect::<Result<Vec<_>>>()?;
    let truth: Vec<Label> = test.iter().map(|r| r.label).collect();
    evaluate_predictions(&truth, &predicted)
}

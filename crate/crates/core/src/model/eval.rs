use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ModelError, Sample, TrainedModel};
use crate::ingest::RoadState;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_test: usize,
    pub k: usize,
    /// `confusion[actual][predicted]`, indexed by state code - 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<[[usize; 6]; 6]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
}

/// Mean per-class F1 over classes that occur as actual labels. A class
/// whose precision and recall are both zero scores 0.
pub fn macro_f1<R: AsRef<[usize]>>(confusion: &[R]) -> f64 {
    let n = confusion.len();
    let mut scores = Vec::new();
    for c in 0..n {
        let actual: usize = confusion[c].as_ref().iter().sum();
        if actual == 0 {
            continue;
        }
        let tp = confusion[c].as_ref()[c] as f64;
        let predicted: usize = confusion.iter().map(|row| row.as_ref()[c]).sum();
        let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
        let recall = tp / actual as f64;
        scores.push(if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        });
    }
    if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

pub fn evaluate_classifier<T: Scalar>(model: &TrainedModel<T>, test: &[Sample<T>]) -> Result<EvalReport, ModelError> {
    if test.is_empty() {
        return Err(ModelError::EmptyTestSet);
    }
    let mut confusion = [[0usize; 6]; 6];
    for s in test {
        let p = model.predict_state(&s.features)?;
        confusion[s.state.index()][p.state.index()] += 1;
    }
    let correct: usize = (0..6).map(|i| confusion[i][i]).sum();
    Ok(EvalReport {
        n_test: test.len(),
        k: model.k,
        confusion: Some(confusion),
        accuracy: Some(correct as f64 / test.len() as f64),
        macro_f1: Some(macro_f1(&confusion)),
        mae: None,
        rmse: None,
    })
}

pub fn evaluate_regressor<T: Scalar>(model: &TrainedModel<T>, test: &[Sample<T>]) -> Result<EvalReport, ModelError> {
    if test.is_empty() {
        return Err(ModelError::EmptyTestSet);
    }
    let mut abs = 0.0;
    let mut sq = 0.0;
    for s in test {
        let err = (model.predict_value(&s.features)? - s.target).as_f64();
        abs += err.abs();
        sq += err * err;
    }
    let n = test.len() as f64;
    Ok(EvalReport {
        n_test: test.len(),
        k: model.k,
        confusion: None,
        accuracy: None,
        macro_f1: None,
        mae: Some(abs / n),
        rmse: Some((sq / n).sqrt()),
    })
}

impl EvalReport {
    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n_test    {}", self.n_test);
        let _ = writeln!(out, "k         {}", self.k);
        for (name, v) in [
            ("accuracy", self.accuracy),
            ("macro_f1", self.macro_f1),
            ("mae", self.mae),
            ("rmse", self.rmse),
        ] {
            if let Some(v) = v {
                let _ = writeln!(out, "{name:<9} {v:.4}");
            }
        }
        if let Some(c) = &self.confusion {
            let _ = write!(out, "\n{:<8}", "actual");
            for s in RoadState::ALL {
                let _ = write!(out, "{:>8}", s.name());
            }
            out.push('\n');
            for s in RoadState::ALL {
                let _ = write!(out, "{:<8}", s.name());
                for v in c[s.index()] {
                    let _ = write!(out, "{v:>8}");
                }
                out.push('\n');
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_class_macro_f1() {
        let m = [[1usize, 1], [0, 2]];
        // F1 = {2/3, 4/5}
        assert!((macro_f1(&m) - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
        assert!((macro_f1(&m) - 0.733).abs() < 1e-3);
    }

    #[test]
    fn absent_classes_ignored_zero_f1_counted() {
        let m = [[0usize, 2, 0], [0, 0, 0], [0, 0, 0]];
        assert_eq!(macro_f1(&m), 0.0);
    }
}

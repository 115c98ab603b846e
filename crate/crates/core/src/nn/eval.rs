use serde::{Deserialize, Serialize};

use super::loss::softmax_rows;
use super::model::{ModelState, Mode};
use super::train::{images_to_tensor, Example};
use super::Label;
use crate::error::{Error, Result};
use crate::imaging::ImageU8;

const EVAL_CHUNK: usize = 64;

/// Per-label and balanced accuracy, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub acc_f1: f64,
    pub acc_f2: f64,
    /// Unweighted mean of the two per-label accuracies.
    pub balanced: f64,
}

impl Scores {
    pub fn from_accuracies(acc_f1: f64, acc_f2: f64) -> Self {
        Self {
            acc_f1,
            acc_f2,
            balanced: (acc_f1 + acc_f2) / 2.0,
        }
    }

    /// From `(correct, total)` per label; both totals must be positive.
    pub fn from_counts(f1: (usize, usize), f2: (usize, usize)) -> Result<Self> {
        if f1.1 == 0 || f2.1 == 0 {
            return Err(Error::InvalidArgument(
                "evaluation set must contain both labels".into(),
            ));
        }
        Ok(Self::from_accuracies(
            100.0 * f1.0 as f64 / f1.1 as f64,
            100.0 * f2.0 as f64 / f2.1 as f64,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    /// Softmax probability of `label`.
    pub confidence: f64,
    pub logits: [f64; 2],
}

impl Prediction {
    /// Argmax with exact ties resolved to F1.
    pub fn from_logits(logits: [f64; 2]) -> Self {
        let probs = softmax_rows(&logits, 2);
        let label = if logits[1] > logits[0] { Label::F2 } else { Label::F1 };
        Self {
            label,
            confidence: probs[label.index()],
            logits,
        }
    }
}

/// Eval-mode predictions; samples do not interact, so chunking is
/// invisible in the results.
pub fn predict_batch(state: &ModelState, images: &[&ImageU8]) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(EVAL_CHUNK) {
        let pass = state.forward(&images_to_tensor(chunk), Mode::Eval)?;
        out.extend(
            pass.logits
                .chunks_exact(2)
                .map(|r| Prediction::from_logits([r[0], r[1]])),
        );
    }
    Ok(out)
}

pub fn predict(state: &ModelState, image: &ImageU8) -> Result<Prediction> {
    Ok(predict_batch(state, &[image])?[0])
}

/// Predicted label and its softmax probability.
pub fn confidence(state: &ModelState, image: &ImageU8) -> Result<(Label, f64)> {
    let p = predict(state, image)?;
    Ok((p.label, p.confidence))
}

pub fn evaluate(state: &ModelState, testset: &[Example]) -> Result<Scores> {
    let images: Vec<&ImageU8> = testset.iter().map(|e| &e.image).collect();
    let preds = predict_batch(state, &images)?;
    let mut correct = [0usize; 2];
    let mut total = [0usize; 2];
    for (p, e) in preds.iter().zip(testset) {
        total[e.label.index()] += 1;
        if p.label == e.label {
            correct[e.label.index()] += 1;
        }
    }
    Scores::from_counts((correct[0], total[0]), (correct[1], total[1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_is_unweighted_mean() {
        let s = Scores::from_accuracies(93.16, 96.02);
        assert_eq!(format!("{:.2}", s.balanced), "94.59");
        let s = Scores::from_accuracies(65.91, 80.73);
        assert_eq!(format!("{:.2}", s.balanced), "73.32");
    }

    #[test]
    fn counts_need_both_labels() {
        assert!(Scores::from_counts((3, 3), (0, 0)).is_err());
        let s = Scores::from_counts((1389, 1389), (327, 327)).unwrap();
        assert_eq!((s.acc_f1, s.acc_f2, s.balanced), (100.0, 100.0, 100.0));
        // imbalance does not weight the mean
        let s = Scores::from_counts((90, 100), (1, 2)).unwrap();
        assert!((s.balanced - 70.0).abs() < 1e-12);
    }

    #[test]
    fn tie_goes_to_f1() {
        let p = Prediction::from_logits([0.7, 0.7]);
        assert_eq!(p.label, Label::F1);
        assert_eq!(p.confidence, 0.5);
        let p = Prediction::from_logits([2.0, 0.0]);
        let expected = 2.0f64.exp() / (1.0 + 2.0f64.exp());
        assert!((p.confidence - expected).abs() < 1e-12);
        assert!((p.confidence - 0.8808).abs() < 1e-4);
        let p = Prediction::from_logits([-1.0, 3.0]);
        assert_eq!(p.label, Label::F2);
        assert!(p.confidence >= 0.5 && p.confidence < 1.0);
    }
}

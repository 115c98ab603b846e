use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{mean_pixel, PaddingScheme};
use crate::nn::{predict_batch, prepare, Label, ModelState, Scores};
use crate::synthdata::Item;

/// A named test set of raw crops.
pub struct TestSet<'a> {
    pub name: &'a str,
    pub items: &'a [Item],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantRow {
    pub set: String,
    pub scheme: PaddingScheme,
    pub label: Label,
    /// Mean of `mean_pixel` over correctly predicted model inputs.
    pub avg_mean_pixel: Option<f64>,
    /// Mean predicted-class probability over correct predictions.
    pub avg_confidence: Option<f64>,
    /// Balanced accuracy of the whole set under this scheme, in percent.
    pub accuracy: f64,
    pub n_correct: usize,
    pub n_total: usize,
}

/// One row per (set, scheme, label), in that order.
pub fn quant_table(state: &ModelState, sets: &[TestSet], schemes: &[PaddingScheme]) -> Result<Vec<QuantRow>> {
    let side = state.spec().input_side;
    let mut rows = Vec::new();
    for set in sets {
        for &scheme in schemes {
            let examples = prepare(set.items.iter().map(|i| (&i.image, i.label)), scheme, side)?;
            let images: Vec<_> = examples.iter().map(|e| &e.image).collect();
            let preds = predict_batch(state, &images)?;
            let mut sums = [(0.0f64, 0.0f64); 2];
            let mut correct = [0usize; 2];
            let mut total = [0usize; 2];
            for (e, p) in examples.iter().zip(&preds) {
                let l = e.label.index();
                total[l] += 1;
                if p.label == e.label {
                    correct[l] += 1;
                    sums[l].0 += mean_pixel(&e.image);
                    sums[l].1 += p.confidence;
                }
            }
            let scores = Scores::from_counts((correct[0], total[0]), (correct[1], total[1]))
                .map_err(|_| Error::InvalidArgument(format!("test set {} must contain both labels", set.name)))?;
            for label in Label::ALL {
                let l = label.index();
                let avg = |s: f64| (correct[l] > 0).then(|| s / correct[l] as f64);
                rows.push(QuantRow {
                    set: set.name.to_string(),
                    scheme,
                    label,
                    avg_mean_pixel: avg(sums[l].0),
                    avg_confidence: avg(sums[l].1),
                    accuracy: scores.balanced,
                    n_correct: correct[l],
                    n_total: total[l],
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_quant_csv(path: &Path, rows: &[QuantRow]) -> Result<()> {
    let fail = |e: csv::Error| Error::Format {
        kind: "csv",
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    w.write_record([
        "set",
        "scheme",
        "label",
        "avg_mean_pixel",
        "avg_confidence",
        "accuracy",
        "n_correct",
        "n_incorrect",
    ])
    .map_err(fail)?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.set.clone(),
            r.scheme.to_string(),
            r.label.to_string(),
            opt(r.avg_mean_pixel),
            opt(r.avg_confidence),
            format!("{:.2}", r.accuracy),
            r.n_correct.to_string(),
            (r.n_total - r.n_correct).to_string(),
        ])
        .map_err(fail)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

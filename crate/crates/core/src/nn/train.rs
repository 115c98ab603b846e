use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::adam_step;
use super::eval::{predict_batch, Scores};
use super::loss::cross_entropy;
use super::model::{ModelState, Mode};
use super::spec::TrainConfig;
use super::tensor::Tensor;
use super::Label;
use crate::error::{Error, Result};
use crate::imaging::{pad_square, random_rotation, resize_bilinear, ImageU8, PaddingScheme};

/// Inputs are mapped to `(v / 255 - INPUT_MEAN) / INPUT_STD`.
pub const INPUT_MEAN: f64 = 0.5;
pub const INPUT_STD: f64 = 0.25;

/// A padded, resized classifier input with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub image: ImageU8,
    pub label: Label,
}

/// Pads each crop with `scheme` at native resolution and scales the
/// square to `side`.
pub fn prepare<'a, I>(items: I, scheme: PaddingScheme, side: usize) -> Result<Vec<Example>>
where
    I: IntoIterator<Item = (&'a ImageU8, Label)>,
{
    let items: Vec<(&ImageU8, Label)> = items.into_iter().collect();
    items
        .par_iter()
        .map(|(img, label)| {
            let padded = pad_square(img, scheme);
            Ok(Example {
                image: resize_bilinear(&padded, side)?,
                label: *label,
            })
        })
        .collect()
}

pub fn images_to_tensor(images: &[&ImageU8]) -> Tensor {
    let first = images.first().expect("at least one image");
    let (h, w) = (first.height(), first.width());
    let len = 3 * h * w;
    let mut data = vec![0.0; images.len() * len];
    data.par_chunks_mut(len).zip(images.par_iter()).for_each(|(dst, img)| {
        assert_eq!((img.height(), img.width()), (h, w), "batch images share a size");
        img.to_planar(INPUT_MEAN, INPUT_STD, dst);
    });
    Tensor::from_vec(images.len(), 3, h, w, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when the validation split lacks the label.
    pub val_acc_f1: Option<f64>,
    pub val_acc_f2: Option<f64>,
    pub val_balanced: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the best validation balanced accuracy.
    pub best: ModelState,
    /// 1-based epoch of `best`, `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochStats>,
}

/// Mini-batch training with seeded shuffling and augmentation, keeping the
/// snapshot with the best validation balanced accuracy (earliest epoch on
/// ties).
pub fn train_run(
    init: ModelState,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument(
            "training and validation sets must be non-empty".into(),
        ));
    }
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            best: init,
            best_epoch: None,
            history: Vec::new(),
        });
    }
    let mut state = init;
    state.set_seed(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = state.clone();
    let mut best_epoch = None;
    let mut best_score = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let rotated: Vec<ImageU8>;
            let images: Vec<&ImageU8> = if cfg.augment {
                rotated = batch.iter().map(|&i| random_rotation(&train[i].image, &mut rng)).collect();
                rotated.iter().collect()
            } else {
                batch.iter().map(|&i| &train[i].image).collect()
            };
            let labels: Vec<Label> = batch.iter().map(|&i| train[i].label).collect();
            let input = images_to_tensor(&images);
            let pass = state.forward(&input, Mode::Train)?;
            loss_sum += pass
                .logits
                .chunks_exact(2)
                .zip(&labels)
                .map(|(row, l)| cross_entropy(row, l.index()))
                .sum::<f64>();
            let grads = state.backward(&pass.cache, &labels)?;
            state.commit_running_stats(&pass.cache);
            adam_step(&mut state, &grads, cfg);
        }
        let (acc_f1, acc_f2, balanced) = validation_scores(&state, val)?;
        let train_loss = loss_sum / train.len() as f64;
        tracing::debug!(epoch, train_loss, balanced, "epoch");
        if balanced > best_score {
            best_score = balanced;
            best = state.clone();
            best_epoch = Some(epoch);
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_acc_f1: acc_f1,
            val_acc_f2: acc_f2,
            val_balanced: balanced,
        });
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        history,
    })
}

/// Like [`super::evaluate`] but tolerates a validation split holding a
/// single label; the balanced score then falls back to that label's
/// accuracy.
fn validation_scores(state: &ModelState, val: &[Example]) -> Result<(Option<f64>, Option<f64>, f64)> {
    let images: Vec<&ImageU8> = val.iter().map(|e| &e.image).collect();
    let preds = predict_batch(state, &images)?;
    let mut correct = [0usize; 2];
    let mut total = [0usize; 2];
    for (p, e) in preds.iter().zip(val) {
        total[e.label.index()] += 1;
        if p.label == e.label {
            correct[e.label.index()] += 1;
        }
    }
    let acc = |i: usize| {
        if total[i] == 0 {
            None
        } else {
            Some(100.0 * correct[i] as f64 / total[i] as f64)
        }
    };
    let balanced = match (acc(0), acc(1)) {
        (Some(a), Some(b)) => Scores::from_accuracies(a, b).balanced,
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => unreachable!("validation set is non-empty"),
    };
    Ok((acc(0), acc(1), balanced))
}

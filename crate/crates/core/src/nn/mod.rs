//! A small CPU residual network with hand-written reverse-mode gradients.

mod adam;
mod checkpoint;
mod eval;
mod gradcam;
mod layers;
mod loss;
mod model;
mod spec;
mod tensor;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, adam_update};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use eval::{confidence, evaluate, predict, predict_batch, Prediction, Scores};
pub use gradcam::{gradcam, gradcam_from_maps};
pub use loss::{cross_entropy, softmax_rows};
pub use model::{BnStats, CamLayer, ForwardCache, ForwardPass, Gradients, Mode, ModelState, Param};
pub use spec::{ModelSpec, TrainConfig};
pub use tensor::Tensor;
pub use train::{prepare, images_to_tensor, train_run, EpochStats, Example, TrainOutcome, INPUT_MEAN, INPUT_STD};

use crate::error::Error;

/// The two manufacturer classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    F1,
    F2,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::F1, Label::F2];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Label::F1 => 0,
            Label::F2 => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::F1),
            1 => Some(Label::F2),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::F1 => "F1",
            Label::F2 => "F2",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "F1" | "f1" => Ok(Label::F1),
            "F2" | "f2" => Ok(Label::F2),
            other => Err(Error::InvalidArgument(format!("unknown label `{other}`"))),
        }
    }
}

//! Procedural stand-in for two temporally continued datasets of
//! anti-counterfeit code crops, with tail-block test splitting.
//!
//! Each crop is a dot-matrix glyph field. F1 and F2 differ in dot pitch
//! and dot radius; the later dataset `B` shifts those parameters and the
//! sensor noise by an amount proportional to the configured drift.

mod config;
mod render;
mod split;
mod store;

pub use config::{symmetric_kl, DatasetSpec, GenConfig, Gaussian, PatternDistribution};
pub use split::{split, Split, SplitSpec};
pub use store::{load_dataset, save_dataset, Manifest, ManifestItem, MANIFEST_FILE};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ImageU8;
use crate::nn::Label;

/// Which of the two datasets an item belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetId {
    A,
    B,
}

impl DatasetId {
    pub fn name(self) -> &'static str {
        match self {
            DatasetId::A => "A",
            DatasetId::B => "B",
        }
    }

    fn stream(self) -> u64 {
        match self {
            DatasetId::A => 1,
            DatasetId::B => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub image: ImageU8,
    pub label: Label,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalDataset {
    pub name: String,
    pub seed: u64,
    pub items: Vec<Item>,
}

impl TemporalDataset {
    /// Checks strictly increasing timestamps and presence of both labels.
    pub fn validate(&self) -> Result<()> {
        if self.items.windows(2).any(|w| w[0].timestamp >= w[1].timestamp) {
            return Err(Error::InvalidArgument(format!(
                "dataset {}: timestamps must be strictly increasing",
                self.name
            )));
        }
        for label in Label::ALL {
            if !self.items.iter().any(|i| i.label == label) {
                return Err(Error::InvalidArgument(format!(
                    "dataset {}: no {label} items",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.items.iter().filter(|i| i.label == label).count()
    }
}

/// Generates datasets A and B. B's timestamps continue after A's.
pub fn generate(cfg: &GenConfig) -> Result<(TemporalDataset, TemporalDataset)> {
    cfg.validate()?;
    let a = generate_one(cfg, DatasetId::A, 0)?;
    let b = generate_one(cfg, DatasetId::B, a.len() as u64)?;
    Ok((a, b))
}

fn generate_one(cfg: &GenConfig, id: DatasetId, first_timestamp: u64) -> Result<TemporalDataset> {
    let spec = cfg.dataset(id);
    let labels = label_sequence(spec, mix(cfg.seed, id.stream(), u64::MAX));
    let items = labels
        .par_iter()
        .enumerate()
        .map(|(idx, &label)| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, id.stream(), idx as u64));
            Item {
                image: render::render(cfg, id, label, &mut rng),
                label,
                timestamp: first_timestamp + idx as u64,
            }
        })
        .collect();
    let ds = TemporalDataset {
        name: id.name().to_string(),
        seed: cfg.seed,
        items,
    };
    ds.validate()?;
    Ok(ds)
}

/// Orders labels so the tail block holds the configured F1 share; both
/// the tail and the head are shuffled.
fn label_sequence(spec: &DatasetSpec, seed: u64) -> Vec<Label> {
    let n = spec.f1 + spec.f2;
    let tail = spec.tail_len();
    let tail_f1 = ((spec.test_f1_share * tail as f64).round() as usize)
        .min(spec.f1)
        .max(tail.saturating_sub(spec.f2));
    let tail_f2 = tail - tail_f1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut head: Vec<Label> = std::iter::repeat_n(Label::F1, spec.f1 - tail_f1)
        .chain(std::iter::repeat_n(Label::F2, spec.f2 - tail_f2))
        .collect();
    let mut tail: Vec<Label> = std::iter::repeat_n(Label::F1, tail_f1)
        .chain(std::iter::repeat_n(Label::F2, tail_f2))
        .collect();
    head.shuffle(&mut rng);
    tail.shuffle(&mut rng);
    head.extend(tail);
    debug_assert_eq!(head.len(), n);
    head
}

/// SplitMix64-style mixing of a seed with a stream and an index.
pub(crate) fn mix(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_holds_requested_share() {
        let spec = DatasetSpec {
            f1: 400,
            f2: 190,
            test_fraction: 0.292,
            test_f1_share: 0.81,
        };
        let labels = label_sequence(&spec, 3);
        let tail = &labels[labels.len() - spec.tail_len()..];
        let f1 = tail.iter().filter(|&&l| l == Label::F1).count();
        assert_eq!(spec.tail_len(), 173);
        assert_eq!(f1, 140);
        assert_eq!(labels.iter().filter(|&&l| l == Label::F1).count(), 400);
    }

    #[test]
    fn tail_share_clamped_to_available_counts() {
        let spec = DatasetSpec {
            f1: 5,
            f2: 20,
            test_fraction: 0.8,
            test_f1_share: 1.0,
        };
        let labels = label_sequence(&spec, 1);
        let tail = &labels[labels.len() - spec.tail_len()..];
        assert_eq!(tail.iter().filter(|&&l| l == Label::F1).count(), 5);
    }
}

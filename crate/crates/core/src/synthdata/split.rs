use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Item, TemporalDataset};
use crate::error::{Error, Result};

/// Tail-block test split followed by a seeded 4:1 train/validation split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub shuffle_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<Item>,
    pub val: Vec<Item>,
    pub test: Vec<Item>,
}

pub fn split(ds: &TemporalDataset, spec: SplitSpec) -> Result<Split> {
    let n = ds.len();
    if n < 5 {
        return Err(Error::InvalidArgument(format!(
            "dataset {} has {n} items, need at least 5",
            ds.name
        )));
    }
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {}",
            spec.test_fraction
        )));
    }
    let n_test = (spec.test_fraction * n as f64).ceil() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| ds.items[i].timestamp);
    let (rest, tail) = order.split_at(n - n_test);
    if rest.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "dataset {}: {} items remain after the test block, need at least 2",
            ds.name,
            rest.len()
        )));
    }
    let mut rest = rest.to_vec();
    rest.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.shuffle_seed));
    let n_val = ((rest.len() as f64 / 5.0).round() as usize).max(1);
    let pick = |idx: &[usize]| idx.iter().map(|&i| ds.items[i].clone()).collect::<Vec<_>>();
    Ok(Split {
        val: pick(&rest[..n_val]),
        train: pick(&rest[n_val..]),
        test: pick(tail),
    })
}

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use super::select::Objective;
use crate::error::{Error, Result};
use crate::imaging::PaddingScheme;
use crate::nn::{prepare, save_checkpoint, Example, ModelState, TrainConfig};
use crate::synthdata::{Item, Split};

/// The split datasets shared by every pathway.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub a: Split,
    pub b: Split,
}

/// A split after padding and resizing.
#[derive(Debug)]
pub struct PreparedSplit {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
}

/// Everything a pathway run needs besides its own configuration.
pub struct Experiment<'a> {
    pub data: &'a ExperimentData,
    pub train: TrainConfig,
    pub base_seed: u64,
    pub objective: Objective,
    /// Checkpoints are written below this directory and recorded relative
    /// to it.
    pub run_dir: PathBuf,
    cache: Mutex<HashMap<(char, PaddingScheme, usize), Arc<PreparedSplit>>>,
}

impl<'a> Experiment<'a> {
    pub fn new(
        data: &'a ExperimentData,
        train: TrainConfig,
        base_seed: u64,
        objective: Objective,
        run_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            data,
            train,
            base_seed,
            objective,
            run_dir: run_dir.into(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Seed of 1-based run `r`.
    pub fn seed(&self, run: usize) -> u64 {
        self.base_seed + run as u64
    }

    pub fn prepared_a(&self, scheme: PaddingScheme, side: usize) -> Result<Arc<PreparedSplit>> {
        self.prepared('A', scheme, side)
    }

    pub fn prepared_b(&self, scheme: PaddingScheme, side: usize) -> Result<Arc<PreparedSplit>> {
        self.prepared('B', scheme, side)
    }

    fn prepared(&self, which: char, scheme: PaddingScheme, side: usize) -> Result<Arc<PreparedSplit>> {
        let key = (which, scheme, side);
        if let Some(p) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(p));
        }
        let split = if which == 'A' { &self.data.a } else { &self.data.b };
        let prep = |items: &[Item]| prepare(items.iter().map(|i| (&i.image, i.label)), scheme, side);
        let p = Arc::new(PreparedSplit {
            train: prep(&split.train)?,
            val: prep(&split.val)?,
            test: prep(&split.test)?,
        });
        self.cache.lock().expect("cache lock").insert(key, Arc::clone(&p));
        Ok(p)
    }

    pub(crate) fn save(&self, state: &ModelState, rel: &Path) -> Result<String> {
        let path = self.run_dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        save_checkpoint(state, &path)?;
        Ok(rel.to_string_lossy().replace('\\', "/"))
    }
}

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::context::Experiment;
use super::select::{aggregate, choose, Objective, SettingAggregate};
use super::{RecordSink, RunRecord, RUNS};
use crate::error::{Error, Result};
use crate::imaging::PaddingScheme;
use crate::nn::{evaluate, train_run, ModelSpec, ModelState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsaConfig {
    pub schemes: Vec<PaddingScheme>,
    /// Train one backbone family per scheme instead of a single
    /// zero-padded family evaluated under every scheme.
    pub train_per_scheme: bool,
}

impl Default for PsaConfig {
    fn default() -> Self {
        Self {
            schemes: PaddingScheme::ALL.to_vec(),
            train_per_scheme: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeResult {
    pub scheme: PaddingScheme,
    pub records: Vec<RunRecord>,
    pub aggregate: SettingAggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsaReport {
    pub objective: Objective,
    pub train_per_scheme: bool,
    pub seeds: Vec<u64>,
    pub schemes: Vec<SchemeResult>,
    pub chosen_scheme: PaddingScheme,
    /// Peak run within the chosen scheme.
    pub chosen_run: usize,
    pub chosen_checkpoint: String,
}

impl PsaReport {
    pub fn records(&self) -> impl Iterator<Item = &RunRecord> {
        self.schemes.iter().flat_map(|s| s.records.iter())
    }
}

/// Trains five backbones on A and scores them on both test sets under
/// each configured padding scheme.
pub fn run_psa(exp: &Experiment, model: &ModelSpec, cfg: &PsaConfig, sink: &mut RecordSink) -> Result<PsaReport> {
    if cfg.schemes.is_empty() {
        return Err(Error::Config("psa needs at least one padding scheme".into()));
    }
    let mut schemes: Vec<PaddingScheme> = Vec::new();
    for &s in &cfg.schemes {
        if !schemes.contains(&s) {
            schemes.push(s);
        }
    }
    let side = model.input_side;

    let train_family = |scheme: PaddingScheme, dir: &str| -> Result<Vec<(ModelState, String, Option<usize>)>> {
        let a = exp.prepared_a(scheme, side)?;
        let runs: Vec<Result<_>> = (1..=RUNS)
            .into_par_iter()
            .map(|r| {
                let seed = exp.seed(r);
                let init = ModelState::new(model.clone(), seed)?;
                let out = train_run(init, &a.train, &a.val, &exp.train, seed)?;
                let rel = PathBuf::from("psa").join(dir).join(format!("run{r}.ckpt"));
                let path = exp.save(&out.best, &rel)?;
                tracing::info!(scheme = %scheme, run = r, best_epoch = ?out.best_epoch, "psa backbone trained");
                Ok((out.best, path, out.best_epoch))
            })
            .collect();
        runs.into_iter().collect()
    };

    let shared = if cfg.train_per_scheme {
        None
    } else {
        Some(train_family(PaddingScheme::Zero, "zero-backbone")?)
    };

    let mut results = Vec::with_capacity(schemes.len());
    for &scheme in &schemes {
        let owned;
        let family = match &shared {
            Some(f) => f,
            None => {
                owned = train_family(scheme, scheme.name())?;
                &owned
            }
        };
        let a = exp.prepared_a(scheme, side)?;
        let b = exp.prepared_b(scheme, side)?;
        let mut records = Vec::with_capacity(RUNS);
        for (i, (state, path, best_epoch)) in family.iter().enumerate() {
            let rec = RunRecord {
                setting: scheme.name().to_string(),
                run: i + 1,
                seed: exp.seed(i + 1),
                on_a: evaluate(state, &a.test)?,
                on_b: evaluate(state, &b.test)?,
                checkpoint: Some(path.clone()),
                best_epoch: *best_epoch,
                frozen_before: None,
                frozen_after: None,
            };
            sink(&rec)?;
            records.push(rec);
        }
        let aggregate = aggregate(&records)?;
        results.push(SchemeResult {
            scheme,
            records,
            aggregate,
        });
    }

    let aggs: Vec<_> = results.iter().map(|r| r.aggregate).collect();
    let best = &results[choose(&aggs, exp.objective).expect("at least one scheme")];
    let chosen_checkpoint = best
        .records
        .iter()
        .find(|r| r.run == best.aggregate.peak_run)
        .and_then(|r| r.checkpoint.clone())
        .expect("every record has a checkpoint");
    Ok(PsaReport {
        objective: exp.objective,
        train_per_scheme: cfg.train_per_scheme,
        seeds: (1..=RUNS).map(|r| exp.seed(r)).collect(),
        chosen_scheme: best.scheme,
        chosen_run: best.aggregate.peak_run,
        chosen_checkpoint,
        schemes: results,
    })
}

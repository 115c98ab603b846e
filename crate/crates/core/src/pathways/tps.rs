use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::context::{Experiment, PreparedSplit};
use super::select::{aggregate, choose, Objective, SettingAggregate};
use super::{RecordSink, RunRecord, RUNS};
use crate::error::{Error, Result};
use crate::imaging::PaddingScheme;
use crate::nn::{evaluate, load_checkpoint, train_run, Example, ModelSpec, ModelState};

/// The five training pathways over the two datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Setting {
    /// Train on A.
    S1,
    /// Fine-tune the S1 peak model on B.
    S2,
    /// Train on A and B jointly.
    S3,
    /// Train on B.
    S4,
    /// Fine-tune the S4 peak model on A.
    S5,
}

impl Setting {
    pub const ALL: [Setting; 5] = [Setting::S1, Setting::S2, Setting::S3, Setting::S4, Setting::S5];

    pub fn number(self) -> usize {
        self as usize + 1
    }

    /// Setting whose peak checkpoint this one fine-tunes.
    pub fn prerequisite(self) -> Option<Setting> {
        match self {
            Setting::S2 => Some(Setting::S1),
            Setting::S5 => Some(Setting::S4),
            _ => None,
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Setting::S1 => "train on A",
            Setting::S2 => "S1 peak fine-tuned on B",
            Setting::S3 => "train on A+B",
            Setting::S4 => "train on B",
            Setting::S5 => "S4 peak fine-tuned on A",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.number())
    }
}

impl FromStr for Setting {
    type Err = Error;

    /// Accepts `S3`, `s3` or `3`.
    fn from_str(s: &str) -> Result<Self> {
        let digits = s.trim().trim_start_matches(['S', 's']);
        digits
            .parse::<usize>()
            .ok()
            .and_then(|n| n.checked_sub(1))
            .and_then(|i| Setting::ALL.get(i).copied())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown training setting '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub name: String,
    pub spec: ModelSpec,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            name: "mini-resnet".into(),
            spec: ModelSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TpsConfig {
    pub settings: Vec<Setting>,
    pub architectures: Vec<Architecture>,
    /// Trailing residual blocks plus head left trainable when fine-tuning.
    pub freeze_tail: usize,
    /// Per-setting padding that replaces the shared scheme.
    pub padding_override: BTreeMap<Setting, PaddingScheme>,
}

impl Default for TpsConfig {
    fn default() -> Self {
        Self {
            settings: Setting::ALL.to_vec(),
            architectures: vec![Architecture::default()],
            freeze_tail: 2,
            padding_override: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingResult {
    pub setting: Setting,
    pub padding: PaddingScheme,
    pub records: Vec<RunRecord>,
    pub aggregate: SettingAggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureResult {
    pub name: String,
    pub spec: ModelSpec,
    /// In pathway order S1..S5.
    pub settings: Vec<SettingResult>,
    /// `None` unless at least two settings ran.
    pub chosen: Option<Setting>,
    pub chosen_run: Option<usize>,
    pub chosen_checkpoint: Option<String>,
}

impl ArchitectureResult {
    pub fn setting(&self, s: Setting) -> Option<&SettingResult> {
        self.settings.iter().find(|r| r.setting == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpsReport {
    pub scheme: PaddingScheme,
    pub objective: Objective,
    pub freeze_tail: usize,
    pub seeds: Vec<u64>,
    pub architectures: Vec<ArchitectureResult>,
}

impl TpsReport {
    pub fn records(&self) -> impl Iterator<Item = &RunRecord> {
        self.architectures.iter().flat_map(|a| a.settings.iter().flat_map(|s| s.records.iter()))
    }
}

/// Runs the configured pathways for every architecture. Fine-tuning
/// settings start from their prerequisite's peak checkpoint as stored on
/// disk, so the prerequisite must be part of the same invocation.
pub fn run_tps(exp: &Experiment, scheme: PaddingScheme, cfg: &TpsConfig, sink: &mut RecordSink) -> Result<TpsReport> {
    if cfg.settings.is_empty() {
        return Err(Error::Config("tps needs at least one setting".into()));
    }
    if cfg.architectures.is_empty() {
        return Err(Error::Config("tps needs at least one architecture".into()));
    }
    for s in &cfg.settings {
        if let Some(pre) = s.prerequisite() {
            if !cfg.settings.contains(&pre) {
                return Err(Error::MissingPrerequisite(format!(
                    "{s} fine-tunes the {pre} peak checkpoint, so {pre} must run as well"
                )));
            }
        }
    }
    let mut names: Vec<&str> = cfg.architectures.iter().map(|a| a.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("architecture names must be unique".into()));
    }

    let mut architectures = Vec::with_capacity(cfg.architectures.len());
    for arch in &cfg.architectures {
        arch.spec.validate()?;
        architectures.push(run_architecture(exp, scheme, cfg, arch, sink)?);
    }
    Ok(TpsReport {
        scheme,
        objective: exp.objective,
        freeze_tail: cfg.freeze_tail,
        seeds: (1..=RUNS).map(|r| exp.seed(r)).collect(),
        architectures,
    })
}

fn run_architecture(
    exp: &Experiment,
    scheme: PaddingScheme,
    cfg: &TpsConfig,
    arch: &Architecture,
    sink: &mut RecordSink,
) -> Result<ArchitectureResult> {
    // prerequisites first, then dependants
    let order = [Setting::S1, Setting::S4, Setting::S3, Setting::S2, Setting::S5];
    let mut done: BTreeMap<Setting, SettingResult> = BTreeMap::new();
    for setting in order.into_iter().filter(|s| cfg.settings.contains(s)) {
        let padding = cfg.padding_override.get(&setting).copied().unwrap_or(scheme);
        let init = match setting.prerequisite() {
            Some(pre) => {
                let prior = done.get(&pre).ok_or_else(|| {
                    Error::MissingPrerequisite(format!("{setting} requires the {pre} peak checkpoint"))
                })?;
                let rel = peak_checkpoint(prior).ok_or_else(|| {
                    Error::MissingPrerequisite(format!("{pre} peak run has no checkpoint"))
                })?;
                Some(load_checkpoint(&exp.run_dir.join(rel))?)
            }
            None => None,
        };
        let result = run_setting(exp, cfg, arch, setting, padding, init, sink)?;
        tracing::info!(
            arch = %arch.name,
            setting = %setting,
            mean_a = result.aggregate.mean_a,
            mean_b = result.aggregate.mean_b,
            "setting complete"
        );
        done.insert(setting, result);
    }

    let settings: Vec<SettingResult> = done.into_values().collect();
    let (chosen, chosen_run, chosen_checkpoint) = if settings.len() >= 2 {
        let aggs: Vec<SettingAggregate> = settings.iter().map(|s| s.aggregate).collect();
        let best = &settings[choose(&aggs, exp.objective).expect("non-empty")];
        (
            Some(best.setting),
            Some(best.aggregate.peak_run),
            peak_checkpoint(best).map(str::to_string),
        )
    } else {
        (None, None, None)
    };
    Ok(ArchitectureResult {
        name: arch.name.clone(),
        spec: arch.spec.clone(),
        settings,
        chosen,
        chosen_run,
        chosen_checkpoint,
    })
}

fn peak_checkpoint(result: &SettingResult) -> Option<&str> {
    result
        .records
        .iter()
        .find(|r| r.run == result.aggregate.peak_run)
        .and_then(|r| r.checkpoint.as_deref())
}

fn run_setting(
    exp: &Experiment,
    cfg: &TpsConfig,
    arch: &Architecture,
    setting: Setting,
    padding: PaddingScheme,
    init: Option<ModelState>,
    sink: &mut RecordSink,
) -> Result<SettingResult> {
    let side = arch.spec.input_side;
    let a = exp.prepared_a(padding, side)?;
    let b = exp.prepared_b(padding, side)?;
    let joint;
    let (train, val): (&[Example], &[Example]) = match setting {
        Setting::S1 | Setting::S5 => (&a.train, &a.val),
        Setting::S2 | Setting::S4 => (&b.train, &b.val),
        Setting::S3 => {
            joint = concat(&a, &b);
            (&joint.0, &joint.1)
        }
    };
    let dir = PathBuf::from("tps").join(&arch.name).join(setting.to_string());

    let runs: Vec<Result<RunRecord>> = (1..=RUNS)
        .into_par_iter()
        .map(|r| {
            let seed = exp.seed(r);
            let (start, frozen_before) = match &init {
                Some(base) => {
                    let mut s = base.clone();
                    s.freeze(cfg.freeze_tail)?;
                    s.reset_optimizer();
                    let sum = s.frozen_checksum();
                    (s, Some(sum))
                }
                None => (ModelState::new(arch.spec.clone(), seed)?, None),
            };
            let out = train_run(start, train, val, &exp.train, seed)?;
            let frozen_after = frozen_before.as_ref().map(|_| out.best.frozen_checksum());
            let checkpoint = exp.save(&out.best, &dir.join(format!("run{r}.ckpt")))?;
            Ok(RunRecord {
                setting: setting.to_string(),
                run: r,
                seed,
                on_a: evaluate(&out.best, &a.test)?,
                on_b: evaluate(&out.best, &b.test)?,
                checkpoint: Some(checkpoint),
                best_epoch: out.best_epoch,
                frozen_before,
                frozen_after,
            })
        })
        .collect();
    let mut records = Vec::with_capacity(RUNS);
    let mut first_err = None;
    for r in runs {
        match r {
            Ok(rec) => {
                sink(&rec)?;
                records.push(rec);
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok(SettingResult {
        setting,
        padding,
        aggregate: aggregate(&records)?,
        records,
    })
}

fn concat(a: &PreparedSplit, b: &PreparedSplit) -> (Vec<Example>, Vec<Example>) {
    let join = |x: &[Example], y: &[Example]| x.iter().chain(y).cloned().collect::<Vec<_>>();
    (join(&a.train, &b.train), join(&a.val, &b.val))
}

//! Padding-scheme selection, the five training pathways, and the
//! selection rules that pick a scheme, a peak run and a pathway.

mod context;
mod psa;
mod report;
mod select;
mod tps;

pub use context::{Experiment, ExperimentData, PreparedSplit};
pub use psa::{run_psa, PsaConfig, PsaReport, SchemeResult};
pub use report::{read_records_csv, render_psa_table, render_tps_table, write_records_csv};
pub use select::{aggregate, choose, leveraged_score, mean_std, peak_run, select_peak, Objective, SettingAggregate};
pub use tps::{run_tps, Architecture, ArchitectureResult, Setting, SettingResult, TpsConfig, TpsReport};

use serde::{Deserialize, Serialize};

use crate::nn::Scores;

/// Number of seeded repetitions per setting.
pub const RUNS: usize = 5;

/// One trained (or re-evaluated) model scored on both test sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// A padding scheme name for PSA rows, `S1`..`S5` for pathway rows.
    pub setting: String,
    /// 1-based.
    pub run: usize,
    pub seed: u64,
    pub on_a: Scores,
    pub on_b: Scores,
    /// Relative to the run directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    /// Checksums of the frozen part of a fine-tuned model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen_before: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen_after: Option<String>,
}

impl RunRecord {
    pub fn pair(&self) -> (f64, f64) {
        (self.on_a.balanced, self.on_b.balanced)
    }
}

/// Observer notified of every completed record, in a deterministic order.
pub type RecordSink<'a> = dyn FnMut(&RunRecord) -> crate::Result<()> + 'a;

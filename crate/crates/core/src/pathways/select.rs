use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{RunRecord, RUNS};
use crate::error::{Error, Result};

/// Five-run summary, in percent, with sample standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingAggregate {
    pub mean_a: f64,
    pub std_a: f64,
    pub mean_b: f64,
    pub std_b: f64,
    pub peak_run: usize,
}

/// How two mean balanced accuracies are scalarized when choosing a scheme
/// or pathway.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    #[default]
    Sum,
    /// Larger minimum first, sum as the tie-breaker.
    MinThenSum,
}

/// Mean and sample standard deviation (n - 1 denominator).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

pub fn aggregate(records: &[RunRecord]) -> Result<SettingAggregate> {
    if records.len() != RUNS {
        return Err(Error::InvalidArgument(format!(
            "aggregation needs exactly {RUNS} runs, got {}",
            records.len()
        )));
    }
    if records.iter().any(|r| r.setting != records[0].setting) {
        return Err(Error::InvalidArgument("aggregated runs must share a setting".into()));
    }
    let a: Vec<f64> = records.iter().map(|r| r.on_a.balanced).collect();
    let b: Vec<f64> = records.iter().map(|r| r.on_b.balanced).collect();
    let (mean_a, std_a) = mean_std(&a);
    let (mean_b, std_b) = mean_std(&b);
    Ok(SettingAggregate {
        mean_a,
        std_a,
        mean_b,
        std_b,
        peak_run: peak_run(records).expect("non-empty"),
    })
}

/// 0-based position of the peak pair: largest sum, then larger minimum,
/// then earliest position.
pub fn select_peak(pairs: &[(f64, f64)]) -> Option<usize> {
    let key = |&(a, b): &(f64, f64)| (a + b, a.min(b));
    let mut best: Option<usize> = None;
    for (i, p) in pairs.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(j) => {
                let (ki, kj) = (key(p), key(&pairs[j]));
                if ki.0 > kj.0 || (ki.0 == kj.0 && ki.1 > kj.1) {
                    best = Some(i);
                }
            }
        }
    }
    best
}

/// Run number of the peak record.
pub fn peak_run(records: &[RunRecord]) -> Option<usize> {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.run);
    let pairs: Vec<(f64, f64)> = sorted.iter().map(|r| r.pair()).collect();
    select_peak(&pairs).map(|i| sorted[i].run)
}

pub fn leveraged_score(agg: &SettingAggregate) -> f64 {
    agg.mean_a + agg.mean_b
}

/// Index of the best aggregate under `objective`; earliest wins ties.
pub fn choose(aggs: &[SettingAggregate], objective: Objective) -> Option<usize> {
    let cmp = |x: &SettingAggregate, y: &SettingAggregate| -> Ordering {
        let sum = leveraged_score(x).total_cmp(&leveraged_score(y));
        match objective {
            Objective::Sum => sum,
            Objective::MinThenSum => x.mean_a.min(x.mean_b).total_cmp(&y.mean_a.min(y.mean_b)).then(sum),
        }
    };
    let mut best: Option<usize> = None;
    for (i, agg) in aggs.iter().enumerate() {
        if best.is_none_or(|j| cmp(agg, &aggs[j]) == Ordering::Greater) {
            best = Some(i);
        }
    }
    best
}

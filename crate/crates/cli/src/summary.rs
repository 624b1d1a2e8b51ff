//! Per-run records and the per-planner summary table derived from them.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub planner: String,
    pub instance: String,
    pub seed: u64,
    pub solved: bool,
    pub nodes: usize,
    pub plan_len: usize,
    pub smplcont_calls: usize,
    pub motion_plans: usize,
    pub restarts: usize,
    pub wall_seconds: f64,
    /// Empty unless the run could not be attempted.
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub planner: String,
    pub solved_rate: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
}

/// Quantile by linear interpolation between closest ranks, the common
/// default of spreadsheet and numpy tooling. `sorted` must be ascending.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        n => {
            let pos = q * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

/// One row per planner, in order of first appearance. Node quantiles run
/// over every attempted run; unsolved runs count with the nodes they used.
/// Runs that errored count as unsolved and are left out of the quantiles.
pub fn summarize(rows: &[RunRow]) -> Vec<SummaryRow> {
    let mut planners: Vec<&str> = Vec::new();
    for r in rows {
        if !planners.contains(&r.planner.as_str()) {
            planners.push(&r.planner);
        }
    }
    planners
        .into_iter()
        .map(|p| {
            let mine: Vec<&RunRow> = rows.iter().filter(|r| r.planner == p).collect();
            let mut nodes: Vec<f64> = mine.iter().filter(|r| r.error.is_empty()).map(|r| r.nodes as f64).collect();
            nodes.sort_by(f64::total_cmp);
            let solved = mine.iter().filter(|r| r.solved).count();
            SummaryRow {
                planner: p.to_string(),
                solved_rate: solved as f64 / mine.len() as f64,
                p25: quantile(&nodes, 0.25),
                p50: quantile(&nodes, 0.5),
                p75: quantile(&nodes, 0.75),
                p90: quantile(&nodes, 0.9),
            }
        })
        .collect()
}

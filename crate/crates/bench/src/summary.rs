//! Per-method aggregates over the summary rows of a results file.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::runner::{CsvRow, ROW_SUMMARY};

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Medians over runs that report the quantity; `None` when none do.
    pub median_path_length: Option<f64>,
    pub median_clearance: Option<f64>,
    pub median_final_cost: Option<f64>,
    pub median_wall_time_ms: Option<f64>,
}

/// Median of the finite values; mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn summarize(rows: &[CsvRow]) -> Vec<MethodSummary> {
    let mut groups: BTreeMap<&str, Vec<&CsvRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.row_type == ROW_SUMMARY) {
        groups.entry(r.method.as_str()).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(method, rs)| {
            let successes = rs.iter().filter(|r| r.success == Some(true)).count();
            let col = |f: fn(&CsvRow) -> Option<f64>| median(&rs.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            MethodSummary {
                method: method.to_string(),
                runs: rs.len(),
                successes,
                success_rate: successes as f64 / rs.len() as f64,
                median_path_length: col(|r| r.path_length),
                median_clearance: col(|r| r.clearance),
                median_final_cost: col(|r| r.final_cost),
                median_wall_time_ms: col(|r| r.wall_time_ms),
            }
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

pub fn format_table(summaries: &[MethodSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:>5} {:>9} {:>12} {:>12} {:>12} {:>12}",
        "method", "runs", "success", "path_length", "clearance", "final_cost", "wall_ms"
    );
    for s in summaries {
        let _ = writeln!(
            out,
            "{:<8} {:>5} {:>8.1}% {:>12} {:>12} {:>12} {:>12}",
            s.method,
            s.runs,
            100.0 * s.success_rate,
            cell(s.median_path_length),
            cell(s.median_clearance),
            cell(s.median_final_cost),
            cell(s.median_wall_time_ms),
        );
    }
    out
}

//! Plain-text rendering of query results.

use std::fmt::Write;

use trajis_core::SankeyResult;

/// Percent of `count` in `total`, two decimals; `-` when `total` is zero.
pub fn percent(count: u64, total: u64) -> String {
    if total == 0 {
        return "-".into();
    }
    format!("{:.2}%", count as f64 * 100.0 / total as f64)
}

/// One row per stage value with its count and share of the origin.
pub fn table(r: &SankeyResult) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "origin: {} of {} entities ({} matched, {} outside next-event range)",
        r.origin,
        r.total_population,
        r.matched(),
        r.excluded_by_range
    )
    .unwrap();
    let width = r.stages.iter().flatten().map(|v| v.value.len()).max().unwrap_or(0).max("value".len());
    writeln!(out, "{:<5}  {:<width$}  {:>10}  {:>8}", "stage", "value", "count", "percent").unwrap();
    for (t, stage) in r.stages.iter().enumerate() {
        for v in stage {
            writeln!(out, "{:<5}  {:<width$}  {:>10}  {:>8}", t, v.value, v.count, percent(v.count, r.origin)).unwrap();
        }
    }
    out
}

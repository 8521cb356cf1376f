//! Aggregation of metric reports into `mean (std)` tables.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use tglm_core::eval::{read_reports, render_table, MetricsReport};
use tglm_core::Error;

use crate::error::CliResult;

/// Refuses report sets that mix configurations within one model row or repeat a
/// (model, seed, metric) triple.
pub fn check_consistent(reports: &[MetricsReport]) -> CliResult<()> {
    let mut hashes: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for r in reports {
        hashes.entry(&r.model).or_default().insert(&r.config_hash);
        if !seen.insert((&r.model, r.seed, &r.metric)) {
            return Err(Error::Contract(format!(
                "duplicate report for model {} seed {} metric {}",
                r.model, r.seed, r.metric
            ))
            .into());
        }
    }
    for (model, hs) in hashes {
        if hs.len() > 1 {
            let list: Vec<&str> = hs.into_iter().collect();
            return Err(Error::Contract(format!(
                "reports for {model} come from different configurations ({})",
                list.join(", ")
            ))
            .into());
        }
    }
    Ok(())
}

/// Reads JSON-lines report files and renders one table over all of them.
pub fn render_files(paths: &[&Path], decimals: usize, metrics: Option<&[String]>) -> CliResult<String> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(read_reports(p)?);
    }
    if let Some(keep) = metrics {
        all.retain(|r| keep.contains(&r.metric));
    }
    check_consistent(&all)?;
    Ok(render_table(&all, decimals))
}

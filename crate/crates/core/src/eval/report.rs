use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One metric value produced by one model run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub seed: u64,
    pub config_hash: String,
    pub metric: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
}

impl MetricsReport {
    pub fn new(model: &str, seed: u64, config_hash: &str, metric: &str, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!("{model}/{metric}: non-finite value {value}")));
        }
        Ok(MetricsReport {
            model: model.to_string(),
            seed,
            config_hash: config_hash.to_string(),
            metric: metric.to_string(),
            value,
            stderr: None,
        })
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serialises")
    }
}

pub fn write_reports(path: &Path, reports: &[MetricsReport], append: bool) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(io)?;
    for r in reports {
        writeln!(f, "{}", r.to_json_line()).map_err(io)?;
    }
    Ok(())
}

pub fn read_reports(path: &Path) -> Result<Vec<MetricsReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Mean and sample standard deviation (n - 1 denominator; 0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Fixed-width table with one row per model and one column per metric; each cell is
/// `mean (std)` over seeds. Rows and columns keep first-appearance order.
pub fn render_table(reports: &[MetricsReport], decimals: usize) -> String {
    let mut models: Vec<&str> = Vec::new();
    let mut metrics: Vec<&str> = Vec::new();
    let mut cells: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    for r in reports {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
        if !metrics.contains(&r.metric.as_str()) {
            metrics.push(&r.metric);
        }
        cells.entry((&r.model, &r.metric)).or_default().push(r.value);
    }
    let text = |m: &str, k: &str| {
        cells.get(&(m, k)).map_or_else(
            || "-".to_string(),
            |v| {
                let (mean, std) = mean_std(v);
                format!("{mean:.decimals$} ({std:.decimals$})")
            },
        )
    };
    let w0 = models.iter().map(|m| m.len()).chain([5]).max().unwrap_or(5);
    let widths: Vec<usize> = metrics
        .iter()
        .map(|k| models.iter().map(|m| text(m, k).len()).chain([k.len()]).max().unwrap_or(1))
        .collect();
    let mut out = format!("{:<w0$}", "model");
    for (k, w) in metrics.iter().zip(&widths) {
        out.push_str(&format!("  {k:>w$}"));
    }
    out.push('\n');
    out.push_str(&"-".repeat(w0 + widths.iter().map(|w| w + 2).sum::<usize>()));
    out.push('\n');
    for m in &models {
        out.push_str(&format!("{m:<w0$}"));
        for (k, w) in metrics.iter().zip(&widths) {
            out.push_str(&format!("  {:>w$}", text(m, k)));
        }
        out.push('\n');
    }
    out
}

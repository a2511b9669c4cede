//! CSV point-data ingestion with column predicates.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

use gerve_core::points::Points;

/// A per-column predicate: numeric range limits and/or a string whitelist.
/// All present clauses must hold for a row to pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FilterSpec {
    pub column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub one_of: Option<Vec<String>>,
}

/// Ingested points with provenance counters.
#[derive(Debug, Clone)]
pub struct PointDataset {
    pub points: Points,
    pub column_names: Vec<String>,
    pub source: String,
    /// Rows skipped because a needed cell failed to parse.
    pub n_skipped: usize,
    /// Rows rejected by a filter predicate.
    pub n_filtered: usize,
    /// Synthetic background rows appended after the original data.
    pub n_padded: usize,
}

/// Reads `x_col`/`y_col` from an RFC-4180 CSV with a header row, applying
/// the filters. Rows whose needed cells fail to parse are skipped and
/// counted; a missing named column or an empty result is an error.
pub fn ingest_csv(path: &Path, x_col: &str, y_col: &str, filters: &[FilterSpec]) -> Result<PointDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let headers = reader.headers().context("missing header row")?.clone();
    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("column '{name}' not found in {}", path.display()))
    };
    let xi = col_index(x_col)?;
    let yi = col_index(y_col)?;
    let filter_idx: Vec<(usize, &FilterSpec)> = filters
        .iter()
        .map(|f| Ok((col_index(&f.column)?, f)))
        .collect::<Result<Vec<_>>>()?;

    let mut points = Points::with_dim(2);
    let mut n_skipped = 0usize;
    let mut n_filtered = 0usize;
    'rows: for record in reader.records() {
        let record = record.context("malformed CSV record")?;
        for (idx, f) in &filter_idx {
            let cell = record.get(*idx).unwrap_or("");
            if let Some(allowed) = &f.one_of {
                if !allowed.iter().any(|a| a == cell) {
                    n_filtered += 1;
                    continue 'rows;
                }
            }
            if f.min.is_some() || f.max.is_some() {
                let value: f64 = match cell.trim().parse() {
                    Ok(v) => v,
                    Err(_) => {
                        n_skipped += 1;
                        continue 'rows;
                    }
                };
                if f.min.map(|m| value < m).unwrap_or(false)
                    || f.max.map(|m| value > m).unwrap_or(false)
                {
                    n_filtered += 1;
                    continue 'rows;
                }
            }
        }
        let parse = |i: usize| -> Option<f64> {
            record.get(i).and_then(|c| c.trim().parse::<f64>().ok()).filter(|v| v.is_finite())
        };
        match (parse(xi), parse(yi)) {
            (Some(x), Some(y)) => points.push_row(&[x, y]),
            _ => n_skipped += 1,
        }
    }
    if points.is_empty() {
        bail!("no rows survived ingestion from {}", path.display());
    }
    Ok(PointDataset {
        points,
        column_names: vec![x_col.to_string(), y_col.to_string()],
        source: path.display().to_string(),
        n_skipped,
        n_filtered,
        n_padded: 0,
    })
}

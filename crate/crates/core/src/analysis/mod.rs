//! Detectors and statistics over per-round series: convergence, bounded
//! oscillation, stable collusion, binned summaries, rank and proportion tests,
//! and tabular/plot export.

mod bins;
mod detectors;
mod export;
mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bins::{summarize_bins, Bin};
pub use detectors::{bounded_oscillation, converged, stable_collusion_onset, DetectorVerdict, VerdictDetail};
pub use export::{write_csv, write_jsonl, write_svg_lineplot, LinePlot, Table};
pub use stats::{mann_whitney_u, two_proportion_test, MannWhitney, ProportionTest, TestMethod};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("sample is empty")]
    EmptySample,
    #[error("series `{label}` contains a non-finite value at index {index}")]
    NonFinite { label: String, index: usize },
    #[error("successes {k} exceed trials {n}")]
    Domain { k: u64, n: u64 },
    #[error("nothing to export")]
    EmptyExport,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// An ordered list of finite values, one per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self, AnalysisError> {
        let label = label.into();
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(AnalysisError::NonFinite { label, index });
        }
        Ok(Self { label, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

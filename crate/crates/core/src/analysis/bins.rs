use serde::{Deserialize, Serialize};

use super::Series;

/// Mean over an inclusive, 1-based round range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub first_round: usize,
    pub last_round: usize,
    pub mean: f64,
}

/// Splits the series into consecutive bins of `bin` rounds aligned at round 1
/// and returns the most recent `max_bins` complete ones, oldest first. A
/// trailing partial bin is dropped.
pub fn summarize_bins(series: &Series, bin: usize, max_bins: usize) -> Vec<Bin> {
    if bin == 0 {
        return Vec::new();
    }
    let complete = series.values.len() / bin;
    let skip = complete.saturating_sub(max_bins);
    (skip..complete)
        .map(|k| {
            let chunk = &series.values[k * bin..(k + 1) * bin];
            Bin {
                first_round: k * bin + 1,
                last_round: (k + 1) * bin,
                mean: chunk.iter().sum::<f64>() / bin as f64,
            }
        })
        .collect()
}

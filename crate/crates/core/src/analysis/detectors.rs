//! Stationarity and collusion detectors over per-round price series.

use serde::{Deserialize, Serialize};

use super::Series;

/// Slack applied to every threshold comparison so that verdicts do not flip
/// on last-bit rounding of values that sit exactly on a boundary.
const FLOAT_SLACK: f64 = 1e-9;

/// Outcome of a detector over a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorVerdict {
    pub fired: bool,
    pub detail: Option<VerdictDetail>,
    /// Inclusive 1-based round window that was inspected.
    pub window: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictDetail {
    ConvergedTo(f64),
    OscillationWidth(f64),
    CollusionOnset(usize),
}

impl DetectorVerdict {
    fn not_fired(window: Option<(usize, usize)>) -> Self {
        Self {
            fired: false,
            detail: None,
            window,
        }
    }

    pub fn converged_price(&self) -> Option<f64> {
        match self.detail {
            Some(VerdictDetail::ConvergedTo(p)) if self.fired => Some(p),
            _ => None,
        }
    }
}

fn trailing(values: &[f64], span: usize) -> Option<(&[f64], (usize, usize))> {
    if span == 0 || values.len() < span {
        return None;
    }
    let start = values.len() - span;
    Some((&values[start..], (start + 1, values.len())))
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Convergence over the trailing `span` rounds.
///
/// The target price is the median of the window. With
/// `eps = 0.05 * (p_m - p_b)` the verdict fires when at most
/// `floor(theta * span)` values fall outside `[p - eps, p + eps]`.
pub fn converged(series: &Series, p_m: f64, p_b: f64, span: usize, theta: f64) -> DetectorVerdict {
    let Some((window, bounds)) = trailing(&series.values, span) else {
        return DetectorVerdict::not_fired(None);
    };
    let eps = 0.05 * (p_m - p_b);
    let target = median(window);
    let budget = (theta * span as f64 + FLOAT_SLACK).floor() as usize;
    let outliers = window
        .iter()
        .filter(|v| (*v - target).abs() > eps + FLOAT_SLACK)
        .count();
    if outliers <= budget {
        DetectorVerdict {
            fired: true,
            detail: Some(VerdictDetail::ConvergedTo(target)),
            window: Some(bounds),
        }
    } else {
        DetectorVerdict::not_fired(Some(bounds))
    }
}

/// Bounded oscillation: the trailing `span` values stay within a band of
/// width `bound` (max minus min over the window).
pub fn bounded_oscillation(series: &Series, bound: f64, span: usize) -> DetectorVerdict {
    let Some((window, bounds)) = trailing(&series.values, span) else {
        return DetectorVerdict::not_fired(None);
    };
    let hi = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = window.iter().copied().fold(f64::INFINITY, f64::min);
    let width = hi - lo;
    DetectorVerdict {
        fired: width <= bound + FLOAT_SLACK,
        detail: Some(VerdictDetail::OscillationWidth(width)),
        window: Some(bounds),
    }
}

/// Earliest round `r` (1-based) at which the preceding `window` rounds show a
/// mean absolute round-to-round change below `max_mean_change` and every price
/// lies in `(p_b, p_m]`.
pub fn stable_collusion_onset(
    series: &Series,
    p_b: f64,
    p_m: f64,
    window: usize,
    max_mean_change: f64,
) -> DetectorVerdict {
    let values = &series.values;
    if window < 2 || values.len() < window {
        return DetectorVerdict::not_fired(None);
    }
    let in_range = |v: f64| v > p_b + FLOAT_SLACK && v <= p_m + FLOAT_SLACK;
    let diffs: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();

    // Sliding sums over `window - 1` consecutive diffs and a count of
    // out-of-range values in the current window.
    let mut diff_sum: f64 = diffs[..window - 1].iter().sum();
    let mut out_of_range = values[..window].iter().filter(|v| !in_range(**v)).count();
    let mut end = window - 1;
    loop {
        let mean_change = diff_sum / (window - 1) as f64;
        if out_of_range == 0 && mean_change < max_mean_change - FLOAT_SLACK {
            return DetectorVerdict {
                fired: true,
                detail: Some(VerdictDetail::CollusionOnset(end + 1)),
                window: Some((end + 2 - window, end + 1)),
            };
        }
        end += 1;
        if end >= values.len() {
            return DetectorVerdict::not_fired(None);
        }
        let start = end + 1 - window;
        diff_sum += diffs[end - 1] - diffs[start - 1];
        if !in_range(values[end]) {
            out_of_range += 1;
        }
        if !in_range(values[start - 1]) {
            out_of_range -= 1;
        }
    }
}

//! Exit conditions checked after every round.

use serde::{Deserialize, Serialize};

use super::RuntimeError;
use crate::analysis::{bounded_oscillation, converged, Series, VerdictDetail};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExitSpec {
    /// Stop after this many rounds.
    MaxIterations {
        rounds: u64,
    },
    /// Stop when the scenario reports an endpoint from its step.
    Endpoint,
    /// Every listed series has converged.
    Convergence {
        series: Vec<String>,
        p_m: f64,
        p_b: f64,
        span: usize,
        theta: f64,
    },
    /// Every listed series stays within `bound` over the trailing span.
    BoundedOscillation {
        series: Vec<String>,
        bound: f64,
        span: usize,
    },
    CompositeAny {
        specs: Vec<ExitSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExitReason {
    MaxIterations { rounds: u64 },
    Endpoint { reason: String },
    Convergence { prices: Vec<f64> },
    BoundedOscillation { widths: Vec<f64> },
    RoundCap { rounds: u64 },
    Aborted { error: String },
}

impl ExitReason {
    pub fn label(&self) -> &'static str {
        match self {
            Self::MaxIterations { .. } => "max_iterations",
            Self::Endpoint { .. } => "endpoint",
            Self::Convergence { .. } => "convergence",
            Self::BoundedOscillation { .. } => "bounded_oscillation",
            Self::RoundCap { .. } => "round_cap",
            Self::Aborted { .. } => "aborted",
        }
    }
}

fn lookup<'s>(
    series: &dyn Fn(&str) -> Option<&'s [f64]>,
    name: &str,
    span: usize,
) -> Result<Option<Series>, RuntimeError> {
    let values = series(name).ok_or_else(|| RuntimeError::UnknownSeries(name.to_string()))?;
    if values.len() < span {
        return Ok(None);
    }
    let tail = values[values.len() - span..].to_vec();
    Series::new(name, tail)
        .map(Some)
        .map_err(|e| RuntimeError::Scenario(e.to_string()))
}

/// First satisfied spec in declaration order, if any.
///
/// `round` is the number of completed rounds and `endpoint` the reason the
/// last step reported, if it reported one.
pub fn check_exit<'s>(
    specs: &[ExitSpec],
    round: u64,
    endpoint: Option<&str>,
    series: &dyn Fn(&str) -> Option<&'s [f64]>,
) -> Result<Option<ExitReason>, RuntimeError> {
    for spec in specs {
        if let Some(reason) = check_one(spec, round, endpoint, series)? {
            return Ok(Some(reason));
        }
    }
    Ok(None)
}

fn check_one<'s>(
    spec: &ExitSpec,
    round: u64,
    endpoint: Option<&str>,
    series: &dyn Fn(&str) -> Option<&'s [f64]>,
) -> Result<Option<ExitReason>, RuntimeError> {
    match spec {
        ExitSpec::MaxIterations { rounds } => {
            Ok((round >= *rounds).then_some(ExitReason::MaxIterations { rounds: *rounds }))
        }
        ExitSpec::Endpoint => Ok(endpoint.map(|r| ExitReason::Endpoint { reason: r.to_string() })),
        ExitSpec::Convergence {
            series: names,
            p_m,
            p_b,
            span,
            theta,
        } => {
            let mut prices = Vec::with_capacity(names.len());
            for name in names {
                let Some(s) = lookup(series, name, *span)? else {
                    return Ok(None);
                };
                match converged(&s, *p_m, *p_b, *span, *theta).converged_price() {
                    Some(p) => prices.push(p),
                    None => return Ok(None),
                }
            }
            Ok((!prices.is_empty()).then_some(ExitReason::Convergence { prices }))
        }
        ExitSpec::BoundedOscillation {
            series: names,
            bound,
            span,
        } => {
            let mut widths = Vec::with_capacity(names.len());
            for name in names {
                let Some(s) = lookup(series, name, *span)? else {
                    return Ok(None);
                };
                let verdict = bounded_oscillation(&s, *bound, *span);
                match (verdict.fired, verdict.detail) {
                    (true, Some(VerdictDetail::OscillationWidth(w))) => widths.push(w),
                    _ => return Ok(None),
                }
            }
            Ok((!widths.is_empty()).then_some(ExitReason::BoundedOscillation { widths }))
        }
        ExitSpec::CompositeAny { specs } => {
            if specs.is_empty() {
                return Err(RuntimeError::Config("composite_any needs at least one spec".into()));
            }
            check_exit(specs, round, endpoint, series)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv() -> ExitSpec {
        ExitSpec::Convergence {
            series: vec!["p".into()],
            p_m: 8.0,
            p_b: 6.0,
            span: 400,
            theta: 0.01,
        }
    }

    #[test]
    fn constant_series_converges() {
        let values = vec![7.0; 400];
        let lookup = |n: &str| (n == "p").then_some(values.as_slice());
        let reason = check_exit(&[conv()], 400, None, &lookup).unwrap();
        assert_eq!(reason, Some(ExitReason::Convergence { prices: vec![7.0] }));
    }

    #[test]
    fn short_series_does_not_fire() {
        let values = vec![7.0; 399];
        let lookup = |n: &str| (n == "p").then_some(values.as_slice());
        assert_eq!(check_exit(&[conv()], 399, None, &lookup).unwrap(), None);
    }

    #[test]
    fn unknown_series_is_an_error() {
        let lookup = |_: &str| None;
        assert!(matches!(
            check_exit(&[conv()], 1, None, &lookup),
            Err(RuntimeError::UnknownSeries(s)) if s == "p"
        ));
    }

    #[test]
    fn declaration_order_wins() {
        let values = vec![7.0; 800];
        let lookup = |n: &str| (n == "p").then_some(values.as_slice());
        let osc = ExitSpec::BoundedOscillation {
            series: vec!["p".into()],
            bound: 2.0,
            span: 800,
        };
        let any = ExitSpec::CompositeAny {
            specs: vec![osc, conv()],
        };
        let reason = check_exit(&[any], 800, None, &lookup).unwrap().unwrap();
        assert_eq!(reason.label(), "bounded_oscillation");
        assert_eq!(
            check_exit(&[ExitSpec::Endpoint], 3, Some("done"), &lookup)
                .unwrap()
                .unwrap()
                .label(),
            "endpoint"
        );
        assert!(check_exit(&[ExitSpec::MaxIterations { rounds: 50 }], 49, None, &lookup)
            .unwrap()
            .is_none());
    }
}

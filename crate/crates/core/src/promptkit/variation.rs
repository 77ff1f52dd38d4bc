use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::PromptError;
use crate::analysis::mann_whitney_u;

/// Per-run outcomes of one experimental arm: a numeric metric and a
/// categorical behavior label for each run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub values: Vec<f64>,
    pub labels: Vec<String>,
}

impl MetricSample {
    pub fn push(&mut self, value: f64, label: impl Into<String>) {
        self.values.push(value);
        self.labels.push(label.into());
    }

    /// Most frequent label; ties go to the lexicographically smallest.
    pub fn modal_label(&self) -> Option<&str> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for label in &self.labels {
            *counts.entry(label.as_str()).or_default() += 1;
        }
        let best = counts.values().copied().max()?;
        counts.into_iter().find(|(_, c)| *c == best).map(|(l, _)| l)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub statistic: String,
    pub value: f64,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationLevel {
    pub level: Level,
    pub evidence: Evidence,
    pub baseline_label: Option<String>,
    pub variant_label: Option<String>,
}

/// High when the modal behavior labels differ; otherwise Medium when the
/// metric differs under a two-sided Mann-Whitney U test at `alpha`; else Low.
pub fn classify_variation(
    baseline: &MetricSample,
    variant: &MetricSample,
    alpha: f64,
) -> Result<VariationLevel, PromptError> {
    if baseline.values.is_empty() || variant.values.is_empty() {
        return Err(PromptError::EmptySample);
    }
    let baseline_label = baseline.modal_label().map(str::to_string);
    let variant_label = variant.modal_label().map(str::to_string);
    if baseline_label.is_some() && variant_label.is_some() && baseline_label != variant_label {
        let base = baseline_label.as_deref().unwrap_or_default();
        let kept = variant.labels.iter().filter(|l| *l == base).count() as f64 / variant.labels.len() as f64;
        return Ok(VariationLevel {
            level: Level::High,
            evidence: Evidence {
                statistic: "variant_share_of_baseline_label".into(),
                value: kept,
                p_value: None,
            },
            baseline_label,
            variant_label,
        });
    }
    let test = mann_whitney_u(&baseline.values, &variant.values).map_err(|_| PromptError::EmptySample)?;
    let level = if test.p_two_sided < alpha {
        Level::Medium
    } else {
        Level::Low
    };
    Ok(VariationLevel {
        level,
        evidence: Evidence {
            statistic: "mann_whitney_u".into(),
            value: test.u,
            p_value: Some(test.p_two_sided),
        },
        baseline_label,
        variant_label,
    })
}

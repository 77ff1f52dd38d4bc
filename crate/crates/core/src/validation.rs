//! Prompt-alteration batches: the same configuration run under a baseline and
//! under each prompt variant, compared with [`classify_variation`].

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::promptkit::{classify_variation, ActiveVariants, MetricSample, PromptError, VariationLevel};
use crate::runtime::{RunConfig, RunResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub name: String,
    pub variants: ActiveVariants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationPlan {
    pub base: RunConfig,
    /// Each arm is compared against the base configuration's variants.
    pub arms: Vec<Arm>,
    pub runs_per_arm: usize,
    pub alpha: f64,
}

impl ValidationPlan {
    /// Configurations for one arm: seeds `base.seed..base.seed + runs`.
    pub fn arm_configs(&self, variants: &ActiveVariants) -> Vec<RunConfig> {
        (0..self.runs_per_arm as u64)
            .map(|k| {
                let mut c = self.base.clone();
                c.seed = self.base.seed.wrapping_add(k);
                c.variants = variants.clone();
                c
            })
            .collect()
    }
}

/// Collects `metric` and `behavior` from run metrics. Runs without a numeric
/// metric are skipped.
pub fn sample_from<'a>(results: impl IntoIterator<Item = &'a RunResult>) -> MetricSample {
    let mut sample = MetricSample::default();
    for r in results {
        if let Some(v) = r.metrics.get("metric").and_then(Value::as_f64) {
            let label = r.metrics.get("behavior").and_then(Value::as_str).unwrap_or("unlabeled");
            sample.push(v, label);
        }
    }
    sample
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub arm: String,
    pub baseline_mean: f64,
    pub variant_mean: f64,
    pub variation: VariationLevel,
}

pub fn compare(
    arm: &str,
    baseline: &MetricSample,
    variant: &MetricSample,
    alpha: f64,
) -> Result<ArmReport, PromptError> {
    Ok(ArmReport {
        arm: arm.to_string(),
        baseline_mean: baseline.mean(),
        variant_mean: variant.mean(),
        variation: classify_variation(baseline, variant, alpha)?,
    })
}

//! Prompt templates, the variant registry used for prompt-alteration
//! experiments, and the low/medium/high variation classifier.

mod registry;
mod template;
mod variation;

use thiserror::Error;

pub use registry::{ActiveVariants, PromptRegistry, PromptVariant, VariantKind};
pub use template::{bindings, render, Bindings, PromptTemplate};
pub use variation::{classify_variation, Evidence, Level, MetricSample, VariationLevel};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template `{id}` has no binding for `{name}`")]
    MissingBinding { id: String, name: String },
    #[error("template `{id}` uses undeclared placeholder `{name}`")]
    UnknownPlaceholder { id: String, name: String },
    #[error("template `{id}` at byte {offset}: {reason}")]
    Syntax { id: String, offset: usize, reason: String },
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("unknown variant `{0}`")]
    UnknownVariant(String),
    #[error("unknown variant kind `{0}` (expected paraphrase, elements or objectives)")]
    UnknownVariantKind(String),
    #[error("sample is empty")]
    EmptySample,
    #[error("reading {0}: {1}")]
    Io(String, #[source] std::io::Error),
}

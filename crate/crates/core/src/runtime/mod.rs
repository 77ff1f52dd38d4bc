//! The simulation loop: run configuration, the event journal, the seeded
//! random stream, exit conditions, checkpoints, conversation mediation and
//! single-agent probes.

mod checkpoint;
mod context;
mod conversation;
mod engine;
mod exit;
mod journal;
mod probe;
mod rng;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::promptkit::PromptError;
use crate::provider::ProviderError;

pub use checkpoint::{checkpoint_load, checkpoint_save, Checkpoint, CHECKPOINT_VERSION};
pub use context::RunCtx;
pub use conversation::{
    mediate_conversation, Audience, ConversationPolicy, Eligibility, Participant, SpeakOrder, Transcript, Utterance,
};
pub use engine::{
    log_path, metrics_path, resume, run, run_id, ProviderMode, RunConfig, RunOutput, RunResult, Scenario, ScenarioKind,
    StepOutcome,
};
pub use exit::{check_exit, ExitReason, ExitSpec};
pub use journal::{read_events, EventKind, EventRecord, Journal, JournalCursor, JournalDetail};
pub use probe::{probe, ProbeEntry, ProbeReport};
pub use rng::{RecordedDraws, RngDraw, RngState, SimRng};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("journal: {0}")]
    Journal(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },
    #[error("serialization: {0}")]
    Serialization(String),
    #[error("unknown series `{0}`")]
    UnknownSeries(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("run aborted at round {round}: {source}")]
    Aborted {
        round: u64,
        checkpoint: Option<PathBuf>,
        #[source]
        source: Box<RuntimeError>,
    },
}

impl RuntimeError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// The innermost error, looking through `Aborted`.
    pub fn root(&self) -> &RuntimeError {
        match self {
            Self::Aborted { source, .. } => source.root(),
            other => other,
        }
    }
}

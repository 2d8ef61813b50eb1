use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can surface.
///
/// [`Error::category`] yields a stable, machine-parseable tag used by the
/// CLI and the streaming service.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Shape { expected: (u32, u32), got: (u32, u32) },

    #[error("length mismatch: expected {expected} items, got {got}")]
    Length { expected: usize, got: usize },

    #[error("operation requires a nonempty mask")]
    EmptyMask,

    #[error("format error: {0}")]
    Format(String),

    #[error("frame {index} ({file}): {reason}")]
    Frame { index: usize, file: String, reason: String },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("backend transport failure: {0}")]
    Transport(String),

    #[error("backend unavailable: {0}")]
    Unavailable(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("unknown or closed session: {0}")]
    Session(String),

    #[error("prompt unresolved: {0}")]
    PromptUnresolved(String),

    #[error("gripper unresolved: {0}")]
    GripperUnresolved(String),

    #[error("tracker init failed: {0}")]
    Init(String),

    #[error("initialization exceeded its {0:?} budget")]
    Timeout(Duration),

    #[error("invalid state: {0}")]
    State(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape { .. } | Error::Length { .. } => "shape",
            Error::EmptyMask => "empty-mask",
            Error::Format(_) => "format",
            Error::Frame { .. } => "frame",
            Error::Io { .. } => "io",
            Error::Transport(_) => "transport",
            Error::Unavailable(_) => "unavailable",
            Error::Protocol(_) => "protocol",
            Error::Session(_) => "session",
            Error::PromptUnresolved(_) => "prompt-unresolved",
            Error::GripperUnresolved(_) => "gripper-unresolved",
            Error::Init(_) => "init",
            Error::Timeout(_) => "timeout",
            Error::State(_) => "state",
            Error::Config(_) => "config",
            Error::Input(_) => "input",
        }
    }

    /// Whether the remote client may retry the call that produced this.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Transport(_) | Error::Unavailable(_))
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn shape(expected: (u32, u32), got: (u32, u32)) -> Self {
        Error::Shape { expected, got }
    }
}

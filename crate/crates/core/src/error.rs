use std::path::PathBuf;

use thiserror::Error;

use crate::alignment::GenlockEvent;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("y4m parse error at token `{token}`: {reason}")]
    Parse { token: String, reason: String },

    #[error("truncated frame payload at frame {frame}")]
    Truncated { frame: usize },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("frame unreadable: {0}")]
    FrameUnreadable(String),

    #[error("encode failed for {codec}: {detail}")]
    Encode { codec: String, detail: String },

    #[error("{codec} does not accept {bit_depth}-bit input")]
    UnsupportedDepth { codec: String, bit_depth: u8 },

    #[error("rate parameter {value} outside declared range {range} for {codec}")]
    RateRange { codec: String, value: String, range: String },

    #[error("clip unreachable: top quality {top:.3} is below floor {floor:.3}")]
    ClipUnreachable { top: f64, floor: f64 },

    #[error("alignment impossible: no readable frame in {captured} captured frames")]
    AlignmentImpossible { captured: usize },

    #[error("wrong clip: expected clip id {expected}, majority decoded {found}")]
    WrongClip { expected: u16, found: u16 },

    #[error("genlock violation: {}", format_events(.0))]
    GenlockViolation(Vec<GenlockEvent>),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("metric runner `{metric}` failed: {stderr}")]
    Runner { metric: String, stderr: String },

    #[error("{metric} score {score} outside [{min}, {max}]")]
    ScoreRange { metric: String, score: f64, min: f64, max: f64 },

    #[error("inconsistent records: {0}")]
    Consistency(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    RawIo(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

fn format_events(events: &[GenlockEvent]) -> String {
    events
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

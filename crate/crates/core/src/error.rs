use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the diarization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read audio file {path}: {source}")]
    AudioRead {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("cannot write audio file {path}: {source}")]
    AudioWrite {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("unsupported audio encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("zero-length audio")]
    EmptyAudio,
    #[error("fewer than 2 channels (got {0})")]
    TooFewChannels(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("signal has {len} samples, shorter than one frame of {frame} samples")]
    SignalTooShort { len: usize, frame: usize },
    #[error("no event detected in device {device} between {start_s:.3} s and {end_s:.3} s")]
    NoEventDetected {
        device: usize,
        start_s: f64,
        end_s: f64,
    },
    #[error("aligned overlap of {0:.3} s is shorter than 1 s")]
    OverlapTooShort(f64),
    #[error("non-finite log-density for frame {frame}, component {component}")]
    NonFiniteLikelihood { frame: usize, component: usize },
    #[error("component {0} has zero total responsibility")]
    ComponentDeath(usize),
    #[error("empty reference annotation")]
    EmptyReference,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad user input (files, flags, configs),
    /// as opposed to failures during computation.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::NonFiniteLikelihood { .. } | Error::ComponentDeath(_) | Error::NoEventDetected { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use std::fmt;
use std::path::Path;

use adaptnmt_core::corpus::CorpusError;
use adaptnmt_core::decoder::DecodeError;
use adaptnmt_core::eval::{CurveError, EvalError};
use adaptnmt_core::human_eval::StoreError;
use adaptnmt_core::trainer::{CheckpointError, TrainError};

/// Process exit codes, one per failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Internal = 1,
    /// Unknown flag or malformed argument (clap's own code).
    Usage = 2,
    /// An input file is missing or unreadable.
    Input = 3,
    /// Configuration failed validation.
    Config = 4,
    /// Input files are readable but corrupt, misaligned or incompatible.
    Data = 5,
    /// Training hit a non-finite loss.
    Diverged = 6,
    /// An output could not be written.
    Output = 7,
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    pub fn new(exit: Exit, message: impl Into<String>) -> Self {
        CliError {
            exit,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Exit::Config, message)
    }

    pub fn input(path: &Path, e: impl fmt::Display) -> Self {
        Self::new(Exit::Input, format!("cannot read {}: {e}", path.display()))
    }

    pub fn output(path: &Path, e: impl fmt::Display) -> Self {
        Self::new(Exit::Output, format!("cannot write {}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let exit = match e {
            CorpusError::Io { .. } => Exit::Input,
            CorpusError::ZeroCutoff | CorpusError::ZeroBatchSize => Exit::Config,
            CorpusError::LineMismatch { .. } | CorpusError::BadVocabFile { .. } => Exit::Data,
        };
        CliError::new(exit, e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        let exit = match e {
            CheckpointError::Io { .. } => Exit::Input,
            _ => Exit::Data,
        };
        CliError::new(exit, e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Corpus(c) => c.into(),
            TrainError::Checkpoint(c) => c.into(),
            TrainError::InvalidConfig(_) => CliError::new(Exit::Config, e.to_string()),
            TrainError::NonFiniteLoss { .. } => CliError::new(Exit::Diverged, e.to_string()),
            TrainError::EmptyCorpus | TrainError::IncompatibleCheckpoint(_) => {
                CliError::new(Exit::Data, e.to_string())
            }
            TrainError::Metrics(_) => CliError::new(Exit::Output, e.to_string()),
            TrainError::Model(_) | TrainError::Nn(_) => CliError::new(Exit::Internal, e.to_string()),
        }
    }
}

impl From<DecodeError> for CliError {
    fn from(e: DecodeError) -> Self {
        let exit = match e {
            DecodeError::NoModels | DecodeError::InvalidBeam | DecodeError::InvalidWeights => {
                Exit::Config
            }
            DecodeError::VocabularyMismatch(_) => Exit::Data,
            DecodeError::Model(_) => Exit::Internal,
        };
        CliError::new(exit, e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::new(Exit::Data, e.to_string())
    }
}

impl From<CurveError> for CliError {
    fn from(e: CurveError) -> Self {
        match e {
            CurveError::Decode(d) => d.into(),
            CurveError::Eval(v) => v.into(),
            CurveError::Corpus(c) => c.into(),
            CurveError::Io(_) => CliError::new(Exit::Output, e.to_string()),
            CurveError::TestSetMismatch { .. } | CurveError::Parse { .. } => {
                CliError::new(Exit::Data, e.to_string())
            }
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        let exit = match e {
            StoreError::Io { .. } => Exit::Output,
            _ => Exit::Data,
        };
        CliError::new(exit, e.to_string())
    }
}

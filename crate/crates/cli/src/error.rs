use std::fmt;
use std::path::Path;

use kw2sent::corpus::CorpusError;
use kw2sent::evalsuite::EvalError;
use kw2sent::model::ModelError;
use kw2sent::training::TrainError;

pub const USAGE: i32 = 1;
pub const DATA: i32 = 2;
pub const NUMERIC: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(m: impl Into<String>) -> Self {
        CliError {
            code: USAGE,
            message: m.into(),
        }
    }

    pub fn data(m: impl Into<String>) -> Self {
        CliError {
            code: DATA,
            message: m.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let code = match e {
            ModelError::Numerics(_) | ModelError::NonFinite(_) => NUMERIC,
            ModelError::Invalid(_) => DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(m) => m.into(),
            other => CliError::data(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let code = match e {
            TrainError::Model(m) => return m.into(),
            TrainError::Eval(ev) => return ev.into(),
            TrainError::Config(_) => USAGE,
            TrainError::Diverged { .. } | TrainError::Numerics(_) => NUMERIC,
            _ => DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

pub fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::data(format!("{}: {e}", path.display()))
}

/// Fails before any work when an input file is absent.
pub fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::data(format!("{}: no such file", path.display())))
    }
}

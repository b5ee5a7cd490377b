use std::fmt;
use std::path::Path;

use chessprobe::corpus::CorpusError;
use chessprobe::eval::EvalError;
use chessprobe::lm::LmError;
use chessprobe::notation::{NotationError, PgnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Runtime,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Usage => 2,
            Kind::Data => 3,
            Kind::Runtime => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn usage(m: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Usage,
            message: m.into(),
        }
    }

    pub fn data(m: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Data,
            message: m.into(),
        }
    }

    pub fn runtime(m: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Runtime,
            message: m.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        let m = format!("{}: {e}", path.display());
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::data(m)
        } else {
            CliError::runtime(m)
        }
    }

    pub fn context(self, what: impl fmt::Display) -> Self {
        CliError {
            kind: self.kind,
            message: format!("{what}: {}", self.message),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<LmError> for CliError {
    fn from(e: LmError) -> Self {
        let kind = match e {
            LmError::Config(_) => Kind::Usage,
            LmError::Io(_) | LmError::Diverged { .. } => Kind::Runtime,
            _ => Kind::Data,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let kind = match e {
            CorpusError::Io(_) => Kind::Runtime,
            _ => Kind::Data,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Lm(e) => e.into(),
            EvalError::IncompatibleModel { .. } | EvalError::BadSweepValue(_) => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<NotationError> for CliError {
    fn from(e: NotationError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<PgnError> for CliError {
    fn from(e: PgnError) -> Self {
        match e {
            PgnError::Io { .. } => CliError::runtime(e.to_string()),
            PgnError::Malformed { .. } => CliError::data(e.to_string()),
        }
    }
}

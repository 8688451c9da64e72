use std::fmt;
use std::process::ExitCode;

/// A command failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Internal,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            kind: Kind::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure {
            kind: Kind::Data,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Failure {
            kind: Kind::Internal,
            message: message.into(),
        }
    }

    /// Prefixes the message, keeping the kind.
    pub fn context(self, what: impl fmt::Display) -> Self {
        Failure {
            kind: self.kind,
            message: format!("{what}: {}", self.message),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self.kind {
            Kind::Usage => 2,
            Kind::Data => 3,
            Kind::Internal => 4,
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<mmse_icp::Error> for Failure {
    fn from(e: mmse_icp::Error) -> Self {
        use mmse_icp::Error::*;
        let kind = match e {
            Argument(_) | UnknownNode(_) | ScopeTooLarge { .. } | Unsupported(_) => Kind::Usage,
            Generation { .. } | Simulation(_) | Fit(_) | Parse { .. } | Io(_) => Kind::Data,
        };
        Failure {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::data(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line());
        match line {
            Some(l) => Failure::data(format!("line {l}: {e}")),
            None => Failure::data(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::data(e.to_string())
    }
}

pub type Outcome<T> = Result<T, Failure>;

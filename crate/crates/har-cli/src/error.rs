//! CLI error type with process exit codes: 2 for configuration problems,
//! 3 for violated data/model invariants, 1 for everything else.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Invariant(String),
    Io(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Invariant(_) => 3,
            CliError::Io(_) | CliError::Runtime(_) => 1,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        CliError::Invariant(msg.into())
    }

    pub fn io(context: &str, err: std::io::Error) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violation: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<har_core::signal::SignalError> for CliError {
    fn from(e: har_core::signal::SignalError) -> Self {
        CliError::Invariant(e.to_string())
    }
}

impl From<har_core::transforms::TransformError> for CliError {
    fn from(e: har_core::transforms::TransformError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<har_core::neural::NeuralError> for CliError {
    fn from(e: har_core::neural::NeuralError) -> Self {
        use har_core::neural::NeuralError as N;
        match e {
            N::BadConfig(_) => CliError::Config(e.to_string()),
            N::NonFiniteGradient(_) | N::ShapeMismatch { .. } | N::LabelOutOfRange { .. } => {
                CliError::Invariant(e.to_string())
            }
            N::CheckpointMismatch(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<har_core::ssl::SslError> for CliError {
    fn from(e: har_core::ssl::SslError) -> Self {
        use har_core::ssl::SslError as S;
        match e {
            S::TooFewSubjects | S::EmptyStore => CliError::Invariant(e.to_string()),
            S::Signal(inner) => inner.into(),
            S::Transform(inner) => inner.into(),
            S::Neural(inner) => inner.into(),
        }
    }
}

impl From<har_core::downstream::DownstreamError> for CliError {
    fn from(e: har_core::downstream::DownstreamError) -> Self {
        use har_core::downstream::DownstreamError as D;
        match e {
            D::Unlabelled | D::TooFewSubjects | D::DegenerateFold { .. } | D::EmptyInput => {
                CliError::Invariant(e.to_string())
            }
            D::Signal(inner) => inner.into(),
            D::Neural(inner) => inner.into(),
            D::Forest(inner) => CliError::Invariant(inner.to_string()),
        }
    }
}

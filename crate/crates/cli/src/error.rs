use thiserror::Error;

/// Failures of the command-line pipeline, grouped by the stage that
/// raised them. Each class has its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),

    #[error("{0}")]
    Assumption(String),

    #[error(transparent)]
    Design(qorbit_core::Error),

    #[error(transparent)]
    Integrator(qorbit_core::Error),

    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Parse(_) => "parse-error",
            CliError::Assumption(_) => "assumption-failure",
            CliError::Design(_) => "design-failure",
            CliError::Integrator(_) => "integrator-abort",
            CliError::Io(_) => "io-error",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Assumption(_) => 3,
            CliError::Design(_) => 4,
            CliError::Integrator(_) => 5,
            CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

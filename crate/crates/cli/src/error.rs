use thiserror::Error;

/// Failures of a CLI run, each with its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("convergence check failed: {0}")]
    SlopeFailure(String),

    #[error("identity check failed: {0}")]
    IdentityFailure(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::SlopeFailure(_) => 4,
            CliError::IdentityFailure(_) => 5,
            CliError::Io(_) => 1,
        }
    }

    pub fn missing(field: &str, flag: &str) -> Self {
        CliError::Config(format!("missing required field `{field}` (set it in the config file or pass {flag})"))
    }
}

/// Library errors split into bad input and numerical trouble.
impl From<kolmo::Error> for CliError {
    fn from(e: kolmo::Error) -> Self {
        use kolmo::Error as E;
        match e {
            E::NotSpd(_) | E::QuadratureNonConvergence { .. } | E::NonFinitePath { .. } | E::BasePointMismatch | E::JetMismatch(_) => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

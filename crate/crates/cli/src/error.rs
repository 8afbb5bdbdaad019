use infodesign::DesignError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {msg}")]
    Csv { path: String, line: usize, msg: String },
    #[error(transparent)]
    Design(#[from] DesignError),
}

impl CliError {
    /// 2 for bad configuration or input files, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } | CliError::Csv { .. } => 2,
            CliError::Design(e) => design_exit_code(e),
        }
    }
}

fn design_exit_code(e: &DesignError) -> i32 {
    match e {
        DesignError::Dimension(_)
        | DesignError::InvalidArgument(_)
        | DesignError::OutOfSupport { .. }
        | DesignError::UnknownModel(_)
        | DesignError::UnknownOverride { .. }
        | DesignError::IncompatibleScheme { .. }
        | DesignError::GuardExceeded(_) => 2,
        DesignError::NotPositiveDefinite(_)
        | DesignError::Numerical(_)
        | DesignError::NonFiniteGradient { .. }
        | DesignError::NoConvergence(_)
        | DesignError::Trial { .. } => 3,
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

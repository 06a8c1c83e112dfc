use kcounter::Error;

/// Process exit codes. Flag parse errors exit 2 (from clap); success and help exit 0.
pub mod code {
    pub const INVALID_COMBINATION: i32 = 3;
    pub const IO: i32 = 4;
    pub const DATA: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Flags that parse individually but do not make sense together.
    #[error("invalid combination: {0}")]
    Combination(String),
    /// Inputs that are readable but unusable.
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Combination(_) => code::INVALID_COMBINATION,
            CliError::Core(e) if e.is_io() => code::IO,
            CliError::Core(_) | CliError::Data(_) => code::DATA,
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

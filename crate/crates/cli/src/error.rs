use alasso::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Includes `--help` and `--version`, which exit with 0.
    #[error("{0}")]
    Clap(#[from] clap::Error),
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    /// 0 success, 2 usage, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Clap(e) => match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            },
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                CoreError::Config(_) | CoreError::InvalidSpec(_) => 2,
                CoreError::Diverged { .. } | CoreError::NonFinite(_) => 4,
                _ => 3,
            },
        }
    }
}

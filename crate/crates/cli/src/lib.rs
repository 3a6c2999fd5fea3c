//! Config-driven experiment runner for the delayed-projection solvers.

pub mod commands;
pub mod config;

/// Failure classes with stable exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Invalid or unreadable configuration.
    Config(anyhow::Error),
    /// The sweep has no entries.
    EmptySweep,
    /// One or more verification checks failed.
    Verification(Vec<u32>),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::EmptySweep => 2,
            CliError::Verification(_) | CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e:#}"),
            CliError::EmptySweep => write!(f, "config error: EmptySweep: the sweep has no entries"),
            CliError::Verification(ids) => write!(f, "verification failed for criteria {ids:?}"),
            CliError::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

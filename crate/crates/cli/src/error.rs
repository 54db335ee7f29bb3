use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown scenario `{0}`; run `gfc list` for the registry")]
    UnknownScenario(String),

    #[error(transparent)]
    Core(#[from] gfc_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization failed: {0}")]
    Serialize(String),
}

impl CliError {
    /// 2 for invalid input, 3 for numerical non-convergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::UnknownScenario(_) => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) => 2,
            CliError::Io { .. } | CliError::Serialize(_) => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::UnknownScenario("x".into()).exit_code(), 2);
        assert_eq!(CliError::Core(gfc_core::Error::Input("x".into())).exit_code(), 2);
        assert_eq!(CliError::Core(gfc_core::Error::NonConvergence("x".into())).exit_code(), 3);
        assert_eq!(CliError::Serialize("x".into()).exit_code(), 1);
    }
}

use std::path::{Path, PathBuf};

use dcot::DcotError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: DcotError,
    },
    #[error(transparent)]
    Solver(DcotError),
}

impl CliError {
    pub fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// Attributes a library error raised while reading `path`.
    pub fn input(path: &Path, source: DcotError) -> Self {
        match source {
            DcotError::Io(e) => CliError::io(path, e),
            other => CliError::Input { path: path.to_path_buf(), source: other },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io { .. } | CliError::Input { .. } => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Solver(_) => "solver",
            CliError::Io { .. } | CliError::Input { .. } => "io",
        }
    }

    /// `{"error": kind, "message": text}`
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

/// Classifies a library error raised while setting up a run (before any
/// iteration) as a configuration problem.
pub fn setup(e: DcotError) -> CliError {
    match e {
        DcotError::Io(e) => CliError::Io { path: PathBuf::new(), source: e },
        DcotError::Diverged { .. } | DcotError::InnerSolver { .. } => CliError::Solver(e),
        other => CliError::Config(other.to_string()),
    }
}

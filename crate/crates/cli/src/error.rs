use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: healthscope_core::Error,
    },

    #[error("{0}")]
    EmptyResult(String),

    #[error("{failed} of {total} stages failed; see manifest.json")]
    StagesFailed {
        failed: usize,
        total: usize,
        io: bool,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn stage(stage: impl Into<String>, source: healthscope_core::Error) -> Self {
        CliError::Stage {
            stage: stage.into(),
            source,
        }
    }

    /// 2 for I/O failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        let io = match self {
            CliError::Io { .. } => true,
            CliError::Stage { source, .. } => source.is_io(),
            CliError::StagesFailed { io, .. } => *io,
            CliError::Config(_) | CliError::EmptyResult(_) => false,
        };
        if io {
            2
        } else {
            1
        }
    }
}

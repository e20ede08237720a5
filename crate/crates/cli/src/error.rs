use std::fmt;
use std::path::{Path, PathBuf};

use squeezeprof_core::{Error as CoreError, ErrorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Simulate,
    Fit,
    Reconstruct,
    GenMasks,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Simulate => "simulate",
            Stage::Fit => "fit",
            Stage::Reconstruct => "reconstruct",
            Stage::GenMasks => "gen-masks",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {message}", path.display())]
    Data { path: PathBuf, message: String },
    #[error("{0}")]
    Model(#[from] CoreError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{} exists; pass --force to overwrite", .0.display())]
    Exists(PathBuf),
    #[error("stage {stage}: {source}")]
    Staged {
        stage: Stage,
        #[source]
        source: Box<CliError>,
    },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn data(path: impl AsRef<Path>, message: impl fmt::Display) -> Self {
        CliError::Data {
            path: path.as_ref().to_path_buf(),
            message: message.to_string(),
        }
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn at(self, stage: Stage) -> Self {
        match self {
            CliError::Staged { .. } => self,
            other => CliError::Staged {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// 2 config, 3 data, 4 physics or model violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data { .. } | CliError::Io { .. } | CliError::Exists(_) => 3,
            CliError::Model(e) => match e.kind() {
                ErrorKind::Domain => 2,
                ErrorKind::Data => 3,
                ErrorKind::Physics => 4,
            },
            CliError::Staged { source, .. } => source.exit_code(),
        }
    }
}

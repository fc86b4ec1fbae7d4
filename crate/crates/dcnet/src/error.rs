use std::path::{Path, PathBuf};

/// Problems with the contents of a data, checkpoint or CSV file.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    Magic { expected: &'static str, found: String },
    #[error("unsupported version {found}, expected {expected}")]
    Version { expected: u32, found: u32 },
    #[error("file truncated while reading {what}")]
    Truncated { what: &'static str },
    #[error("{0} trailing bytes after the last record")]
    Trailing(usize),
    #[error("invalid text in {what}")]
    Utf8 { what: &'static str },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("line {line}, column {column}: cannot parse {text:?} as a number")]
    Number { line: usize, column: usize, text: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Core(#[from] dcnet_core::Error),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, source: FormatError) -> Self {
        Self::Format { path: path.to_path_buf(), source }
    }

    /// 2 usage, configuration or I/O; 3 data format; 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        use dcnet_core::Error as E;
        match self {
            Self::Io { .. } | Self::Usage(_) => 2,
            Self::Format { .. } => 3,
            Self::GradCheck(_) => 4,
            Self::Core(E::NonFinite { .. }) => 4,
            Self::Core(E::Label { .. }) => 3,
            Self::Core(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("metrics table is empty")]
    EmptyTable,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error(transparent)]
    Core(#[from] meshroles::Error),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

pub(crate) fn config_err(line: usize, msg: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        line,
        msg: msg.into(),
    }
}

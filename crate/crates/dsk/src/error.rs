use std::io;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    /// Wrong magic or unsupported version.
    #[error("format error: {0}")]
    Format(String),
    /// Structurally damaged or inconsistent content.
    #[error("integrity error at byte {offset}: {message}")]
    Integrity { offset: u64, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    /// Inputs that are individually valid but do not fit together.
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] dsk_core::Error),
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn integrity(offset: usize, message: impl Into<String>) -> Self {
        Error::Integrity {
            offset: offset as u64,
            message: message.into(),
        }
    }

    pub(crate) fn parse(line: usize, message: impl std::fmt::Display) -> Self {
        Error::Parse {
            line,
            message: message.to_string(),
        }
    }

    /// Innermost error, skipping file context.
    pub fn root(&self) -> &Error {
        match self {
            Error::InFile { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) trait WithPath<T> {
    fn in_file(self, path: &std::path::Path) -> Result<T>;
}

impl<T> WithPath<T> for Result<T> {
    fn in_file(self, path: &std::path::Path) -> Result<T> {
        self.map_err(|e| match e {
            e @ Error::Io { .. } => e,
            e => Error::InFile {
                path: path.to_path_buf(),
                source: Box::new(e),
            },
        })
    }
}

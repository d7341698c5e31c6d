use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum SegError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("{path}:{line}: {message}")]
    ManifestLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate image path in manifest: {0}")]
    DuplicateImagePath(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("pretrained weights: {0}")]
    Pretrained(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Nn(#[from] segdense_nn::NnError),
}

impl SegError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SegError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, SegError>;

use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("empty model: {0}")]
    EmptyModel(String),

    #[error("degenerate extent: all ellipsoid centers coincide")]
    DegenerateExtent,

    #[error("singular ellipse (condition number {condition:.3e})")]
    SingularEllipse { condition: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("weights error: {0}")]
    Weights(String),

    #[error("training diverged at iteration {iteration} (loss {loss})")]
    Diverged { iteration: usize, loss: f64 },

    #[error("insufficient bundle: {0}")]
    InsufficientBundle(String),

    #[error("degenerate ray geometry (condition number {condition:.3e})")]
    DegenerateGeometry { condition: f64 },

    #[error("degenerate rotation: {0}")]
    RotationDegenerate(String),
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// True for failures caused by the scene or bundle geometry rather than
    /// by malformed input.
    pub fn is_geometric(&self) -> bool {
        matches!(
            self,
            Error::DegenerateExtent
                | Error::SingularEllipse { .. }
                | Error::InsufficientBundle(_)
                | Error::DegenerateGeometry { .. }
                | Error::RotationDegenerate(_)
        )
    }
}

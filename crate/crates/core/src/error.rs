use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty initialization cloud")]
    EmptyInitCloud,
    #[error("zero-norm quaternion")]
    ZeroQuaternion,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("image {width}x{height} is smaller than the {window}x{window} SSIM window")]
    ImageTooSmall { width: usize, height: usize, window: usize },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("reference cloud has no normals")]
    MissingNormals,
    #[error("inverted crop box on axis {axis}")]
    InvertedBox { axis: usize },
    #[error("degenerate correspondence set at ICP iteration {iteration}")]
    DegenerateCorrespondences { iteration: usize },
    #[error("binning does not match the model/camera: {0}")]
    BinningMismatch(String),
    #[error("non-finite loss at iteration {iteration} (view {view})")]
    NonFiniteLoss { iteration: usize, view: String },
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("ply: {0}")]
    Ply(String),
    #[error("image: {0}")]
    Image(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, msg: msg.into() }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File { path: path.into(), source }
    }
}

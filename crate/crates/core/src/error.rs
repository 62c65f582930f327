use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("point cloud became empty after filtering ({0})")]
    EmptyAfterFilter(&'static str),
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("invalid distance cap {0} (must be finite and > 0)")]
    InvalidDistance(f64),
    #[error("invalid voxel leaf {0} (must be finite and > 0)")]
    InvalidLeaf(f64),
    #[error("invalid octree resolution {0} (must be finite and > 0)")]
    InvalidResolution(f64),
    #[error("cell key out of range for point {0}")]
    KeyOverflow(usize),
    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("no correspondences within the distance cap")]
    NoCorrespondences,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("singular 6x6 system (rank {rank}): motion is not observable")]
    SingularSystem { rank: usize },
    #[error("unknown algorithm `{0}` (expected point-to-point, point-to-plane or fs-hicp)")]
    UnknownAlgorithm(String),
    #[error("total stage duration is zero")]
    ZeroTotalDuration,
    #[error("invalid bandwidth {0} Mbit/s")]
    InvalidBandwidth(f64),
    #[error("no split candidates")]
    EmptyCandidates,
    #[error("malformed file at byte {offset}: {reason}")]
    MalformedFile { offset: usize, reason: String },
    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("registration of pair {pair} (cloud {pair} -> cloud {next}) failed: {source}", next = pair + 1)]
    PairFailed {
        pair: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, reason: impl Into<String>) -> Self {
        Error::Parse { line, reason: reason.into() }
    }

    pub(crate) fn malformed(offset: usize, reason: impl Into<String>) -> Self {
        Error::MalformedFile { offset, reason: reason.into() }
    }

    /// Attaches a file path to the error.
    pub fn at_path(self, path: impl Into<PathBuf>) -> Self {
        Error::File { path: path.into(), source: Box::new(self) }
    }
}

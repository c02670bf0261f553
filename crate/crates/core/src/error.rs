use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The I-frame keypoints have no spread, so the scale regression is undefined.
    #[error("degenerate keypoints: I-frame keypoints are all identical")]
    DegenerateKeypoints,

    #[error("near-singular matrix (det = {det:e}){}", keypoint_suffix(*.keypoint))]
    NearSingular { det: f64, keypoint: Option<usize> },

    #[error("truncated stream{}", frame_suffix(*.frame))]
    TruncatedStream { frame: Option<usize> },

    #[error("bad magic: expected \"AKPC\"")]
    BadMagic,

    #[error("unsupported stream version {0}")]
    UnsupportedVersion(u8),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

fn keypoint_suffix(k: Option<usize>) -> String {
    k.map(|k| format!(" at keypoint {k}")).unwrap_or_default()
}

fn frame_suffix(f: Option<usize>) -> String {
    f.map(|f| format!(" while reading frame {f}"))
        .unwrap_or_default()
}

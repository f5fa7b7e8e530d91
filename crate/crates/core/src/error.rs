use thiserror::Error;

/// Errors produced anywhere in the simulation, estimation and evaluation stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point is behind the camera (depth {depth:.4} mm)")]
    BehindCamera { depth: f64 },

    #[error("pixel ({u:.2}, {v:.2}) lies outside the {width}x{height} image")]
    OutOfImage {
        u: f64,
        v: f64,
        width: u32,
        height: u32,
    },

    #[error("probe tip at ({x:.2}, {y:.2}) mm is off the tissue domain")]
    OffTissue { x: f64, y: f64 },

    #[error("unknown material `{0}`")]
    UnknownMaterial(String),

    #[error("calibration denominator is non-positive at channels {0:?}")]
    Calibration(Vec<usize>),

    #[error("cluster {cluster} cannot be fitted: {points} points spanning rank {rank} (need >= 8 points and rank >= 3)")]
    RankDeficient {
        cluster: usize,
        points: usize,
        rank: usize,
    },

    #[error("interaction matrix is singular")]
    SingularJacobian,

    #[error("spectrum has zero norm")]
    ZeroNorm,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

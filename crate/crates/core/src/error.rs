use thiserror::Error;

/// Errors raised across the analytics pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("line {line}: unknown vehicle class `{token}` (expected car, bus or truck)")]
    UnknownClass { line: u64, token: String },

    #[error("invalid bounding box {xmin},{ymin},{xmax},{ymax}: {reason}")]
    InvalidBBox {
        xmin: f64,
        ymin: f64,
        xmax: f64,
        ymax: f64,
        reason: &'static str,
    },

    #[error("duplicate detection for frame {frame_num}, id {id}")]
    DuplicateRecord { frame_num: u32, id: u32 },

    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),

    #[error("invalid camera model: {0}")]
    InvalidCamera(String),

    #[error("altitude must be positive, got {0} m")]
    InvalidAltitude(f64),

    #[error("points share frame {0}; speed needs two distinct frames")]
    SameFrame(u32),

    #[error("{0} requires at least one value")]
    Empty(&'static str),

    #[error("post-encroachment order violated: follower crossed {follower_s} s before leader {leader_s} s")]
    CrossingOrder { leader_s: f64, follower_s: f64 },

    #[error("crossings belong to different sections (`{0}` vs `{1}`)")]
    SectionMismatch(String, String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("link {row}: ({user}, {item}) outside a {users}x{items} graph")]
    LinkOutOfRange {
        row: usize,
        user: u32,
        item: u32,
        users: usize,
        items: usize,
    },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("line {line}: rating {rating} outside scale [{min}, {max}]")]
    RatingOutOfScale {
        line: usize,
        rating: i64,
        min: i64,
        max: i64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate sweep: every point has mean degree {0}")]
    DegenerateSweep(f64),

    #[error("curve fit did not converge from any start (best rms residual {best_residual})")]
    FitDidNotConverge { best_residual: f64 },

    #[error("only {found} degree buckets hold at least {min_items} items, need {needed}")]
    TooFewBuckets {
        found: usize,
        needed: usize,
        min_items: usize,
    },

    #[error("relative improvement undefined against a zero reference value")]
    ZeroReference,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Lattice extents are invalid, overflow, or a box does not fit.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A vector has the wrong number of components.
    #[error("shape error: expected {expected} components, got {got}")]
    Shape { expected: usize, got: usize },

    /// Malformed field file or CSV.
    #[error("format error: {0}")]
    Format(String),

    /// Payload length disagrees with the header.
    #[error("payload length mismatch: header implies {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    /// Non-finite or otherwise unusable data values.
    #[error("data error: {0}")]
    Data(String),

    /// The scanning family contains no admissible window.
    #[error("scanning family is empty: no window satisfies containment and volume limits")]
    EmptyFamily,

    /// The window or its complement is empty.
    #[error("degenerate window: volume {volume} of total {total}")]
    DegenerateWindow { volume: u64, total: u64 },

    /// A parameter is outside its admissible domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Bracket expansion for the critical value reached its ceiling.
    #[error("critical value search did not converge: bound still above alpha at y = {0}")]
    NonConvergence(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate lattice basis: |det| = {det:e}")]
    DegenerateLattice { det: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid projection: {0}")]
    InvalidProjection(String),

    #[error("operator is not Hermitian (deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("operator is not unitary (deviation {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("grid {n1}x{n2} does not resolve hopping R = ({r1}, {r2})")]
    GridTooCoarse { n1: usize, n2: usize, r1: i32, r2: i32 },

    #[error("spectral gap closed: eigenvalue {eigenvalue} within {distance:e} of mu = {mu}")]
    GapClosed { mu: f64, eigenvalue: f64, distance: f64 },

    #[error("rank of the Fermi projection varies across the grid ({min}..={max})")]
    RankInconsistent { min: usize, max: usize },

    #[error("input is not off-diagonal (residual {residual:e})")]
    NotOffDiagonal { residual: f64 },

    #[error("gap violation: {0}")]
    GapViolation(String),

    #[error("contour passes within {distance:e} of the spectrum")]
    ContourHitsSpectrum { distance: f64 },

    #[error("singular resolvent at z = {re} + {im}i")]
    SingularResolvent { re: f64, im: f64 },

    #[error("generator A_{index} requested but only {available} available")]
    MissingGenerator { index: usize, available: usize },

    #[error("Y has no periodic fiber representation; order 0 is only available off-diagonally")]
    NotPeriodic,

    #[error("Chern oracle inconclusive: overlap determinant {modulus:e} at node {node}")]
    OracleInconclusive { node: usize, modulus: f64 },

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateLattice { .. } => "DegenerateLattice",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::InvalidProjection(_) => "InvalidProjection",
            Error::NotHermitian { .. } => "NotHermitian",
            Error::NotUnitary { .. } => "NotUnitary",
            Error::GridTooCoarse { .. } => "GridTooCoarse",
            Error::GapClosed { .. } => "GapClosed",
            Error::RankInconsistent { .. } => "RankInconsistent",
            Error::NotOffDiagonal { .. } => "NotOffDiagonal",
            Error::GapViolation(_) => "GapViolation",
            Error::ContourHitsSpectrum { .. } => "ContourHitsSpectrum",
            Error::SingularResolvent { .. } => "SingularResolvent",
            Error::MissingGenerator { .. } => "MissingGenerator",
            Error::NotPeriodic => "NotPeriodic",
            Error::OracleInconclusive { .. } => "OracleInconclusive",
            Error::Validation(_) => "Validation",
            Error::Parse { .. } => "Parse",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }

    /// The library module that raises this kind of error.
    pub fn module(&self) -> &'static str {
        match self {
            Error::DegenerateLattice { .. } => "lattice",
            Error::ShapeMismatch(_)
            | Error::InvalidProjection(_)
            | Error::NotHermitian { .. }
            | Error::NotUnitary { .. } => "fiber",
            Error::GridTooCoarse { .. }
            | Error::GapClosed { .. }
            | Error::RankInconsistent { .. }
            | Error::Parse { .. } => "models",
            Error::NotOffDiagonal { .. }
            | Error::GapViolation(_)
            | Error::ContourHitsSpectrum { .. }
            | Error::SingularResolvent { .. } => "liouvillian",
            Error::MissingGenerator { .. } | Error::NotPeriodic => "neass",
            Error::OracleInconclusive { .. } => "response",
            Error::Validation(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => "cli",
        }
    }
}

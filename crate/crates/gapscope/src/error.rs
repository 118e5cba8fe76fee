use thiserror::Error;

/// Every failure mode surfaced by the library and the CLI.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("branch ({0},{1}) is not a strict contraction: max |phi'| = {2}")]
    NotContracting(usize, usize, f64),
    #[error("images of branches ({0},{1}) and ({2},{3}) overlap")]
    ImagesOverlap(usize, usize, usize, usize),
    #[error("adjacency matrix is not transitive")]
    NotTransitive,
    #[error("image of branch ({0},{1}) escapes the interior of I_{1}")]
    ImageEscapesInterval(usize, usize),
    #[error("intervals {0} and {1} overlap or are degenerate")]
    IntervalsOverlap(usize, usize),
    #[error("infeasible parameters: {0}")]
    InfeasibleParameters(String),
    #[error("point {0} lies outside interval I_{1}")]
    PointOutsideInterval(f64, usize),
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("no sign change bracketing the root: {0}")]
    NoBracket(String),
    #[error("no root found: {0}")]
    NoRoot(String),
    #[error("degenerate range: f_max - f_min = {0}")]
    DegenerateRange(f64),
    #[error("enumeration too large: {0} words")]
    EnumerationTooLarge(f64),
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("z = {0} is numerically an eigenvalue")]
    SingularPoint(String),
    #[error("point leaves the admissible domain: {0}")]
    OutsideDomain(String),
    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),
    #[error("words are identical")]
    IdenticalWords,
    #[error("inadmissible word: {0:?}")]
    InadmissibleWord(Vec<usize>),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable kind, used in the CLI error document.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotContracting(..) => "NotContracting",
            Error::ImagesOverlap(..) => "ImagesOverlap",
            Error::NotTransitive => "NotTransitive",
            Error::ImageEscapesInterval(..) => "ImageEscapesInterval",
            Error::IntervalsOverlap(..) => "IntervalsOverlap",
            Error::InfeasibleParameters(_) => "InfeasibleParameters",
            Error::PointOutsideInterval(..) => "PointOutsideInterval",
            Error::NoConvergence(_) => "NoConvergence",
            Error::NoBracket(_) => "NoBracket",
            Error::NoRoot(_) => "NoRoot",
            Error::DegenerateRange(_) => "DegenerateRange",
            Error::EnumerationTooLarge(_) => "EnumerationTooLarge",
            Error::OutOfRange(_) => "OutOfRange",
            Error::SingularPoint(_) => "SingularPoint",
            Error::OutsideDomain(_) => "OutsideDomain",
            Error::QuadratureNotConverged(_) => "QuadratureNotConverged",
            Error::IdenticalWords => "IdenticalWords",
            Error::InadmissibleWord(_) => "InadmissibleWord",
            Error::Parse(_) => "Parse",
            Error::InvalidModel(_) => "InvalidModel",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

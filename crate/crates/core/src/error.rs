use std::fmt;
use std::path::PathBuf;

/// Machine-readable classification of an input or configuration defect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationCode {
    FactorCount,
    ThinDivisibility,
    NonPositiveCount,
    EmptyQuantiles,
    QuantileRange,
    PriorParameter,
    SeriesCount,
    TooFewObservations,
    NonPositivePrice,
    NonFiniteValue,
    DateOrder,
    DuplicateSeries,
    MissingValue,
    MalformedCsv,
    ShapeMismatch,
    IndexOutOfRange,
    OverlappingSets,
    UnknownFixture,
    UnknownSeries,
    DateOutOfSample,
    NotDemeaned,
}

impl ViolationCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationCode::FactorCount => "factor-count",
            ViolationCode::ThinDivisibility => "thin-divisibility",
            ViolationCode::NonPositiveCount => "non-positive-count",
            ViolationCode::EmptyQuantiles => "empty-quantiles",
            ViolationCode::QuantileRange => "quantile-range",
            ViolationCode::PriorParameter => "prior-parameter",
            ViolationCode::SeriesCount => "series-count",
            ViolationCode::TooFewObservations => "too-few-observations",
            ViolationCode::NonPositivePrice => "non-positive-price",
            ViolationCode::NonFiniteValue => "non-finite-value",
            ViolationCode::DateOrder => "date-order",
            ViolationCode::DuplicateSeries => "duplicate-series",
            ViolationCode::MissingValue => "missing-value",
            ViolationCode::MalformedCsv => "malformed-csv",
            ViolationCode::ShapeMismatch => "shape-mismatch",
            ViolationCode::IndexOutOfRange => "index-out-of-range",
            ViolationCode::OverlappingSets => "overlapping-sets",
            ViolationCode::UnknownFixture => "unknown-fixture",
            ViolationCode::UnknownSeries => "unknown-series",
            ViolationCode::DateOutOfSample => "date-out-of-sample",
            ViolationCode::NotDemeaned => "not-demeaned",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

impl Violation {
    pub fn new(code: ViolationCode, message: impl Into<String>) -> Self {
        Violation { code, message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.code, self.message)
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {}", join_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("numerical failure at sweep {sweep} in block {block}: {detail}")]
    Numerical { sweep: u64, block: String, detail: String },

    #[error("singular conditioning block for set {set:?}")]
    SingularConditioning { set: Vec<usize> },

    #[error("wall-clock budget exceeded after sweep {sweep}; checkpoint at {checkpoint:?}")]
    BudgetExceeded { sweep: u64, checkpoint: Option<PathBuf> },

    #[error("I/O error on {path:?}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("corrupt or incompatible file {path:?}: {detail}")]
    Format { path: PathBuf, detail: String },
}

impl Error {
    pub fn invalid(code: ViolationCode, message: impl Into<String>) -> Self {
        Error::Invalid(vec![Violation::new(code, message)])
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Codes of all violations carried by an `Invalid` error.
    pub fn codes(&self) -> Vec<ViolationCode> {
        match self {
            Error::Invalid(v) => v.iter().map(|x| x.code).collect(),
            _ => Vec::new(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, NetArchError>;

/// Broad failure classes, used by front-ends to choose exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum NetArchError {
    #[error("panel has {found} usable stocks, at least 2 are required")]
    EmptyPanel { found: usize },
    #[error("dates cannot be ordered: {0}")]
    NonMonotoneDates(String),
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("duplicate entry for date {date}, ticker {ticker}")]
    DuplicateKey { date: String, ticker: String },
    #[error("stock {ticker} has no nonzero return, cannot floor log-squared values")]
    AllZeroSeries { ticker: String },
    #[error("stock {ticker} has zero sample variance")]
    DegenerateSeries { ticker: String },
    #[error("autoregression design is rank deficient for stock {ticker}")]
    SingularRegression { ticker: String },
    #[error("stocks {a} and {b} are at distance zero, inverse-distance weight is infinite")]
    CoincidentSeries { a: String, b: String },
    #[error("k = {k} is outside 1..={max}")]
    BadK { k: usize, max: usize },
    #[error("lag regressors are collinear with the intercept")]
    SingularDesign,
    #[error("smearing sum overflowed")]
    Overflow,
    #[error("moment matrix is singular: {0}")]
    SingularMoment(String),
    #[error("estimated rho = {rho} violates the stability bound {bound}")]
    UnstableRho { rho: f64, bound: f64 },
    #[error("I - rho W is numerically singular")]
    SingularSystem,
    #[error("process is not stationary: {0}")]
    Nonstationary(String),
    #[error("loss differential has zero variance (mean differential {mean_diff})")]
    ZeroVariance { mean_diff: f64 },
    #[error("bootstrap is degenerate: {0}")]
    BootstrapDegenerate(String),
    #[error("forecast error covariance is singular")]
    SingularCovariance,
    #[error("combination design is rank deficient")]
    RankDeficient,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("model {model} failed at step {step}: {source}")]
    Fit {
        model: String,
        step: usize,
        #[source]
        source: Box<NetArchError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NetArchError {
    pub fn class(&self) -> ErrorClass {
        use NetArchError::*;
        match self {
            EmptyPanel { .. }
            | NonMonotoneDates(_)
            | Parse { .. }
            | DuplicateKey { .. }
            | AllZeroSeries { .. }
            | DegenerateSeries { .. }
            | CoincidentSeries { .. }
            | Io(_)
            | Json(_) => ErrorClass::Data,
            BadK { .. } | Invalid(_) => ErrorClass::Usage,
            Fit { source, .. } => source.class(),
            _ => ErrorClass::Numeric,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        NetArchError::Invalid(msg.into())
    }
}

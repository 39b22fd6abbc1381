use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate link geometry: {0}")]
    DegenerateGeometry(String),

    #[error("x = {x} lies outside the GPD support for sigma = {sigma}, xi = {xi}")]
    OutsideSupport { x: f64, sigma: f64, xi: f64 },

    #[error("GPD moments undefined for xi = {xi} (need xi < 1/2)")]
    MomentDomain { xi: f64 },

    #[error("parameters sigma = {sigma}, xi = {xi} are infeasible for the sample set")]
    Infeasible { sigma: f64, xi: f64 },

    #[error("log-likelihood gradient is singular at x = {x} (1 + xi*x/sigma = 0)")]
    SingularGradient { x: f64 },

    #[error("sample set is empty")]
    EmptySamples,

    #[error("total sample count across contributors is zero")]
    ZeroSamples,

    #[error("{name} = {value} is outside its domain ({expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("config parse error at line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },

    #[error("invalid config value for `{field}`: {msg}")]
    ConfigInvalid { field: String, msg: String },

    #[error("simulation aborted at slot {slot}: {source}")]
    Slot { slot: u64, source: Box<Error> },

    #[error("malformed input data: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain {
            name,
            value,
            expected,
        }
    }

    pub(crate) fn invalid(field: &str, msg: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            field: field.to_string(),
            msg: msg.into(),
        }
    }
}

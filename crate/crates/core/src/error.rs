use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("no threshold crossing in [{start}, {horizon}]")]
    NoThreshold { start: f64, horizon: f64 },

    #[error("infeasible schedule: coupling reaches {kappa} > 1 at tau = {tau}")]
    InfeasibleSchedule { tau: f64, kappa: f64 },

    #[error("no population peak found before tau = {horizon}")]
    NoPeak { horizon: f64 },

    #[error("singular coupling at tau = {tau}: denominator {denominator}")]
    SingularCoupling { tau: f64, denominator: f64 },

    #[error("integrator step failure at tau = {tau}: {reason}")]
    StepFailure { tau: f64, reason: String },

    #[error("root not bracketed on [{a}, {b}]")]
    NotBracketed { a: f64, b: f64 },

    #[error("semiclassical denominator vanishes at tau = {0}")]
    ZeroDenominator(f64),

    #[error("i/o: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use platoon_core::qos::QosError;
use platoon_core::{ScenarioError, SimError};

pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INVARIANT: u8 = 3;
pub const EXIT_INFEASIBLE: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub source: anyhow::Error,
}

impl CliError {
    pub fn new(code: u8, source: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            source: source.into(),
        }
    }

    pub fn config(msg: impl std::fmt::Display) -> Self {
        Self::new(EXIT_CONFIG, anyhow::anyhow!("{msg}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(EXIT_IO, e)
    }
}

impl From<QosError> for CliError {
    fn from(e: QosError) -> Self {
        let code = match e {
            QosError::InvalidParameter(_) => EXIT_CONFIG,
            _ => EXIT_INFEASIBLE,
        };
        Self::new(code, e)
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Infeasible(q) => q.into(),
            other => Self::new(EXIT_CONFIG, other),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Scenario(s) => s.into(),
            SimError::Invariant { .. } => Self::new(EXIT_INVARIANT, e),
            SimError::NoPlatoons => Self::new(EXIT_CONFIG, e),
        }
    }
}

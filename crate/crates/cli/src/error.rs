use hhg_core::Error;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("sup |dσx| = {sup} exceeds threshold {threshold}")]
    OracleThreshold { sup: f64, threshold: f64 },
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Core(Error::InvalidParameter(_)) => 2,
            CliError::Core(Error::NormDrift { .. }) => 3,
            CliError::Core(_) => 4,
            CliError::OracleThreshold { .. } => 5,
            CliError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::OracleThreshold { .. } => "oracle_threshold",
            CliError::Core(e) => match e {
                Error::InvalidParameter(_) => "invalid_parameter",
                Error::NonFinite(_) => "non_finite",
                Error::NormDrift { .. } => "norm_drift",
                Error::StepUnderflow { .. } => "step_underflow",
                Error::TailOverflow { .. } => "tail_overflow",
                Error::NoPlateau { .. } => "no_plateau",
                Error::NonUniformSeries(_) => "non_uniform_series",
                Error::NonFiniteWigner { .. } => "non_finite_wigner",
                Error::ImaginaryResidue { .. } => "imaginary_residue",
            },
        }
    }

    /// `error=<kind> <message>` on a single line.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error={} {}", self.kind(), msg)
    }
}

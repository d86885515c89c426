use std::fmt;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_INCOMPATIBLE: i32 = 4;

/// Error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn incompatible(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INCOMPATIBLE,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<nmrom::Error> for CliError {
    fn from(e: nmrom::Error) -> Self {
        use nmrom::Error as E;
        let code = match &e {
            E::NoConvergence { .. }
            | E::PartialTable { .. }
            | E::Overdamped { .. }
            | E::NegativeFrequency { .. }
            | E::StepSizeCollapse { .. }
            | E::DahlNotPeriodic { .. }
            | E::Singular(..) => EXIT_CONVERGENCE,
            E::Incompatible(_) => EXIT_INCOMPATIBLE,
            _ => EXIT_CONFIG,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::config(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::incompatible(format!("malformed CSV: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::incompatible(format!("malformed JSON: {e}"))
    }
}

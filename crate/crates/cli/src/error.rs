use std::fmt;

use dirac_tomo::dirac::DiracError;
use dirac_tomo::experiment::ExperimentError;
use dirac_tomo::formats::FormatError;
use dirac_tomo::hilbert::HilbertError;
use dirac_tomo::weak::WeakError;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    /// Comparison outside tolerance (exit 1).
    Tolerance(String),
    /// Bad arguments, config or input files (exit 2).
    Usage(String),
    /// Calibration, degeneracy or rank failure (exit 3).
    Numerical(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Tolerance(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Tolerance(m) | CliError::Usage(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

/// Variant name of an error's `Debug` form, e.g. `CalibrationFailed`.
fn variant_name<E: fmt::Debug>(e: &E) -> String {
    format!("{e:?}").chars().take_while(|c| c.is_alphanumeric()).collect()
}

impl From<WeakError> for CliError {
    fn from(e: WeakError) -> Self {
        let message = format!("{}: {e}", variant_name(&e));
        match e {
            WeakError::CalibrationFailed { .. }
            | WeakError::UndefinedWeakValue { .. }
            | WeakError::DegenerateInput
            | WeakError::RowSumMismatch { .. } => CliError::Numerical(message),
            _ => CliError::Usage(message),
        }
    }
}

impl From<HilbertError> for CliError {
    fn from(e: HilbertError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<DiracError> for CliError {
    fn from(e: DiracError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Weak(w) => w.into(),
            ExperimentError::RankDeficient { .. } => CliError::Numerical(format!("{}: {e}", variant_name(&e))),
            other => CliError::Usage(other.to_string()),
        }
    }
}

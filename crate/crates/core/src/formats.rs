//! On-disk formats. State and Dirac files are JSON documents whose complex
//! entries are `[re, im]` pairs in row-major order; every schema carries a
//! `format_version`.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dirac::{DiracDistribution, DiracError, Ordering};
use crate::hilbert::{validate_density, CMatrix, CVector, DensityOperator, HilbertError, PureState};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid state: {0}")]
    State(#[from] HilbertError),
    #[error("invalid distribution: {0}")]
    Dirac(#[from] DiracError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl From<serde_json::Error> for FormatError {
    fn from(e: serde_json::Error) -> Self {
        FormatError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Density,
    Pure,
}

/// Raw state file. `matrix` holds `dim²` entries for a density operator
/// and `dim` amplitudes for a pure state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    pub format_version: u32,
    pub kind: StateKind,
    pub dim: usize,
    pub matrix: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateData {
    Density(DensityOperator),
    Pure(PureState),
}

impl StateData {
    pub fn to_density(&self) -> DensityOperator {
        match self {
            StateData::Density(rho) => rho.clone(),
            StateData::Pure(psi) => psi.to_density(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiracFile {
    pub format_version: u32,
    pub dim: usize,
    pub ordering: String,
    pub values: Vec<[f64; 2]>,
}

fn pairs(values: impl IntoIterator<Item = Complex64>) -> Vec<[f64; 2]> {
    values.into_iter().map(|z| [z.re, z.im]).collect()
}

fn row_major(m: &CMatrix) -> Vec<[f64; 2]> {
    let (r, c) = m.shape();
    pairs((0..r).flat_map(|i| (0..c).map(move |j| m[(i, j)])))
}

fn from_row_major(dim: usize, values: &[[f64; 2]]) -> CMatrix {
    CMatrix::from_fn(dim, dim, |i, j| {
        let [re, im] = values[i * dim + j];
        Complex64::new(re, im)
    })
}

fn check_version(v: u32) -> Result<(), FormatError> {
    if v != FORMAT_VERSION {
        return Err(FormatError::Schema(format!(
            "unsupported format_version {v} (expected {FORMAT_VERSION})"
        )));
    }
    Ok(())
}

fn check_finite(values: &[[f64; 2]]) -> Result<(), FormatError> {
    if values.iter().flatten().any(|x| !x.is_finite()) {
        return Err(FormatError::Schema("non-finite entry".into()));
    }
    Ok(())
}

impl StateFile {
    pub fn from_density(rho: &DensityOperator) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind: StateKind::Density,
            dim: rho.dim(),
            matrix: row_major(rho.matrix()),
        }
    }

    /// Density-kind file holding an arbitrary matrix, such as a noisy
    /// reconstruction that need not pass validation.
    pub fn from_matrix(m: &CMatrix) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind: StateKind::Density,
            dim: m.nrows(),
            matrix: row_major(m),
        }
    }

    pub fn from_pure(psi: &PureState) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind: StateKind::Pure,
            dim: psi.dim(),
            matrix: pairs(psi.amplitudes().iter().copied()),
        }
    }

    /// Checks shape and the type invariants of the declared kind.
    pub fn validate(&self) -> Result<StateData, FormatError> {
        check_version(self.format_version)?;
        if self.dim == 0 {
            return Err(HilbertError::InvalidDimension(0).into());
        }
        check_finite(&self.matrix)?;
        let expected = match self.kind {
            StateKind::Density => self.dim * self.dim,
            StateKind::Pure => self.dim,
        };
        if self.matrix.len() != expected {
            return Err(FormatError::Schema(format!(
                "matrix has {} entries, expected {expected} for dim {}",
                self.matrix.len(),
                self.dim
            )));
        }
        Ok(match self.kind {
            StateKind::Density => {
                StateData::Density(validate_density(from_row_major(self.dim, &self.matrix))?)
            }
            StateKind::Pure => {
                let v = CVector::from_iterator(
                    self.dim,
                    self.matrix.iter().map(|[re, im]| Complex64::new(*re, *im)),
                );
                StateData::Pure(PureState::new(v)?)
            }
        })
    }
}

impl DiracFile {
    pub fn from_distribution(s: &DiracDistribution) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            dim: s.dim(),
            ordering: s.ordering().as_str().to_string(),
            values: row_major(s.values()),
        }
    }

    fn shape_checked(&self) -> Result<DiracDistribution, FormatError> {
        check_version(self.format_version)?;
        if self.dim == 0 {
            return Err(FormatError::Schema("dim must be at least 1".into()));
        }
        check_finite(&self.values)?;
        if self.values.len() != self.dim * self.dim {
            return Err(FormatError::Schema(format!(
                "values has {} entries, expected {}",
                self.values.len(),
                self.dim * self.dim
            )));
        }
        let ordering = Ordering::parse(&self.ordering)
            .ok_or_else(|| FormatError::Schema(format!("unknown ordering {:?}", self.ordering)))?;
        Ok(DiracDistribution::unchecked(
            from_row_major(self.dim, &self.values),
            ordering,
        )?)
    }

    /// Shape-checked distribution that must satisfy all invariants.
    pub fn validate(&self) -> Result<DiracDistribution, FormatError> {
        let s = self.shape_checked()?;
        s.check_invariants(crate::dirac::DIRAC_TOLERANCE)?;
        Ok(s)
    }

    /// Shape-checked distribution with the invariants left unchecked, for
    /// estimates.
    pub fn validate_relaxed(&self) -> Result<DiracDistribution, FormatError> {
        self.shape_checked()
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn parse_state(text: &str) -> Result<StateData, FormatError> {
    let file: StateFile = serde_json::from_str(text)?;
    file.validate()
}

pub fn parse_dirac(text: &str) -> Result<DiracDistribution, FormatError> {
    let file: DiracFile = serde_json::from_str(text)?;
    file.validate()
}

pub fn parse_dirac_relaxed(text: &str) -> Result<DiracDistribution, FormatError> {
    let file: DiracFile = serde_json::from_str(text)?;
    file.validate_relaxed()
}

pub fn read_text(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), FormatError> {
    std::fs::write(path, text).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_state(path: &Path) -> Result<StateData, FormatError> {
    parse_state(&read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirac::dirac_from_density;
    use crate::hilbert::{random_density, random_pure_state};

    #[test]
    fn density_round_trip_is_lossless() {
        let rho = random_density(4, 2, 7).unwrap();
        let text = to_json(&StateFile::from_density(&rho));
        match parse_state(&text).unwrap() {
            StateData::Density(back) => assert_eq!(back, rho),
            other => panic!("wrong kind {other:?}"),
        }
    }

    #[test]
    fn pure_round_trip() {
        let psi = random_pure_state(3, 1).unwrap();
        let text = to_json(&StateFile::from_pure(&psi));
        assert_eq!(parse_state(&text).unwrap(), StateData::Pure(psi));
    }

    #[test]
    fn dirac_round_trip() {
        let s = dirac_from_density(&random_density(3, 3, 2).unwrap());
        let text = to_json(&DiracFile::from_distribution(&s));
        assert_eq!(parse_dirac(&text).unwrap(), s);
    }

    #[test]
    fn rejects_invalid_states() {
        let bad_trace = r#"{"format_version":1,"kind":"density","dim":2,
            "matrix":[[1,0],[0,0],[0,0],[0.1,0]]}"#;
        assert!(matches!(
            parse_state(bad_trace),
            Err(FormatError::State(HilbertError::TraceNotUnity { .. }))
        ));
        let not_psd = r#"{"format_version":1,"kind":"density","dim":2,
            "matrix":[[0.5,0],[0.6,0],[0.6,0],[0.5,0]]}"#;
        assert!(matches!(
            parse_state(not_psd),
            Err(FormatError::State(HilbertError::NegativeEigenvalue { .. }))
        ));
        let short = r#"{"format_version":1,"kind":"density","dim":2,"matrix":[[1,0]]}"#;
        assert!(matches!(parse_state(short), Err(FormatError::Schema(_))));
        let unnormalized = r#"{"format_version":1,"kind":"pure","dim":2,"matrix":[[1,0],[1,0]]}"#;
        assert!(matches!(
            parse_state(unnormalized),
            Err(FormatError::State(HilbertError::NotNormalized { .. }))
        ));
        let version = r#"{"format_version":9,"kind":"pure","dim":1,"matrix":[[1,0]]}"#;
        assert!(matches!(parse_state(version), Err(FormatError::Schema(_))));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "{\n  \"format_version\": 1,\n  \"kind\": \"density\",\n  oops\n}";
        match parse_state(text) {
            Err(FormatError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn relaxed_dirac_parse_accepts_unnormalized() {
        let text = r#"{"format_version":1,"dim":1,"ordering":"A_then_B","values":[[0.9,0]]}"#;
        assert!(parse_dirac(text).is_err());
        assert!(parse_dirac_relaxed(text).is_ok());
        let bad = r#"{"format_version":1,"dim":1,"ordering":"sideways","values":[[1,0]]}"#;
        assert!(matches!(parse_dirac_relaxed(bad), Err(FormatError::Schema(_))));
    }
}

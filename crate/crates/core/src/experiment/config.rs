//! Plain-text experiment configuration: one `key = value` per line, `#`
//! starts a comment.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::formats::FORMAT_VERSION;
use crate::pointer::PointerParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("missing config key `{0}`")]
    MissingKey(String),
    #[error("unknown config key `{key}` on line {line}")]
    UnknownKey { key: String, line: usize },
    #[error("duplicate config key `{key}` on line {line}")]
    DuplicateKey { key: String, line: usize },
    #[error("line {line} is not `key = value`: {text:?}")]
    Malformed { line: usize, text: String },
    #[error("invalid value {value:?} for `{key}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Weak `π_a` followed by a strong Fourier-basis measurement.
    ScanPostselect,
    /// Two pointers, `π_a` then `|b⟩⟨b|`, no post-selection.
    JointWeak,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::ScanPostselect => "scan",
            Protocol::JointWeak => "joint-weak",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "scan" => Some(Protocol::ScanPostselect),
            "joint-weak" => Some(Protocol::JointWeak),
            _ => None,
        }
    }

    /// Number of weakly measured operators per trial.
    pub fn weak_operators(self) -> usize {
        match self {
            Protocol::ScanPostselect => 1,
            Protocol::JointWeak => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateSpec {
    Random { rank: usize, seed: u64 },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub state: StateSpec,
    pub protocol: Protocol,
    pub g: f64,
    /// Second-pointer coupling for the joint protocol; defaults to `g`.
    pub g2: Option<f64>,
    pub pointer: PointerParams,
    pub trials: usize,
    pub seed: u64,
    /// Fraction of trials read out in position.
    pub readout_split: f64,
    /// Project noisy reconstructions onto the PSD cone.
    pub clip_psd: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            state: StateSpec::Random { rank: 1, seed: 0 },
            protocol: Protocol::ScanPostselect,
            g: 0.01,
            g2: None,
            pointer: PointerParams::default(),
            trials: 100_000,
            seed: 0,
            readout_split: 0.5,
            clip_psd: false,
        }
    }
}

const KEYS: &[&str] = &[
    "format_version",
    "dim",
    "state",
    "rank",
    "state_seed",
    "state_file",
    "protocol",
    "g",
    "g2",
    "pointer_points",
    "pointer_extent",
    "pointer_sigma",
    "trials",
    "seed",
    "readout_split",
    "clip_psd",
];

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

struct Entries(BTreeMap<String, String>);

impl Entries {
    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn required(&self, key: &str) -> Result<&str, ConfigError> {
        self.raw(key)
            .ok_or_else(|| ConfigError::MissingKey(key.to_string()))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, value: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        value.parse::<T>().map_err(|e| invalid(key, value, e.to_string()))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key).map(|v| self.parse(key, v)).transpose()
    }

    fn need<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.required(key)?;
        self.parse(key, v)
    }
}

impl ExperimentConfig {
    /// Parses a config. Required keys: `dim`, `state`, `g`, `trials`; with
    /// `state = random` also `rank`, with `state = file` also `state_file`.
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Malformed {
                line,
                text: raw.to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                    line,
                });
            }
            if map.insert(key.to_string(), value.to_string()).is_some() {
                return Err(ConfigError::DuplicateKey {
                    key: key.to_string(),
                    line,
                });
            }
        }
        let e = Entries(map);

        if let Some(v) = e.get::<u32>("format_version")? {
            if v != FORMAT_VERSION {
                return Err(invalid("format_version", &v.to_string(), "unsupported version"));
            }
        }
        let dim: usize = e.need("dim")?;
        let seed: u64 = e.get("seed")?.unwrap_or(0);
        let state = match e.required("state")? {
            "random" => StateSpec::Random {
                rank: e.need("rank")?,
                seed: e.get("state_seed")?.unwrap_or(seed),
            },
            "file" => StateSpec::File(PathBuf::from(e.required("state_file")?)),
            other => return Err(invalid("state", other, "expected `random` or `file`")),
        };
        let protocol = match e.raw("protocol") {
            None => Protocol::ScanPostselect,
            Some(p) => Protocol::parse(p)
                .ok_or_else(|| invalid("protocol", p, "expected `scan` or `joint-weak`"))?,
        };
        let defaults = PointerParams::default();
        let sigma: f64 = e.get("pointer_sigma")?.unwrap_or(defaults.sigma);
        let pointer = PointerParams {
            points: e.get("pointer_points")?.unwrap_or(defaults.points),
            extent: e.get("pointer_extent")?.unwrap_or(defaults.extent / defaults.sigma * sigma),
            sigma,
        };
        let config = Self {
            dim,
            state,
            protocol,
            g: e.need("g")?,
            g2: e.get("g2")?,
            pointer,
            trials: e.need("trials")?,
            seed,
            readout_split: e.get("readout_split")?.unwrap_or(0.5),
            clip_psd: e.get("clip_psd")?.unwrap_or(false),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dim == 0 {
            return Err(invalid("dim", "0", "invalid dimension"));
        }
        if let StateSpec::Random { rank, .. } = self.state {
            if rank == 0 || rank > self.dim {
                return Err(invalid("rank", &rank.to_string(), "must lie in 1..=dim"));
            }
        }
        for (key, v) in [("g", Some(self.g)), ("g2", self.g2)] {
            if let Some(v) = v {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(invalid(key, &v.to_string(), "must be positive"));
                }
            }
        }
        if self.trials == 0 {
            return Err(invalid("trials", "0", "must be at least 1"));
        }
        if !(self.readout_split > 0.0 && self.readout_split < 1.0) {
            return Err(invalid(
                "readout_split",
                &self.readout_split.to_string(),
                "must lie strictly between 0 and 1",
            ));
        }
        self.pointer
            .validate()
            .map_err(|e| invalid("pointer", &format!("{:?}", self.pointer), e.to_string()))?;
        Ok(())
    }

    pub fn g2(&self) -> f64 {
        self.g2.unwrap_or(self.g)
    }

    /// Canonical text form with every key resolved.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format_version = {FORMAT_VERSION}");
        let _ = writeln!(s, "dim = {}", self.dim);
        match &self.state {
            StateSpec::Random { rank, seed } => {
                let _ = writeln!(s, "state = random");
                let _ = writeln!(s, "rank = {rank}");
                let _ = writeln!(s, "state_seed = {seed}");
            }
            StateSpec::File(path) => {
                let _ = writeln!(s, "state = file");
                let _ = writeln!(s, "state_file = {}", path.display());
            }
        }
        let _ = writeln!(s, "protocol = {}", self.protocol.as_str());
        let _ = writeln!(s, "g = {:?}", self.g);
        let _ = writeln!(s, "g2 = {:?}", self.g2());
        let _ = writeln!(s, "pointer_points = {}", self.pointer.points);
        let _ = writeln!(s, "pointer_extent = {:?}", self.pointer.extent);
        let _ = writeln!(s, "pointer_sigma = {:?}", self.pointer.sigma);
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "readout_split = {:?}", self.readout_split);
        let _ = writeln!(s, "clip_psd = {}", self.clip_psd);
        s
    }

    /// Resolves a relative state file against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let StateSpec::File(p) = &mut self.state {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "dim = 2\nstate = random\nrank = 1\ng = 0.01\ntrials = 1000\n";

    #[test]
    fn parses_minimal_config_with_defaults() {
        let c = ExperimentConfig::from_text(MINIMAL).unwrap();
        assert_eq!(c.dim, 2);
        assert_eq!(c.protocol, Protocol::ScanPostselect);
        assert_eq!(c.pointer, PointerParams::default());
        assert_eq!(c.readout_split, 0.5);
        assert_eq!(c.g2(), 0.01);
        assert_eq!(c.state, StateSpec::Random { rank: 1, seed: 0 });
    }

    #[test]
    fn text_form_round_trips() {
        let text = "# comment\ndim = 3\nstate = random  # inline\nrank = 2\nstate_seed = 9\n\
                    protocol = joint-weak\ng = 0.02\ng2 = 0.03\ntrials = 50\nseed = 4\n\
                    readout_split = 0.25\nclip_psd = true\npointer_sigma = 2\n";
        let c = ExperimentConfig::from_text(text).unwrap();
        assert_eq!(c.pointer.extent, 24.0);
        let again = ExperimentConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(c.to_text(), again.to_text());
        assert_eq!(again.g2, Some(0.03));
    }

    #[test]
    fn missing_key_is_named() {
        let text = "dim = 2\nstate = random\nrank = 1\ntrials = 10\n";
        assert_eq!(
            ExperimentConfig::from_text(text),
            Err(ConfigError::MissingKey("g".into()))
        );
        let text = "dim = 2\nstate = file\ng = 0.01\ntrials = 10\n";
        assert_eq!(
            ExperimentConfig::from_text(text),
            Err(ConfigError::MissingKey("state_file".into()))
        );
    }

    #[test]
    fn rejects_bad_values() {
        let with = |extra: &str| ExperimentConfig::from_text(&format!("{MINIMAL}{extra}"));
        assert!(matches!(with("readout_split = 1\n"), Err(ConfigError::InvalidValue { .. })));
        assert!(matches!(with("colour = red\n"), Err(ConfigError::UnknownKey { line: 6, .. })));
        assert!(matches!(with("g = 0.2\n"), Err(ConfigError::DuplicateKey { .. })));
        assert!(matches!(with("protocol = magic\n"), Err(ConfigError::InvalidValue { .. })));
        assert!(matches!(with("just words\n"), Err(ConfigError::Malformed { .. })));
        assert!(matches!(with("pointer_extent = 3\n"), Err(ConfigError::InvalidValue { .. })));
        let zero_trials = MINIMAL.replace("trials = 1000", "trials = 0");
        assert!(ExperimentConfig::from_text(&zero_trials).is_err());
    }
}

//! Standard-error and signal-to-noise scaling along trial and coupling
//! ladders, for one weak coupling (scan) against two (joint).

use super::{derive_seed, estimate_dirac, load_state, Experiment, ExperimentConfig, ExperimentError, Protocol, Result};
use crate::hilbert::DensityOperator;

/// A row needs at least this many trials behind the reference cell's real part.
const MIN_REFERENCE_TRIALS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SnrRow {
    pub protocol: Protocol,
    pub n_weak_ops: usize,
    pub g: f64,
    pub trials: usize,
    /// Mean of `|estimate − analytic|` over cells.
    pub mean_abs_error: f64,
    /// Mean of `(se_re + se_im)/2` over cells.
    pub mean_se: f64,
    /// Single-trial signal-to-noise of the reference cell's real part.
    pub snr: f64,
    pub underpowered: bool,
}

/// Log-log slope of mean SE against trials for one protocol and coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrFit {
    pub protocol: Protocol,
    pub g: f64,
    /// `None` when fewer than three trial counts are available.
    pub slope: Option<f64>,
}

/// `ln SNR₂ / ln SNR₁` at matched coupling and trial count.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrExponent {
    pub g: f64,
    pub trials: usize,
    pub snr1: f64,
    pub snr2: f64,
    /// `None` unless both SNRs lie strictly between 0 and 1.
    pub exponent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnrReport {
    /// Cell `(a, b)` with the largest `|Re S|`, used for the SNR.
    pub reference_cell: (usize, usize),
    pub rows: Vec<SnrRow>,
    pub fits: Vec<SnrFit>,
    pub exponents: Vec<SnrExponent>,
}

impl SnrReport {
    /// Mean exponent over rows where it is defined and neither side is
    /// underpowered.
    pub fn mean_exponent(&self) -> Option<f64> {
        let usable: Vec<f64> = self
            .exponents
            .iter()
            .filter(|e| {
                !self
                    .rows
                    .iter()
                    .any(|r| r.g == e.g && r.trials == e.trials && r.underpowered)
            })
            .filter_map(|e| e.exponent)
            .collect();
        (!usable.is_empty()).then(|| usable.iter().sum::<f64>() / usable.len() as f64)
    }
}

/// Least-squares slope of `y` on `x`.
pub(crate) fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Runs both protocols over every `(g, trials)` pair of the ladders on the
/// config's state. The per-trial SNR of a cell is `|Re S| / (se_re·√n)`,
/// with `n` the position trials behind that cell.
pub fn snr_study(config: &ExperimentConfig, trial_ladder: &[usize], g_ladder: &[f64]) -> Result<SnrReport> {
    snr_study_with_state(config, &load_state(config)?, trial_ladder, g_ladder)
}

/// As [`snr_study`] on an explicit state.
pub fn snr_study_with_state(
    config: &ExperimentConfig,
    rho: &DensityOperator,
    trial_ladder: &[usize],
    g_ladder: &[f64],
) -> Result<SnrReport> {
    if trial_ladder.is_empty() || g_ladder.is_empty() {
        return Err(ExperimentError::EmptyLadder);
    }
    let protocols = [Protocol::ScanPostselect, Protocol::JointWeak];
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    let mut reference_cell = (0, 0);
    for (pi, &protocol) in protocols.iter().enumerate() {
        for (gi, &g) in g_ladder.iter().enumerate() {
            let run_config = ExperimentConfig {
                protocol,
                g,
                g2: Some(g),
                trials: trial_ladder[0],
                ..config.clone()
            };
            let base = Experiment::with_state(run_config, rho.clone())?;
            reference_cell = reference(&base);
            let (ra, rb) = reference_cell;
            let signal = base.truth().get(ra, rb).re.abs();
            let mut points = Vec::new();
            for (ti, &trials) in trial_ladder.iter().enumerate() {
                let tag = ((pi * g_ladder.len() + gi) * trial_ladder.len() + ti) as u64;
                let run = base.rerun(trials, derive_seed(config.seed, tag));
                let report = estimate_dirac(&run.sample_trials(), &run)?;
                let cells = (run.dim() * run.dim()) as f64;
                let mean_se = report.se_re.zip_map(&report.se_im, |r, i| 0.5 * (r + i)).sum() / cells;
                let n_ref = report.counts_re[(ra, rb)];
                let snr = signal / (report.se_re[(ra, rb)] * (n_ref as f64).sqrt());
                let row = SnrRow {
                    protocol,
                    n_weak_ops: protocol.weak_operators(),
                    g,
                    trials,
                    mean_abs_error: report.mean_abs_error(run.truth()),
                    mean_se,
                    snr,
                    underpowered: !report.flagged.is_empty()
                        || n_ref < MIN_REFERENCE_TRIALS
                        || !snr.is_finite(),
                };
                if mean_se.is_finite() && mean_se > 0.0 {
                    points.push(((trials as f64).ln(), mean_se.ln()));
                }
                rows.push(row);
            }
            let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
            distinct.dedup();
            fits.push(SnrFit {
                protocol,
                g,
                slope: (distinct.len() >= 3).then(|| slope(&points)),
            });
        }
    }
    let exponents = rows
        .iter()
        .filter(|r| r.protocol == Protocol::ScanPostselect)
        .filter_map(|one| {
            rows.iter()
                .find(|r| r.protocol == Protocol::JointWeak && r.g == one.g && r.trials == one.trials)
                .map(|two| SnrExponent {
                    g: one.g,
                    trials: one.trials,
                    snr1: one.snr,
                    snr2: two.snr,
                    exponent: (one.snr > 0.0 && one.snr < 1.0 && two.snr > 0.0 && two.snr < 1.0)
                        .then(|| two.snr.ln() / one.snr.ln()),
                })
        })
        .collect();
    Ok(SnrReport {
        reference_cell,
        rows,
        fits,
        exponents,
    })
}

fn reference(exp: &Experiment) -> (usize, usize) {
    let n = exp.dim();
    let mut best = (0, 0);
    for a in 0..n {
        for b in 0..n {
            if exp.truth().get(a, b).re.abs() > exp.truth().get(best.0, best.1).re.abs() {
                best = (a, b);
            }
        }
    }
    best
}

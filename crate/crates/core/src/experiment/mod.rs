//! Monte Carlo shot-noise emulation of the scan and joint-weak protocols.
//!
//! Every trial draws from the exact post-measurement distribution computed
//! by [`crate::weak`]. Trial `t` uses its own ChaCha stream derived from
//! `(seed, t)`, so record lists do not depend on thread scheduling.

mod config;
mod snr;
mod tomography;

pub use config::{ConfigError, ExperimentConfig, Protocol, StateSpec};
pub use snr::{snr_study, snr_study_with_state, SnrExponent, SnrFit, SnrReport, SnrRow};
pub use tomography::{baseline_tomography, TomographyReport};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dirac::{dirac_from_density, invert_dirac, DiracDistribution, DiracError, Ordering};
use crate::formats::{read_state, FormatError};
use crate::hilbert::{
    hermitian_eigen, random_density, trace_distance_matrices, CMatrix, DensityOperator, HilbertError,
    Observable, PureState,
};
use crate::pointer::{PointerState, Quadrature};
use crate::weak::{
    calibrate_pointer_response, evolve_pointer, evolve_two_pointers, Calibration, JointEstimator, WeakError,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Weak(#[from] WeakError),
    #[error(transparent)]
    Dirac(#[from] DiracError),
    #[error("state has dimension {found}, config expects {expected}")]
    StateDimension { expected: usize, found: usize },
    #[error("no trial records")]
    EmptyRecords,
    #[error("record {trial_id} does not fit the experiment: {reason}")]
    RecordMismatch { trial_id: u64, reason: String },
    #[error("ladder must not be empty")]
    EmptyLadder,
    #[error("measurement design has rank {rank}, {needed} needed")]
    RankDeficient { rank: usize, needed: usize },
    #[error("{trials} trials cannot cover {needed} unknowns")]
    TooFewTrials { trials: u64, needed: u64 },
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// One simulated shot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRecord {
    pub trial_id: u64,
    /// Index `a` of the weakly coupled projector `|a⟩⟨a|`.
    pub scan_a: usize,
    /// Fourier index of the second weak coupling (joint protocol only).
    pub scan_b: Option<usize>,
    /// Quadrature read on the first pointer.
    pub quadrature: Quadrature,
    pub pointer_value: f64,
    /// Strong Fourier-basis outcome (scan protocol only).
    pub system_outcome_b: Option<usize>,
    /// Second-pointer position (joint protocol only).
    pub second_pointer_value: Option<f64>,
}

/// Inverse-CDF sampler over a finite set of non-negative masses.
#[derive(Debug, Clone)]
struct Categorical {
    cdf: Vec<f64>,
}

impl Categorical {
    fn new(masses: impl IntoIterator<Item = f64>) -> Self {
        let mut acc = 0.0;
        let cdf = masses
            .into_iter()
            .map(|m| {
                acc += m.max(0.0);
                acc
            })
            .collect();
        Self { cdf }
    }

    fn total(&self) -> f64 {
        self.cdf.last().copied().unwrap_or(0.0)
    }

    fn sample(&self, u: f64) -> usize {
        let t = u * self.total();
        self.cdf.partition_point(|&c| c <= t).min(self.cdf.len() - 1)
    }
}

/// Scan protocol, one weak coupling `|a⟩⟨a|`, one quadrature: joint
/// distribution of (strong outcome `b`, pointer grid index).
#[derive(Debug, Clone)]
struct ScanTable {
    joint: Categorical,
    /// `Σ_j d_j·P(d_j, b)` for each `b`.
    moments: Vec<f64>,
}

/// Joint protocol, one cell, one first-pointer quadrature.
#[derive(Debug, Clone)]
struct JointTable {
    first: Categorical,
    /// Second-pointer branch weights given the first-pointer index.
    branch: Vec<Categorical>,
    /// `⟨D1 x2⟩`
    correlator: f64,
}

#[derive(Debug, Clone)]
enum Plan {
    Scan {
        calibration: Calibration,
        /// `tables[a][quadrature]`
        tables: Vec<[ScanTable; 2]>,
    },
    Joint {
        estimator: JointEstimator,
        /// `tables[a·N + b][quadrature]`
        tables: Vec<[JointTable; 2]>,
        /// Position samplers of the displaced second-pointer branches.
        second: Vec<Categorical>,
    },
}

fn quadrature_index(q: Quadrature) -> usize {
    match q {
        Quadrature::Position => 0,
        Quadrature::Momentum => 1,
    }
}

/// Resolved config plus the precomputed sampling tables.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    rho: DensityOperator,
    truth: DiracDistribution,
    pointer: PointerState,
    coords: [Vec<f64>; 2],
    plan: Plan,
}

/// Loads the state named by `config`.
pub fn load_state(config: &ExperimentConfig) -> Result<DensityOperator> {
    let rho = match &config.state {
        StateSpec::Random { rank, seed } => random_density(config.dim, *rank, *seed)?,
        StateSpec::File(path) => read_state(path)?.to_density(),
    };
    if rho.dim() != config.dim {
        return Err(ExperimentError::StateDimension {
            expected: config.dim,
            found: rho.dim(),
        });
    }
    Ok(rho)
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let rho = load_state(&config)?;
        Self::with_state(config, rho)
    }

    /// Uses `rho` instead of the config's state spec.
    pub fn with_state(config: ExperimentConfig, rho: DensityOperator) -> Result<Self> {
        config.validate()?;
        if rho.dim() != config.dim {
            return Err(ExperimentError::StateDimension {
                expected: config.dim,
                found: rho.dim(),
            });
        }
        let pointer = PointerState::gaussian(config.pointer).map_err(WeakError::from)?;
        let coords = Quadrature::BOTH.map(|q| pointer.coordinates(q));
        let plan = match config.protocol {
            Protocol::ScanPostselect => scan_plan(&rho, &pointer, &coords, config.g)?,
            Protocol::JointWeak => joint_plan(&rho, &pointer, &coords, config.g, config.g2())?,
        };
        Ok(Self {
            truth: dirac_from_density(&rho),
            config,
            rho,
            pointer,
            coords,
            plan,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn state(&self) -> &DensityOperator {
        &self.rho
    }

    pub fn truth(&self) -> &DiracDistribution {
        &self.truth
    }

    pub fn pointer(&self) -> &PointerState {
        &self.pointer
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    /// Number of estimator groups trials are dealt to in turn.
    fn cells(&self) -> usize {
        match self.plan {
            Plan::Scan { .. } => self.dim(),
            Plan::Joint { .. } => self.dim() * self.dim(),
        }
    }

    /// Per-trial divisor turning a pointer product into a Dirac component.
    fn scale(&self, q: Quadrature) -> f64 {
        match &self.plan {
            Plan::Scan { calibration, .. } => self.config.g * calibration.k(q),
            Plan::Joint { estimator, .. } => estimator.scale(q),
        }
    }

    /// The estimator's infinite-trial limit.
    pub fn exact_estimate(&self) -> DiracDistribution {
        let n = self.dim();
        let (re, im) = (self.scale(Quadrature::Position), self.scale(Quadrature::Momentum));
        let values = match &self.plan {
            Plan::Scan { tables, .. } => CMatrix::from_fn(n, n, |a, b| {
                Complex64::new(tables[a][0].moments[b] / re, tables[a][1].moments[b] / im)
            }),
            Plan::Joint { tables, .. } => CMatrix::from_fn(n, n, |a, b| {
                let t = &tables[a * n + b];
                Complex64::new(t[0].correlator / re, t[1].correlator / im)
            }),
        };
        DiracDistribution::unchecked(values, Ordering::AThenB).expect("square by construction")
    }

    /// Same tables, different trial budget and seed.
    pub fn rerun(&self, trials: usize, seed: u64) -> Experiment {
        let mut next = self.clone();
        next.config.trials = trials;
        next.config.seed = seed;
        next
    }

    pub fn sample_trials(&self) -> Vec<TrialRecord> {
        (0..self.config.trials as u64)
            .into_par_iter()
            .map(|id| self.sample_trial(id))
            .collect()
    }

    pub fn sample_trial(&self, trial_id: u64) -> TrialRecord {
        let mut rng = trial_rng(self.config.seed, trial_id);
        let n = self.dim();
        let cell = (trial_id % self.cells() as u64) as usize;
        let quadrature = if rng.random::<f64>() < self.config.readout_split {
            Quadrature::Position
        } else {
            Quadrature::Momentum
        };
        let qi = quadrature_index(quadrature);
        let m = self.pointer.grid_points();
        match &self.plan {
            Plan::Scan { tables, .. } => {
                let flat = tables[cell][qi].joint.sample(rng.random());
                TrialRecord {
                    trial_id,
                    scan_a: cell,
                    scan_b: None,
                    quadrature,
                    pointer_value: self.coords[qi][flat % m],
                    system_outcome_b: Some(flat / m),
                    second_pointer_value: None,
                }
            }
            Plan::Joint { tables, second, .. } => {
                let table = &tables[cell][qi];
                let j1 = table.first.sample(rng.random());
                let l = table.branch[j1].sample(rng.random());
                let j2 = second[l].sample(rng.random());
                TrialRecord {
                    trial_id,
                    scan_a: cell / n,
                    scan_b: Some(cell % n),
                    quadrature,
                    pointer_value: self.coords[qi][j1],
                    system_outcome_b: None,
                    second_pointer_value: Some(self.coords[0][j2]),
                }
            }
        }
    }
}

fn trial_rng(seed: u64, trial_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_id);
    rng
}

/// Derives an independent seed for sub-run `tag` of a study.
pub(crate) fn derive_seed(seed: u64, tag: u64) -> u64 {
    trial_rng(seed, tag).random()
}

fn scan_plan(
    rho: &DensityOperator,
    pointer: &PointerState,
    coords: &[Vec<f64>; 2],
    g: f64,
) -> Result<Plan> {
    let n = rho.dim();
    let calibration = calibrate_pointer_response(pointer, g)?;
    let posts = (0..n).map(|b| PureState::fourier(n, b)).collect::<std::result::Result<Vec<_>, _>>()?;
    let tables = (0..n)
        .into_par_iter()
        .map(|a| -> Result<[ScanTable; 2]> {
            let joint = evolve_pointer(rho, &Observable::standard_projector(n, a)?, pointer, g)?;
            let weights = posts
                .iter()
                .map(|c| joint.branch_weights(Some(c)))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let table = |q: Quadrature| {
                let per_b: Vec<Vec<f64>> = weights.iter().map(|w| joint.pointer_masses(w, q)).collect();
                let d = &coords[quadrature_index(q)];
                ScanTable {
                    moments: per_b
                        .iter()
                        .map(|masses| masses.iter().zip(d).map(|(p, x)| p * x).sum())
                        .collect(),
                    joint: Categorical::new(per_b.into_iter().flatten()),
                }
            };
            Ok([table(Quadrature::Position), table(Quadrature::Momentum)])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Plan::Scan { calibration, tables })
}

fn joint_plan(
    rho: &DensityOperator,
    pointer: &PointerState,
    coords: &[Vec<f64>; 2],
    g1: f64,
    g2: f64,
) -> Result<Plan> {
    let n = rho.dim();
    let estimator = JointEstimator::calibrated(g1, g2, [pointer, pointer])?;
    let built = (0..n * n)
        .into_par_iter()
        .map(|cell| -> Result<([JointTable; 2], Vec<PointerState>)> {
            let (a, b) = (cell / n, cell % n);
            let state = evolve_two_pointers(
                rho,
                &Observable::standard_projector(n, a)?,
                &Observable::fourier_projector(n, b)?,
                g1,
                g2,
                [pointer, pointer],
            )?;
            let second: Vec<PointerState> = state.second_branches().iter().map(|s| s.pointer.clone()).collect();
            let means: Vec<f64> = second.iter().map(|p| p.mean(Quadrature::Position)).collect();
            let table = |q: Quadrature| {
                let (marginal, per_branch) = state.first_marginal_and_branch_weights(q);
                let d = &coords[quadrature_index(q)];
                let correlator = per_branch
                    .iter()
                    .zip(d)
                    .map(|(row, x)| x * row.iter().zip(&means).map(|(w, m)| w * m).sum::<f64>())
                    .sum();
                JointTable {
                    first: Categorical::new(marginal),
                    branch: per_branch.into_iter().map(Categorical::new).collect(),
                    correlator,
                }
            };
            Ok(([table(Quadrature::Position), table(Quadrature::Momentum)], second))
        })
        .collect::<Result<Vec<_>>>()?;
    // every Fourier projector has eigenvalues {0, 1} (just {1} when N = 1), so
    // the displaced second pointers are shared by all cells
    let second = built[0]
        .1
        .iter()
        .map(|p| {
            let masses = p.amplitudes().iter().map(|z| z.norm_sqr());
            Categorical::new(masses)
        })
        .collect();
    let tables = built.into_iter().map(|(t, _)| t).collect();
    Ok(Plan::Joint {
        estimator,
        tables,
        second,
    })
}

/// Monte Carlo estimate of the Dirac distribution with per-cell errors.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub protocol: Protocol,
    /// Invariants are not enforced on the estimate.
    pub estimate: DiracDistribution,
    pub se_re: DMatrix<f64>,
    pub se_im: DMatrix<f64>,
    /// Position-readout trials behind each cell's real part.
    pub counts_re: DMatrix<usize>,
    /// Momentum-readout trials behind each cell's imaginary part.
    pub counts_im: DMatrix<usize>,
    /// Cells whose value or error could not be formed from the data.
    pub flagged: Vec<(usize, usize)>,
    pub trials_used: usize,
    /// Hermitian part of the linear inversion, PSD-clipped if configured.
    pub reconstruction: Option<CMatrix>,
    pub trace_distance_to_truth: Option<f64>,
    /// Largest entrywise deviation from the analytic distribution.
    pub max_abs_error: f64,
}

impl EstimateReport {
    /// `√(se_re² + se_im²)` per cell.
    pub fn standard_errors(&self) -> DMatrix<f64> {
        self.se_re.zip_map(&self.se_im, |r, i| r.hypot(i))
    }

    /// Mean of `|estimate − truth|` over cells.
    pub fn mean_abs_error(&self, truth: &DiracDistribution) -> f64 {
        let diff = self.estimate.values() - truth.values();
        diff.iter().map(|z| z.norm()).sum::<f64>() / diff.len() as f64
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, z: f64) {
        self.sum += z;
        self.sum_sq += z * z;
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.sum / self.n as f64
        }
    }

    /// Standard error of the mean from the sample variance.
    fn standard_error(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

/// Estimates `S(a,b)` as the sample mean of `d·1{outcome = b}/(g·k)` (scan)
/// or `d1·d2/scale` (joint), real parts from position readouts and
/// imaginary parts from momentum readouts.
pub fn estimate_dirac(records: &[TrialRecord], experiment: &Experiment) -> Result<EstimateReport> {
    if records.is_empty() {
        return Err(ExperimentError::EmptyRecords);
    }
    let n = experiment.dim();
    let protocol = experiment.config.protocol;
    // acc[(a·N + b)·2 + quadrature]
    let mut acc = vec![Moments::default(); n * n * 2];
    let scale = Quadrature::BOTH.map(|q| experiment.scale(q));
    let mismatch = |r: &TrialRecord, reason: &str| ExperimentError::RecordMismatch {
        trial_id: r.trial_id,
        reason: reason.to_string(),
    };
    for r in records {
        if r.scan_a >= n {
            return Err(mismatch(r, "scan_a out of range"));
        }
        let qi = quadrature_index(r.quadrature);
        match (protocol, r.system_outcome_b, r.scan_b, r.second_pointer_value) {
            (Protocol::ScanPostselect, Some(outcome), None, None) if outcome < n => {
                for b in 0..n {
                    let m = &mut acc[(r.scan_a * n + b) * 2 + qi];
                    m.n += 1;
                    if b == outcome {
                        m.push(r.pointer_value / scale[qi]);
                    }
                }
            }
            (Protocol::JointWeak, None, Some(b), Some(d2)) if b < n => {
                let m = &mut acc[(r.scan_a * n + b) * 2 + qi];
                m.n += 1;
                m.push(r.pointer_value * d2 / scale[qi]);
            }
            _ => return Err(mismatch(r, "fields do not match the protocol")),
        }
    }

    let mut values = CMatrix::zeros(n, n);
    let mut se_re = DMatrix::zeros(n, n);
    let mut se_im = DMatrix::zeros(n, n);
    let mut counts_re = DMatrix::zeros(n, n);
    let mut counts_im = DMatrix::zeros(n, n);
    let mut flagged = Vec::new();
    for a in 0..n {
        for b in 0..n {
            let (re, im) = (&acc[(a * n + b) * 2], &acc[(a * n + b) * 2 + 1]);
            values[(a, b)] = Complex64::new(re.mean(), im.mean());
            se_re[(a, b)] = re.standard_error();
            se_im[(a, b)] = im.standard_error();
            counts_re[(a, b)] = re.n;
            counts_im[(a, b)] = im.n;
            if re.n < 2 || im.n < 2 {
                flagged.push((a, b));
            }
        }
    }
    let estimate = DiracDistribution::unchecked(values, Ordering::AThenB)?;
    let max_abs_error = estimate.max_abs_diff(&experiment.truth);
    let complete = estimate.values().iter().all(|z| z.re.is_finite() && z.im.is_finite());
    let reconstruction = complete.then(|| {
        let raw = invert_dirac(&estimate);
        let sym = (&raw + raw.adjoint()).scale(0.5);
        if experiment.config.clip_psd {
            clip_to_psd(&sym)
        } else {
            sym
        }
    });
    let trace_distance_to_truth = reconstruction
        .as_ref()
        .map(|m| trace_distance_matrices(m, experiment.rho.matrix()));
    Ok(EstimateReport {
        protocol,
        estimate,
        se_re,
        se_im,
        counts_re,
        counts_im,
        flagged,
        trials_used: records.len(),
        reconstruction,
        trace_distance_to_truth,
        max_abs_error,
    })
}

/// Closest unit-trace PSD matrix in eigenvalue terms: negative eigenvalues
/// are zeroed and the rest rescaled.
pub fn clip_to_psd(m: &CMatrix) -> CMatrix {
    let (values, vectors) = hermitian_eigen(m);
    let clipped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let n = m.nrows();
    let mut out = CMatrix::zeros(n, n);
    if total <= 0.0 {
        return out;
    }
    for (k, v) in clipped.iter().enumerate() {
        if *v > 0.0 {
            let col = vectors.column(k);
            out += (&col * col.adjoint()).scale(v / total);
        }
    }
    out
}

/// Samples and estimates in one call.
pub fn run(experiment: &Experiment) -> Result<EstimateReport> {
    estimate_dirac(&experiment.sample_trials(), experiment)
}

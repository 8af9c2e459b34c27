//! Linear-inversion state tomography from projective measurements in seeded
//! Haar-random bases.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{trial_rng, ExperimentError, Result};
use crate::hilbert::{random_unitary, trace_distance_matrices, CMatrix, DensityOperator};

const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct TomographyReport {
    /// Least-squares estimate; Hermitian, not necessarily PSD.
    pub estimate: CMatrix,
    pub trace_distance: f64,
    pub bases_used: usize,
    /// `None` for exact probabilities.
    pub trials: Option<u64>,
}

/// Row of the design matrix for outcome `u`: coefficients of the real
/// unknowns `ρ_ii`, then `Re ρ_ij`, `Im ρ_ij` for `i < j`.
fn design_row(u: &[Complex64]) -> Vec<f64> {
    let n = u.len();
    let mut row: Vec<f64> = u.iter().map(|z| z.norm_sqr()).collect();
    for i in 0..n {
        for j in i + 1..n {
            let c = u[i].conj() * u[j];
            row.push(2.0 * c.re);
            row.push(-2.0 * c.im);
        }
    }
    row
}

fn assemble(params: &DVector<f64>, n: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = Complex64::new(params[i], 0.0);
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            let z = Complex64::new(params[k], params[k + 1]);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

/// Measures `rho` in `bases` (default `N + 1`) Haar-random orthonormal
/// bases and inverts by least squares. With `trials = None` the exact
/// outcome probabilities are used; otherwise the trials are split evenly
/// across bases and each shot is sampled.
pub fn baseline_tomography(
    rho: &DensityOperator,
    trials: Option<u64>,
    seed: u64,
    bases: Option<usize>,
) -> Result<TomographyReport> {
    let n = rho.dim();
    let unknowns = n * n;
    if let Some(t) = trials {
        if t < unknowns as u64 {
            return Err(ExperimentError::TooFewTrials {
                trials: t,
                needed: unknowns as u64,
            });
        }
    }
    let count = bases.unwrap_or(n + 1);
    let mut basis_rng = ChaCha20Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut used = 0;
    for k in 0..count {
        let u = random_unitary(n, &mut basis_rng);
        let vectors: Vec<Vec<Complex64>> = (0..n).map(|j| u.column(j).iter().copied().collect()).collect();
        let probs: Vec<f64> = (0..n)
            .map(|j| {
                let col = u.column(j);
                col.dotc(&(rho.matrix() * col)).re
            })
            .collect();
        let freqs = match trials {
            None => probs,
            Some(t) => {
                let shots = t / count as u64 + u64::from((k as u64) < t % count as u64);
                if shots == 0 {
                    continue;
                }
                let mut rng = trial_rng(seed, k as u64);
                let mut hits = vec![0u64; n];
                for _ in 0..shots {
                    let mut r: f64 = rng.random();
                    let mut outcome = n - 1;
                    for (j, p) in probs.iter().enumerate() {
                        if r < *p {
                            outcome = j;
                            break;
                        }
                        r -= p;
                    }
                    hits[outcome] += 1;
                }
                hits.iter().map(|h| *h as f64 / shots as f64).collect()
            }
        };
        used += 1;
        for (v, f) in vectors.iter().zip(freqs) {
            rows.push(design_row(v));
            rhs.push(f);
        }
    }
    let design = DMatrix::from_fn(rows.len(), unknowns, |r, c| rows[r][c]);
    let svd = design.svd(true, true);
    let max_sv = svd.singular_values.max();
    let rank = svd.rank(RANK_TOLERANCE * max_sv.max(1.0));
    if rank < unknowns {
        return Err(ExperimentError::RankDeficient {
            rank,
            needed: unknowns,
        });
    }
    let params = svd
        .solve(&DVector::from_vec(rhs), RANK_TOLERANCE * max_sv)
        .expect("U and V were computed");
    let estimate = assemble(&params, n);
    Ok(TomographyReport {
        trace_distance: trace_distance_matrices(&estimate, rho.matrix()),
        estimate,
        bases_used: used,
        trials,
    })
}

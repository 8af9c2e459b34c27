//! The discrete Dirac quasi-probability distribution
//! `S(a,b) = ⟨a|ρ|b⟩⟨b|a⟩` over the standard (`a`) and Fourier (`b`) bases,
//! its inverse transform back to `ρ`, and the scalar identities it obeys.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::hilbert::{
    validate_density_with, CMatrix, DensityOperator, HilbertError, Observable,
    Tolerances, ZERO,
};

/// Slack on the distribution's normalization and marginal invariants.
pub const DIRAC_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiracError {
    #[error("distribution must be square and non-empty, got {rows}x{cols}")]
    BadShape { rows: usize, cols: usize },
    #[error("normalization violated: cell sum is {re}{im:+}i")]
    NotNormalized { re: f64, im: f64 },
    #[error("{axis} marginal {index} is not a probability: {re}{im:+}i")]
    BadMarginal {
        axis: &'static str,
        index: usize,
        re: f64,
        im: f64,
    },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("reconstruction is not a valid density operator: {0}")]
    Inconsistent(HilbertError),
}

/// Which of the two non-commuting measurements comes first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ordering {
    /// `⟨a|ρ|b⟩⟨b|a⟩`: the standard-basis projector acts first.
    #[default]
    AThenB,
    /// `⟨b|ρ|a⟩⟨a|b⟩`
    BThenA,
}

impl Ordering {
    pub fn as_str(self) -> &'static str {
        match self {
            Ordering::AThenB => "A_then_B",
            Ordering::BThenA => "B_then_A",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "A_then_B" => Some(Ordering::AThenB),
            "B_then_A" => Some(Ordering::BThenA),
            _ => None,
        }
    }
}

/// `values[(a, b)]`, rows indexed by the standard basis and columns by the
/// Fourier basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DiracDistribution {
    values: CMatrix,
    ordering: Ordering,
}

impl DiracDistribution {
    /// Checks normalization and that both marginals are real and
    /// non-negative.
    pub fn new(values: CMatrix, ordering: Ordering) -> Result<Self, DiracError> {
        let s = Self::unchecked(values, ordering)?;
        s.check_invariants(DIRAC_TOLERANCE)?;
        Ok(s)
    }

    /// Wraps estimated values without enforcing the invariants; noisy
    /// estimates only satisfy them within their error bars.
    pub fn unchecked(values: CMatrix, ordering: Ordering) -> Result<Self, DiracError> {
        let (rows, cols) = values.shape();
        if rows != cols || rows == 0 {
            return Err(DiracError::BadShape { rows, cols });
        }
        Ok(Self { values, ordering })
    }

    pub fn check_invariants(&self, tol: f64) -> Result<(), DiracError> {
        let total = self.total();
        if (total - Complex64::new(1.0, 0.0)).norm() > tol {
            return Err(DiracError::NotNormalized {
                re: total.re,
                im: total.im,
            });
        }
        let n = self.dim();
        for b in 0..n {
            let m = self.values.column(b).sum();
            if m.im.abs() > tol || m.re < -tol {
                return Err(DiracError::BadMarginal {
                    axis: "b",
                    index: b,
                    re: m.re,
                    im: m.im,
                });
            }
        }
        for a in 0..n {
            let m = self.values.row(a).sum();
            if m.im.abs() > tol || m.re < -tol {
                return Err(DiracError::BadMarginal {
                    axis: "a",
                    index: a,
                    re: m.re,
                    im: m.im,
                });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &CMatrix {
        &self.values
    }

    pub fn get(&self, a: usize, b: usize) -> Complex64 {
        self.values[(a, b)]
    }

    pub fn ordering(&self) -> Ordering {
        self.ordering
    }

    pub fn total(&self) -> Complex64 {
        self.values.sum()
    }

    /// Largest entrywise modulus of the difference.
    pub fn max_abs_diff(&self, other: &DiracDistribution) -> f64 {
        (&self.values - &other.values)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Dirac representation of an arbitrary operator, in the given ordering.
pub fn dirac_of_operator(op: &CMatrix, ordering: Ordering) -> CMatrix {
    let n = op.nrows();
    // S(a,b) = (1/N) Σ_j op[a,j] e^{-i2πb(a-j)/N}; the B-first ordering is
    // T(a,b) = (1/N) Σ_j op[j,a] e^{+i2πb(a-j)/N}.
    let weight = 1.0 / n as f64;
    let phase = |k: usize| Complex64::from_polar(weight, 2.0 * PI * (k % n) as f64 / n as f64);
    let mut out = CMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let mut acc = ZERO;
            for j in 0..n {
                let k = b * ((j + n - a) % n);
                match ordering {
                    Ordering::AThenB => acc += op[(a, j)] * phase(k),
                    Ordering::BThenA => acc += op[(j, a)] * phase(k).conj(),
                }
            }
            out[(a, b)] = acc;
        }
    }
    out
}

pub fn dirac_from_density(rho: &DensityOperator) -> DiracDistribution {
    dirac_from_density_ordered(rho, Ordering::AThenB)
}

pub fn dirac_from_density_ordered(rho: &DensityOperator, ordering: Ordering) -> DiracDistribution {
    DiracDistribution {
        values: dirac_of_operator(rho.matrix(), ordering),
        ordering,
    }
}

/// Linear inversion back to an operator, without any validation:
/// `ρ[a1,a2] = Σ_b S(a1,b) exp(i2πb(a1−a2)/N)` for the A-first ordering and
/// `ρ[a2,a1] = Σ_b T(a1,b) exp(−i2πb(a1−a2)/N)` for B-first.
pub fn invert_dirac(s: &DiracDistribution) -> CMatrix {
    let n = s.dim();
    let nf = n as f64;
    let mut out = CMatrix::zeros(n, n);
    for a1 in 0..n {
        for a2 in 0..n {
            let mut acc = ZERO;
            for b in 0..n {
                let k = (b * ((a1 + n - a2) % n)) % n;
                let phase = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / nf);
                match s.ordering {
                    Ordering::AThenB => acc += s.values[(a1, b)] * phase,
                    Ordering::BThenA => acc += s.values[(a1, b)] * phase.conj(),
                }
            }
            match s.ordering {
                Ordering::AThenB => out[(a1, a2)] = acc,
                Ordering::BThenA => out[(a2, a1)] = acc,
            }
        }
    }
    out
}

/// Inverse transform with density validation. Positivity uses the usual
/// `-1e-10` eigenvalue floor and the other checks the distribution slack.
pub fn density_from_dirac(s: &DiracDistribution) -> Result<DensityOperator, DiracError> {
    let tol = Tolerances {
        hermitian: DIRAC_TOLERANCE,
        trace: DIRAC_TOLERANCE,
        ..Tolerances::default()
    };
    validate_density_with(invert_dirac(s), &tol).map_err(DiracError::Inconsistent)
}

/// `N Σ S_ρ(a,b) conj(S_O(a,b))`, which equals `Tr[O†ρ]` (so `Tr[Oρ]` for
/// Hermitian `O`).
pub fn expectation(s: &DiracDistribution, op: &Observable) -> Result<Complex64, DiracError> {
    let n = s.dim();
    if op.dim() != n {
        return Err(DiracError::DimensionMismatch {
            left: n,
            right: op.dim(),
        });
    }
    let s_op = dirac_of_operator(op.matrix(), s.ordering);
    let acc: Complex64 = s
        .values
        .iter()
        .zip(s_op.iter())
        .map(|(x, y)| x * y.conj())
        .sum();
    Ok(acc * n as f64)
}

/// `N Σ |S(a,b)|²`
pub fn dirac_purity(s: &DiracDistribution) -> f64 {
    s.dim() as f64 * s.values.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub prob_a: Vec<f64>,
    pub prob_b: Vec<f64>,
}

pub fn marginals(s: &DiracDistribution) -> Marginals {
    let n = s.dim();
    Marginals {
        prob_a: (0..n).map(|a| s.values.row(a).sum().re).collect(),
        prob_b: (0..n).map(|b| s.values.column(b).sum().re).collect(),
    }
}

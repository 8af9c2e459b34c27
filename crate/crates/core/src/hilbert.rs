//! Finite-dimensional Hilbert space primitives: pure states, density
//! operators, observables and the standard/Fourier pair of mutually
//! unbiased bases.
//!
//! Indices `a` enumerate the standard basis and `b` the Fourier basis, both
//! running over `0..N`. The Fourier vectors are
//! `|b⟩ = Σ_a exp(i2πab/N)/√N |a⟩`, so `⟨b|a⟩ = exp(−i2πab/N)/√N`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HilbertError {
    #[error("invalid dimension {0}: must be at least 1")]
    InvalidDimension(usize),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("hermiticity violated: max |M - M†| entry is {max_deviation:e}")]
    NotHermitian { max_deviation: f64 },
    #[error("unit trace violated: trace is {re}{im:+}i")]
    TraceNotUnity { re: f64, im: f64 },
    #[error("positivity violated: smallest eigenvalue is {min_eigenvalue:e}")]
    NegativeEigenvalue { min_eigenvalue: f64 },
    #[error("normalization violated: squared norm is {norm_sq}")]
    NotNormalized { norm_sq: f64 },
    #[error("rank {rank} out of range for dimension {dim}")]
    RankOutOfRange { rank: usize, dim: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("zero vector cannot be normalized")]
    ZeroVector,
}

pub type Result<T> = std::result::Result<T, HilbertError>;

/// Numerical slack used when validating domain invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub hermitian: f64,
    pub trace: f64,
    pub norm: f64,
    /// Smallest eigenvalue accepted as positive semidefinite.
    pub psd_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermitian: 1e-12,
            trace: 1e-12,
            norm: 1e-12,
            psd_floor: -1e-10,
        }
    }
}

/// Largest entrywise modulus of `m - m†`.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigenvalues (ascending) and matching eigenvectors (columns) of a
/// Hermitian matrix. Only the Hermitian part of `m` is used.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// `½ Σ |λ|` over eigenvalues of the Hermitian part of `a - b`.
pub fn trace_distance_matrices(a: &CMatrix, b: &CMatrix) -> f64 {
    let (values, _) = hermitian_eigen(&(a - b));
    0.5 * values.iter().map(|v| v.abs()).sum::<f64>()
}

/// A normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
}

impl PureState {
    pub fn new(amplitudes: CVector) -> Result<Self> {
        Self::with_tolerance(amplitudes, Tolerances::default().norm)
    }

    pub fn with_tolerance(amplitudes: CVector, tol: f64) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(HilbertError::InvalidDimension(0));
        }
        let norm_sq = amplitudes.norm_squared();
        if (norm_sq - 1.0).abs() > tol {
            return Err(HilbertError::NotNormalized { norm_sq });
        }
        Ok(Self { amplitudes })
    }

    /// Rescales `v` to unit norm.
    pub fn normalized(v: CVector) -> Result<Self> {
        if v.is_empty() {
            return Err(HilbertError::InvalidDimension(0));
        }
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(HilbertError::ZeroVector);
        }
        Ok(Self {
            amplitudes: v.unscale(norm),
        })
    }

    pub fn from_slice(values: &[Complex64]) -> Result<Self> {
        Self::normalized(CVector::from_column_slice(values))
    }

    /// Standard basis vector `|a⟩`.
    pub fn basis(dim: usize, a: usize) -> Result<Self> {
        check_dim(dim)?;
        check_index(a, dim)?;
        let mut v = CVector::zeros(dim);
        v[a] = ONE;
        Ok(Self { amplitudes: v })
    }

    /// Fourier basis vector `|b⟩`.
    pub fn fourier(dim: usize, b: usize) -> Result<Self> {
        check_dim(dim)?;
        check_index(b, dim)?;
        let v = CVector::from_fn(dim, |a, _| fourier_component(dim, a, b));
        Ok(Self { amplitudes: v })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &PureState) -> Complex64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn projector(&self) -> CMatrix {
        &self.amplitudes * self.amplitudes.adjoint()
    }

    pub fn to_density(&self) -> DensityOperator {
        DensityOperator {
            matrix: self.projector(),
        }
    }
}

/// `⟨a|b⟩` for the Fourier basis: `exp(i2πab/N)/√N`.
pub fn fourier_component(dim: usize, a: usize, b: usize) -> Complex64 {
    // reduce before converting so large products stay exact
    let k = (a * b) % dim;
    Complex64::from_polar(1.0 / (dim as f64).sqrt(), 2.0 * PI * k as f64 / dim as f64)
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        Err(HilbertError::InvalidDimension(dim))
    } else {
        Ok(())
    }
}

fn check_index(index: usize, dim: usize) -> Result<()> {
    if index >= dim {
        Err(HilbertError::IndexOutOfRange { index, dim })
    } else {
        Ok(())
    }
}

/// A validated density operator: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: CMatrix,
}

impl DensityOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        validate_density(matrix)
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            matrix: CMatrix::identity(dim, dim).unscale(dim as f64),
        })
    }

    /// Diagonal state with the given populations.
    pub fn diagonal(populations: &[f64]) -> Result<Self> {
        let m = CMatrix::from_diagonal(&CVector::from_iterator(
            populations.len(),
            populations.iter().map(|&p| Complex64::new(p, 0.0)),
        ));
        validate_density(m)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// `⟨ψ|ρ|ψ⟩`
    pub fn expectation_in(&self, psi: &PureState) -> f64 {
        let v = psi.amplitudes();
        v.dotc(&(&self.matrix * v)).re
    }

    /// Spectral decomposition, eigenvalues ascending.
    pub fn eigen(&self) -> (Vec<f64>, CMatrix) {
        hermitian_eigen(&self.matrix)
    }

    pub fn purity(&self) -> f64 {
        purity(self)
    }
}

/// Validates `matrix` as a density operator with default tolerances.
pub fn validate_density(matrix: CMatrix) -> Result<DensityOperator> {
    validate_density_with(matrix, &Tolerances::default())
}

pub fn validate_density_with(matrix: CMatrix, tol: &Tolerances) -> Result<DensityOperator> {
    let (rows, cols) = matrix.shape();
    if rows != cols {
        return Err(HilbertError::NotSquare { rows, cols });
    }
    check_dim(rows)?;
    let max_deviation = hermitian_deviation(&matrix);
    if max_deviation > tol.hermitian {
        return Err(HilbertError::NotHermitian { max_deviation });
    }
    let trace = matrix.trace();
    if (trace - ONE).norm() > tol.trace {
        return Err(HilbertError::TraceNotUnity {
            re: trace.re,
            im: trace.im,
        });
    }
    let (values, _) = hermitian_eigen(&matrix);
    let min_eigenvalue = values[0];
    if min_eigenvalue < tol.psd_floor {
        return Err(HilbertError::NegativeEigenvalue { min_eigenvalue });
    }
    Ok(DensityOperator { matrix })
}

/// `Tr[ρ²]`
pub fn purity(rho: &DensityOperator) -> f64 {
    // Tr[ρ²] = Σ |ρ_ij|² for Hermitian ρ
    rho.matrix.iter().map(|z| z.norm_sqr()).sum()
}

fn complex_gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im)
    })
}

/// Ginibre-ensemble density operator: `G G† / Tr[G G†]` with `G` an
/// `N × rank` matrix of standard complex Gaussians drawn from `seed`.
pub fn random_density(dim: usize, rank: usize, seed: u64) -> Result<DensityOperator> {
    check_dim(dim)?;
    if rank == 0 || rank > dim {
        return Err(HilbertError::RankOutOfRange { rank, dim });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let g = complex_gaussian_matrix(dim, rank, &mut rng);
    let mut m = &g * g.adjoint();
    let tr = m.trace().re;
    m.unscale_mut(tr);
    // remove the rounding-level anti-Hermitian part
    let m = (&m + m.adjoint()).scale(0.5);
    Ok(DensityOperator { matrix: m })
}

/// Haar-random pure state.
pub fn random_pure_state(dim: usize, seed: u64) -> Result<PureState> {
    check_dim(dim)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let g = complex_gaussian_matrix(dim, 1, &mut rng);
    PureState::normalized(g.column(0).into_owned())
}

/// Random Hermitian matrix (GUE-like) wrapped as an observable.
pub fn random_hermitian(dim: usize, seed: u64) -> Result<Observable> {
    check_dim(dim)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let g = complex_gaussian_matrix(dim, dim, &mut rng);
    Observable::hermitian((&g + g.adjoint()).scale(0.5))
}

/// Haar-random unitary from the QR decomposition of a Ginibre matrix,
/// with the phases of `R`'s diagonal absorbed into `Q`.
pub fn random_unitary(dim: usize, rng: &mut ChaCha20Rng) -> CMatrix {
    let g = complex_gaussian_matrix(dim, dim, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisLabel {
    Standard,
    Fourier,
}

/// An orthonormal basis stored as the columns of a unitary matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    label: BasisLabel,
    vectors: CMatrix,
}

impl BasisSet {
    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn label(&self) -> BasisLabel {
        self.label
    }

    /// Columns are the basis vectors.
    pub fn matrix(&self) -> &CMatrix {
        &self.vectors
    }

    pub fn vector(&self, index: usize) -> Result<PureState> {
        check_index(index, self.dim())?;
        Ok(PureState {
            amplitudes: self.vectors.column(index).into_owned(),
        })
    }
}

pub fn standard_basis(dim: usize) -> Result<BasisSet> {
    check_dim(dim)?;
    Ok(BasisSet {
        label: BasisLabel::Standard,
        vectors: CMatrix::identity(dim, dim),
    })
}

/// The Fourier basis, unbiased with respect to the standard basis.
pub fn fourier_basis(dim: usize) -> Result<BasisSet> {
    check_dim(dim)?;
    Ok(BasisSet {
        label: BasisLabel::Fourier,
        vectors: fourier_matrix(dim),
    })
}

/// `F[a][b] = ⟨a|b⟩ = exp(i2πab/N)/√N`.
pub fn fourier_matrix(dim: usize) -> CMatrix {
    CMatrix::from_fn(dim, dim, |a, b| fourier_component(dim, a, b))
}

/// An operator on the system. Non-Hermitian operators are allowed but
/// flagged; only Hermitian ones can drive a pointer coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    matrix: CMatrix,
    hermitian: bool,
}

impl Observable {
    /// Hermitian observable, validated to 1e-12.
    pub fn hermitian(matrix: CMatrix) -> Result<Self> {
        let (rows, cols) = matrix.shape();
        if rows != cols {
            return Err(HilbertError::NotSquare { rows, cols });
        }
        check_dim(rows)?;
        let max_deviation = hermitian_deviation(&matrix);
        if max_deviation > Tolerances::default().hermitian {
            return Err(HilbertError::NotHermitian { max_deviation });
        }
        Ok(Self {
            matrix,
            hermitian: true,
        })
    }

    /// Any square operator. The Hermitian flag is set when the matrix
    /// happens to be Hermitian.
    pub fn general(matrix: CMatrix) -> Result<Self> {
        let (rows, cols) = matrix.shape();
        if rows != cols {
            return Err(HilbertError::NotSquare { rows, cols });
        }
        check_dim(rows)?;
        let hermitian = hermitian_deviation(&matrix) <= Tolerances::default().hermitian;
        Ok(Self { matrix, hermitian })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            matrix: CMatrix::identity(dim, dim),
            hermitian: true,
        })
    }

    pub fn projector(state: &PureState) -> Self {
        Self {
            matrix: state.projector(),
            hermitian: true,
        }
    }

    /// `π_a = |a⟩⟨a|`
    pub fn standard_projector(dim: usize, a: usize) -> Result<Self> {
        Ok(Self::projector(&PureState::basis(dim, a)?))
    }

    /// `|b⟩⟨b|` for the Fourier basis.
    pub fn fourier_projector(dim: usize, b: usize) -> Result<Self> {
        Ok(Self::projector(&PureState::fourier(dim, b)?))
    }

    /// `|b⟩⟨b|a⟩⟨a|`, the product whose expectation is the Dirac distribution.
    pub fn dirac_product(dim: usize, a: usize, b: usize) -> Result<Self> {
        let pa = Self::standard_projector(dim, a)?;
        let pb = Self::fourier_projector(dim, b)?;
        Self::general(&pb.matrix * &pa.matrix)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn is_normal(&self, tol: f64) -> bool {
        let a = &self.matrix;
        let comm = a * a.adjoint() - a.adjoint() * a;
        comm.iter().all(|z| z.norm() <= tol)
    }

    /// Eigenvalues with their spectral projectors, degenerate eigenvalues
    /// (closer than `tol`) merged. Requires a Hermitian observable.
    pub fn spectral_projectors(&self, tol: f64) -> Result<Vec<(f64, CMatrix)>> {
        if !self.hermitian {
            return Err(HilbertError::NotHermitian {
                max_deviation: hermitian_deviation(&self.matrix),
            });
        }
        let n = self.dim();
        let (values, vectors) = hermitian_eigen(&self.matrix);
        let mut out: Vec<(f64, CMatrix)> = Vec::new();
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && (values[end] - values[start]).abs() <= tol {
                end += 1;
            }
            let mean = values[start..end].iter().sum::<f64>() / (end - start) as f64;
            let mut proj = CMatrix::zeros(n, n);
            for k in start..end {
                let v = vectors.column(k);
                proj += &v * v.adjoint();
            }
            out.push((mean, proj));
            start = end;
        }
        Ok(out)
    }
}

/// Reconstruction quality between two states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceReport {
    pub trace_distance: f64,
    /// `⟨ψ|ρ|ψ⟩`, present only when the second argument is pure.
    pub pure_target_fidelity: Option<f64>,
}

pub fn distance_report(rho: &DensityOperator, sigma: &DensityOperator) -> Result<DistanceReport> {
    if rho.dim() != sigma.dim() {
        return Err(HilbertError::DimensionMismatch {
            left: rho.dim(),
            right: sigma.dim(),
        });
    }
    let trace_distance = trace_distance_matrices(rho.matrix(), sigma.matrix());
    let (values, vectors) = sigma.eigen();
    let top = values.len() - 1;
    let pure_target_fidelity = if (values[top] - 1.0).abs() < 1e-10 {
        let psi = PureState {
            amplitudes: vectors.column(top).into_owned(),
        };
        Some(rho.expectation_in(&psi))
    } else {
        None
    };
    Ok(DistanceReport {
        trace_distance,
        pure_target_fidelity,
    })
}

/// `|⟨ψ|φ⟩|²` for pure states.
pub fn pure_fidelity(psi: &PureState, phi: &PureState) -> f64 {
    psi.inner(phi).norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn mat2(entries: [[f64; 2]; 2]) -> CMatrix {
        CMatrix::from_fn(2, 2, |i, j| c(entries[i][j], 0.0))
    }

    #[test]
    fn fourier_basis_small_dimensions() {
        let f1 = fourier_basis(1).unwrap();
        assert_abs_diff_eq!(f1.matrix()[(0, 0)].re, 1.0);

        let f2 = fourier_basis(2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let expected = [[s, s], [s, -s]];
        for a in 0..2 {
            for b in 0..2 {
                assert!((f2.matrix()[(a, b)] - c(expected[a][b], 0.0)).norm() < 1e-15);
            }
        }

        let f4 = fourier_basis(4).unwrap();
        assert!((f4.matrix()[(2, 1)] - c(-0.5, 0.0)).norm() < 1e-15);
        assert_eq!(f4.label(), BasisLabel::Fourier);
    }

    #[test]
    fn fourier_basis_rejects_zero() {
        assert_eq!(fourier_basis(0), Err(HilbertError::InvalidDimension(0)));
    }

    #[test]
    fn fourier_basis_is_unitary_and_unbiased() {
        for n in 1..=64 {
            let f = fourier_matrix(n);
            let gram = f.adjoint() * &f;
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { ONE } else { ZERO };
                    assert!((gram[(i, j)] - want).norm() < 1e-12, "N={n}");
                    assert!((f[(i, j)].norm_sqr() - 1.0 / n as f64).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn validation_examples() {
        assert!(DensityOperator::maximally_mixed(3).is_ok());
        match validate_density(mat2([[0.5, 0.6], [0.6, 0.5]])) {
            Err(HilbertError::NegativeEigenvalue { min_eigenvalue }) => {
                assert_abs_diff_eq!(min_eigenvalue, -0.1, epsilon = 1e-12)
            }
            other => panic!("expected PSD violation, got {other:?}"),
        }
        assert!(matches!(
            validate_density(mat2([[1.0, 0.0], [0.0, 0.1]])),
            Err(HilbertError::TraceNotUnity { .. })
        ));
        let mut m = mat2([[0.5, 0.1], [0.1, 0.5]]);
        m[(0, 1)] = c(0.1, 0.2);
        assert!(matches!(
            validate_density(m),
            Err(HilbertError::NotHermitian { .. })
        ));
        assert!(matches!(
            validate_density(CMatrix::zeros(2, 3)),
            Err(HilbertError::NotSquare { .. })
        ));
    }

    #[test]
    fn tolerances_are_overridable() {
        let mut m = CMatrix::identity(2, 2).unscale(2.0);
        m[(0, 0)] += c(1e-9, 0.0);
        assert!(validate_density(m.clone()).is_err());
        let loose = Tolerances {
            trace: 1e-8,
            ..Tolerances::default()
        };
        assert!(validate_density_with(m, &loose).is_ok());
    }

    #[test]
    fn random_density_contract() {
        let pure = random_density(3, 1, 11).unwrap();
        assert_abs_diff_eq!(purity(&pure), 1.0, epsilon = 1e-10);

        let mixed = random_density(2, 2, 11).unwrap();
        assert!(purity(&mixed) < 1.0 - 1e-6);

        let again = random_density(2, 2, 11).unwrap();
        assert_eq!(mixed.matrix(), again.matrix());

        assert_eq!(
            random_density(3, 4, 0),
            Err(HilbertError::RankOutOfRange { rank: 4, dim: 3 })
        );
        assert!(random_density(3, 0, 0).is_err());
    }

    #[test]
    fn random_density_rank_matches() {
        for rank in 1..=5 {
            let rho = random_density(5, rank, 99).unwrap();
            let (values, _) = rho.eigen();
            let nonzero = values.iter().filter(|v| **v > 1e-10).count();
            assert_eq!(nonzero, rank);
        }
    }

    #[test]
    fn purity_examples() {
        for n in 1..6 {
            let mm = DensityOperator::maximally_mixed(n).unwrap();
            assert_abs_diff_eq!(purity(&mm), 1.0 / n as f64, epsilon = 1e-12);
        }
        let proj = random_pure_state(4, 3).unwrap().to_density();
        assert_abs_diff_eq!(purity(&proj), 1.0, epsilon = 1e-12);
        let rho = DensityOperator::diagonal(&[0.75, 0.25]).unwrap();
        assert_abs_diff_eq!(purity(&rho), 0.625, epsilon = 1e-15);
    }

    #[test]
    fn distance_examples() {
        let rho = random_density(3, 2, 5).unwrap();
        let same = distance_report(&rho, &rho).unwrap();
        assert_abs_diff_eq!(same.trace_distance, 0.0, epsilon = 1e-14);
        assert!(same.pure_target_fidelity.is_none());

        let zero = PureState::basis(2, 0).unwrap().to_density();
        let one = PureState::basis(2, 1).unwrap().to_density();
        let orth = distance_report(&zero, &one).unwrap();
        assert_abs_diff_eq!(orth.trace_distance, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(orth.pure_target_fidelity.unwrap(), 0.0, epsilon = 1e-12);

        let mm = DensityOperator::maximally_mixed(2).unwrap();
        let r = distance_report(&mm, &zero).unwrap();
        assert_abs_diff_eq!(r.trace_distance, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.pure_target_fidelity.unwrap(), 0.5, epsilon = 1e-12);

        let big = DensityOperator::maximally_mixed(3).unwrap();
        assert!(matches!(
            distance_report(&mm, &big),
            Err(HilbertError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn spectral_projectors_merge_degenerate_levels() {
        let obs = Observable::identity(3).unwrap();
        let parts = obs.spectral_projectors(1e-9).unwrap();
        assert_eq!(parts.len(), 1);
        assert_abs_diff_eq!(parts[0].0, 1.0, epsilon = 1e-12);

        let pi = Observable::standard_projector(3, 1).unwrap();
        let parts = pi.spectral_projectors(1e-9).unwrap();
        assert_eq!(parts.len(), 2);
        assert!((&parts[1].1 - pi.matrix()).iter().all(|z| z.norm() < 1e-12));

        let prod = Observable::dirac_product(2, 0, 1).unwrap();
        assert!(!prod.is_hermitian());
        assert!(prod.spectral_projectors(1e-9).is_err());
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for n in [1, 2, 5] {
            let u = random_unitary(n, &mut rng);
            let gram = u.adjoint() * &u;
            assert!((gram - CMatrix::identity(n, n)).iter().all(|z| z.norm() < 1e-12));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn random_density_always_validates(n in 1usize..9, r in 1usize..9, seed in any::<u64>()) {
                let rank = r.min(n);
                let rho = random_density(n, rank, seed).unwrap();
                prop_assert!(validate_density(rho.matrix().clone()).is_ok());
                let mu = purity(&rho);
                prop_assert!(mu >= 1.0 / n as f64 - 1e-12 && mu <= 1.0 + 1e-12);
            }
        }
    }
}

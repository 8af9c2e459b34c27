//! Weak values, analytic and simulated through a von Neumann pointer.
//!
//! The coupling `U = exp(−i·g·A⊗P̂)` displaces the pointer by `g·α` in each
//! eigenspace of `A` with eigenvalue `α`. Joint states are therefore kept in
//! branch form: one displaced pointer per eigenspace plus the system blocks
//! `Π_k ρ Π_l`, which keeps memory at `O(K²N² + K·M)` rather than a dense
//! `(NM)²` matrix.

use num_complex::Complex64;
use thiserror::Error;

use crate::dirac::{DiracDistribution, Ordering};
use crate::hilbert::{
    fourier_component, CMatrix, DensityOperator, HilbertError, Observable, PureState, ONE, ZERO,
};
use crate::pointer::{pointwise_mass, PointerError, PointerState, Quadrature};

/// Post-selection probabilities at or below this are treated as zero.
pub const MIN_POSTSELECTION: f64 = 1e-12;
/// Largest `g/σ` accepted as a weak coupling.
pub const MAX_WEAK_RATIO: f64 = 0.1;
/// Relative linear-fit residual above which calibration is rejected.
pub const MAX_CALIBRATION_RESIDUAL: f64 = 0.1;

const EIGEN_MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeakError {
    #[error("coupling observable must be Hermitian")]
    NonHermitianCoupling,
    #[error("coupling strength must be non-negative and finite, got {0}")]
    BadCoupling(f64),
    #[error("coupling g/sigma = {ratio} is not weak (limit {limit})")]
    CouplingTooStrong { ratio: f64, limit: f64 },
    #[error("weak value undefined: post-selection probability {probability:e}")]
    UndefinedWeakValue { probability: f64 },
    #[error("degenerate input: all weak values vanish")]
    DegenerateInput,
    #[error("calibration failed: linear-fit residual {residual:.3} exceeds {limit}")]
    CalibrationFailed { residual: f64, limit: f64 },
    #[error("row-sum identity violated at index {index}: deviation {deviation:e}")]
    RowSumMismatch { index: usize, deviation: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Pointer(#[from] PointerError),
}

pub type Result<T> = std::result::Result<T, WeakError>;

fn check_same_dim(left: usize, right: usize) -> Result<()> {
    if left != right {
        Err(WeakError::DimensionMismatch { left, right })
    } else {
        Ok(())
    }
}

/// Weak value `⟨c|Aρ|c⟩ / ⟨c|ρ|c⟩`.
pub fn weak_value(op: &Observable, rho: &DensityOperator, post: &PureState) -> Result<Complex64> {
    check_same_dim(op.dim(), rho.dim())?;
    check_same_dim(post.dim(), rho.dim())?;
    let c = post.amplitudes();
    let rho_c = rho.matrix() * c;
    let probability = c.dotc(&rho_c).re;
    if probability <= MIN_POSTSELECTION {
        return Err(WeakError::UndefinedWeakValue { probability });
    }
    Ok(c.dotc(&(op.matrix() * rho_c)) / probability)
}

/// Pure-state weak value `⟨c|A|Ψ⟩ / ⟨c|Ψ⟩`.
pub fn pure_weak_value(op: &Observable, psi: &PureState, post: &PureState) -> Result<Complex64> {
    check_same_dim(op.dim(), psi.dim())?;
    check_same_dim(post.dim(), psi.dim())?;
    let overlap = post.inner(psi);
    if overlap.norm_sqr() <= MIN_POSTSELECTION {
        return Err(WeakError::UndefinedWeakValue {
            probability: overlap.norm_sqr(),
        });
    }
    Ok(post.amplitudes().dotc(&(op.matrix() * psi.amplitudes())) / overlap)
}

/// The same weak value assembled from the spectral decomposition of `ρ`:
/// `Σ_λ P(λ|c)·⟨c|A|λ⟩/⟨c|λ⟩` with `P(λ|c) = p_λ|⟨c|λ⟩|² / ⟨c|ρ|c⟩`.
pub fn weak_value_decomposed(
    op: &Observable,
    rho: &DensityOperator,
    post: &PureState,
) -> Result<Complex64> {
    check_same_dim(op.dim(), rho.dim())?;
    check_same_dim(post.dim(), rho.dim())?;
    let probability = rho.expectation_in(post);
    if probability <= MIN_POSTSELECTION {
        return Err(WeakError::UndefinedWeakValue { probability });
    }
    let (weights, vectors) = rho.eigen();
    let c = post.amplitudes();
    let mut total = ZERO;
    for (k, &p) in weights.iter().enumerate() {
        if p < 1e-14 {
            continue;
        }
        let lambda = vectors.column(k);
        let overlap = c.dotc(&lambda);
        if overlap.norm() < 1e-150 {
            continue;
        }
        let conditional = p * overlap.norm_sqr() / probability;
        let branch_value = c.dotc(&(op.matrix() * lambda)) / overlap;
        total += branch_value * conditional;
    }
    Ok(total)
}

/// Rebuilds `|Ψ⟩ ∝ Σ_a wv[a]/⟨b0|a⟩·|a⟩` from the weak values
/// `⟨π_a⟩` post-selected on Fourier state `b0`. For `b0 = 0` the overlap is
/// the constant `1/√N`. The result has unit norm and its first non-negligible
/// component real and positive.
pub fn reconstruct_pure_state(weak_values: &[Complex64], b0: usize) -> Result<PureState> {
    let n = weak_values.len();
    if n == 0 {
        return Err(HilbertError::InvalidDimension(0).into());
    }
    if b0 >= n {
        return Err(HilbertError::IndexOutOfRange { index: b0, dim: n }.into());
    }
    let raw: Vec<Complex64> = weak_values
        .iter()
        .enumerate()
        .map(|(a, wv)| wv * fourier_component(n, a, b0) * (n as f64).sqrt())
        .collect();
    let largest = raw.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if largest == 0.0 || !largest.is_finite() {
        return Err(WeakError::DegenerateInput);
    }
    let lead = raw
        .iter()
        .find(|z| z.norm() > 1e-12 * largest)
        .copied()
        .unwrap_or(ONE);
    let phase = lead.conj() / lead.norm();
    let rotated: Vec<Complex64> = raw.iter().map(|z| z * phase).collect();
    let mut state = PureState::from_slice(&rotated)?;
    // exact zero imaginary part on the leading component
    let mut amps = state.amplitudes().clone();
    if let Some(first) = amps.iter_mut().find(|z| z.norm() > 1e-12) {
        *first = Complex64::new(first.norm(), 0.0);
    }
    state = PureState::normalized(amps)?;
    Ok(state)
}

/// Weak values `⟨π_a⟩` for every `a`, post-selected on Fourier state `b0`,
/// cross-checked against the phase-weighted row sums
/// `Σ_{a2} ρ[a,a2]·e^{i2π(a2−a)b0/N} / (N·⟨b0|ρ|b0⟩)`.
pub fn row_sum_check(rho: &DensityOperator, b0: usize) -> Result<Vec<Complex64>> {
    let n = rho.dim();
    let post = PureState::fourier(n, b0)?;
    let p_b0 = rho.expectation_in(&post);
    if p_b0 <= MIN_POSTSELECTION {
        return Err(WeakError::UndefinedWeakValue {
            probability: p_b0,
        });
    }
    let mut out = Vec::with_capacity(n);
    for a in 0..n {
        let wv = weak_value(&Observable::standard_projector(n, a)?, rho, &post)?;
        let mut row = ZERO;
        for a2 in 0..n {
            // e^{i2π(a2−a)b0/N} = N·⟨a2|b0⟩·conj(⟨a|b0⟩)
            let phase = fourier_component(n, a2, b0) * fourier_component(n, a, b0).conj() * n as f64;
            row += rho.matrix()[(a, a2)] * phase;
        }
        let predicted = row / (n as f64 * p_b0);
        let deviation = (wv - predicted).norm();
        if deviation > 1e-10 {
            return Err(WeakError::RowSumMismatch { index: a, deviation });
        }
        out.push(wv);
    }
    Ok(out)
}

/// One eigenspace of the coupled observable and the pointer it produced.
#[derive(Debug, Clone)]
pub struct PointerBranch {
    pub eigenvalue: f64,
    pub projector: CMatrix,
    pub pointer: PointerState,
}

fn branches(op: &Observable, pointer: &PointerState, g: f64) -> Result<Vec<PointerBranch>> {
    if !op.is_hermitian() {
        return Err(WeakError::NonHermitianCoupling);
    }
    if !(g >= 0.0) || !g.is_finite() {
        return Err(WeakError::BadCoupling(g));
    }
    Ok(op
        .spectral_projectors(EIGEN_MERGE_TOL)?
        .into_iter()
        .map(|(eigenvalue, projector)| PointerBranch {
            eigenvalue,
            projector,
            pointer: pointer.shifted(g * eigenvalue),
        })
        .collect())
}

/// System ⊗ pointer state after one von Neumann coupling:
/// `Σ_{k,l} Π_k ρ Π_l ⊗ |φ_k⟩⟨φ_l|`.
#[derive(Debug, Clone)]
pub struct JointState {
    branches: Vec<PointerBranch>,
    /// `blocks[k * K + l] = Π_k ρ Π_l`
    blocks: Vec<CMatrix>,
}

pub fn evolve_pointer(
    rho: &DensityOperator,
    op: &Observable,
    pointer: &PointerState,
    g: f64,
) -> Result<JointState> {
    check_same_dim(op.dim(), rho.dim())?;
    let branches = branches(op, pointer, g)?;
    let mut blocks = Vec::with_capacity(branches.len() * branches.len());
    for bk in &branches {
        let left = &bk.projector * rho.matrix();
        for bl in &branches {
            blocks.push(&left * &bl.projector);
        }
    }
    Ok(JointState { branches, blocks })
}

impl JointState {
    pub fn branches(&self) -> &[PointerBranch] {
        &self.branches
    }

    fn k(&self) -> usize {
        self.branches.len()
    }

    /// Pointer traced out.
    pub fn reduced_system(&self) -> CMatrix {
        let k = self.k();
        let mut out = self.blocks[0].scale(0.0);
        for i in 0..k {
            for j in 0..k {
                let ov = self.branches[j].pointer.overlap(&self.branches[i].pointer);
                out += &self.blocks[i * k + j] * ov;
            }
        }
        out
    }

    /// `Tr` of the full joint state.
    pub fn trace(&self) -> f64 {
        let k = self.k();
        (0..k)
            .map(|i| self.blocks[i * k + i].trace().re * self.branches[i].pointer.norm_sqr())
            .sum()
    }

    /// Branch weights `w_kl = ⟨c|Π_k ρ Π_l|c⟩` (or the trace when there is no
    /// post-selection). The conditioned pointer is `Σ w_kl |φ_k⟩⟨φ_l|`.
    pub fn branch_weights(&self, post: Option<&PureState>) -> Result<CMatrix> {
        let k = self.k();
        let dim = self.blocks[0].nrows();
        if let Some(c) = post {
            check_same_dim(c.dim(), dim)?;
        }
        Ok(CMatrix::from_fn(k, k, |i, j| {
            let block = &self.blocks[i * k + j];
            match post {
                Some(c) => c.amplitudes().dotc(&(block * c.amplitudes())),
                None => block.trace(),
            }
        }))
    }

    /// `Σ_kl w_kl ⟨φ_l|φ_k⟩`
    pub fn weighted_norm(&self, weights: &CMatrix) -> f64 {
        self.weighted(weights, |bra, ket| bra.overlap(ket))
    }

    /// `Σ_kl w_kl ⟨φ_l|D|φ_k⟩`
    pub fn weighted_moment(&self, weights: &CMatrix, q: Quadrature) -> f64 {
        self.weighted(weights, |bra, ket| bra.matrix_element(q, ket))
    }

    fn weighted<F>(&self, weights: &CMatrix, f: F) -> f64
    where
        F: Fn(&PointerState, &PointerState) -> Complex64,
    {
        let k = self.k();
        let mut acc = ZERO;
        for i in 0..k {
            for j in 0..k {
                if weights[(i, j)] != ZERO {
                    acc += weights[(i, j)] * f(&self.branches[j].pointer, &self.branches[i].pointer);
                }
            }
        }
        acc.re
    }

    /// Probability mass on each grid point of the conditioned pointer.
    pub fn pointer_masses(&self, weights: &CMatrix, q: Quadrature) -> Vec<f64> {
        let k = self.k();
        let m = self.branches[0].pointer.grid_points();
        (0..m)
            .map(|idx| {
                let mut acc = ZERO;
                for i in 0..k {
                    for j in 0..k {
                        acc += weights[(i, j)]
                            * pointwise_mass(&self.branches[j].pointer, &self.branches[i].pointer, q, idx);
                    }
                }
                acc.re
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointerReadout {
    pub shift_x: f64,
    pub shift_p: f64,
    pub p_post: f64,
}

/// Mean position and momentum of the (optionally post-selected) pointer.
pub fn pointer_readout(joint: &JointState, post: Option<&PureState>) -> Result<PointerReadout> {
    let w = joint.branch_weights(post)?;
    let p_post = joint.weighted_norm(&w);
    if post.is_some() && p_post <= MIN_POSTSELECTION {
        return Err(WeakError::UndefinedWeakValue {
            probability: p_post,
        });
    }
    Ok(PointerReadout {
        shift_x: joint.weighted_moment(&w, Quadrature::Position) / p_post,
        shift_p: joint.weighted_moment(&w, Quadrature::Momentum) / p_post,
        p_post,
    })
}

/// Linear response of the pointer: `shift_x ≈ g·c_x·Re(wv)` and
/// `shift_p ≈ g·c_p·Im(wv)`. For a Gaussian of width σ these tend to
/// `c_x = 1` and `c_p = 1/(2σ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub c_x: f64,
    pub c_p: f64,
}

impl Calibration {
    /// Small-coupling limit for a Gaussian pointer.
    pub fn gaussian_limit(sigma: f64) -> Self {
        Self {
            c_x: 1.0,
            c_p: 1.0 / (2.0 * sigma * sigma),
        }
    }

    pub fn k(&self, q: Quadrature) -> f64 {
        match q {
            Quadrature::Position => self.c_x,
            Quadrature::Momentum => self.c_p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakValueEstimate {
    pub value: Complex64,
    pub coupling: f64,
    pub shift_x: f64,
    pub shift_p: f64,
    pub calibration: Calibration,
}

impl WeakValueEstimate {
    pub fn from_readout(readout: &PointerReadout, g: f64, calibration: Calibration) -> Self {
        Self {
            value: Complex64::new(
                readout.shift_x / (g * calibration.c_x),
                readout.shift_p / (g * calibration.c_p),
            ),
            coupling: g,
            shift_x: readout.shift_x,
            shift_p: readout.shift_p,
            calibration,
        }
    }
}

fn check_weak(pointer: &PointerState, g: f64) -> Result<()> {
    if !(g > 0.0) || !g.is_finite() {
        return Err(WeakError::BadCoupling(g));
    }
    let ratio = g / pointer.sigma();
    if ratio >= MAX_WEAK_RATIO {
        return Err(WeakError::CouplingTooStrong {
            ratio,
            limit: MAX_WEAK_RATIO,
        });
    }
    Ok(())
}

/// Fits `c_x`, `c_p` by simulating a reference qubit whose weak value
/// `(1+i)/2` is known analytically (`π_1` on `(|0⟩+i|1⟩)/√2`, post-selected
/// on `(|0⟩+|1⟩)/√2`) at couplings `g/2` and `g`, and regressing the shifts
/// through the origin.
pub fn calibrate_pointer_response(pointer: &PointerState, g: f64) -> Result<Calibration> {
    check_weak(pointer, g)?;
    let i = Complex64::new(0.0, 1.0);
    let rho = PureState::from_slice(&[ONE, i])?.to_density();
    let post = PureState::from_slice(&[ONE, ONE])?;
    let op = Observable::standard_projector(2, 1)?;
    let wv = weak_value(&op, &rho, &post)?;

    let mut samples = Vec::with_capacity(2);
    for gi in [0.5 * g, g] {
        let joint = evolve_pointer(&rho, &op, pointer, gi)?;
        let r = pointer_readout(&joint, Some(&post))?;
        samples.push((gi, r));
    }
    let fit = |drive: &dyn Fn(f64) -> f64, shift: &dyn Fn(&PointerReadout) -> f64| {
        let num: f64 = samples.iter().map(|(gi, r)| shift(r) * drive(*gi)).sum();
        let den: f64 = samples.iter().map(|(gi, _)| drive(*gi).powi(2)).sum();
        let slope = num / den;
        let residual = samples
            .iter()
            .map(|(gi, r)| {
                let s = shift(r);
                (s - slope * drive(*gi)).abs() / s.abs()
            })
            .fold(0.0, f64::max);
        (slope, residual)
    };
    let (c_x, rx) = fit(&|gi| gi * wv.re, &|r| r.shift_x);
    let (c_p, rp) = fit(&|gi| gi * wv.im, &|r| r.shift_p);
    let residual = rx.max(rp);
    if !(residual <= MAX_CALIBRATION_RESIDUAL) || !(c_x > 0.0) || !(c_p > 0.0) {
        return Err(WeakError::CalibrationFailed {
            residual,
            limit: MAX_CALIBRATION_RESIDUAL,
        });
    }
    Ok(Calibration { c_x, c_p })
}

/// Weak value read off the simulated pointer shifts.
pub fn pointer_weak_value(
    op: &Observable,
    rho: &DensityOperator,
    post: &PureState,
    pointer: &PointerState,
    g: f64,
    calibration: Calibration,
) -> Result<WeakValueEstimate> {
    let joint = evolve_pointer(rho, op, pointer, g)?;
    let readout = pointer_readout(&joint, Some(post))?;
    Ok(WeakValueEstimate::from_readout(&readout, g, calibration))
}

/// System coupled sequentially to two pointers, first through `first`
/// then through `second`, with the system traced out.
#[derive(Debug, Clone)]
pub struct TwoPointerState {
    first: Vec<PointerBranch>,
    second: Vec<PointerBranch>,
    /// `weights[(k·K + k')·L + l] = Tr[Q_l P_k ρ P_k']`
    weights: Vec<Complex64>,
}

pub fn evolve_two_pointers(
    rho: &DensityOperator,
    first: &Observable,
    second: &Observable,
    g1: f64,
    g2: f64,
    pointers: [&PointerState; 2],
) -> Result<TwoPointerState> {
    check_same_dim(first.dim(), rho.dim())?;
    check_same_dim(second.dim(), rho.dim())?;
    let first = branches(first, pointers[0], g1)?;
    let second = branches(second, pointers[1], g2)?;
    let mut weights = Vec::with_capacity(first.len() * first.len() * second.len());
    for pk in &first {
        let left = &pk.projector * rho.matrix();
        for pk2 in &first {
            let inner = &left * &pk2.projector;
            for q in &second {
                weights.push((&q.projector * &inner).trace());
            }
        }
    }
    Ok(TwoPointerState {
        first,
        second,
        weights,
    })
}

impl TwoPointerState {
    fn weight(&self, k: usize, k2: usize, l: usize) -> Complex64 {
        let (kk, ll) = (self.first.len(), self.second.len());
        self.weights[(k * kk + k2) * ll + l]
    }

    pub fn first_branches(&self) -> &[PointerBranch] {
        &self.first
    }

    pub fn second_branches(&self) -> &[PointerBranch] {
        &self.second
    }

    /// `⟨D1 ⊗ D2⟩` for the chosen quadratures of the two pointers.
    pub fn correlator(&self, q1: Quadrature, q2: Quadrature) -> f64 {
        let mut acc = ZERO;
        for (l, bl) in self.second.iter().enumerate() {
            let m2 = bl.pointer.matrix_element(q2, &bl.pointer);
            for (k, bk) in self.first.iter().enumerate() {
                for (k2, bk2) in self.first.iter().enumerate() {
                    let w = self.weight(k, k2, l);
                    if w == ZERO {
                        continue;
                    }
                    acc += w * bk2.pointer.matrix_element(q1, &bk.pointer) * m2;
                }
            }
        }
        acc.re
    }

    /// Marginal masses of the first pointer in quadrature `q1`, and for each
    /// grid point the (unnormalized) weight of every second-pointer branch.
    /// Given a first-pointer readout, the second pointer is an incoherent
    /// mixture of its displaced branches.
    pub fn first_marginal_and_branch_weights(&self, q1: Quadrature) -> (Vec<f64>, Vec<Vec<f64>>) {
        let m = self.first[0].pointer.grid_points();
        let mut marginal = Vec::with_capacity(m);
        let mut per_branch = Vec::with_capacity(m);
        for idx in 0..m {
            let row: Vec<f64> = (0..self.second.len())
                .map(|l| {
                    let mut acc = ZERO;
                    for (k, bk) in self.first.iter().enumerate() {
                        for (k2, bk2) in self.first.iter().enumerate() {
                            acc += self.weight(k, k2, l) * pointwise_mass(&bk2.pointer, &bk.pointer, q1, idx);
                        }
                    }
                    acc.re.max(0.0)
                })
                .collect();
            marginal.push(row.iter().sum());
            per_branch.push(row);
        }
        (marginal, per_branch)
    }
}

/// Conversion from two-pointer correlators to the product weak value
/// `⟨Q P⟩ = Tr[Q P ρ]` for sequential couplings (`P` first). To leading order
///
/// ```text
/// ⟨x1 x2⟩ = g1·g2·Re Tr[QPρ]
/// ⟨p1 x2⟩ = g1·g2·Im Tr[QPρ] / (2σ1²)
/// ⟨x1 p2⟩ = ⟨p1 p2⟩ = 0
/// ```
///
/// so each pointer contributes its own calibration constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointEstimator {
    pub g1: f64,
    pub g2: f64,
    pub first: Calibration,
    pub second: Calibration,
}

impl JointEstimator {
    pub fn calibrated(g1: f64, g2: f64, pointers: [&PointerState; 2]) -> Result<Self> {
        Ok(Self {
            g1,
            g2,
            first: calibrate_pointer_response(pointers[0], g1)?,
            second: calibrate_pointer_response(pointers[1], g2)?,
        })
    }

    /// Divisor for the correlator `⟨D1 x2⟩`.
    pub fn scale(&self, q1: Quadrature) -> f64 {
        self.g1 * self.first.k(q1) * self.g2 * self.second.c_x
    }

    pub fn estimate(&self, state: &TwoPointerState) -> Complex64 {
        Complex64::new(
            state.correlator(Quadrature::Position, Quadrature::Position) / self.scale(Quadrature::Position),
            state.correlator(Quadrature::Momentum, Quadrature::Position) / self.scale(Quadrature::Momentum),
        )
    }
}

/// Estimate of `S_ρ(a,b)` from a joint weak measurement: `π_a` coupled to
/// the first pointer, then the Fourier projector `|b⟩⟨b|` to the second, no
/// post-selection.
pub fn joint_weak_product(
    rho: &DensityOperator,
    a: usize,
    b: usize,
    g1: f64,
    g2: f64,
    pointers: [&PointerState; 2],
) -> Result<Complex64> {
    let estimator = JointEstimator::calibrated(g1, g2, pointers)?;
    joint_weak_product_with(rho, a, b, &estimator, pointers, Ordering::AThenB)
}

/// As [`joint_weak_product`] with an explicit estimator and time ordering.
/// `BThenA` couples the Fourier projector first and so estimates
/// `⟨b|ρ|a⟩⟨a|b⟩`.
pub fn joint_weak_product_with(
    rho: &DensityOperator,
    a: usize,
    b: usize,
    estimator: &JointEstimator,
    pointers: [&PointerState; 2],
    ordering: Ordering,
) -> Result<Complex64> {
    let n = rho.dim();
    let pa = Observable::standard_projector(n, a)?;
    let pb = Observable::fourier_projector(n, b)?;
    let (first, second) = match ordering {
        Ordering::AThenB => (&pa, &pb),
        Ordering::BThenA => (&pb, &pa),
    };
    let state = evolve_two_pointers(rho, first, second, estimator.g1, estimator.g2, pointers)?;
    Ok(estimator.estimate(&state))
}

/// Diagnostics for one `(a, b)` cell of the scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanCell {
    pub a: usize,
    pub b: usize,
    /// Probability of the strong outcome `b` after the weak coupling.
    pub p_b: f64,
    pub value: Complex64,
    /// Set when `p_b` is below the post-selection floor.
    pub flagged: bool,
}

#[derive(Debug, Clone)]
pub struct ScanOutput {
    pub distribution: DiracDistribution,
    pub cells: Vec<ScanCell>,
    pub calibration: Calibration,
}

/// Weak `π_a` coupling followed by a strong Fourier-basis measurement, read
/// out as `k·Σ_i d_i·P(d_i, b)` in position (real part) and momentum
/// (imaginary part), using exact expectation values.
pub fn scan_protocol(rho: &DensityOperator, g: f64, pointer: &PointerState) -> Result<ScanOutput> {
    let calibration = calibrate_pointer_response(pointer, g)?;
    scan_protocol_with(rho, g, pointer, calibration)
}

pub fn scan_protocol_with(
    rho: &DensityOperator,
    g: f64,
    pointer: &PointerState,
    calibration: Calibration,
) -> Result<ScanOutput> {
    let n = rho.dim();
    let mut values = CMatrix::zeros(n, n);
    let mut cells = Vec::with_capacity(n * n);
    for a in 0..n {
        let joint = evolve_pointer(rho, &Observable::standard_projector(n, a)?, pointer, g)?;
        for b in 0..n {
            let post = PureState::fourier(n, b)?;
            let w = joint.branch_weights(Some(&post))?;
            let p_b = joint.weighted_norm(&w);
            let value = Complex64::new(
                joint.weighted_moment(&w, Quadrature::Position) / (g * calibration.c_x),
                joint.weighted_moment(&w, Quadrature::Momentum) / (g * calibration.c_p),
            );
            values[(a, b)] = value;
            cells.push(ScanCell {
                a,
                b,
                p_b,
                value,
                flagged: p_b < MIN_POSTSELECTION,
            });
        }
    }
    Ok(ScanOutput {
        distribution: DiracDistribution::unchecked(values, Ordering::AThenB)
            .expect("square by construction"),
        cells,
        calibration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirac::dirac_from_density;
    use crate::hilbert::{pure_fidelity, random_density, random_hermitian, random_pure_state, trace_distance_matrices};
    use crate::pointer::PointerParams;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn plus_i() -> PureState {
        PureState::from_slice(&[c(1.0, 0.0), c(0.0, 1.0)]).unwrap()
    }

    fn plus() -> PureState {
        PureState::from_slice(&[c(1.0, 0.0), c(1.0, 0.0)]).unwrap()
    }

    fn pointer(sigma: f64) -> PointerState {
        PointerState::gaussian(PointerParams {
            points: 512,
            extent: 12.0 * sigma,
            sigma,
        })
        .unwrap()
    }

    #[test]
    fn weak_value_examples() {
        let rho = random_density(3, 2, 4).unwrap();
        let post = random_pure_state(3, 5).unwrap();
        let id = Observable::identity(3).unwrap();
        assert!((weak_value(&id, &rho, &post).unwrap() - c(1.0, 0.0)).norm() < 1e-12);

        let pi1 = Observable::standard_projector(2, 1).unwrap();
        let wv = weak_value(&pi1, &plus_i().to_density(), &plus()).unwrap();
        assert!((wv - c(0.5, 0.5)).norm() < 1e-12);

        let z = Observable::hermitian(CMatrix::from_diagonal(&crate::hilbert::CVector::from_vec(vec![c(1.0, 0.0), c(-1.0, 0.0)]))).unwrap();
        let wv = weak_value(&z, &plus().to_density(), &PureState::basis(2, 1).unwrap()).unwrap();
        assert!((wv - c(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn weak_value_rejects_orthogonal_postselection() {
        let rho = PureState::basis(2, 0).unwrap().to_density();
        let post = PureState::basis(2, 1).unwrap();
        let id = Observable::identity(2).unwrap();
        assert!(matches!(
            weak_value(&id, &rho, &post),
            Err(WeakError::UndefinedWeakValue { .. })
        ));
        assert!(matches!(
            weak_value_decomposed(&id, &rho, &post),
            Err(WeakError::UndefinedWeakValue { .. })
        ));
    }

    #[test]
    fn pure_case_reduces_to_closed_form() {
        for seed in 0..20 {
            let psi = random_pure_state(4, seed).unwrap();
            let post = random_pure_state(4, seed + 100).unwrap();
            let op = random_hermitian(4, seed + 200).unwrap();
            let mixed_form = weak_value(&op, &psi.to_density(), &post).unwrap();
            let pure_form = pure_weak_value(&op, &psi, &post).unwrap();
            assert!((mixed_form - pure_form).norm() < 1e-12 * (1.0 + pure_form.norm()));
        }
    }

    #[test]
    fn decomposed_examples() {
        let psi = random_pure_state(3, 9).unwrap();
        let rho = psi.to_density();
        let post = random_pure_state(3, 10).unwrap();
        let op = random_hermitian(3, 11).unwrap();
        let a = weak_value(&op, &rho, &post).unwrap();
        let b = weak_value_decomposed(&op, &rho, &post).unwrap();
        assert!((a - b).norm() < 1e-12 * (1.0 + a.norm()));

        let mm = DensityOperator::maximally_mixed(2).unwrap();
        let op = random_hermitian(2, 3).unwrap();
        let post = random_pure_state(2, 4).unwrap();
        let want = post.amplitudes().dotc(&(op.matrix() * post.amplitudes()));
        assert!((weak_value_decomposed(&op, &mm, &post).unwrap() - want).norm() < 1e-12);

        let rho = random_density(4, 3, 12).unwrap();
        let op = random_hermitian(4, 13).unwrap();
        let post = random_pure_state(4, 14).unwrap();
        let a = weak_value(&op, &rho, &post).unwrap();
        let b = weak_value_decomposed(&op, &rho, &post).unwrap();
        assert!((a - b).norm() < 1e-10);
    }

    fn analytic_wv(psi: &PureState, b0: usize) -> Vec<Complex64> {
        let n = psi.dim();
        let post = PureState::fourier(n, b0).unwrap();
        (0..n)
            .map(|a| pure_weak_value(&Observable::standard_projector(n, a).unwrap(), psi, &post).unwrap())
            .collect()
    }

    #[test]
    fn reconstruct_examples() {
        let b0 = PureState::fourier(3, 0).unwrap();
        let wv = analytic_wv(&b0, 0);
        for w in &wv {
            assert!((w - c(1.0 / 3.0, 0.0)).norm() < 1e-12);
        }
        let back = reconstruct_pure_state(&wv, 0).unwrap();
        assert_abs_diff_eq!(pure_fidelity(&back, &b0), 1.0, epsilon = 1e-12);

        let wv = analytic_wv(&plus_i(), 0);
        assert!((wv[0] - c(0.5, -0.5)).norm() < 1e-12);
        assert!((wv[1] - c(0.5, 0.5)).norm() < 1e-12);
        let back = reconstruct_pure_state(&wv, 0).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((back.amplitudes()[0] - c(s, 0.0)).norm() < 1e-12);
        assert!((back.amplitudes()[1] - c(0.0, s)).norm() < 1e-12);

        let zero = PureState::basis(2, 0).unwrap();
        let wv = analytic_wv(&zero, 0);
        assert!((wv[0] - c(1.0, 0.0)).norm() < 1e-12 && wv[1].norm() < 1e-12);
        let back = reconstruct_pure_state(&wv, 0).unwrap();
        assert!((back.amplitudes()[0] - c(1.0, 0.0)).norm() < 1e-12);

        assert_eq!(
            reconstruct_pure_state(&[ZERO, ZERO], 0),
            Err(WeakError::DegenerateInput)
        );
    }

    #[test]
    fn reconstruct_with_nonzero_postselection_index() {
        let psi = random_pure_state(5, 31).unwrap();
        for b0 in 0..5 {
            let back = reconstruct_pure_state(&analytic_wv(&psi, b0), b0).unwrap();
            assert_abs_diff_eq!(pure_fidelity(&back, &psi), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn row_sum_examples() {
        let mm = DensityOperator::maximally_mixed(4).unwrap();
        for w in row_sum_check(&mm, 0).unwrap() {
            assert!((w - c(0.25, 0.0)).norm() < 1e-12);
        }
        let wv = row_sum_check(&plus_i().to_density(), 0).unwrap();
        assert!((wv[0] - c(0.5, -0.5)).norm() < 1e-12);
        assert!((wv[1] - c(0.5, 0.5)).norm() < 1e-12);
        let wv = row_sum_check(&DensityOperator::diagonal(&[0.75, 0.25]).unwrap(), 0).unwrap();
        assert!((wv[0] - c(0.75, 0.0)).norm() < 1e-12);
        assert!((wv[1] - c(0.25, 0.0)).norm() < 1e-12);
        // b0 = 1 is orthogonal to |+⟩
        assert!(matches!(
            row_sum_check(&plus().to_density(), 1),
            Err(WeakError::UndefinedWeakValue { .. })
        ));
    }

    #[test]
    fn zero_coupling_leaves_product_state() {
        let rho = random_density(3, 2, 1).unwrap();
        let op = random_hermitian(3, 2).unwrap();
        let p = pointer(1.0);
        let joint = evolve_pointer(&rho, &op, &p, 0.0).unwrap();
        for br in joint.branches() {
            assert_eq!(br.pointer, p);
        }
        assert!(trace_distance_matrices(&joint.reduced_system(), rho.matrix()) < 1e-12);
        assert_abs_diff_eq!(joint.trace(), 1.0, epsilon = 1e-10);
        let r = pointer_readout(&joint, None).unwrap();
        assert_abs_diff_eq!(r.shift_x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.shift_p, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.p_post, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn identity_coupling_translates_pointer() {
        let rho = random_density(2, 2, 3).unwrap();
        let id = Observable::identity(2).unwrap();
        let joint = evolve_pointer(&rho, &id, &pointer(1.0), 0.2).unwrap();
        assert!(trace_distance_matrices(&joint.reduced_system(), rho.matrix()) < 1e-12);
        let r = pointer_readout(&joint, None).unwrap();
        assert_abs_diff_eq!(r.shift_x, 0.2, epsilon = 1e-10);
    }

    #[test]
    fn projector_on_eigenstate_translates_by_g() {
        let rho = PureState::basis(2, 0).unwrap().to_density();
        let pi0 = Observable::standard_projector(2, 0).unwrap();
        let joint = evolve_pointer(&rho, &pi0, &pointer(1.0), 0.05).unwrap();
        let r = pointer_readout(&joint, None).unwrap();
        assert_abs_diff_eq!(r.shift_x, 0.05, epsilon = 1e-10);
        assert_abs_diff_eq!(r.shift_p, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn coupling_must_be_hermitian_and_non_negative() {
        let rho = DensityOperator::maximally_mixed(2).unwrap();
        let prod = Observable::dirac_product(2, 0, 1).unwrap();
        assert!(matches!(
            evolve_pointer(&rho, &prod, &pointer(1.0), 0.01),
            Err(WeakError::NonHermitianCoupling)
        ));
        let id = Observable::identity(2).unwrap();
        assert!(matches!(
            evolve_pointer(&rho, &id, &pointer(1.0), -0.1),
            Err(WeakError::BadCoupling(_))
        ));
    }

    #[test]
    fn evolution_preserves_norm() {
        for seed in 0..5 {
            let rho = random_density(4, 3, seed).unwrap();
            let op = random_hermitian(4, seed + 50).unwrap();
            let joint = evolve_pointer(&rho, &op, &pointer(1.0), 0.3).unwrap();
            assert_abs_diff_eq!(joint.trace(), 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(joint.reduced_system().trace().re, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn postselected_readout_tracks_weak_value() {
        let g = 0.01;
        let pi1 = Observable::standard_projector(2, 1).unwrap();
        let joint = evolve_pointer(&plus_i().to_density(), &pi1, &pointer(1.0), g).unwrap();
        let r = pointer_readout(&joint, Some(&plus())).unwrap();
        let lim = Calibration::gaussian_limit(1.0);
        assert!((r.shift_x / (g * lim.c_x) - 0.5).abs() < 1e-3);
        assert!((r.shift_p / (g * lim.c_p) - 0.5).abs() < 1e-3);
        assert!((r.p_post - 0.5).abs() < 1e-3);

        let orth = PureState::from_slice(&[c(1.0, 0.0), c(-1.0, 0.0)]).unwrap();
        // with g = 0 the state is undisturbed and ⟨−|+⟩ = 0 exactly
        let rho = plus().to_density();
        let joint = evolve_pointer(&rho, &pi1, &pointer(1.0), 0.0).unwrap();
        assert!(matches!(
            pointer_readout(&joint, Some(&orth)),
            Err(WeakError::UndefinedWeakValue { .. })
        ));
    }

    #[test]
    fn real_weak_value_gives_no_momentum_kick() {
        let z = Observable::hermitian(CMatrix::from_diagonal(&crate::hilbert::CVector::from_vec(vec![c(1.0, 0.0), c(-1.0, 0.0)]))).unwrap();
        let joint = evolve_pointer(&plus().to_density(), &z, &pointer(1.0), 0.01).unwrap();
        let r = pointer_readout(&joint, Some(&PureState::basis(2, 1).unwrap())).unwrap();
        assert!((r.shift_p / 0.01).abs() < 1e-10);
        assert!((r.shift_x / 0.01 + 1.0).abs() < 1e-6);
    }

    #[test]
    fn calibration_approaches_gaussian_limit() {
        let cal = calibrate_pointer_response(&pointer(1.0), 0.01).unwrap();
        assert!((cal.c_x - 1.0).abs() < 0.02);
        assert!((cal.c_p - 0.5).abs() < 0.01);

        let wide = calibrate_pointer_response(&pointer(2.0), 0.02).unwrap();
        assert!((cal.c_p / wide.c_p - 4.0).abs() < 0.2);
    }

    #[test]
    fn calibration_rejects_strong_coupling() {
        assert!(matches!(
            calibrate_pointer_response(&pointer(1.0), 0.5),
            Err(WeakError::CouplingTooStrong { .. })
        ));
    }

    #[test]
    fn calibration_rejects_coarse_grid() {
        let coarse = PointerState::gaussian(PointerParams {
            points: 8,
            extent: 12.0,
            sigma: 1.0,
        })
        .unwrap();
        assert!(matches!(
            calibrate_pointer_response(&coarse, 0.05),
            Err(WeakError::CalibrationFailed { .. })
        ));
    }

    #[test]
    fn joint_weak_product_examples() {
        let p = pointer(1.0);
        let g = 0.01;
        let mm = DensityOperator::maximally_mixed(2).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let est = joint_weak_product(&mm, a, b, g, g, [&p, &p]).unwrap();
                assert!((est - c(0.25, 0.0)).norm() < 0.02 * 0.25);
            }
        }
        let zero = PureState::basis(2, 0).unwrap().to_density();
        let est = joint_weak_product(&zero, 1, 0, g, g, [&p, &p]).unwrap();
        assert!(est.norm() < 1e-6);
        let est = joint_weak_product(&plus_i().to_density(), 0, 0, g, g, [&p, &p]).unwrap();
        assert!((est - c(0.25, -0.25)).norm() < 0.02 * c(0.25, -0.25).norm());
    }

    #[test]
    fn joint_estimator_respects_time_ordering() {
        let p = pointer(1.0);
        let est = JointEstimator::calibrated(0.01, 0.01, [&p, &p]).unwrap();
        let rho = random_density(3, 2, 17).unwrap();
        let want = dirac_from_density(&rho);
        for a in 0..3 {
            for b in 0..3 {
                let ab = joint_weak_product_with(&rho, a, b, &est, [&p, &p], Ordering::AThenB).unwrap();
                let ba = joint_weak_product_with(&rho, a, b, &est, [&p, &p], Ordering::BThenA).unwrap();
                let s = want.get(a, b);
                assert!((ab - s).norm() < 0.02 * s.norm().max(0.05));
                assert!((ba - s.conj()).norm() < 0.02 * s.norm().max(0.05));
            }
        }
    }

    #[test]
    fn cross_quadrature_correlators_vanish_at_leading_order() {
        let p = pointer(1.0);
        let rho = random_density(3, 3, 5).unwrap();
        let pa = Observable::standard_projector(3, 1).unwrap();
        let pb = Observable::fourier_projector(3, 2).unwrap();
        let g = 0.01;
        let st = evolve_two_pointers(&rho, &pa, &pb, g, g, [&p, &p]).unwrap();
        let scale = g * g;
        assert!(st.correlator(Quadrature::Position, Quadrature::Momentum).abs() / scale < 1e-3);
        assert!(st.correlator(Quadrature::Momentum, Quadrature::Momentum).abs() / scale < 1e-3);
    }

    #[test]
    fn scan_examples() {
        let p = pointer(1.0);
        let g = 0.01;
        let mm = DensityOperator::maximally_mixed(3).unwrap();
        let out = scan_protocol(&mm, g, &p).unwrap();
        for z in out.distribution.values().iter() {
            assert!((z - c(1.0 / 9.0, 0.0)).norm() < 0.02 / 9.0);
        }
        let zero = PureState::basis(2, 0).unwrap().to_density();
        let out = scan_protocol(&zero, g, &p).unwrap();
        let want = dirac_from_density(&zero);
        assert!(out.distribution.max_abs_diff(&want) < 0.01);
        assert!(out.cells.iter().all(|cell| !cell.flagged));
    }

    #[test]
    fn scan_flags_impossible_outcomes() {
        // |+⟩ yields Fourier outcome b = 1 only through the O(g²) disturbance
        let rho = plus().to_density();
        let g = 1e-8;
        let out = scan_protocol_with(&rho, g, &pointer(1.0), Calibration::gaussian_limit(1.0)).unwrap();
        let cell = out.cells.iter().find(|c| c.a == 0 && c.b == 1).unwrap();
        assert!(cell.flagged);
        assert!(out.cells.iter().filter(|c| c.b == 0).all(|c| !c.flagged));
        let out = scan_protocol(&rho, 0.01, &pointer(1.0)).unwrap();
        assert!(out.cells.iter().all(|c| !c.flagged));
    }

    /// The Gaussian pointer is parity symmetric, so the bias of every
    /// pointer estimate is even in g: halving g quarters it.
    #[test]
    fn scan_bias_is_second_order_in_coupling() {
        let p = pointer(1.0);
        let rho = random_density(3, 2, 23).unwrap();
        let want = dirac_from_density(&rho);
        let lim = Calibration::gaussian_limit(1.0);
        let bias = |g: f64| {
            scan_protocol_with(&rho, g, &p, lim)
                .unwrap()
                .distribution
                .max_abs_diff(&want)
        };
        let ratio = bias(0.04) / bias(0.02);
        assert!((3.2..4.8).contains(&ratio), "ratio {ratio}");
    }
}

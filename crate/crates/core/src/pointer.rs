//! Discretized one-dimensional measurement pointer.
//!
//! Position grid `x_j = −L + j·Δx`, `Δx = 2L/M`. Momentum amplitudes are the
//! unnormalized DFT of the position amplitudes on the matching grid
//! `p_k = 2πk/(MΔx)` (wrapped to negative frequencies above `M/2`), with
//! probability masses `|Φ_k|²·Δx/M`. ℏ = 1.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PointerError {
    #[error("pointer width must be positive, got {0}")]
    BadWidth(f64),
    #[error("grid needs at least 8 points, got {0}")]
    TooFewPoints(usize),
    #[error("grid half-extent {extent} is below 10 sigma ({sigma})")]
    ExtentTooSmall { extent: f64, sigma: f64 },
}

/// Grid and width of the initial Gaussian pointer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointerParams {
    pub points: usize,
    /// Half-width of the position grid.
    pub extent: f64,
    pub sigma: f64,
}

impl Default for PointerParams {
    fn default() -> Self {
        Self {
            points: 512,
            extent: 12.0,
            sigma: 1.0,
        }
    }
}

impl PointerParams {
    pub fn validate(&self) -> Result<(), PointerError> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(PointerError::BadWidth(self.sigma));
        }
        if self.points < 8 {
            return Err(PointerError::TooFewPoints(self.points));
        }
        if !(self.extent >= 10.0 * self.sigma) {
            return Err(PointerError::ExtentTooSmall {
                extent: self.extent,
                sigma: self.sigma,
            });
        }
        Ok(())
    }
}

/// Which conjugate pointer variable is read out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quadrature {
    Position,
    Momentum,
}

impl Quadrature {
    pub const BOTH: [Quadrature; 2] = [Quadrature::Position, Quadrature::Momentum];

    pub fn as_str(self) -> &'static str {
        match self {
            Quadrature::Position => "position",
            Quadrature::Momentum => "momentum",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointerState {
    sigma: f64,
    extent: f64,
    spacing: f64,
    amplitudes: Vec<Complex64>,
    momentum: Vec<Complex64>,
}

impl PointerState {
    /// The Gaussian `exp(−x²/(4σ²))`, normalized on the grid.
    pub fn gaussian(params: PointerParams) -> Result<Self, PointerError> {
        params.validate()?;
        let m = params.points;
        let spacing = 2.0 * params.extent / m as f64;
        let mut amplitudes: Vec<Complex64> = (0..m)
            .map(|j| {
                let x = -params.extent + j as f64 * spacing;
                Complex64::new((-x * x / (4.0 * params.sigma * params.sigma)).exp(), 0.0)
            })
            .collect();
        let norm = (amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>() * spacing).sqrt();
        for z in &mut amplitudes {
            *z /= norm;
        }
        let momentum = forward_fft(&amplitudes);
        Ok(Self {
            sigma: params.sigma,
            extent: params.extent,
            spacing,
            amplitudes,
            momentum,
        })
    }

    pub fn grid_points(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn grid_spacing(&self) -> f64 {
        self.spacing
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn position(&self, j: usize) -> f64 {
        -self.extent + j as f64 * self.spacing
    }

    pub fn momentum(&self, k: usize) -> f64 {
        let m = self.grid_points() as i64;
        let k = k as i64;
        let wrapped = if k < m / 2 { k } else { k - m };
        2.0 * PI * wrapped as f64 / (m as f64 * self.spacing)
    }

    /// Grid coordinates of the chosen quadrature.
    pub fn coordinates(&self, q: Quadrature) -> Vec<f64> {
        let m = self.grid_points();
        match q {
            Quadrature::Position => (0..m).map(|j| self.position(j)).collect(),
            Quadrature::Momentum => (0..m).map(|k| self.momentum(k)).collect(),
        }
    }

    pub(crate) fn amps(&self, q: Quadrature) -> &[Complex64] {
        match q {
            Quadrature::Position => &self.amplitudes,
            Quadrature::Momentum => &self.momentum,
        }
    }

    /// Factor turning `|amplitude|²` into a probability mass.
    pub(crate) fn mass_scale(&self, q: Quadrature) -> f64 {
        match q {
            Quadrature::Position => self.spacing,
            Quadrature::Momentum => self.spacing / self.grid_points() as f64,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.spacing
    }

    /// `⟨self|other⟩`
    pub fn overlap(&self, other: &PointerState) -> Complex64 {
        let acc: Complex64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(x, y)| x.conj() * y)
            .sum();
        acc * self.spacing
    }

    /// `⟨self|D|other⟩` for `D` the position or momentum operator.
    pub fn matrix_element(&self, q: Quadrature, other: &PointerState) -> Complex64 {
        let coords = self.coordinates(q);
        let acc: Complex64 = self
            .amps(q)
            .iter()
            .zip(other.amps(q))
            .zip(&coords)
            .map(|((x, y), d)| x.conj() * y * *d)
            .sum();
        acc * self.mass_scale(q)
    }

    /// Mean of the quadrature in this (normalized) state.
    pub fn mean(&self, q: Quadrature) -> f64 {
        self.matrix_element(q, self).re / self.norm_sqr()
    }

    /// Translates the wavefunction by `shift` in position, applied
    /// spectrally as `Φ(p) → Φ(p)·exp(−i·p·shift)`.
    pub fn shifted(&self, shift: f64) -> PointerState {
        if shift == 0.0 {
            return self.clone();
        }
        let m = self.grid_points();
        let momentum: Vec<Complex64> = self
            .momentum
            .iter()
            .enumerate()
            .map(|(k, z)| z * Complex64::from_polar(1.0, -self.momentum(k) * shift))
            .collect();
        let mut amplitudes = momentum.clone();
        FftPlanner::new().plan_fft_inverse(m).process(&mut amplitudes);
        for z in &mut amplitudes {
            *z /= m as f64;
        }
        PointerState {
            amplitudes,
            momentum,
            ..*self
        }
    }
}

fn forward_fft(values: &[Complex64]) -> Vec<Complex64> {
    let mut buf = values.to_vec();
    if buf.is_empty() {
        return buf;
    }
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// `Σ_j conj(bra_j)·ket_j` restricted to one grid index, scaled to a mass.
pub(crate) fn pointwise_mass(bra: &PointerState, ket: &PointerState, q: Quadrature, j: usize) -> Complex64 {
    bra.amps(q)[j].conj() * ket.amps(q)[j] * bra.mass_scale(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn default_pointer() -> PointerState {
        PointerState::gaussian(PointerParams::default()).unwrap()
    }

    #[test]
    fn gaussian_is_normalized_and_centered() {
        let p = default_pointer();
        assert_eq!(p.grid_points(), 512);
        assert_abs_diff_eq!(p.norm_sqr(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(p.mean(Quadrature::Position), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.mean(Quadrature::Momentum), 0.0, epsilon = 1e-12);
        // momentum masses also sum to one
        let m: f64 = p
            .amps(Quadrature::Momentum)
            .iter()
            .map(|z| z.norm_sqr() * p.mass_scale(Quadrature::Momentum))
            .sum();
        assert_abs_diff_eq!(m, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn variances_match_gaussian() {
        let sigma = 1.5;
        let p = PointerState::gaussian(PointerParams {
            points: 512,
            extent: 12.0 * sigma,
            sigma,
        })
        .unwrap();
        let var = |q| {
            let c = p.coordinates(q);
            p.amps(q)
                .iter()
                .zip(&c)
                .map(|(z, d)| z.norm_sqr() * d * d * p.mass_scale(q))
                .sum::<f64>()
        };
        assert_abs_diff_eq!(var(Quadrature::Position), sigma * sigma, epsilon = 1e-10);
        assert_abs_diff_eq!(
            var(Quadrature::Momentum),
            1.0 / (4.0 * sigma * sigma),
            epsilon = 1e-10
        );
    }

    #[test]
    fn spectral_shift_translates() {
        let p = default_pointer();
        let s = p.shifted(0.37);
        assert_abs_diff_eq!(s.norm_sqr(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.mean(Quadrature::Position), 0.37, epsilon = 1e-10);
        assert_abs_diff_eq!(s.mean(Quadrature::Momentum), 0.0, epsilon = 1e-12);
        // overlap of two Gaussians displaced by d is exp(−d²/(8σ²))
        assert_abs_diff_eq!(p.overlap(&s).re, (-0.37f64 * 0.37 / 8.0).exp(), epsilon = 1e-10);
    }

    #[test]
    fn params_are_validated() {
        let bad = |points, extent, sigma| {
            PointerState::gaussian(PointerParams {
                points,
                extent,
                sigma,
            })
            .unwrap_err()
        };
        assert_eq!(bad(512, 12.0, 0.0), PointerError::BadWidth(0.0));
        assert_eq!(bad(4, 12.0, 1.0), PointerError::TooFewPoints(4));
        assert!(matches!(bad(512, 5.0, 1.0), PointerError::ExtentTooSmall { .. }));
    }

    #[test]
    fn momentum_grid_wraps() {
        let p = default_pointer();
        let dp = 2.0 * PI / 24.0;
        assert_abs_diff_eq!(p.momentum(1), dp, epsilon = 1e-12);
        assert_abs_diff_eq!(p.momentum(511), -dp, epsilon = 1e-12);
    }
}

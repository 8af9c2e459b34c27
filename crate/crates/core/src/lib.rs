//! Direct measurement of the discrete Dirac quasi-probability distribution
//! with simulated weak measurements.
//!
//! - [`hilbert`]: states, observables and the standard/Fourier basis pair.
//! - [`dirac`]: `S(a,b) = ⟨a|ρ|b⟩⟨b|a⟩`, its inverse and derived identities.
//! - [`pointer`] and [`weak`]: von Neumann pointer model, weak values and
//!   the scan and joint-weak protocols.
//! - [`experiment`]: Monte Carlo shot noise, estimators, SNR studies and a
//!   tomography baseline.
//! - [`formats`]: state, Dirac and config file formats.

pub mod dirac;
pub mod experiment;
pub mod formats;
pub mod hilbert;
pub mod pointer;
pub mod weak;

pub use num_complex::Complex64;

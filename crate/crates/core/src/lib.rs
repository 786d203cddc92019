//! Numerical toolkit for the 1D nonlinear Klein-Gordon equation with a
//! convolution potential on `[0, pi]` (Dirichlet sine basis), in the regime
//! where the speed-of-light parameter `c >= 1` may be large.
//!
//! The crate provides, end to end:
//!
//! * the spectral representation: eigenvalues `lambda_j = j^2 + v_j`,
//!   frequencies `omega_j = c sqrt(c^2 + lambda_j)` in a cancellation-free
//!   form, the linear operators and the `(u, u_t) <-> psi` coordinate change
//!   ([`spectral`]);
//! * sparse polynomial Hamiltonians in the modes `(psi, conj psi)`, Poisson
//!   brackets, modulus, tame norms and the Taylor expansion of the
//!   nonlinearity ([`poly`]);
//! * small-divisor scans and nonresonance certificates for the order-0,
//!   one-tail and two-tail divisor families, plus Monte-Carlo estimation of
//!   the measure of resonant parameter sets ([`nonres`]);
//! * the homological equation, Lie transforms and the iterative construction
//!   of the Birkhoff normal form on Galerkin truncations ([`normal_form`]);
//! * time integration (exact-linear splitting for the stiff full equation,
//!   adaptive Runge-Kutta for polynomial flows) and the measurement harness
//!   for action drift, escape times, torus distance and power-law fits
//!   ([`dynamics`]).
//!
//! All numeric kernels are generic over the scalar type through the
//! [`scalar::Real`] trait (implemented for `f32` and `f64`); the `*64`
//! aliases below pick the double-precision instantiation used by the CLI.

pub mod dynamics;
pub mod error;
pub mod nonres;
pub mod normal_form;
pub mod poly;
pub mod rng;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision aliases for the main domain types.
pub type PotentialSpec64 = spectral::PotentialSpec<f64>;
pub type FrequencySet64 = spectral::FrequencySet<f64>;
pub type ModeState64 = spectral::ModeState<f64>;
pub type RealState64 = spectral::RealState<f64>;
pub type PolyHamiltonian64 = poly::PolyHamiltonian<f64>;
pub type MultiVector64 = poly::tame::MultiVector<f64>;
pub type Certificate64 = nonres::Certificate<f64>;
pub type NormalFormResult64 = normal_form::NormalFormResult<f64>;
pub type Trajectory64 = dynamics::Trajectory<f64>;
pub type ScalingFit64 = dynamics::ScalingFit<f64>;

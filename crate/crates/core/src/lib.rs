//! Hybrid classical-quantum dynamics through continuous position measurement.
//!
//! A classical particle is coupled to a harmonic oscillator whose position it
//! effectively monitors. The quantum state follows a stochastic nonlinear
//! Schrodinger equation; the classical particle responds to the measured
//! record, which equals the quantum mean position plus white noise. One shared
//! noise stream drives both halves. Alongside the trajectory integrator the
//! crate carries three independent cross-checks: a discrete Gaussian-POVM
//! measurement chain, the naive mean-field baseline, and a master-equation
//! oracle for frozen classical protocols.
//!
//! Everything is generic over the scalar type (`f32`/`f64`) through
//! [`scalar::Real`]; the `*64` aliases at the crate root pin the default
//! double-precision lane.

pub mod chain;
pub mod classical;
pub mod ensemble;
pub mod error;
pub mod hybrid;
mod kernels;
pub mod meanfield;
pub mod oscillator;
pub mod scalar;
pub mod spectral;
pub mod sse;
pub mod stats;
pub mod studies;

pub use error::{Result, SimError};
pub use scalar::Real;

/// Default double-precision lane.
pub type FockBasis64 = oscillator::FockBasis<f64>;
pub type QuantumState64 = oscillator::QuantumState<f64>;
pub type OperatorMatrix64 = oscillator::OperatorMatrix<f64>;
pub type ClassicalState64 = classical::ClassicalState<f64>;
pub type PotentialSpec64 = classical::PotentialSpec<f64>;
pub type HybridConfig64 = hybrid::HybridConfig<f64>;
pub type TrajectoryRecord64 = hybrid::TrajectoryRecord<f64>;
pub type EnsembleSummary64 = ensemble::EnsembleSummary<f64>;

/// Single-precision aliases for the generic lane.
pub type FockBasis32 = oscillator::FockBasis<f32>;
pub type QuantumState32 = oscillator::QuantumState<f32>;
pub type HybridConfig32 = hybrid::HybridConfig<f32>;
pub type TrajectoryRecord32 = hybrid::TrajectoryRecord<f32>;

//! Generic real scalar used throughout the simulation core.
//!
//! All numerics are written against [`Real`] so the whole pipeline can run
//! at `f32` or `f64`; concrete aliases for the common `f64` lane live at the
//! crate root.

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating-point scalar for states, operators and trajectories.
///
/// Bundles the field operations from `nalgebra::RealField` with primitive
/// conversions and Gaussian sampling.
pub trait Real:
    nalgebra::RealField
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + Copy
    + Default
    + std::fmt::Display
    + std::fmt::LowerExp
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Draw a standard normal variate from `rng`.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Convert an `f64` literal (exact for every constant used here).
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    /// Lossy view as `f64`, for diagnostics and error payloads.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Real for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

/// `exp(i theta)` without requiring `num_traits::Float`.
pub fn cis<T: Real>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

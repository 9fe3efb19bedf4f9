//! Classical particle: conservative force, measurement back-action force and
//! the semi-implicit Euler step.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::scalar::Real;
use crate::sse::{record_value, NoiseIncrement};

/// Default bound on |X| and |P| before a step is declared blown up.
pub const BLOWUP_BOUND: f64 = 1e9;

/// Potential V(X) for the classical particle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialSpec<T: Real> {
    Free,
    /// V = stiffness X^2 / 2.
    Harmonic { stiffness: T },
    /// V = sum coeffs[k] X^k, degree <= 6.
    Polynomial { coeffs: Vec<T> },
}

impl<T: Real> PotentialSpec<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            PotentialSpec::Free => Ok(()),
            PotentialSpec::Harmonic { stiffness } => {
                if *stiffness < T::zero() {
                    return Err(SimError::InvalidParameter {
                        name: "stiffness",
                        reason: "must be nonnegative".into(),
                    });
                }
                Ok(())
            }
            PotentialSpec::Polynomial { coeffs } => {
                if coeffs.len() > 7 {
                    return Err(SimError::InvalidParameter {
                        name: "coeffs",
                        reason: format!("degree {} exceeds 6", coeffs.len() - 1),
                    });
                }
                Ok(())
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PotentialSpec::Free => "free",
            PotentialSpec::Harmonic { .. } => "harmonic",
            PotentialSpec::Polynomial { .. } => "polynomial",
        }
    }

    /// True when the 4-dimensional first-moment system is linear.
    pub fn is_linear(&self) -> bool {
        matches!(self, PotentialSpec::Free | PotentialSpec::Harmonic { .. })
    }

    /// d^2 V / dX^2 at the origin for the linear cases.
    pub fn stiffness(&self) -> Option<T> {
        match self {
            PotentialSpec::Free => Some(T::zero()),
            PotentialSpec::Harmonic { stiffness } => Some(*stiffness),
            PotentialSpec::Polynomial { .. } => None,
        }
    }
}

/// Position and momentum of the classical particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct ClassicalState<T: Real> {
    pub x: T,
    pub p: T,
}

impl<T: Real> ClassicalState<T> {
    pub fn new(x: T, p: T) -> Self {
        ClassicalState { x, p }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.p.is_finite()
    }
}

/// Conservative force -V'(X).
pub fn potential_force<T: Real>(potential: &PotentialSpec<T>, x: T) -> T {
    match potential {
        PotentialSpec::Free => T::zero(),
        PotentialSpec::Harmonic { stiffness } => -*stiffness * x,
        PotentialSpec::Polynomial { coeffs } => {
            // -V' = -sum k c_k X^{k-1}, evaluated by Horner on the derivative
            let mut acc = T::zero();
            for (k, c) in coeffs.iter().enumerate().skip(1).rev() {
                acc = acc * x + *c * T::from_usize(k).expect("small integer");
            }
            -acc
        }
    }
}

/// Non-conservative part of the classical equation: the particle responds to
/// the measured record, F = -lambda xbar = -lambda <x> - hbar sigma dW/dt.
///
/// For lambda != 0 this is evaluated through the record value so that the
/// record form and the explicit-noise form agree bit for bit.
pub fn hybrid_force<T: Real>(lambda: T, x_expect: T, sigma: T, hbar: T, noise: NoiseIncrement<T>) -> T {
    if lambda == T::zero() {
        -(hbar * sigma * noise.rate())
    } else {
        -(lambda * record_value(x_expect, lambda, sigma, hbar, noise))
    }
}

/// Semi-implicit Euler: P' = P + F dt, X' = X + (P'/M) dt.
pub fn classical_step<T: Real>(
    state: ClassicalState<T>,
    mass: T,
    total_force: T,
    dt: T,
) -> Result<ClassicalState<T>> {
    classical_step_bounded(state, mass, total_force, dt, T::lit(BLOWUP_BOUND))
}

pub fn classical_step_bounded<T: Real>(
    state: ClassicalState<T>,
    mass: T,
    total_force: T,
    dt: T,
    bound: T,
) -> Result<ClassicalState<T>> {
    let p = state.p + total_force * dt;
    let x = state.x + (p / mass) * dt;
    if !(x.abs() <= bound) || !(p.abs() <= bound) {
        return Err(SimError::NumericalBlowup {
            context: "classical step",
            value: x.abs().max(p.abs()).as_f64(),
        });
    }
    Ok(ClassicalState { x, p })
}

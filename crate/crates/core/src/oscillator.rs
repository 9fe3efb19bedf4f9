//! Truncated harmonic-oscillator Hilbert space in the Fock (number) basis.
//!
//! Operators are dense Hermitian matrices on the truncated space; coherent
//! states are exactly representable up to an explicit, checked leakage. The
//! coupling is linear in position, so no spatial grid is needed.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::scalar::Real;

/// Occupation allowed in the top two truncated levels before a state is
/// considered unrepresentable. Checked by physical constructors and by every
/// evolution step.
pub const TOP_LEVEL_OCCUPATION_LIMIT: f64 = 1e-6;

/// Truncated Fock basis together with the oscillator parameters it carries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct FockBasis<T: Real> {
    /// Truncation dimension N (levels 0..N-1).
    pub dim: usize,
    /// Mass of the quantum particle.
    pub mass: T,
    /// Angular frequency of the oscillator.
    pub omega: T,
    /// Planck constant in simulation units.
    pub hbar: T,
}

impl<T: Real> FockBasis<T> {
    pub fn new(dim: usize, mass: T, omega: T, hbar: T) -> Result<Self> {
        let basis = FockBasis {
            dim,
            mass,
            omega,
            hbar,
        };
        basis.validate()?;
        Ok(basis)
    }

    /// Simulation units: hbar = m = omega = 1.
    pub fn natural(dim: usize) -> Result<Self> {
        Self::new(dim, T::one(), T::one(), T::one())
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(SimError::InvalidParameter {
                name: "dim",
                reason: format!("need dim >= 2, got {}", self.dim),
            });
        }
        for (name, v) in [
            ("mass", self.mass),
            ("omega", self.omega),
            ("hbar", self.hbar),
        ] {
            if !(v > T::zero()) {
                return Err(SimError::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {}", v.as_f64()),
                });
            }
        }
        Ok(())
    }

    /// Length scale sqrt(hbar / 2 m omega) of x = scale (a + a^dag).
    pub fn position_scale(&self) -> T {
        (self.hbar / (T::lit(2.0) * self.mass * self.omega)).sqrt()
    }

    /// Momentum scale sqrt(hbar m omega / 2) of p = i scale (a^dag - a).
    pub fn momentum_scale(&self) -> T {
        (self.hbar * self.mass * self.omega / T::lit(2.0)).sqrt()
    }

    /// Ground-state position variance hbar / (2 m omega).
    pub fn ground_variance(&self) -> T {
        self.hbar / (T::lit(2.0) * self.mass * self.omega)
    }

    /// Dimensionless packet label alpha = sqrt(m omega / 2 hbar) x0 + i p0 / sqrt(2 hbar m omega).
    pub fn packet_alpha(&self, x0: T, p0: T) -> Complex<T> {
        let re = (self.mass * self.omega / (T::lit(2.0) * self.hbar)).sqrt() * x0;
        let im = p0 / (T::lit(2.0) * self.hbar * self.mass * self.omega).sqrt();
        Complex::new(re, im)
    }
}

/// Tags the physical role of an operator matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorRole {
    Position,
    Momentum,
    Hamiltonian0,
    Generic,
}

/// Dense operator on the truncated space.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix<T: Real> {
    entries: DMatrix<Complex<T>>,
    role: OperatorRole,
}

impl<T: Real> OperatorMatrix<T> {
    pub fn new(entries: DMatrix<Complex<T>>, role: OperatorRole) -> Self {
        OperatorMatrix { entries, role }
    }

    pub fn entries(&self) -> &DMatrix<Complex<T>> {
        &self.entries
    }

    pub fn role(&self) -> OperatorRole {
        self.role
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Max entrywise deviation from Hermiticity.
    pub fn hermitian_deviation(&self) -> T {
        let mut max = T::zero();
        let n = self.entries.nrows();
        for i in 0..n {
            for j in i..n {
                let d = self.entries[(i, j)] - self.entries[(j, i)].conj();
                max = max.max(d.norm_sqr().sqrt());
            }
        }
        max
    }

    fn require_hermitian(&self) -> Result<()> {
        let dev = self.hermitian_deviation();
        if dev > hermitian_tol::<T>() {
            return Err(SimError::NonHermitian {
                max_dev: dev.as_f64(),
            });
        }
        Ok(())
    }
}

/// Tolerance for Hermiticity checks (1e-12 at f64; scaled by the type's eps).
pub fn hermitian_tol<T: Real>() -> T {
    T::lit(1e-12).max(T::default_epsilon() * T::lit(100.0))
}

fn imag_residue_tol<T: Real>() -> T {
    T::lit(1e-10).max(T::default_epsilon() * T::lit(1000.0))
}

fn norm_tol<T: Real>() -> T {
    T::lit(1e-10).max(T::default_epsilon() * T::lit(100.0))
}

fn variance_floor<T: Real>() -> T {
    T::lit(1e-12).max(T::default_epsilon() * T::lit(100.0))
}

fn leakage_tol<T: Real>() -> T {
    T::lit(1e-8).max(T::default_epsilon() * T::lit(1000.0))
}

/// Position, momentum and free Hamiltonian on the truncated basis.
#[derive(Debug, Clone)]
pub struct OscillatorOps<T: Real> {
    pub position: OperatorMatrix<T>,
    pub momentum: OperatorMatrix<T>,
    pub hamiltonian0: OperatorMatrix<T>,
    /// Off-diagonal of x: x[n, n+1] = position_offdiag[n].
    pub position_offdiag: Vec<T>,
    /// Diagonal of H0: hbar omega (n + 1/2).
    pub h0_diag: Vec<T>,
    /// Off-diagonal magnitude of p: p[n+1, n] = i * momentum_offdiag[n].
    pub momentum_offdiag: Vec<T>,
}

/// Build x, p and H0 from ladder matrices:
/// x = sqrt(hbar/2 m omega)(a + a^dag), p = i sqrt(hbar m omega/2)(a^dag - a),
/// H0 = hbar omega (a^dag a + 1/2).
pub fn build_operators<T: Real>(basis: &FockBasis<T>) -> OscillatorOps<T> {
    let n = basis.dim;
    let sx = basis.position_scale();
    let sp = basis.momentum_scale();

    let mut x = DMatrix::<Complex<T>>::zeros(n, n);
    let mut p = DMatrix::<Complex<T>>::zeros(n, n);
    let mut h0 = DMatrix::<Complex<T>>::zeros(n, n);

    let mut x_off = Vec::with_capacity(n - 1);
    let mut p_off = Vec::with_capacity(n - 1);
    let mut h_diag = Vec::with_capacity(n);

    for k in 0..n - 1 {
        let root = T::from_usize(k + 1).expect("small integer").sqrt();
        let xo = sx * root;
        let po = sp * root;
        x[(k, k + 1)] = Complex::new(xo, T::zero());
        x[(k + 1, k)] = Complex::new(xo, T::zero());
        p[(k + 1, k)] = Complex::new(T::zero(), po);
        p[(k, k + 1)] = Complex::new(T::zero(), -po);
        x_off.push(xo);
        p_off.push(po);
    }
    for k in 0..n {
        let e = basis.hbar * basis.omega * (T::from_usize(k).expect("small integer") + T::lit(0.5));
        h0[(k, k)] = Complex::new(e, T::zero());
        h_diag.push(e);
    }

    OscillatorOps {
        position: OperatorMatrix::new(x, OperatorRole::Position),
        momentum: OperatorMatrix::new(p, OperatorRole::Momentum),
        hamiltonian0: OperatorMatrix::new(h0, OperatorRole::Hamiltonian0),
        position_offdiag: x_off,
        h0_diag: h_diag,
        momentum_offdiag: p_off,
    }
}

/// Normalized state vector in the truncated Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState<T: Real> {
    amplitudes: DVector<Complex<T>>,
}

impl<T: Real> QuantumState<T> {
    /// Normalize and apply the top-level occupation gate.
    pub fn from_amplitudes(amplitudes: DVector<Complex<T>>) -> Result<Self> {
        let state = Self::from_amplitudes_raw(amplitudes)?;
        state.check_truncation("state constructor")?;
        Ok(state)
    }

    /// Normalize without the occupation gate (for spectral states and tests).
    pub fn from_amplitudes_raw(mut amplitudes: DVector<Complex<T>>) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm < T::lit(1e-12) {
            return Err(SimError::InvalidParameter {
                name: "amplitudes",
                reason: format!("norm {} too small to normalize", norm.as_f64()),
            });
        }
        amplitudes /= Complex::new(norm, T::zero());
        Ok(QuantumState { amplitudes })
    }

    pub fn amplitudes(&self) -> &DVector<Complex<T>> {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> T {
        self.amplitudes.norm()
    }

    /// Occupation of the two highest levels.
    pub fn top_level_occupation(&self) -> T {
        let n = self.amplitudes.len();
        self.amplitudes[n - 1].norm_sqr() + self.amplitudes[n - 2].norm_sqr()
    }

    pub fn check_truncation(&self, context: &'static str) -> Result<()> {
        let occ = self.top_level_occupation();
        if occ >= T::lit(TOP_LEVEL_OCCUPATION_LIMIT) {
            return Err(SimError::Truncation {
                context,
                value: occ.as_f64(),
                limit: TOP_LEVEL_OCCUPATION_LIMIT,
            });
        }
        Ok(())
    }

    /// `<self|other>`.
    pub fn overlap(&self, other: &QuantumState<T>) -> Complex<T> {
        self.amplitudes.dotc(&other.amplitudes)
    }
}

/// Number state |n>.
pub fn fock_state<T: Real>(basis: &FockBasis<T>, n: usize) -> Result<QuantumState<T>> {
    if n >= basis.dim {
        return Err(SimError::InvalidParameter {
            name: "n",
            reason: format!("level {n} outside truncation {}", basis.dim),
        });
    }
    let mut amps = DVector::zeros(basis.dim);
    amps[n] = Complex::new(T::one(), T::zero());
    QuantumState::from_amplitudes_raw(amps)
}

/// Coherent state centred at (x0, p0); amplitudes c_n ~ alpha^n / sqrt(n!).
///
/// Fails with `Truncation` when the probability leaked past the truncation
/// exceeds 1e-8.
pub fn coherent_state<T: Real>(basis: &FockBasis<T>, x0: T, p0: T) -> Result<QuantumState<T>> {
    coherent_state_with_leakage(basis, x0, p0).map(|(s, _)| s)
}

/// Coherent state for a given packet label alpha (used for analytic orbits,
/// where alpha(t) = alpha(0) exp(-i omega t)).
pub fn coherent_state_from_alpha<T: Real>(
    basis: &FockBasis<T>,
    alpha: Complex<T>,
) -> Result<QuantumState<T>> {
    let x0 = (T::lit(2.0) * basis.hbar / (basis.mass * basis.omega)).sqrt() * alpha.re;
    let p0 = (T::lit(2.0) * basis.hbar * basis.mass * basis.omega).sqrt() * alpha.im;
    coherent_state(basis, x0, p0)
}

/// Free-oscillator phase-space orbit of a packet centre.
pub fn coherent_orbit<T: Real>(basis: &FockBasis<T>, x0: T, p0: T, t: T) -> (T, T) {
    let w = basis.omega;
    let mw = basis.mass * w;
    let (c, s) = ((w * t).cos(), (w * t).sin());
    (x0 * c + (p0 / mw) * s, p0 * c - mw * x0 * s)
}

/// Same as [`coherent_state`], also reporting 1 - sum |c_n|^2 before
/// renormalization.
pub fn coherent_state_with_leakage<T: Real>(
    basis: &FockBasis<T>,
    x0: T,
    p0: T,
) -> Result<(QuantumState<T>, T)> {
    basis.validate()?;
    let alpha = basis.packet_alpha(x0, p0);
    let mut amps = DVector::<Complex<T>>::zeros(basis.dim);
    let c0 = (-alpha.norm_sqr() / T::lit(2.0)).exp();
    amps[0] = Complex::new(c0, T::zero());
    for n in 1..basis.dim {
        let root = T::from_usize(n).expect("small integer").sqrt();
        amps[n] = amps[n - 1] * alpha / Complex::new(root, T::zero());
    }
    let captured = amps.norm_squared();
    let leakage = T::one() - captured;
    if leakage > leakage_tol::<T>() {
        return Err(SimError::Truncation {
            context: "coherent state",
            value: leakage.as_f64(),
            limit: leakage_tol::<T>().as_f64(),
        });
    }
    let state = QuantumState::from_amplitudes(amps)?;
    Ok((state, leakage))
}

/// Squeezed vacuum with position variance `variance_scale` times the ground
/// variance. Only even levels are occupied.
pub fn squeezed_vacuum<T: Real>(basis: &FockBasis<T>, variance_scale: T) -> Result<QuantumState<T>> {
    if !(variance_scale > T::zero()) {
        return Err(SimError::InvalidParameter {
            name: "variance_scale",
            reason: "must be positive".into(),
        });
    }
    // tanh r with e^{2r} = variance_scale.
    let t = (variance_scale - T::one()) / (variance_scale + T::one());
    let mut amps = DVector::<Complex<T>>::zeros(basis.dim);
    amps[0] = Complex::new(T::one(), T::zero());
    let mut k = 0usize;
    while 2 * (k + 1) < basis.dim {
        let two_k = T::from_usize(2 * k).expect("small integer");
        let ratio = t * ((two_k + T::one()) / (two_k + T::lit(2.0))).sqrt();
        let next = amps[2 * k] * Complex::new(ratio, T::zero());
        amps[2 * k + 2] = next;
        k += 1;
    }
    QuantumState::from_amplitudes(amps)
}

/// Normalized sum of `amps[i] * states[i]`, reporting the pre-normalization
/// norm (the overlap diagnostic).
pub fn superpose<T: Real>(
    states: &[QuantumState<T>],
    amps: &[Complex<T>],
) -> Result<(QuantumState<T>, T)> {
    if states.is_empty() || states.len() != amps.len() {
        return Err(SimError::InvalidParameter {
            name: "states",
            reason: format!(
                "need equal nonempty lists, got {} states and {} amplitudes",
                states.len(),
                amps.len()
            ),
        });
    }
    let dim = states[0].dim();
    for s in states {
        if s.dim() != dim {
            return Err(SimError::DimensionMismatch {
                left: dim,
                right: s.dim(),
            });
        }
    }
    let mut sum = DVector::<Complex<T>>::zeros(dim);
    for (s, a) in states.iter().zip(amps) {
        sum.axpy(*a, s.amplitudes(), Complex::new(T::one(), T::zero()));
    }
    let prenorm = sum.norm();
    if prenorm < T::lit(1e-12) {
        return Err(SimError::DegenerateSuperposition {
            norm: prenorm.as_f64(),
        });
    }
    let state = QuantumState::from_amplitudes(sum)?;
    Ok((state, prenorm))
}

/// `<psi|op|psi>` for Hermitian `op`; the imaginary residue is asserted small
/// and discarded.
pub fn expect<T: Real>(op: &OperatorMatrix<T>, psi: &QuantumState<T>) -> Result<T> {
    op.require_hermitian()?;
    if op.dim() != psi.dim() {
        return Err(SimError::DimensionMismatch {
            left: op.dim(),
            right: psi.dim(),
        });
    }
    let applied = op.entries() * psi.amplitudes();
    let value = psi.amplitudes().dotc(&applied);
    debug_assert!(
        value.im.abs() <= imag_residue_tol::<T>(),
        "imaginary residue {} in expectation",
        value.im.as_f64()
    );
    if value.im.abs() > imag_residue_tol::<T>() {
        return Err(SimError::NonHermitian {
            max_dev: value.im.abs().as_f64(),
        });
    }
    Ok(value.re)
}

/// Variance `<op^2> - <op>^2`, clamped at zero against rounding.
pub fn variance<T: Real>(op: &OperatorMatrix<T>, psi: &QuantumState<T>) -> Result<T> {
    op.require_hermitian()?;
    if op.dim() != psi.dim() {
        return Err(SimError::DimensionMismatch {
            left: op.dim(),
            right: psi.dim(),
        });
    }
    let applied = op.entries() * psi.amplitudes();
    let mean = psi.amplitudes().dotc(&applied);
    if mean.im.abs() > imag_residue_tol::<T>() {
        return Err(SimError::NonHermitian {
            max_dev: mean.im.abs().as_f64(),
        });
    }
    let second = applied.norm_squared();
    let var = second - mean.re * mean.re;
    if var < T::zero() {
        debug_assert!(var >= -variance_floor::<T>(), "variance {}", var.as_f64());
        return Ok(T::zero());
    }
    Ok(var)
}

/// Check the public norm invariant (unit within 1e-10 at f64).
pub fn norm_is_unit<T: Real>(state: &QuantumState<T>) -> bool {
    (state.norm() - T::one()).abs() <= norm_tol::<T>()
}

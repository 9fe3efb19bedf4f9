//! Spectral decompositions: the position operator's eigenbasis (the
//! measurement quadrature grid) and exact unitary propagators for the
//! tridiagonal Hamiltonians appearing here.
//!
//! Both x and H0 + lambda X x are real symmetric, so eigenvector matrices are
//! real orthogonal; basis changes act on the real and imaginary parts of a
//! state separately, which halves the work of the hot transforms.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;

use crate::error::{Result, SimError};
use crate::oscillator::{OscillatorOps, QuantumState};
use crate::scalar::{cis, Real};

fn spectrum_residual_tol<T: Real>() -> T {
    T::lit(1e-8).max(T::default_epsilon() * T::lit(1e4))
}

fn split<T: Real>(amps: &DVector<Complex<T>>) -> (DVector<T>, DVector<T>) {
    let n = amps.len();
    (
        DVector::from_iterator(n, amps.iter().map(|c| c.re)),
        DVector::from_iterator(n, amps.iter().map(|c| c.im)),
    )
}

fn join<T: Real>(re: DVector<T>, im: DVector<T>) -> DVector<Complex<T>> {
    DVector::from_iterator(re.len(), re.iter().zip(im.iter()).map(|(&r, &i)| Complex::new(r, i)))
}

/// Sorted eigendecomposition of the truncated position operator.
#[derive(Debug, Clone)]
pub struct PositionSpectrum<T: Real> {
    eigenvalues: DVector<T>,
    vectors: DMatrix<T>,
}

impl<T: Real> PositionSpectrum<T> {
    pub fn new(ops: &OscillatorOps<T>) -> Result<Self> {
        let n = ops.position_offdiag.len() + 1;
        let mut m = DMatrix::<T>::zeros(n, n);
        for k in 0..n - 1 {
            m[(k, k + 1)] = ops.position_offdiag[k];
            m[(k + 1, k)] = ops.position_offdiag[k];
        }
        let (eigenvalues, vectors) = sorted_symmetric_eigen(m.clone());

        // invariant: x v = lambda v within tolerance, eigenvalues ascending
        let residual =
            (&m * &vectors - &vectors * DMatrix::from_diagonal(&eigenvalues)).amax();
        if residual > spectrum_residual_tol::<T>() {
            return Err(SimError::NumericalBlowup {
                context: "position eigendecomposition residual",
                value: residual.as_f64(),
            });
        }
        Ok(PositionSpectrum {
            eigenvalues,
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.len() == 0
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &DVector<T> {
        &self.eigenvalues
    }

    /// Components of `amps` along the position eigenvectors.
    pub fn to_eigenbasis(&self, amps: &DVector<Complex<T>>) -> DVector<Complex<T>> {
        let (re, im) = split(amps);
        join(self.vectors.tr_mul(&re), self.vectors.tr_mul(&im))
    }

    pub fn from_eigenbasis(&self, w: &DVector<Complex<T>>) -> DVector<Complex<T>> {
        let (re, im) = split(w);
        join(&self.vectors * re, &self.vectors * im)
    }

    /// The s-th position eigenstate as a normalized state vector.
    pub fn eigenstate(&self, s: usize) -> Result<QuantumState<T>> {
        if s >= self.len() {
            return Err(SimError::InvalidParameter {
                name: "s",
                reason: format!("index {s} outside spectrum of size {}", self.len()),
            });
        }
        let col = self
            .vectors
            .column(s)
            .map(|v| Complex::new(v, T::zero()));
        QuantumState::from_amplitudes_raw(DVector::from_column_slice(col.as_slice()))
    }
}

/// Eigendecomposition of H = H0 + coupling x (real symmetric tridiagonal),
/// prepared for repeated exact propagation.
#[derive(Debug, Clone)]
pub struct HamiltonianEigen<T: Real> {
    energies: DVector<T>,
    vectors: DMatrix<T>,
}

impl<T: Real> HamiltonianEigen<T> {
    /// Diagonalize H0 + `coupling` x, where `coupling` = lambda X.
    pub fn new(ops: &OscillatorOps<T>, coupling: T) -> Self {
        let n = ops.h0_diag.len();
        let mut m = DMatrix::<T>::zeros(n, n);
        for k in 0..n {
            m[(k, k)] = ops.h0_diag[k];
        }
        for k in 0..n - 1 {
            let v = coupling * ops.position_offdiag[k];
            m[(k, k + 1)] = v;
            m[(k + 1, k)] = v;
        }
        let (energies, vectors) = sorted_symmetric_eigen(m);
        HamiltonianEigen { energies, vectors }
    }

    pub fn energies(&self) -> &DVector<T> {
        &self.energies
    }

    /// exp(-i H dt / hbar) applied to `amps`.
    pub fn propagate(&self, amps: &DVector<Complex<T>>, dt: T, hbar: T) -> DVector<Complex<T>> {
        let (re, im) = split(amps);
        let mut wr = self.vectors.tr_mul(&re);
        let mut wi = self.vectors.tr_mul(&im);
        for s in 0..wr.len() {
            let phase = cis(-self.energies[s] * dt / hbar);
            let (r, i) = (wr[s], wi[s]);
            wr[s] = r * phase.re - i * phase.im;
            wi[s] = r * phase.im + i * phase.re;
        }
        join(&self.vectors * wr, &self.vectors * wi)
    }
}

fn sorted_symmetric_eigen<T: Real>(m: DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let eig = SymmetricEigen::new(m);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("finite eigenvalues")
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::<T>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues of a Hermitian matrix.
pub fn hermitian_eigenvalues<T: Real>(m: DMatrix<Complex<T>>) -> DVector<T> {
    SymmetricEigen::new(m).eigenvalues
}

/// Half trace norm of the difference of two Hermitian matrices.
pub fn trace_distance<T: Real>(a: &DMatrix<Complex<T>>, b: &DMatrix<Complex<T>>) -> Result<T> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(SimError::DimensionMismatch {
            left: a.nrows(),
            right: b.nrows(),
        });
    }
    let diff = a - b;
    let eigs = hermitian_eigenvalues(diff);
    let mut sum = T::zero();
    for e in eigs.iter() {
        sum += e.abs();
    }
    Ok(sum / T::lit(2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oscillator::{build_operators, coherent_state, coherent_state_from_alpha, FockBasis};

    #[test]
    fn position_spectrum_satisfies_eigen_invariant() {
        let basis = FockBasis::<f64>::natural(64).unwrap();
        let ops = build_operators(&basis);
        let spec = PositionSpectrum::new(&ops).unwrap();
        for s in 1..spec.len() {
            assert!(spec.eigenvalues()[s] > spec.eigenvalues()[s - 1]);
        }
        // symmetric spectrum of the truncated tridiagonal
        let n = spec.len();
        for s in 0..n {
            assert!((spec.eigenvalues()[s] + spec.eigenvalues()[n - 1 - s]).abs() < 1e-10);
        }
    }

    #[test]
    fn eigenbasis_roundtrip_preserves_states() {
        let basis = FockBasis::<f64>::natural(32).unwrap();
        let ops = build_operators(&basis);
        let spec = PositionSpectrum::new(&ops).unwrap();
        let psi = coherent_state(&basis, 1.0, -0.3).unwrap();
        let w = spec.to_eigenbasis(psi.amplitudes());
        let back = spec.from_eigenbasis(&w);
        assert!((back - psi.amplitudes()).norm() < 1e-12);
        // Parseval
        assert!((w.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigenstate_is_position_concentrated() {
        let basis = FockBasis::<f64>::natural(16).unwrap();
        let ops = build_operators(&basis);
        let spec = PositionSpectrum::new(&ops).unwrap();
        let s = 7;
        let psi = spec.eigenstate(s).unwrap();
        let w = spec.to_eigenbasis(psi.amplitudes());
        for k in 0..spec.len() {
            let expected = if k == s { 1.0 } else { 0.0 };
            assert!((w[k].norm() - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_propagator_follows_coherent_orbit() {
        let basis = FockBasis::<f64>::natural(64).unwrap();
        let ops = build_operators(&basis);
        let eigen = HamiltonianEigen::new(&ops, 0.0);
        let (x0, p0) = (1.0, 0.5);
        let psi0 = coherent_state(&basis, x0, p0).unwrap();
        let t = 0.7;
        let mut amps = psi0.amplitudes().clone();
        for _ in 0..7 {
            amps = eigen.propagate(&amps, 0.1, 1.0);
        }
        let alpha0 = basis.packet_alpha(x0, p0);
        let alpha_t = alpha0 * cis(-t);
        let expected = coherent_state_from_alpha(&basis, alpha_t).unwrap();
        let fid = expected.amplitudes().dotc(&amps).norm();
        assert!(1.0 - fid < 1e-12, "fidelity loss {}", 1.0 - fid);
        assert!((amps.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_distance_of_equal_matrices_is_zero() {
        let basis = FockBasis::<f64>::natural(8).unwrap();
        let ops = build_operators(&basis);
        let m = ops.hamiltonian0.entries().clone();
        assert!(trace_distance(&m, &m).unwrap() < 1e-14);
    }

    #[test]
    fn trace_distance_of_orthogonal_pure_states_is_one() {
        let n = 6;
        let mut a = DMatrix::<Complex<f64>>::zeros(n, n);
        a[(0, 0)] = Complex::new(1.0, 0.0);
        let mut b = DMatrix::<Complex<f64>>::zeros(n, n);
        b[(1, 1)] = Complex::new(1.0, 0.0);
        let d = trace_distance(&a, &b).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }
}

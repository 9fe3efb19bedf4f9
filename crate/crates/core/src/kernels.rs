//! Structure-aware applications of the oscillator operators.
//!
//! x is tridiagonal with zero diagonal, p is tridiagonal imaginary and H0 is
//! diagonal in the Fock basis, so the trajectory inner loops never touch a
//! dense matrix.

use num_complex::Complex;

use crate::scalar::Real;

/// out = x psi, with x[n, n+1] = x[n+1, n] = off[n].
pub(crate) fn apply_position<T: Real>(off: &[T], psi: &[Complex<T>], out: &mut [Complex<T>]) {
    let n = psi.len();
    for k in 0..n {
        let mut acc = Complex::new(T::zero(), T::zero());
        if k > 0 {
            acc += psi[k - 1] * off[k - 1];
        }
        if k + 1 < n {
            acc += psi[k + 1] * off[k];
        }
        out[k] = acc;
    }
}

/// <psi|x|psi> for a normalized psi.
pub(crate) fn position_mean<T: Real>(off: &[T], psi: &[Complex<T>]) -> T {
    let mut mean = T::zero();
    for k in 0..psi.len() - 1 {
        mean += T::lit(2.0) * off[k] * (psi[k].conj() * psi[k + 1]).re;
    }
    mean
}

/// <psi|p|psi> with p[n+1, n] = i off[n].
pub(crate) fn momentum_mean<T: Real>(off: &[T], psi: &[Complex<T>]) -> T {
    let mut mean = T::zero();
    for k in 0..psi.len() - 1 {
        mean += T::lit(2.0) * off[k] * (psi[k].conj() * psi[k + 1]).im;
    }
    mean
}

/// Mean and variance of x in one pass; variance clamped at zero.
pub(crate) fn position_stats<T: Real>(
    off: &[T],
    psi: &[Complex<T>],
    scratch: &mut [Complex<T>],
) -> (T, T) {
    apply_position(off, psi, scratch);
    let mut mean = T::zero();
    let mut second = T::zero();
    for k in 0..psi.len() {
        mean += (psi[k].conj() * scratch[k]).re;
        second += scratch[k].norm_sqr();
    }
    let var = (second - mean * mean).max(T::zero());
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oscillator::{build_operators, coherent_state, expect, variance, FockBasis};

    #[test]
    fn kernels_agree_with_dense_operators() {
        let basis = FockBasis::<f64>::natural(32).unwrap();
        let ops = build_operators(&basis);
        let psi = coherent_state(&basis, 1.3, -0.7).unwrap();
        let amps = psi.amplitudes().as_slice();

        let mean_x = position_mean(&ops.position_offdiag, amps);
        assert!((mean_x - expect(&ops.position, &psi).unwrap()).abs() < 1e-12);

        let mean_p = momentum_mean(&ops.momentum_offdiag, amps);
        assert!((mean_p - expect(&ops.momentum, &psi).unwrap()).abs() < 1e-12);

        let mut scratch = vec![Complex::new(0.0, 0.0); basis.dim];
        let (m, v) = position_stats(&ops.position_offdiag, amps, &mut scratch);
        assert!((m - mean_x).abs() < 1e-13);
        assert!((v - variance(&ops.position, &psi).unwrap()).abs() < 1e-12);
    }
}

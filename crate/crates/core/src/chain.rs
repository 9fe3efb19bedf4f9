//! Discrete-time ground truth: repeated exact unitary evolution plus a
//! Gaussian Kraus measurement of position, with the record sampled from its
//! true distribution.
//!
//! The continuum limit holds Delta^2 delta_t fixed; the width mapping
//! Delta^2 = hbar^2 sigma^2 / (lambda^2 delta_t) makes the per-step Kraus
//! exponent reproduce the per-unit-time exponent of the continuous theory, so
//! chain trajectory statistics converge onto exactly one of the two SDE
//! coefficient conventions (the chain-consistent one).

use nalgebra::DVector;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::classical::{classical_step, potential_force, ClassicalState};
use crate::error::{Result, SimError};
use crate::hybrid::{
    HybridConfig, RecordMeta, RecordRow, RunMode, TrajectoryEngine, TrajectoryOutcome,
    TrajectoryRecord,
};
use crate::kernels;
use crate::oscillator::{OscillatorOps, QuantumState};
use crate::scalar::{cis, Real};
use crate::spectral::{HamiltonianEigen, PositionSpectrum};
use crate::sse::NoiseStream;

/// Gaussian resolution of one measurement slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct KrausWidth<T: Real> {
    /// Variance Delta^2 of the Gaussian resolution (length^2).
    pub delta_sq: T,
    pub delta_t: T,
}

impl<T: Real> KrausWidth<T> {
    /// Width for tests and diagnostics, bypassing the continuum mapping.
    pub fn explicit(delta_sq: T, delta_t: T) -> Result<Self> {
        if !(delta_sq > T::zero()) || !(delta_t > T::zero()) {
            return Err(SimError::InvalidParameter {
                name: "delta_sq",
                reason: "width and step must be positive".into(),
            });
        }
        Ok(KrausWidth { delta_sq, delta_t })
    }

    pub fn delta(&self) -> T {
        self.delta_sq.sqrt()
    }
}

/// The unique width making the discrete chain reproduce the continuous
/// exponent: Delta^2 = hbar^2 sigma^2 / (lambda^2 delta_t).
pub fn width_from_continuum<T: Real>(
    lambda: T,
    sigma: T,
    hbar: T,
    delta_t: T,
) -> Result<KrausWidth<T>> {
    if lambda == T::zero() {
        return Err(SimError::InvalidParameter {
            name: "lambda",
            reason: "chain width undefined for lambda = 0".into(),
        });
    }
    if !(sigma > T::zero()) {
        return Err(SimError::InvalidParameter {
            name: "sigma",
            reason: "must be positive".into(),
        });
    }
    if !(delta_t > T::zero()) {
        return Err(SimError::InvalidParameter {
            name: "delta_t",
            reason: "must be positive".into(),
        });
    }
    let delta_sq = (hbar * hbar * sigma * sigma) / (lambda * lambda * delta_t);
    Ok(KrausWidth { delta_sq, delta_t })
}

/// Result of one chain slice.
#[derive(Debug, Clone)]
pub struct ChainStepOutcome<T: Real> {
    pub state: QuantumState<T>,
    pub x_bar: T,
    /// Norm after the Kraus operator, prefactor (4 pi Delta^2)^{-1/2}
    /// included (the path-weight factor).
    pub prenorm: T,
    /// Change of <x> across the measurement substep (mean-zero over records).
    pub meas_kick: T,
    /// The standardized Gaussian used in the record draw.
    pub xi: T,
}

struct MeasurementOutcome<T: Real> {
    x_bar: T,
    prenorm: T,
    meas_kick: T,
    xi: T,
}

/// Sample the record from the exact mixture sum_s |w_s|^2 N(x_s, Delta^2)
/// and apply the Gaussian Kraus weights, in the position eigenbasis.
fn measurement_substep<T: Real>(
    w: &mut DVector<Complex<T>>,
    eigenvalues: &DVector<T>,
    width: &KrausWidth<T>,
    stream: &mut NoiseStream,
) -> Result<MeasurementOutcome<T>> {
    let n = w.len();
    let mut total = T::zero();
    let mut mean_before = T::zero();
    for s in 0..n {
        let p = w[s].norm_sqr();
        total += p;
        mean_before += eigenvalues[s] * p;
    }
    mean_before /= total;

    // two-stage exact draw: eigenvalue by Born weight, then Gaussian smear
    let u: T = stream.next_uniform();
    let target = u * total;
    let mut cum = T::zero();
    let mut chosen = n - 1;
    for s in 0..n {
        cum += w[s].norm_sqr();
        if cum >= target {
            chosen = s;
            break;
        }
    }
    let xi: T = stream.next_standard_normal();
    let x_bar = eigenvalues[chosen] + width.delta() * xi;

    let quarter_inv = T::one() / (T::lit(4.0) * width.delta_sq);
    let mut norm_sq = T::zero();
    let mut mean_after = T::zero();
    for s in 0..n {
        let d = eigenvalues[s] - x_bar;
        let g = (-d * d * quarter_inv).exp();
        w[s] *= g;
        let p = w[s].norm_sqr();
        norm_sq += p;
        mean_after += eigenvalues[s] * p;
    }
    if !(norm_sq > T::lit(1e-300)) || norm_sq == T::zero() {
        return Err(SimError::DegenerateState {
            norm: norm_sq.as_f64(),
        });
    }
    mean_after /= norm_sq;
    let prefactor = (T::lit(4.0) * T::pi() * width.delta_sq).sqrt().recip();
    let prenorm = prefactor * norm_sq.sqrt();

    let inv = norm_sq.sqrt().recip();
    for s in 0..n {
        w[s] *= inv;
    }
    Ok(MeasurementOutcome {
        x_bar,
        prenorm,
        meas_kick: mean_after - mean_before,
        xi,
    })
}

/// One chain slice: exact unitary substep under H0 + lambda X x, then the
/// Gaussian measurement with record sampled from its true probability.
pub fn chain_step<T: Real>(
    psi: &QuantumState<T>,
    x_classical: T,
    width: &KrausWidth<T>,
    spectrum: &PositionSpectrum<T>,
    ops: &OscillatorOps<T>,
    lambda: T,
    hbar: T,
    stream: &mut NoiseStream,
) -> Result<ChainStepOutcome<T>> {
    let coupling = lambda * x_classical;
    let evolved = if coupling == T::zero() {
        let mut amps = psi.amplitudes().clone();
        for (a, e) in amps.iter_mut().zip(&ops.h0_diag) {
            *a *= cis(-*e * width.delta_t / hbar);
        }
        amps
    } else {
        let eigen = HamiltonianEigen::new(ops, coupling);
        eigen.propagate(psi.amplitudes(), width.delta_t, hbar)
    };

    let mut w = spectrum.to_eigenbasis(&evolved);
    let meas = measurement_substep(&mut w, spectrum.eigenvalues(), width, stream)?;
    let amps = spectrum.from_eigenbasis(&w);
    let state = QuantumState::from_amplitudes_raw(amps)?;
    state.check_truncation("chain step")?;
    Ok(ChainStepOutcome {
        state,
        x_bar: meas.x_bar,
        prenorm: meas.prenorm,
        meas_kick: meas.meas_kick,
        xi: meas.xi,
    })
}

/// Run a full chain trajectory (mode must be `Chain`).
pub fn run_chain<T: Real>(config: &HybridConfig<T>, seed: u64) -> Result<TrajectoryRecord<T>> {
    if config.mode != RunMode::Chain {
        return Err(SimError::InvalidParameter {
            name: "mode",
            reason: "run_chain requires mode = chain".into(),
        });
    }
    let engine = TrajectoryEngine::new(config.clone())?;
    Ok(engine.run(seed, 0)?.record)
}

pub(crate) fn run_chain_with_engine<T: Real>(
    engine: &TrajectoryEngine<T>,
    master_seed: u64,
    index: u64,
) -> Result<TrajectoryOutcome<T>> {
    let config = engine.config();
    let dt = config.numerics.dt;
    let stride = config.numerics.output_stride;
    let n_steps = config.n_steps();
    let lambda = config.coupling.lambda;
    let hbar = config.basis.hbar;
    let measured = lambda != T::zero();
    let width = if measured {
        Some(width_from_continuum(lambda, config.coupling.sigma, hbar, dt)?)
    } else {
        None
    };
    let ops = engine.ops();
    let spectrum = engine.spectrum();
    let off = &ops.position_offdiag;
    let p_off = &ops.momentum_offdiag;

    let frozen = config.frozen_x;
    let mut psi = engine.initial_state_for_run()?;
    let mut cl = ClassicalState::new(frozen.unwrap_or(config.classical.x0), config.classical.p0);
    let mut stream = NoiseStream::for_trajectory(master_seed, index);
    let mut rows = Vec::with_capacity(n_steps / stride + 1);
    let mut scratch = DVector::<Complex<T>>::zeros(config.basis.dim);
    let mut log_weight = T::zero();
    let mut kick_sum = T::zero();

    // propagator cache for the slowly varying classical position
    let mut cached: Option<(u64, HamiltonianEigen<T>)> = None;
    let h0_full: Vec<Complex<T>> = ops
        .h0_diag
        .iter()
        .map(|&e| cis(-e * dt / hbar))
        .collect();

    for k in 0..n_steps {
        let amps_now = psi.amplitudes();
        let (x_mean, x_var) =
            kernels::position_stats(off, amps_now.as_slice(), scratch.as_mut_slice());
        let p_mean = kernels::momentum_mean(p_off, amps_now.as_slice());

        let start_cl = cl;
        let x_used = frozen.unwrap_or(cl.x);
        let coupling = lambda * x_used;

        // unitary substep
        let evolved = if coupling == T::zero() {
            let mut amps = amps_now.clone();
            for (a, ph) in amps.iter_mut().zip(&h0_full) {
                *a *= *ph;
            }
            amps
        } else {
            let key = coupling.as_f64().to_bits();
            let rebuild = match &cached {
                Some((k0, _)) => *k0 != key,
                None => true,
            };
            if rebuild {
                cached = Some((key, HamiltonianEigen::new(ops, coupling)));
            }
            let (_, eigen) = cached.as_ref().expect("cache populated");
            eigen.propagate(amps_now, dt, hbar)
        };

        // measurement substep
        let (next, x_bar, prenorm, dw_col) = if let Some(width) = &width {
            let mut w = spectrum.to_eigenbasis(&evolved);
            let meas = measurement_substep(&mut w, spectrum.eigenvalues(), width, &mut stream)
                .map_err(|e| e.at_step(k))?;
            let amps = spectrum.from_eigenbasis(&w);
            log_weight += meas.prenorm.ln();
            kick_sum += meas.meas_kick;
            (amps, meas.x_bar, meas.prenorm, meas.xi * dt.sqrt())
        } else {
            (evolved, x_mean, T::one(), T::zero())
        };
        let state = QuantumState::from_amplitudes_raw(next).map_err(|e| e.at_step(k))?;
        state.check_truncation("chain step").map_err(|e| e.at_step(k))?;

        // classical response to the measured record (Eq. 8 form)
        if frozen.is_none() {
            let force = potential_force(&config.classical.potential, cl.x) + -(lambda * x_bar);
            cl = classical_step(cl, config.classical.mass, force, dt).map_err(|e| e.at_step(k))?;
        }

        if k % stride == 0 {
            rows.push(RecordRow {
                t: T::from_usize(k).expect("step index") * dt,
                x_cl: start_cl.x,
                p_cl: start_cl.p,
                x_expect: x_mean,
                p_expect: p_mean,
                x_var,
                x_bar,
                prenorm,
                dw: dw_col,
            });
        }
        psi = state;
    }

    let amps = psi.amplitudes();
    let (x_mean, x_var) = kernels::position_stats(off, amps.as_slice(), scratch.as_mut_slice());
    let p_mean = kernels::momentum_mean(p_off, amps.as_slice());
    rows.push(RecordRow {
        t: T::from_usize(n_steps).expect("step count") * dt,
        x_cl: frozen.unwrap_or(cl.x),
        p_cl: cl.p,
        x_expect: x_mean,
        p_expect: p_mean,
        x_var,
        x_bar: x_mean,
        prenorm: T::one(),
        dw: T::zero(),
    });

    let record = TrajectoryRecord {
        meta: RecordMeta {
            config_digest: engine.digest.clone(),
            seed: master_seed,
            stream_index: index,
            convention: config.convention,
            integrator: config.integrator,
            mode: config.mode,
            dt,
            output_stride: stride,
            n_steps,
            noise_draws: stream.draws(),
            cv_noise_sum: T::zero(),
            cv_meas_kick_sum: kick_sum,
            log_weight,
        },
        rows,
    };
    if !record.all_finite() {
        return Err(SimError::NumericalBlowup {
            context: "chain record",
            value: f64::NAN,
        });
    }
    Ok(TrajectoryOutcome {
        record,
        final_state: psi,
        final_classical: cl,
    })
}

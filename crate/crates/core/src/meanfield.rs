//! Naive mean-field dynamics: the classical particle responds to the quantum
//! expectation value, the quantum state evolves unitarily with the classical
//! position as an external parameter. No noise, no collapse. Kept as the
//! baseline the measurement-based scheme is compared against, together with
//! its closed first-moment (Ehrenfest) oracle for linear potentials.

use nalgebra::DVector;
use num_complex::Complex;

use crate::classical::{classical_step, potential_force, ClassicalState, PotentialSpec};
use crate::error::{Result, SimError};
use crate::hybrid::{
    HybridConfig, RecordMeta, RecordRow, RunMode, TrajectoryEngine, TrajectoryOutcome,
    TrajectoryRecord,
};
use crate::kernels;
use crate::oscillator::{OscillatorOps, QuantumState};
use crate::scalar::{cis, Real};
use crate::spectral::HamiltonianEigen;
use crate::sse::NoiseStream;

/// Joint state of the mean-field system.
#[derive(Debug, Clone)]
pub struct MeanFieldState<T: Real> {
    pub psi: QuantumState<T>,
    pub classical: ClassicalState<T>,
}

/// One mean-field step: exact spectral exponential of H0 + lambda X x for the
/// quantum state, semi-implicit Euler under -V'(X) - lambda <x> for the
/// classical one. Start-of-step values throughout.
pub fn meanfield_step<T: Real>(
    state: &MeanFieldState<T>,
    ops: &OscillatorOps<T>,
    potential: &PotentialSpec<T>,
    classical_mass: T,
    lambda: T,
    hbar: T,
    dt: T,
) -> Result<MeanFieldState<T>> {
    let coupling = lambda * state.classical.x;
    let evolved = propagate_exact(ops, state.psi.amplitudes(), coupling, dt, hbar);
    let psi = QuantumState::from_amplitudes_raw(evolved)?;
    psi.check_truncation("mean-field step")?;

    let x_mean = kernels::position_mean(&ops.position_offdiag, state.psi.amplitudes().as_slice());
    let force = potential_force(potential, state.classical.x) - lambda * x_mean;
    let classical = classical_step(state.classical, classical_mass, force, dt)?;
    Ok(MeanFieldState { psi, classical })
}

fn propagate_exact<T: Real>(
    ops: &OscillatorOps<T>,
    amps: &DVector<Complex<T>>,
    coupling: T,
    dt: T,
    hbar: T,
) -> DVector<Complex<T>> {
    if coupling == T::zero() {
        let mut out = amps.clone();
        for (a, e) in out.iter_mut().zip(&ops.h0_diag) {
            *a *= cis(-*e * dt / hbar);
        }
        out
    } else {
        HamiltonianEigen::new(ops, coupling).propagate(amps, dt, hbar)
    }
}

/// Run a full mean-field trajectory (mode must be `MeanField`).
pub fn run_meanfield<T: Real>(config: &HybridConfig<T>, seed: u64) -> Result<TrajectoryRecord<T>> {
    if config.mode != RunMode::MeanField {
        return Err(SimError::InvalidParameter {
            name: "mode",
            reason: "run_meanfield requires mode = mean-field".into(),
        });
    }
    let engine = TrajectoryEngine::new(config.clone())?;
    Ok(engine.run(seed, 0)?.record)
}

pub(crate) fn run_meanfield_with_engine<T: Real>(
    engine: &TrajectoryEngine<T>,
    master_seed: u64,
    index: u64,
) -> Result<TrajectoryOutcome<T>> {
    let config = engine.config();
    let ops = engine.ops();
    let dt = config.numerics.dt;
    let stride = config.numerics.output_stride;
    let n_steps = config.n_steps();
    let lambda = config.coupling.lambda;
    let hbar = config.basis.hbar;
    let off = &ops.position_offdiag;
    let p_off = &ops.momentum_offdiag;
    let frozen = config.frozen_x;

    let mut psi = engine.initial_state_for_run()?;
    let mut cl = ClassicalState::new(frozen.unwrap_or(config.classical.x0), config.classical.p0);
    let mut rows = Vec::with_capacity(n_steps / stride + 1);
    let mut scratch = DVector::<Complex<T>>::zeros(config.basis.dim);

    let mut cached: Option<(u64, HamiltonianEigen<T>)> = None;
    let h0_full: Vec<Complex<T>> = ops.h0_diag.iter().map(|&e| cis(-e * dt / hbar)).collect();

    for k in 0..n_steps {
        let amps_now = psi.amplitudes();
        let (x_mean, x_var) =
            kernels::position_stats(off, amps_now.as_slice(), scratch.as_mut_slice());
        let p_mean = kernels::momentum_mean(p_off, amps_now.as_slice());
        let start_cl = cl;

        let coupling = lambda * frozen.unwrap_or(cl.x);
        let evolved = if coupling == T::zero() {
            let mut out = amps_now.clone();
            for (a, ph) in out.iter_mut().zip(&h0_full) {
                *a *= *ph;
            }
            out
        } else {
            let key = coupling.as_f64().to_bits();
            let rebuild = match &cached {
                Some((k0, _)) => *k0 != key,
                None => true,
            };
            if rebuild {
                cached = Some((key, HamiltonianEigen::new(ops, coupling)));
            }
            cached.as_ref().expect("cache populated").1.propagate(amps_now, dt, hbar)
        };
        let prenorm = evolved.norm();
        let state = QuantumState::from_amplitudes_raw(evolved).map_err(|e| e.at_step(k))?;
        state.check_truncation("mean-field step").map_err(|e| e.at_step(k))?;

        if frozen.is_none() {
            let force = potential_force(&config.classical.potential, cl.x) - lambda * x_mean;
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
                x_bar: x_mean,
                prenorm,
                dw: T::zero(),
            });
        }
        psi = state;
    }

    let amps = psi.amplitudes();
    let (x_mean, x_var) = kernels::position_stats(off, amps.as_slice(), scratch.as_mut_slice());
    let p_mean = kernels::momentum_mean(p_off, amps.as_slice());
    rows.push(RecordRow {
        t: T::from_usize(n_steps).expect("step count") * dt,
        x_cl: cl.x,
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
            noise_draws: NoiseStream::for_trajectory(master_seed, index).draws(),
            cv_noise_sum: T::zero(),
            cv_meas_kick_sum: T::zero(),
            log_weight: T::zero(),
        },
        rows,
    };
    Ok(TrajectoryOutcome {
        record,
        final_state: psi,
        final_classical: cl,
    })
}

/// First-moment trajectories of the mean-field system for linear potentials.
#[derive(Debug, Clone)]
pub struct EhrenfestTrajectory<T: Real> {
    pub t: Vec<T>,
    pub x_cl: Vec<T>,
    pub p_cl: Vec<T>,
    pub x_q: Vec<T>,
    pub p_q: Vec<T>,
}

/// High-accuracy RK4 solution (internal step dt/10) of the closed linear
/// system
///
///   M X'' = -V'(X) - lambda <x>,   m <x>'' = -m omega^2 <x> - lambda X.
///
/// `initial` is (X, P, <x>, <p>). Only free and harmonic potentials admit
/// this closed form.
pub fn ehrenfest_oracle<T: Real>(
    config: &HybridConfig<T>,
    initial: [T; 4],
    t_grid: &[T],
) -> Result<EhrenfestTrajectory<T>> {
    let stiffness = config
        .classical
        .potential
        .stiffness()
        .ok_or_else(|| SimError::UnsupportedPotential {
            kind: config.classical.potential.kind_name().into(),
        })?;
    if t_grid.is_empty() {
        return Err(SimError::InvalidParameter {
            name: "t_grid",
            reason: "empty grid".into(),
        });
    }
    let big_m = config.classical.mass;
    let m = config.basis.mass;
    let omega = config.basis.omega;
    let lambda = config.coupling.lambda;
    let mw2 = m * omega * omega;

    let rhs = |y: [T; 4]| -> [T; 4] {
        [
            y[1] / big_m,
            -stiffness * y[0] - lambda * y[2],
            y[3] / m,
            -mw2 * y[2] - lambda * y[0],
        ]
    };
    let add = |a: [T; 4], b: [T; 4], s: T| -> [T; 4] {
        [a[0] + b[0] * s, a[1] + b[1] * s, a[2] + b[2] * s, a[3] + b[3] * s]
    };

    let h_target = config.numerics.dt / T::lit(10.0);
    let mut y = initial;
    let mut t = T::zero();
    let mut out = EhrenfestTrajectory {
        t: Vec::with_capacity(t_grid.len()),
        x_cl: Vec::with_capacity(t_grid.len()),
        p_cl: Vec::with_capacity(t_grid.len()),
        x_q: Vec::with_capacity(t_grid.len()),
        p_q: Vec::with_capacity(t_grid.len()),
    };

    for &target in t_grid {
        if target < t {
            return Err(SimError::InvalidParameter {
                name: "t_grid",
                reason: "must be ascending".into(),
            });
        }
        let span = target - t;
        if span > T::zero() {
            let n_sub = (span / h_target).ceil().to_usize().unwrap_or(1).max(1);
            let h = span / T::from_usize(n_sub).expect("substep count");
            for _ in 0..n_sub {
                let k1 = rhs(y);
                let k2 = rhs(add(y, k1, h / T::lit(2.0)));
                let k3 = rhs(add(y, k2, h / T::lit(2.0)));
                let k4 = rhs(add(y, k3, h));
                for i in 0..4 {
                    y[i] += h / T::lit(6.0)
                        * (k1[i] + T::lit(2.0) * k2[i] + T::lit(2.0) * k3[i] + k4[i]);
                }
            }
            t = target;
        }
        out.t.push(target);
        out.x_cl.push(y[0]);
        out.p_cl.push(y[1]);
        out.x_q.push(y[2]);
        out.p_q.push(y[3]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::{ClassicalParams, CouplingParams, NumericsParams, PacketSpec};
    use crate::oscillator::{build_operators, coherent_state_from_alpha, FockBasis};
    use crate::scalar::cis;
    use crate::sse::{Convention, Integrator};

    fn config(
        lambda: f64,
        potential: PotentialSpec<f64>,
        packets: Vec<PacketSpec<f64>>,
        t_final: f64,
    ) -> HybridConfig<f64> {
        HybridConfig {
            basis: FockBasis::natural(64).unwrap(),
            classical: ClassicalParams {
                mass: 1.0,
                potential,
                x0: 0.0,
                p0: 0.0,
            },
            coupling: CouplingParams { lambda, sigma: 1.0 },
            initial_packets: packets,
            numerics: NumericsParams {
                dt: 1e-3,
                t_final,
                output_stride: 1,
            },
            convention: Convention::ChainConsistent,
            integrator: Integrator::SplitStep,
            mode: RunMode::MeanField,
            seed: 0,
            frozen_x: None,
        }
    }

    fn packet(x: f64, p: f64, amp: f64) -> PacketSpec<f64> {
        PacketSpec {
            x,
            p,
            amp_re: amp,
            amp_im: 0.0,
        }
    }

    #[test]
    fn uncoupled_meanfield_follows_exact_orbit() {
        let cfg = config(0.0, PotentialSpec::Free, vec![packet(1.0, 0.0, 1.0)], 2.0);
        let engine = TrajectoryEngine::new(cfg.clone()).unwrap();
        let out = engine.run(0, 0).unwrap();
        let basis = cfg.basis;
        let alpha_t = basis.packet_alpha(1.0, 0.0) * cis(-2.0);
        let exact = coherent_state_from_alpha(&basis, alpha_t).unwrap();
        let fid = exact.amplitudes().dotc(out.final_state.amplitudes()).norm();
        assert!(1.0 - fid < 1e-6, "fidelity loss {}", 1.0 - fid);
    }

    #[test]
    fn meanfield_norm_is_conserved_each_step() {
        let cfg = config(
            0.5,
            PotentialSpec::Harmonic { stiffness: 1.0 },
            vec![packet(1.0, 0.0, 1.0)],
            1.0,
        );
        let engine = TrajectoryEngine::new(cfg).unwrap();
        let out = engine.run(0, 0).unwrap();
        for row in &out.record.rows {
            assert!((row.prenorm - 1.0).abs() < 1e-12);
        }
    }

    // The mean-field pathology: for an even superposition the classical force
    // at t = 0 responds to the average position, which is zero.
    #[test]
    fn superposition_initial_force_vanishes() {
        let amp = std::f64::consts::FRAC_1_SQRT_2;
        let cfg = config(
            1.0,
            PotentialSpec::Harmonic { stiffness: 1.0 },
            vec![packet(-5.0, 0.0, amp), packet(5.0, 0.0, amp)],
            0.1,
        );
        let engine = TrajectoryEngine::new(cfg.clone()).unwrap();
        let psi = cfg.initial_state().unwrap();
        let ops = build_operators(&cfg.basis);
        let x_mean = kernels::position_mean(&ops.position_offdiag, psi.amplitudes().as_slice());
        let force =
            potential_force(&cfg.classical.potential, 0.0) - cfg.coupling.lambda * x_mean;
        assert!(force.abs() < 1e-6, "force {force}");
        // and the classical particle stays put initially
        let out = engine.run(0, 0).unwrap();
        assert!(out.record.rows[5].x_cl.abs() < 1e-6);
    }

    #[test]
    fn ehrenfest_oracle_rejects_anharmonic_potentials() {
        let cfg = config(
            0.3,
            PotentialSpec::Polynomial {
                coeffs: vec![0.0, 0.0, 0.0, 1.0],
            },
            vec![packet(0.0, 0.0, 1.0)],
            1.0,
        );
        let err = ehrenfest_oracle(&cfg, [0.0, 0.0, 0.0, 0.0], &[0.0, 1.0]).unwrap_err();
        assert!(matches!(err, SimError::UnsupportedPotential { .. }));
    }

    #[test]
    fn uncoupled_oracle_gives_independent_orbits() {
        let cfg = config(
            0.0,
            PotentialSpec::Harmonic { stiffness: 1.0 },
            vec![packet(0.0, 0.0, 1.0)],
            1.0,
        );
        let grid: Vec<f64> = (0..=50).map(|k| k as f64 * 0.1).collect();
        let tr = ehrenfest_oracle(&cfg, [1.0, 0.0, 0.5, 0.0], &grid).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            assert!((tr.x_cl[i] - t.cos()).abs() < 1e-9);
            assert!((tr.x_q[i] - 0.5 * t.cos()).abs() < 1e-9);
        }
    }

    // Hand 2x2 eigenproblem: with M = m and stiffness m omega^2 the normal
    // modes X +- <x> oscillate at sqrt(omega^2 +- lambda/m).
    #[test]
    fn oracle_normal_modes_have_split_frequencies() {
        let lambda = 0.25;
        let cfg = config(
            lambda,
            PotentialSpec::Harmonic { stiffness: 1.0 },
            vec![packet(0.0, 0.0, 1.0)],
            1.0,
        );
        let grid: Vec<f64> = (0..=80).map(|k| k as f64 * 0.25).collect();
        let tr = ehrenfest_oracle(&cfg, [1.0, 0.0, 0.25, 0.0], &grid).unwrap();
        let s0_plus = 1.0 + 0.25;
        let s0_minus = 1.0 - 0.25;
        let w_plus = (1.0 + lambda).sqrt();
        let w_minus = (1.0 - lambda).sqrt();
        for (i, &t) in grid.iter().enumerate() {
            let s_plus = tr.x_cl[i] + tr.x_q[i];
            let s_minus = tr.x_cl[i] - tr.x_q[i];
            assert!(
                (s_plus - s0_plus * (w_plus * t).cos()).abs() < 1e-8,
                "plus mode at t={t}"
            );
            assert!(
                (s_minus - s0_minus * (w_minus * t).cos()).abs() < 1e-8,
                "minus mode at t={t}"
            );
        }
    }

    // Perturbative frequency splitting: energy swaps between the sectors with
    // beat period close to 2 pi m omega / lambda for small lambda.
    #[test]
    fn oracle_beat_period_matches_perturbative_estimate() {
        let lambda = 0.1;
        let cfg = config(
            lambda,
            PotentialSpec::Harmonic { stiffness: 1.0 },
            vec![packet(0.0, 0.0, 1.0)],
            1.0,
        );
        let w_plus = (1.0_f64 + lambda).sqrt();
        let w_minus = (1.0_f64 - lambda).sqrt();
        let t_half = std::f64::consts::PI / (w_plus - w_minus);
        let approx = std::f64::consts::PI / (lambda / 1.0);
        assert!((t_half - approx).abs() / approx < 0.01);

        let tr = ehrenfest_oracle(&cfg, [1.0, 0.0, 0.0, 0.0], &[0.0, t_half]).unwrap();
        // classical sector has handed its energy to the quantum sector
        let e_cl = 0.5 * tr.p_cl[1] * tr.p_cl[1] + 0.5 * tr.x_cl[1] * tr.x_cl[1];
        assert!(e_cl < 0.01, "classical energy {e_cl}");
    }

    // The mean-field integrator converges to the oracle at first order in dt.
    #[test]
    fn meanfield_tracks_ehrenfest_oracle() {
        let run_dev = |dt: f64| -> f64 {
            let mut cfg = config(
                0.4,
                PotentialSpec::Harmonic { stiffness: 1.0 },
                vec![packet(1.0, 0.0, 1.0)],
                5.0,
            );
            cfg.classical.x0 = 0.5;
            cfg.numerics.dt = dt;
            cfg.numerics.output_stride = 1;
            let engine = TrajectoryEngine::new(cfg.clone()).unwrap();
            let out = engine.run(0, 0).unwrap();
            let grid: Vec<f64> = out.record.rows.iter().map(|r| r.t).collect();
            let tr = ehrenfest_oracle(&cfg, [0.5, 0.0, 1.0, 0.0], &grid).unwrap();
            out.record
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    (r.x_cl - tr.x_cl[i])
                        .abs()
                        .max((r.x_expect - tr.x_q[i]).abs())
                })
                .fold(0.0, f64::max)
        };
        let dev_coarse = run_dev(1e-3);
        assert!(dev_coarse < 5e-3, "deviation {dev_coarse} at dt=1e-3");
        let dev_fine = run_dev(1e-4);
        assert!(dev_fine < 0.2 * dev_coarse, "first-order convergence");
        assert!(dev_fine < 5e-4);
    }
}

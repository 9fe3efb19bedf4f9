//! One full hybrid trajectory: a single seeded noise stream drives the
//! quantum state equation and the classical Langevin step in lockstep.
//!
//! Per step, in order: draw dW, evaluate start-of-step expectations, emit the
//! measured record, advance the quantum state with the current classical
//! position, advance the classical particle with the same dW. All
//! expectations entering drifts, noise and record are start-of-step (Ito).

use nalgebra::DVector;
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classical::{
    classical_step, hybrid_force, potential_force, ClassicalState, PotentialSpec,
};
use crate::error::{Result, SimError};
use crate::kernels;
use crate::oscillator::{
    build_operators, coherent_state, superpose, FockBasis, OscillatorOps, QuantumState,
};
use crate::scalar::{cis, Real};
use crate::spectral::PositionSpectrum;
use crate::sse::{
    make_coefficients, measurement_update, record_value, sse_step, Convention, Integrator,
    NoiseStream, SdeCoefficients,
};
use crate::{chain, meanfield};

/// Coupling constants between the sectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct CouplingParams<T: Real> {
    pub lambda: T,
    pub sigma: T,
}

/// Classical sector: mass, potential and initial phase-space point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct ClassicalParams<T: Real> {
    pub mass: T,
    pub potential: PotentialSpec<T>,
    pub x0: T,
    pub p0: T,
}

/// One coherent packet of the initial quantum superposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct PacketSpec<T: Real> {
    pub x: T,
    pub p: T,
    pub amp_re: T,
    pub amp_im: T,
}

impl<T: Real> PacketSpec<T> {
    pub fn amplitude(&self) -> Complex<T> {
        Complex::new(self.amp_re, self.amp_im)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct NumericsParams<T: Real> {
    pub dt: T,
    pub t_final: T,
    pub output_stride: usize,
}

/// Which dynamics a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Hybrid,
    MeanField,
    Chain,
}

/// Complete description of one run; hashing it pins the trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct HybridConfig<T: Real> {
    pub basis: FockBasis<T>,
    pub classical: ClassicalParams<T>,
    pub coupling: CouplingParams<T>,
    pub initial_packets: Vec<PacketSpec<T>>,
    pub numerics: NumericsParams<T>,
    pub convention: Convention,
    pub integrator: Integrator,
    pub mode: RunMode,
    pub seed: u64,
    /// When set, the classical position is pinned to this value and the
    /// classical step is skipped (diagnostic mode with a closed quantum-sector
    /// master equation).
    pub frozen_x: Option<T>,
}

impl<T: Real> HybridConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.basis.validate()?;
        self.classical.potential.validate()?;
        if !(self.classical.mass > T::zero()) {
            return Err(SimError::InvalidParameter {
                name: "classical.mass",
                reason: "must be positive".into(),
            });
        }
        if self.coupling.sigma < T::zero() {
            return Err(SimError::InvalidParameter {
                name: "coupling.sigma",
                reason: "must be nonnegative".into(),
            });
        }
        if self.coupling.lambda != T::zero() && self.coupling.sigma == T::zero() {
            return Err(SimError::InvalidParameter {
                name: "coupling.sigma",
                reason: "must be positive when lambda != 0".into(),
            });
        }
        if self.initial_packets.is_empty() {
            return Err(SimError::InvalidParameter {
                name: "initial_packets",
                reason: "need at least one packet".into(),
            });
        }
        let n = &self.numerics;
        if !(n.dt > T::zero()) {
            return Err(SimError::InvalidParameter {
                name: "numerics.dt",
                reason: "must be positive".into(),
            });
        }
        if n.t_final < n.dt {
            return Err(SimError::InvalidParameter {
                name: "numerics.t_final",
                reason: "must be at least dt".into(),
            });
        }
        if n.output_stride < 1 {
            return Err(SimError::InvalidParameter {
                name: "numerics.output_stride",
                reason: "must be at least 1".into(),
            });
        }
        let steps = self.n_steps();
        if steps == 0 {
            return Err(SimError::InvalidParameter {
                name: "numerics",
                reason: "horizon shorter than one step".into(),
            });
        }
        if steps % n.output_stride != 0 {
            return Err(SimError::InvalidParameter {
                name: "numerics.output_stride",
                reason: format!("{} steps not divisible by stride {}", steps, n.output_stride),
            });
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        let ratio = (self.numerics.t_final / self.numerics.dt).round();
        ratio.to_usize().unwrap_or(0)
    }

    /// Canonical content hash of the full configuration.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        let out = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in out {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }

    /// Build the initial quantum state from the packet list.
    pub fn initial_state(&self) -> Result<QuantumState<T>> {
        if self.initial_packets.len() == 1 && {
            let a = self.initial_packets[0].amplitude();
            a.im == T::zero() && a.re > T::zero()
        } {
            let p = self.initial_packets[0];
            return coherent_state(&self.basis, p.x, p.p);
        }
        let mut states = Vec::with_capacity(self.initial_packets.len());
        let mut amps = Vec::with_capacity(self.initial_packets.len());
        for p in &self.initial_packets {
            states.push(coherent_state(&self.basis, p.x, p.p)?);
            amps.push(p.amplitude());
        }
        let (state, _) = superpose(&states, &amps)?;
        Ok(state)
    }
}

/// One output row: the state at time t plus the increments of the step that
/// starts there. The final row carries no step (dw = 0, prenorm = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct RecordRow<T: Real> {
    pub t: T,
    pub x_cl: T,
    pub p_cl: T,
    pub x_expect: T,
    pub p_expect: T,
    pub x_var: T,
    pub x_bar: T,
    pub prenorm: T,
    pub dw: T,
}

/// Run provenance and whole-trajectory diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct RecordMeta<T: Real> {
    pub config_digest: String,
    pub seed: u64,
    pub stream_index: u64,
    pub convention: Convention,
    pub integrator: Integrator,
    pub mode: RunMode,
    pub dt: T,
    pub output_stride: usize,
    pub n_steps: usize,
    pub noise_draws: u64,
    /// Sum of 2 c_diff Var(x) dW over all steps (exactly mean-zero control
    /// variate for the final position expectation).
    pub cv_noise_sum: T,
    /// Chain runs: sum of measurement-substep kicks to <x> (exactly
    /// mean-zero).
    pub cv_meas_kick_sum: T,
    /// Chain runs: accumulated log of pre-normalization Kraus norms.
    pub log_weight: T,
}

/// Time series of one noise realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct TrajectoryRecord<T: Real> {
    pub meta: RecordMeta<T>,
    pub rows: Vec<RecordRow<T>>,
}

impl<T: Real> TrajectoryRecord<T> {
    /// Bit-level equality of every numeric field (stricter than PartialEq).
    pub fn bitwise_eq(&self, other: &TrajectoryRecord<T>) -> bool {
        if self.rows.len() != other.rows.len() {
            return false;
        }
        let key = |r: &RecordRow<T>| {
            [r.t, r.x_cl, r.p_cl, r.x_expect, r.p_expect, r.x_var, r.x_bar, r.prenorm, r.dw]
                .map(|v| v.as_f64().to_bits())
        };
        self.meta == other.meta
            && self
                .rows
                .iter()
                .zip(&other.rows)
                .all(|(a, b)| key(a) == key(b))
    }

    pub fn all_finite(&self) -> bool {
        self.rows.iter().all(|r| {
            [r.t, r.x_cl, r.p_cl, r.x_expect, r.p_expect, r.x_var, r.x_bar, r.prenorm, r.dw]
                .iter()
                .all(|v| v.is_finite())
        })
    }
}

/// Record plus the final states, for ensemble-level analyses.
#[derive(Debug, Clone)]
pub struct TrajectoryOutcome<T: Real> {
    pub record: TrajectoryRecord<T>,
    pub final_state: QuantumState<T>,
    pub final_classical: ClassicalState<T>,
}

/// Prebuilt operators and spectra for repeated runs of one configuration.
pub struct TrajectoryEngine<T: Real> {
    pub(crate) config: HybridConfig<T>,
    pub(crate) ops: OscillatorOps<T>,
    pub(crate) spectrum: PositionSpectrum<T>,
    pub(crate) coeffs: SdeCoefficients<T>,
    pub(crate) digest: String,
    h0_half_phases: Vec<Complex<T>>,
    initial_override: Option<QuantumState<T>>,
}

impl<T: Real> TrajectoryEngine<T> {
    pub fn new(config: HybridConfig<T>) -> Result<Self> {
        config.validate()?;
        let ops = build_operators(&config.basis);
        let spectrum = PositionSpectrum::new(&ops)?;
        let coeffs = make_coefficients(
            config.coupling.lambda,
            config.coupling.sigma,
            config.basis.hbar,
            config.convention,
        )?;
        let dt = config.numerics.dt;
        let hbar = config.basis.hbar;
        let h0_half_phases = ops
            .h0_diag
            .iter()
            .map(|&e| cis(-e * dt / (T::lit(2.0) * hbar)))
            .collect();
        let digest = config.digest();
        Ok(TrajectoryEngine {
            config,
            ops,
            spectrum,
            coeffs,
            digest,
            h0_half_phases,
            initial_override: None,
        })
    }

    /// Replace the packet-built initial state (for non-coherent starts such
    /// as squeezed vacua in the convention studies).
    pub fn with_initial_state(mut self, psi: QuantumState<T>) -> Result<Self> {
        if psi.dim() != self.config.basis.dim {
            return Err(SimError::DimensionMismatch {
                left: psi.dim(),
                right: self.config.basis.dim,
            });
        }
        self.initial_override = Some(psi);
        Ok(self)
    }

    pub(crate) fn initial_state_for_run(&self) -> Result<QuantumState<T>> {
        match &self.initial_override {
            Some(psi) => Ok(psi.clone()),
            None => self.config.initial_state(),
        }
    }

    pub fn config(&self) -> &HybridConfig<T> {
        &self.config
    }

    pub fn ops(&self) -> &OscillatorOps<T> {
        &self.ops
    }

    pub fn spectrum(&self) -> &PositionSpectrum<T> {
        &self.spectrum
    }

    pub fn coeffs(&self) -> &SdeCoefficients<T> {
        &self.coeffs
    }

    /// Run the trajectory for seed stream (master_seed, index).
    pub fn run(&self, master_seed: u64, index: u64) -> Result<TrajectoryOutcome<T>> {
        match self.config.mode {
            RunMode::Hybrid => self.run_hybrid(master_seed, index, None),
            RunMode::Chain => chain::run_chain_with_engine(self, master_seed, index),
            RunMode::MeanField => meanfield::run_meanfield_with_engine(self, master_seed, index),
        }
    }

    /// Hybrid run that also returns the quantum state at every output row
    /// (for ensemble-average density matrices on a grid).
    pub fn run_collecting_states(
        &self,
        master_seed: u64,
        index: u64,
    ) -> Result<(TrajectoryOutcome<T>, Vec<QuantumState<T>>)> {
        let mut states = Vec::new();
        let outcome = match self.config.mode {
            RunMode::Hybrid => self.run_hybrid(master_seed, index, Some(&mut states))?,
            _ => {
                return Err(SimError::InvalidParameter {
                    name: "mode",
                    reason: "state collection is implemented for hybrid mode".into(),
                })
            }
        };
        Ok((outcome, states))
    }

    /// Exact unitary substep exp(-i(H0 + lambda X x)dt/hbar) in Strang-split
    /// form; exactly diagonal when the coupling term vanishes.
    pub(crate) fn apply_split_unitary(&self, amps: &mut DVector<Complex<T>>, lambda_x: T) {
        for (a, ph) in amps.iter_mut().zip(&self.h0_half_phases) {
            *a *= *ph;
        }
        if lambda_x != T::zero() {
            let factor = -lambda_x * self.config.numerics.dt / self.config.basis.hbar;
            let mut w = self.spectrum.to_eigenbasis(amps);
            for (ws, xs) in w.iter_mut().zip(self.spectrum.eigenvalues().iter()) {
                *ws *= cis(factor * *xs);
            }
            *amps = self.spectrum.from_eigenbasis(&w);
        }
        for (a, ph) in amps.iter_mut().zip(&self.h0_half_phases) {
            *a *= *ph;
        }
    }

    fn run_hybrid(
        &self,
        master_seed: u64,
        index: u64,
        mut collect: Option<&mut Vec<QuantumState<T>>>,
    ) -> Result<TrajectoryOutcome<T>> {
        let config = &self.config;
        if config.mode != RunMode::Hybrid {
            return Err(SimError::InvalidParameter {
                name: "mode",
                reason: "hybrid runner called with non-hybrid mode".into(),
            });
        }
        let dt = config.numerics.dt;
        let stride = config.numerics.output_stride;
        let n_steps = config.n_steps();
        let lambda = config.coupling.lambda;
        let sigma = config.coupling.sigma;
        let hbar = config.basis.hbar;
        let off = &self.ops.position_offdiag;
        let p_off = &self.ops.momentum_offdiag;

        let frozen = config.frozen_x;
        let mut psi = self.initial_state_for_run()?;
        let mut cl = ClassicalState::new(
            frozen.unwrap_or(config.classical.x0),
            config.classical.p0,
        );
        let mut stream = NoiseStream::for_trajectory(master_seed, index);
        let mut rows = Vec::with_capacity(n_steps / stride + 1);
        let mut scratch = DVector::<Complex<T>>::zeros(config.basis.dim);
        let mut cv_noise_sum = T::zero();

        for k in 0..n_steps {
            let amps = psi.amplitudes();
            let (x_mean, x_var) =
                kernels::position_stats(off, amps.as_slice(), scratch.as_mut_slice());
            let p_mean = kernels::momentum_mean(p_off, amps.as_slice());

            let noise = stream.next_increment(dt);
            let x_bar = if lambda == T::zero() {
                x_mean
            } else {
                record_value(x_mean, lambda, sigma, hbar, noise)
            };
            cv_noise_sum += T::lit(2.0) * self.coeffs.c_diff * x_var * noise.dw;

            let x_used = frozen.unwrap_or(cl.x);
            let start_cl = cl;
            let step = match config.integrator {
                Integrator::EulerMaruyama => sse_step(&psi, x_used, &self.coeffs, &self.ops, noise)
                    .map_err(|e| e.at_step(k))?,
                Integrator::SplitStep => {
                    let mut amps_u = psi.amplitudes().clone();
                    self.apply_split_unitary(&mut amps_u, lambda * x_used);
                    measurement_update(&amps_u, off, x_mean, &self.coeffs, noise)
                        .map_err(|e| e.at_step(k))?
                }
            };
            if frozen.is_none() {
                let force = potential_force(&config.classical.potential, cl.x)
                    + hybrid_force(lambda, x_mean, sigma, hbar, noise);
                cl = classical_step(cl, config.classical.mass, force, dt)
                    .map_err(|e| e.at_step(k))?;
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
                    prenorm: step.prenorm,
                    dw: noise.dw,
                });
                if let Some(states) = collect.as_deref_mut() {
                    states.push(psi.clone());
                }
            }
            psi = step.state;
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
        if let Some(states) = collect.as_deref_mut() {
            states.push(psi.clone());
        }

        let record = TrajectoryRecord {
            meta: RecordMeta {
                config_digest: self.digest.clone(),
                seed: master_seed,
                stream_index: index,
                convention: config.convention,
                integrator: config.integrator,
                mode: config.mode,
                dt,
                output_stride: stride,
                n_steps,
                noise_draws: stream.draws(),
                cv_noise_sum,
                cv_meas_kick_sum: T::zero(),
                log_weight: T::zero(),
            },
            rows,
        };
        debug_assert_eq!(record.meta.noise_draws, n_steps as u64);
        if !record.all_finite() {
            return Err(SimError::NumericalBlowup {
                context: "trajectory record",
                value: f64::NAN,
            });
        }
        Ok(TrajectoryOutcome {
            record,
            final_state: psi,
            final_classical: cl,
        })
    }
}

/// Run one hybrid trajectory (mode must be `Hybrid`).
pub fn run_trajectory<T: Real>(config: &HybridConfig<T>, seed: u64) -> Result<TrajectoryRecord<T>> {
    if config.mode != RunMode::Hybrid {
        return Err(SimError::InvalidParameter {
            name: "mode",
            reason: "run_trajectory requires mode = hybrid".into(),
        });
    }
    let engine = TrajectoryEngine::new(config.clone())?;
    Ok(engine.run(seed, 0)?.record)
}

/// Run one trajectory in whatever mode the config selects.
pub fn run_any<T: Real>(config: &HybridConfig<T>, seed: u64) -> Result<TrajectoryOutcome<T>> {
    let engine = TrajectoryEngine::new(config.clone())?;
    engine.run(seed, 0)
}

/// Thermal choice of the measurement width: sigma = sqrt(2 M gamma kB T)/hbar.
pub fn thermal_sigma<T: Real>(mass: T, gamma: T, kb_t: T, hbar: T) -> Result<T> {
    for (name, v) in [
        ("mass", mass),
        ("gamma", gamma),
        ("kb_t", kb_t),
        ("hbar", hbar),
    ] {
        if !(v > T::zero()) {
            return Err(SimError::InvalidParameter {
                name,
                reason: format!("must be positive, got {}", v.as_f64()),
            });
        }
    }
    Ok((T::lit(2.0) * mass * gamma * kb_t).sqrt() / hbar)
}

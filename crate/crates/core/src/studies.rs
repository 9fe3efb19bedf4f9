//! Whole-experiment orchestrations: convention adjudication against the
//! measurement chain, localization-time scaling sweeps, and the weak
//! convergence-order measurement.

use serde::{Deserialize, Serialize};

use crate::ensemble::{
    moment_curves, run_ensemble_outcomes, BranchSpec, EnsembleOutcomes, Localization,
    BranchClassifier,
};
use crate::error::{Result, SimError};
use crate::hybrid::{HybridConfig, RunMode, TrajectoryEngine, TrajectoryOutcome};
use crate::oscillator::squeezed_vacuum;
use crate::scalar::Real;
use crate::sse::{Convention, Integrator};
use crate::stats::{loglog_slope, mean_se, quartiles, separation_z, variance_se};

fn run_outcomes_with_state<T: Real>(
    config: &HybridConfig<T>,
    n: usize,
    master_seed: u64,
    initial: Option<crate::oscillator::QuantumState<T>>,
) -> Result<Vec<TrajectoryOutcome<T>>> {
    use rayon::prelude::*;
    let mut engine = TrajectoryEngine::new(config.clone())?;
    if let Some(psi) = initial {
        engine = engine.with_initial_state(psi)?;
    }
    let results: Vec<Result<TrajectoryOutcome<T>>> = (0..n)
        .into_par_iter()
        .map(|i| engine.run(master_seed, i as u64))
        .collect();
    let mut outcomes = Vec::with_capacity(n);
    let mut failed = 0usize;
    let mut first: Option<SimError> = None;
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                failed += 1;
                if first.is_none() {
                    first = Some(e);
                }
            }
        }
    }
    if failed * 100 > n {
        return Err(SimError::EnsembleFailures {
            failed,
            total: n,
            first: Box::new(first.expect("failure recorded")),
        });
    }
    Ok(outcomes)
}

/// Mean and statistical error of one scalar estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct Estimate<T: Real> {
    pub value: T,
    pub se: T,
}

impl<T: Real> From<(T, T)> for Estimate<T> {
    fn from((value, se): (T, T)) -> Self {
        Estimate { value, se }
    }
}

/// Outcome of the chain-vs-SDE adjudication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct ConventionStudy<T: Real> {
    /// Ground-state moment match at t_final: mean of <x>.
    pub mean_chain: Estimate<T>,
    pub mean_sde: Estimate<T>,
    pub mean_z: T,
    /// Ground-state moment match: variance of <x> across trajectories.
    pub var_chain: Estimate<T>,
    pub var_sde: Estimate<T>,
    pub var_z: T,
    /// Broad-packet variance-decay curves E[Var(x)](t).
    pub curve_t: Vec<T>,
    pub curve_chain: Vec<T>,
    pub curve_chain_se: Vec<T>,
    pub curve_chain_consistent: Vec<T>,
    pub curve_chain_consistent_se: Vec<T>,
    pub curve_paper_literal: Vec<T>,
    pub curve_paper_literal_se: Vec<T>,
    /// Per-trajectory time-averaged Var(x), the discrimination scalar.
    pub timeavg_chain: Estimate<T>,
    pub timeavg_chain_consistent: Estimate<T>,
    pub timeavg_paper_literal: Estimate<T>,
    /// Separation of the chain from each convention, in combined SEs.
    pub z_chain_consistent: T,
    pub z_paper_literal: T,
    /// Times for E[Var] to cross halfway from start to final value.
    pub t_half_chain: Option<T>,
    pub t_half_chain_consistent: Option<T>,
    pub t_half_paper_literal: Option<T>,
    pub selected: Convention,
    /// True when exactly one convention is within 3 SE and the other beyond.
    pub decisive: bool,
}

/// Adjudicate the SDE coefficient conventions against the measurement chain.
///
/// Two experiments with frozen classical position: (a) ground-state start,
/// comparing mean and variance of the final position expectation between the
/// chain and the chain-consistent SDE; (b) a broad (squeezed-vacuum) start,
/// comparing the decay of E[Var(x)] across the chain and both conventions.
pub fn compare_conventions<T: Real>(
    base: &HybridConfig<T>,
    n: usize,
    master_seed: u64,
    broad_variance_scale: T,
) -> Result<ConventionStudy<T>> {
    let mut ground = base.clone();
    ground.frozen_x = Some(T::zero());
    ground.initial_packets = vec![crate::hybrid::PacketSpec {
        x: T::zero(),
        p: T::zero(),
        amp_re: T::one(),
        amp_im: T::zero(),
    }];

    let mut chain_cfg = ground.clone();
    chain_cfg.mode = RunMode::Chain;
    let mut sde_cfg = ground.clone();
    sde_cfg.mode = RunMode::Hybrid;
    sde_cfg.convention = Convention::ChainConsistent;

    let chain_out = run_outcomes_with_state(&chain_cfg, n, master_seed, None)?;
    let sde_out = run_outcomes_with_state(&sde_cfg, n, master_seed.wrapping_add(1), None)?;
    let final_x = |outs: &[TrajectoryOutcome<T>]| -> Vec<T> {
        outs.iter()
            .map(|o| o.record.rows.last().expect("rows").x_expect)
            .collect()
    };
    let chain_final = final_x(&chain_out);
    let sde_final = final_x(&sde_out);
    let mean_chain = mean_se(&chain_final);
    let mean_sde = mean_se(&sde_final);
    let var_chain = variance_se(&chain_final);
    let var_sde = variance_se(&sde_final);

    // broad-packet discrimination
    let broad = squeezed_vacuum(&base.basis, broad_variance_scale)?;
    let mut chain_b = chain_cfg.clone();
    chain_b.mode = RunMode::Chain;
    let mut cc_b = sde_cfg.clone();
    cc_b.convention = Convention::ChainConsistent;
    let mut pl_b = sde_cfg.clone();
    pl_b.convention = Convention::PaperLiteral;

    let chain_runs =
        run_outcomes_with_state(&chain_b, n, master_seed.wrapping_add(2), Some(broad.clone()))?;
    let cc_runs =
        run_outcomes_with_state(&cc_b, n, master_seed.wrapping_add(3), Some(broad.clone()))?;
    let pl_runs = run_outcomes_with_state(&pl_b, n, master_seed.wrapping_add(4), Some(broad))?;

    let timeavg = |outs: &[TrajectoryOutcome<T>]| -> Vec<T> {
        outs.iter()
            .map(|o| {
                let rows = &o.record.rows;
                let mut acc = T::zero();
                for r in rows {
                    acc += r.x_var;
                }
                acc / T::from_usize(rows.len()).expect("rows")
            })
            .collect()
    };
    let ta_chain = mean_se(&timeavg(&chain_runs));
    let ta_cc = mean_se(&timeavg(&cc_runs));
    let ta_pl = mean_se(&timeavg(&pl_runs));
    let z_cc = separation_z(ta_chain, ta_cc);
    let z_pl = separation_z(ta_chain, ta_pl);

    let curves = |outs: &[TrajectoryOutcome<T>]| -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
        let records: Vec<_> = outs.iter().map(|o| &o.record).collect();
        let m = moment_curves(&records)?;
        Ok((m.t, m.mean_x_var, m.se_x_var))
    };
    let (curve_t, curve_chain, curve_chain_se) = curves(&chain_runs)?;
    let (_, curve_cc, curve_cc_se) = curves(&cc_runs)?;
    let (_, curve_pl, curve_pl_se) = curves(&pl_runs)?;

    let t_half = |ts: &[T], vs: &[T]| -> Option<T> {
        let v0 = *vs.first()?;
        let v1 = *vs.last()?;
        let target = (v0 + v1) / T::lit(2.0);
        for (i, &v) in vs.iter().enumerate() {
            if (v0 > v1 && v <= target) || (v0 <= v1 && v >= target) {
                return Some(ts[i]);
            }
        }
        None
    };

    let (selected, decisive) = if z_cc < T::lit(3.0) && z_pl >= T::lit(3.0) {
        (Convention::ChainConsistent, true)
    } else if z_pl < T::lit(3.0) && z_cc >= T::lit(3.0) {
        (Convention::PaperLiteral, true)
    } else if z_cc <= z_pl {
        (Convention::ChainConsistent, false)
    } else {
        (Convention::PaperLiteral, false)
    };

    Ok(ConventionStudy {
        mean_chain: mean_chain.into(),
        mean_sde: mean_sde.into(),
        mean_z: separation_z(mean_chain, mean_sde),
        var_chain: var_chain.into(),
        var_sde: var_sde.into(),
        var_z: separation_z(var_chain, var_sde),
        t_half_chain: t_half(&curve_t, &curve_chain),
        t_half_chain_consistent: t_half(&curve_t, &curve_cc),
        t_half_paper_literal: t_half(&curve_t, &curve_pl),
        curve_t,
        curve_chain,
        curve_chain_se,
        curve_chain_consistent: curve_cc,
        curve_chain_consistent_se: curve_cc_se,
        curve_paper_literal: curve_pl,
        curve_paper_literal_se: curve_pl_se,
        timeavg_chain: ta_chain.into(),
        timeavg_chain_consistent: ta_cc.into(),
        timeavg_paper_literal: ta_pl.into(),
        z_chain_consistent: z_cc,
        z_paper_literal: z_pl,
        selected,
        decisive,
    })
}

/// One point of a localization sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct ScalingPoint<T: Real> {
    /// Swept value: packet separation or sigma.
    pub value: T,
    pub n_trajectories: usize,
    pub n_localized: usize,
    pub n_unresolved: usize,
    pub median_t_loc: Option<T>,
    pub quartiles: Option<(T, T, T)>,
    pub t_final: T,
    pub dim: usize,
}

/// Localization-time scaling against packet separation and measurement width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct ScalingStudy<T: Real> {
    pub separation_points: Vec<ScalingPoint<T>>,
    /// Log-log slope of median localization time against separation.
    pub separation_exponent: Option<T>,
    pub sigma_points: Vec<ScalingPoint<T>>,
    /// Medians strictly increase with sigma under the implemented equations
    /// (larger sigma = weaker measurement = slower localization).
    pub sigma_monotone_increasing: bool,
    /// Log-log slope of median localization time against sigma.
    pub sigma_exponent: Option<T>,
}

fn suggested_dim<T: Real>(base_dim: usize, basis: &crate::oscillator::FockBasis<T>, x_max: T) -> usize {
    let alpha = basis.packet_alpha(x_max, T::zero()).norm_sqr().sqrt();
    let needed = (alpha * alpha + T::lit(6.0) * alpha + T::lit(12.0))
        .ceil()
        .to_usize()
        .unwrap_or(base_dim);
    needed.max(base_dim)
}

fn scaling_point<T: Real>(
    base: &HybridConfig<T>,
    separation: T,
    sigma: T,
    n: usize,
    master_seed: u64,
) -> Result<ScalingPoint<T>> {
    let mut cfg = base.clone();
    cfg.mode = RunMode::Hybrid;
    cfg.coupling.sigma = sigma;
    let half = separation / T::lit(2.0);
    let amp = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    cfg.initial_packets = vec![
        crate::hybrid::PacketSpec {
            x: -half,
            p: T::zero(),
            amp_re: amp,
            amp_im: T::zero(),
        },
        crate::hybrid::PacketSpec {
            x: half,
            p: T::zero(),
            amp_re: amp,
            amp_im: T::zero(),
        },
    ];
    cfg.basis.dim = suggested_dim(base.basis.dim, &cfg.basis, half);

    // branch-selection rate of the implemented equations; horizons and
    // output stride scale with it
    let lambda = cfg.coupling.lambda;
    let hbar = cfg.basis.hbar;
    let c_drift = lambda * lambda / (T::lit(8.0) * hbar * hbar * sigma * sigma);
    let rate = T::lit(4.0) * c_drift * half * half;
    let dt = cfg.numerics.dt;
    let t_final_raw = (T::lit(4.0) / rate).max(T::lit(0.25)).min(T::lit(10.0));
    let steps = (t_final_raw / dt).ceil().to_usize().unwrap_or(1000).max(100);
    // round steps up to a multiple of the stride
    let stride = (steps / 200).max(1);
    let steps = steps.div_ceil(stride) * stride;
    cfg.numerics.t_final = T::from_usize(steps).expect("steps") * dt;
    cfg.numerics.output_stride = stride;

    // classification ball small enough for the tightest separation
    let default_radius = T::lit(3.0) * cfg.basis.ground_variance().sqrt();
    let radius = default_radius.min(T::lit(0.45) * separation);
    let centers = cfg.initial_packets.iter().map(|p| (p.x, p.p)).collect();
    let amplitudes = cfg.initial_packets.iter().map(|p| p.amplitude()).collect();
    let spec = BranchSpec::new(
        centers,
        amplitudes,
        radius,
        cfg.basis.mass * cfg.basis.omega,
    )?;

    let ens = run_ensemble_outcomes(&cfg, n, master_seed)?;
    let grid: Vec<T> = ens.outcomes[0].record.rows.iter().map(|r| r.t).collect();
    let classifier = BranchClassifier::new(spec, &cfg, &grid)?;
    let mut times = Vec::new();
    let mut unresolved = 0usize;
    for o in &ens.outcomes {
        match classifier.classify(&o.record) {
            Localization::Localized { time, .. } => times.push(time),
            Localization::NotLocalized => unresolved += 1,
        }
    }
    let q = quartiles(&times);
    Ok(ScalingPoint {
        value: separation,
        n_trajectories: ens.outcomes.len(),
        n_localized: times.len(),
        n_unresolved: unresolved,
        median_t_loc: q.map(|(_, m, _)| m),
        quartiles: q,
        t_final: cfg.numerics.t_final,
        dim: cfg.basis.dim,
    })
}

/// Sweep localization times over packet separations (fixed sigma from the
/// base config) and over sigma (fixed separation `sigma_sweep_separation`).
pub fn localization_scaling<T: Real>(
    base: &HybridConfig<T>,
    separations: &[T],
    sigmas: &[T],
    sigma_sweep_separation: T,
    n: usize,
    master_seed: u64,
) -> Result<ScalingStudy<T>> {
    let mut separation_points = Vec::with_capacity(separations.len());
    for (i, &d) in separations.iter().enumerate() {
        separation_points.push(scaling_point(
            base,
            d,
            base.coupling.sigma,
            n,
            master_seed.wrapping_add(1000 + i as u64),
        )?);
    }
    let sep_fit: Vec<(T, T)> = separation_points
        .iter()
        .filter_map(|p| p.median_t_loc.map(|m| (p.value, m)))
        .collect();
    let separation_exponent = loglog_slope(&sep_fit);

    let mut sigma_points = Vec::with_capacity(sigmas.len());
    for (i, &s) in sigmas.iter().enumerate() {
        let mut point = scaling_point(
            base,
            sigma_sweep_separation,
            s,
            n,
            master_seed.wrapping_add(2000 + i as u64),
        )?;
        point.value = s;
        sigma_points.push(point);
    }
    let sigma_fit: Vec<(T, T)> = sigma_points
        .iter()
        .filter_map(|p| p.median_t_loc.map(|m| (p.value, m)))
        .collect();
    let sigma_exponent = loglog_slope(&sigma_fit);
    let sigma_monotone_increasing = sigma_fit.len() == sigma_points.len()
        && sigma_fit.windows(2).all(|w| w[1].1 > w[0].1);

    Ok(ScalingStudy {
        separation_points,
        separation_exponent,
        sigma_points,
        sigma_monotone_increasing,
        sigma_exponent,
    })
}

/// One step-size level of the convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct ConvergenceLevel<T: Real> {
    pub dt: T,
    pub sde_estimate: Estimate<T>,
    pub chain_estimate: Estimate<T>,
    pub abs_error: T,
    pub error_se: T,
}

/// Weak-convergence measurement of E[<x>(t_final)] against the chain oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct ConvergenceStudy<T: Real> {
    pub levels: Vec<ConvergenceLevel<T>>,
    pub fitted_order: Option<T>,
}

/// Measure the weak error of the Euler-Maruyama integrator for
/// E[<x>(t_final)] against the chain run at the same step, over the given
/// steps. Both estimators are variance-reduced with exactly-mean-zero control
/// variates (the accumulated noise term for the SDE, the accumulated
/// measurement kicks for the chain).
pub fn weak_convergence<T: Real>(
    base: &HybridConfig<T>,
    dts: &[T],
    n: usize,
    master_seed: u64,
) -> Result<ConvergenceStudy<T>> {
    let mut levels = Vec::with_capacity(dts.len());
    for (i, &dt) in dts.iter().enumerate() {
        let mut sde_cfg = base.clone();
        sde_cfg.mode = RunMode::Hybrid;
        sde_cfg.integrator = Integrator::EulerMaruyama;
        sde_cfg.frozen_x = Some(T::zero());
        sde_cfg.numerics.dt = dt;
        sde_cfg.numerics.output_stride = sde_cfg.n_steps_with(dt);
        let mut chain_cfg = sde_cfg.clone();
        chain_cfg.mode = RunMode::Chain;

        let seed = master_seed.wrapping_add(10 * i as u64);
        let sde = run_outcomes_with_state(&sde_cfg, n, seed, None)?;
        let chain = run_outcomes_with_state(&chain_cfg, n, seed.wrapping_add(5), None)?;

        let sde_vals: Vec<T> = sde
            .iter()
            .map(|o| o.record.rows.last().expect("rows").x_expect - o.record.meta.cv_noise_sum)
            .collect();
        let chain_vals: Vec<T> = chain
            .iter()
            .map(|o| {
                o.record.rows.last().expect("rows").x_expect - o.record.meta.cv_meas_kick_sum
            })
            .collect();
        let sde_est = mean_se(&sde_vals);
        let chain_est = mean_se(&chain_vals);
        let abs_error = (sde_est.0 - chain_est.0).abs();
        let error_se = (sde_est.1 * sde_est.1 + chain_est.1 * chain_est.1).sqrt();
        levels.push(ConvergenceLevel {
            dt,
            sde_estimate: sde_est.into(),
            chain_estimate: chain_est.into(),
            abs_error,
            error_se,
        });
    }
    let pts: Vec<(T, T)> = levels.iter().map(|l| (l.dt, l.abs_error)).collect();
    Ok(ConvergenceStudy {
        fitted_order: loglog_slope(&pts),
        levels,
    })
}

impl<T: Real> HybridConfig<T> {
    /// Step count for an alternative dt (keeps t_final).
    pub fn n_steps_with(&self, dt: T) -> usize {
        (self.numerics.t_final / dt)
            .round()
            .to_usize()
            .unwrap_or(1)
            .max(1)
    }
}

/// Convenience: returns the outcomes of `run_ensemble_outcomes` without the
/// summary machinery (used by the frozen-X oracle comparisons).
pub fn frozen_x_final_states<T: Real>(
    config: &HybridConfig<T>,
    n: usize,
    master_seed: u64,
) -> Result<Vec<crate::oscillator::QuantumState<T>>> {
    let ens: EnsembleOutcomes<T> = run_ensemble_outcomes(config, n, master_seed)?;
    Ok(ens.outcomes.into_iter().map(|o| o.final_state).collect())
}

/// Ensemble-average density matrices on the output grid of a frozen-X run.
pub struct DensityCurve<T: Real> {
    pub times: Vec<T>,
    pub densities: Vec<nalgebra::DMatrix<num_complex::Complex<T>>>,
    pub n_trajectories: usize,
}

/// Accumulate E[|psi><psi|](t) across an ensemble, sequentially in index
/// order (bitwise deterministic).
pub fn frozen_x_density_curve<T: Real>(
    config: &HybridConfig<T>,
    n: usize,
    master_seed: u64,
) -> Result<DensityCurve<T>> {
    use num_complex::Complex;
    if config.frozen_x.is_none() {
        return Err(SimError::InvalidParameter {
            name: "frozen_x",
            reason: "density-curve comparison requires a frozen classical position".into(),
        });
    }
    let engine = TrajectoryEngine::new(config.clone())?;
    let dim = config.basis.dim;
    let mut times: Vec<T> = Vec::new();
    let mut acc: Vec<nalgebra::DMatrix<Complex<T>>> = Vec::new();
    for i in 0..n {
        let (outcome, states) = engine.run_collecting_states(master_seed, i as u64)?;
        if acc.is_empty() {
            times = outcome.record.rows.iter().map(|r| r.t).collect();
            acc = vec![nalgebra::DMatrix::<Complex<T>>::zeros(dim, dim); states.len()];
        }
        for (slot, psi) in acc.iter_mut().zip(&states) {
            let a = psi.amplitudes();
            for j in 0..dim {
                for k in 0..dim {
                    slot[(k, j)] += a[k] * a[j].conj();
                }
            }
        }
    }
    let inv = Complex::new(T::from_usize(n).expect("count").recip(), T::zero());
    for slot in &mut acc {
        *slot *= inv;
    }
    Ok(DensityCurve {
        times,
        densities: acc,
        n_trajectories: n,
    })
}

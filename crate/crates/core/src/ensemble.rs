//! Monte Carlo ensembles over seeds: branch statistics for superposition
//! initial states, localization-time estimation, moment curves, and the
//! deterministic master-equation oracle for frozen classical protocols.

use nalgebra::DMatrix;
use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::hybrid::{HybridConfig, TrajectoryEngine, TrajectoryOutcome, TrajectoryRecord};
use crate::meanfield::ehrenfest_oracle;
use crate::oscillator::{OscillatorOps, QuantumState};
use crate::scalar::Real;
use crate::spectral::{hermitian_eigenvalues, trace_distance};
use crate::stats::{mean_se, quartiles, wilson_interval};

/// Packet centres a localized trajectory can be attributed to.
#[derive(Debug, Clone)]
pub struct BranchSpec<T: Real> {
    /// Phase-space centres (x, p) at t = 0.
    pub centers: Vec<(T, T)>,
    /// Initial complex amplitudes (Born weights |a_i|^2 are the predicted
    /// branch probabilities).
    pub amplitudes: Vec<Complex<T>>,
    /// Phase-space radius of the classification ball, in position units
    /// (momentum is scaled by 1/(m omega)). Default: 3 ground widths.
    pub classification_radius: T,
}

impl<T: Real> BranchSpec<T> {
    pub fn new(
        centers: Vec<(T, T)>,
        amplitudes: Vec<Complex<T>>,
        classification_radius: T,
        mass_omega: T,
    ) -> Result<Self> {
        if centers.is_empty() || centers.len() != amplitudes.len() {
            return Err(SimError::InvalidParameter {
                name: "centers",
                reason: "need equal nonempty centre and amplitude lists".into(),
            });
        }
        let spec = BranchSpec {
            centers,
            amplitudes,
            classification_radius,
        };
        for i in 0..spec.centers.len() {
            for j in i + 1..spec.centers.len() {
                let d = spec.phase_space_distance(spec.centers[i], spec.centers[j], mass_omega);
                if d <= T::lit(2.0) * classification_radius {
                    return Err(SimError::InvalidParameter {
                        name: "centers",
                        reason: format!(
                            "centres {i} and {j} separated by {} <= 2 radius {}",
                            d.as_f64(),
                            (T::lit(2.0) * classification_radius).as_f64()
                        ),
                    });
                }
            }
        }
        Ok(spec)
    }

    /// Branch spec derived from the configured initial packets with the
    /// default radius of three quantum position standard deviations.
    pub fn from_config(config: &HybridConfig<T>) -> Result<Self> {
        let radius = T::lit(3.0) * config.basis.ground_variance().sqrt();
        let centers = config.initial_packets.iter().map(|p| (p.x, p.p)).collect();
        let amplitudes = config.initial_packets.iter().map(|p| p.amplitude()).collect();
        Self::new(
            centers,
            amplitudes,
            radius,
            config.basis.mass * config.basis.omega,
        )
    }

    fn phase_space_distance(&self, a: (T, T), b: (T, T), mass_omega: T) -> T {
        let dx = a.0 - b.0;
        let dp = (a.1 - b.1) / mass_omega;
        (dx * dx + dp * dp).sqrt()
    }
}

/// Outcome of the localization analysis of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Localization<T: Real> {
    Localized { branch: usize, time: T },
    NotLocalized,
}

/// Reference orbits for each branch centre on a fixed time grid, against
/// which trajectories are classified.
///
/// Each centre is propagated by the deterministic first-moment (Ehrenfest)
/// system for a single packet, including the classical back-reaction; a
/// trajectory belongs to a branch once it stays inside the classification
/// ball around that moving reference and its position variance stays below
/// twice the ground variance.
pub struct BranchClassifier<T: Real> {
    spec: BranchSpec<T>,
    ref_x: Vec<Vec<T>>,
    ref_p: Vec<Vec<T>>,
    mass_omega: T,
    var_bound: T,
}

impl<T: Real> BranchClassifier<T> {
    pub fn new(spec: BranchSpec<T>, config: &HybridConfig<T>, t_grid: &[T]) -> Result<Self> {
        let mut ref_x = Vec::with_capacity(spec.centers.len());
        let mut ref_p = Vec::with_capacity(spec.centers.len());
        for &(x_i, p_i) in &spec.centers {
            let (xs, ps) = reference_orbit(config, x_i, p_i, t_grid)?;
            ref_x.push(xs);
            ref_p.push(ps);
        }
        Ok(BranchClassifier {
            spec,
            ref_x,
            ref_p,
            mass_omega: config.basis.mass * config.basis.omega,
            var_bound: T::lit(2.0) * config.basis.ground_variance(),
        })
    }

    pub fn spec(&self) -> &BranchSpec<T> {
        &self.spec
    }

    fn row_branch(&self, row_index: usize, x_expect: T, p_expect: T) -> Option<usize> {
        let r2 = self.spec.classification_radius * self.spec.classification_radius;
        let mut best: Option<(usize, T)> = None;
        for b in 0..self.spec.centers.len() {
            let dx = x_expect - self.ref_x[b][row_index];
            let dp = (p_expect - self.ref_p[b][row_index]) / self.mass_omega;
            let d2 = dx * dx + dp * dp;
            if d2 <= r2 {
                match best {
                    Some((_, d_old)) if d_old <= d2 => {}
                    _ => best = Some((b, d2)),
                }
            }
        }
        best.map(|(b, _)| b)
    }

    /// First time after which the trajectory stays within the classification
    /// ball of one branch with bounded variance, for the remainder of the run.
    pub fn classify(&self, record: &TrajectoryRecord<T>) -> Localization<T> {
        let rows = &record.rows;
        if rows.is_empty() {
            return Localization::NotLocalized;
        }
        let last = rows.len() - 1;
        let last_branch = match self.row_branch(last, rows[last].x_expect, rows[last].p_expect) {
            Some(b) if rows[last].x_var <= self.var_bound => b,
            _ => return Localization::NotLocalized,
        };
        let mut start = last;
        for i in (0..last).rev() {
            let ok = rows[i].x_var <= self.var_bound
                && self.row_branch(i, rows[i].x_expect, rows[i].p_expect) == Some(last_branch);
            if ok {
                start = i;
            } else {
                break;
            }
        }
        Localization::Localized {
            branch: last_branch,
            time: rows[start].t,
        }
    }
}

fn reference_orbit<T: Real>(
    config: &HybridConfig<T>,
    x_i: T,
    p_i: T,
    t_grid: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    if let Some(x_f) = config.frozen_x {
        // quantum moments driven by a pinned classical position
        let m = config.basis.mass;
        let mw2 = m * config.basis.omega * config.basis.omega;
        let lambda = config.coupling.lambda;
        let h = config.numerics.dt / T::lit(10.0);
        let rhs = |y: [T; 2]| -> [T; 2] { [y[1] / m, -mw2 * y[0] - lambda * x_f] };
        let mut y = [x_i, p_i];
        let mut t = T::zero();
        let mut xs = Vec::with_capacity(t_grid.len());
        let mut ps = Vec::with_capacity(t_grid.len());
        for &target in t_grid {
            let span = target - t;
            if span > T::zero() {
                let n_sub = (span / h).ceil().to_usize().unwrap_or(1).max(1);
                let hh = span / T::from_usize(n_sub).expect("substeps");
                for _ in 0..n_sub {
                    let k1 = rhs(y);
                    let k2 = rhs([y[0] + k1[0] * hh / T::lit(2.0), y[1] + k1[1] * hh / T::lit(2.0)]);
                    let k3 = rhs([y[0] + k2[0] * hh / T::lit(2.0), y[1] + k2[1] * hh / T::lit(2.0)]);
                    let k4 = rhs([y[0] + k3[0] * hh, y[1] + k3[1] * hh]);
                    y[0] += hh / T::lit(6.0)
                        * (k1[0] + T::lit(2.0) * k2[0] + T::lit(2.0) * k3[0] + k4[0]);
                    y[1] += hh / T::lit(6.0)
                        * (k1[1] + T::lit(2.0) * k2[1] + T::lit(2.0) * k3[1] + k4[1]);
                }
                t = target;
            }
            xs.push(y[0]);
            ps.push(y[1]);
        }
        Ok((xs, ps))
    } else {
        let tr = ehrenfest_oracle(
            config,
            [config.classical.x0, config.classical.p0, x_i, p_i],
            t_grid,
        )?;
        Ok((tr.x_q, tr.p_q))
    }
}

/// Localization time of one record against a branch spec (`NotLocalized` is a
/// value, not an error).
pub fn localization_time<T: Real>(
    record: &TrajectoryRecord<T>,
    spec: &BranchSpec<T>,
    config: &HybridConfig<T>,
) -> Result<Localization<T>> {
    let grid: Vec<T> = record.rows.iter().map(|r| r.t).collect();
    let classifier = BranchClassifier::new(spec.clone(), config, &grid)?;
    Ok(classifier.classify(record))
}

/// Ordered successful outcomes of an ensemble run.
pub struct EnsembleOutcomes<T: Real> {
    pub outcomes: Vec<TrajectoryOutcome<T>>,
    pub n_requested: usize,
    pub n_failed: usize,
}

/// Run `n` independent trajectories with seeds derived from
/// (master_seed, index). Fails when more than 1% of trajectories error.
pub fn run_ensemble_outcomes<T: Real>(
    config: &HybridConfig<T>,
    n: usize,
    master_seed: u64,
) -> Result<EnsembleOutcomes<T>> {
    if n == 0 {
        return Err(SimError::InvalidParameter {
            name: "n",
            reason: "need at least one trajectory".into(),
        });
    }
    let engine = TrajectoryEngine::new(config.clone())?;
    let results: Vec<Result<TrajectoryOutcome<T>>> = (0..n)
        .into_par_iter()
        .map(|i| engine.run(master_seed, i as u64))
        .collect();

    let mut outcomes = Vec::with_capacity(n);
    let mut n_failed = 0usize;
    let mut first_error: Option<SimError> = None;
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                n_failed += 1;
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }
    if n_failed * 100 > n {
        return Err(SimError::EnsembleFailures {
            failed: n_failed,
            total: n,
            first: Box::new(first_error.expect("at least one failure")),
        });
    }
    Ok(EnsembleOutcomes {
        outcomes,
        n_requested: n,
        n_failed,
    })
}

/// Ensemble means with standard errors on the shared output grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct MomentCurves<T: Real> {
    pub t: Vec<T>,
    pub mean_x_expect: Vec<T>,
    pub se_x_expect: Vec<T>,
    pub mean_p_expect: Vec<T>,
    pub se_p_expect: Vec<T>,
    pub mean_x_cl: Vec<T>,
    pub se_x_cl: Vec<T>,
    pub mean_x_var: Vec<T>,
    pub se_x_var: Vec<T>,
}

/// Moment curves of a set of records sharing one output grid.
pub fn moment_curves<T: Real>(records: &[&TrajectoryRecord<T>]) -> Result<MomentCurves<T>> {
    let first = records.first().ok_or(SimError::InvalidParameter {
        name: "records",
        reason: "empty ensemble".into(),
    })?;
    let n_rows = first.rows.len();
    for r in records {
        if r.rows.len() != n_rows {
            return Err(SimError::DimensionMismatch {
                left: n_rows,
                right: r.rows.len(),
            });
        }
    }
    let mut out = MomentCurves {
        t: first.rows.iter().map(|r| r.t).collect(),
        mean_x_expect: Vec::with_capacity(n_rows),
        se_x_expect: Vec::with_capacity(n_rows),
        mean_p_expect: Vec::with_capacity(n_rows),
        se_p_expect: Vec::with_capacity(n_rows),
        mean_x_cl: Vec::with_capacity(n_rows),
        se_x_cl: Vec::with_capacity(n_rows),
        mean_x_var: Vec::with_capacity(n_rows),
        se_x_var: Vec::with_capacity(n_rows),
    };
    let mut buf = Vec::with_capacity(records.len());
    for j in 0..n_rows {
        for (field, mean_vec, se_vec) in [
            (0usize, &mut out.mean_x_expect, &mut out.se_x_expect),
            (1, &mut out.mean_p_expect, &mut out.se_p_expect),
            (2, &mut out.mean_x_cl, &mut out.se_x_cl),
            (3, &mut out.mean_x_var, &mut out.se_x_var),
        ] {
            buf.clear();
            for r in records {
                let row = &r.rows[j];
                buf.push(match field {
                    0 => row.x_expect,
                    1 => row.p_expect,
                    2 => row.x_cl,
                    _ => row.x_var,
                });
            }
            let (m, se) = mean_se(&buf);
            mean_vec.push(m);
            se_vec.push(se);
        }
    }
    Ok(out)
}

/// Per-branch population statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct BranchSummary<T: Real> {
    pub counts: Vec<usize>,
    pub unresolved: usize,
    /// counts / n_trajectories.
    pub frequencies: Vec<T>,
    /// Wilson 95% intervals per branch.
    pub intervals: Vec<(T, T)>,
    /// Pooled localization times of resolved trajectories, sorted.
    pub localization_times: Vec<T>,
    pub t_loc_quartiles: Option<(T, T, T)>,
    /// Mean final classical position per branch (mean, se, count).
    pub final_x_cl: Vec<(T, T, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryMeta {
    pub master_seed: u64,
    pub config_digest: String,
}

/// Full ensemble summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct EnsembleSummary<T: Real> {
    pub n_trajectories: usize,
    pub n_failed: usize,
    pub branch: Option<BranchSummary<T>>,
    pub moments: MomentCurves<T>,
    pub meta: SummaryMeta,
}

/// Run an ensemble and summarize it; branch statistics are included whenever
/// the configuration admits reference orbits (linear potential).
pub fn run_ensemble<T: Real>(
    config: &HybridConfig<T>,
    n: usize,
    master_seed: u64,
) -> Result<EnsembleSummary<T>> {
    let spec = if config.classical.potential.is_linear() {
        Some(BranchSpec::from_config(config)?)
    } else {
        None
    };
    run_ensemble_with(config, n, master_seed, spec)
}

pub fn run_ensemble_with<T: Real>(
    config: &HybridConfig<T>,
    n: usize,
    master_seed: u64,
    spec: Option<BranchSpec<T>>,
) -> Result<EnsembleSummary<T>> {
    let ens = run_ensemble_outcomes(config, n, master_seed)?;
    summarize(config, &ens, spec, master_seed)
}

/// Build the summary from already-run outcomes.
pub fn summarize<T: Real>(
    config: &HybridConfig<T>,
    ens: &EnsembleOutcomes<T>,
    spec: Option<BranchSpec<T>>,
    master_seed: u64,
) -> Result<EnsembleSummary<T>> {
    let records: Vec<&TrajectoryRecord<T>> = ens.outcomes.iter().map(|o| &o.record).collect();
    let moments = moment_curves(&records)?;

    let branch = if let Some(spec) = spec {
        let grid: Vec<T> = records[0].rows.iter().map(|r| r.t).collect();
        let classifier = BranchClassifier::new(spec, config, &grid)?;
        let n_branches = classifier.spec().centers.len();
        let mut counts = vec![0usize; n_branches];
        let mut unresolved = 0usize;
        let mut times = Vec::new();
        let mut by_branch: Vec<Vec<T>> = vec![Vec::new(); n_branches];
        for o in &ens.outcomes {
            match classifier.classify(&o.record) {
                Localization::Localized { branch, time } => {
                    counts[branch] += 1;
                    times.push(time);
                    by_branch[branch].push(o.final_classical.x);
                }
                Localization::NotLocalized => unresolved += 1,
            }
        }
        times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        let n_total = T::from_usize(ens.outcomes.len()).expect("count");
        let frequencies = counts
            .iter()
            .map(|&c| T::from_usize(c).expect("count") / n_total)
            .collect();
        let intervals = counts
            .iter()
            .map(|&c| wilson_interval(c, ens.outcomes.len()))
            .collect();
        let final_x_cl = by_branch
            .iter()
            .map(|xs| {
                if xs.is_empty() {
                    (T::zero(), T::zero(), 0)
                } else {
                    let (m, se) = mean_se(xs);
                    (m, se, xs.len())
                }
            })
            .collect();
        Some(BranchSummary {
            counts,
            unresolved,
            frequencies,
            intervals,
            t_loc_quartiles: quartiles(&times),
            localization_times: times,
            final_x_cl,
        })
    } else {
        None
    };

    Ok(EnsembleSummary {
        n_trajectories: ens.outcomes.len(),
        n_failed: ens.n_failed,
        branch,
        moments,
        meta: SummaryMeta {
            master_seed,
            config_digest: config.digest(),
        },
    })
}

/// |psi><psi|.
pub fn density_matrix<T: Real>(psi: &QuantumState<T>) -> DMatrix<Complex<T>> {
    let a = psi.amplitudes();
    let n = a.len();
    DMatrix::from_fn(n, n, |i, j| a[i] * a[j].conj())
}

/// Ensemble average of |psi_i><psi_i| in index order.
pub fn ensemble_average_density<T: Real>(
    states: &[QuantumState<T>],
) -> Result<DMatrix<Complex<T>>> {
    let first = states.first().ok_or(SimError::InvalidParameter {
        name: "states",
        reason: "empty ensemble".into(),
    })?;
    let n = first.dim();
    let mut rho = DMatrix::<Complex<T>>::zeros(n, n);
    for s in states {
        if s.dim() != n {
            return Err(SimError::DimensionMismatch {
                left: n,
                right: s.dim(),
            });
        }
        let a = s.amplitudes();
        for j in 0..n {
            for i in 0..n {
                rho[(i, j)] += a[i] * a[j].conj();
            }
        }
    }
    let inv = Complex::new(T::from_usize(states.len()).expect("count").recip(), T::zero());
    rho *= inv;
    Ok(rho)
}

/// Half trace-norm distance between the ensemble average of pure states and
/// an oracle density matrix.
pub fn ensemble_vs_oracle<T: Real>(
    states: &[QuantumState<T>],
    rho_oracle: &DMatrix<Complex<T>>,
) -> Result<T> {
    let rho = ensemble_average_density(states)?;
    if rho.nrows() != rho_oracle.nrows() {
        return Err(SimError::DimensionMismatch {
            left: rho.nrows(),
            right: rho_oracle.nrows(),
        });
    }
    trace_distance(&rho, rho_oracle)
}

/// Tr rho^2 for Hermitian rho.
pub fn purity<T: Real>(rho: &DMatrix<Complex<T>>) -> T {
    let mut sum = T::zero();
    for v in rho.iter() {
        sum += v.norm_sqr();
    }
    sum
}

/// Master-equation trajectory on the requested grid, with the purity recorded
/// at every internal integrator step.
#[derive(Debug, Clone)]
pub struct LindbladRun<T: Real> {
    pub times: Vec<T>,
    pub states: Vec<DMatrix<Complex<T>>>,
    pub step_times: Vec<T>,
    pub purities: Vec<T>,
}

/// RK4 integration of
///
///   d rho/dt = -(i/hbar)[H0 + lambda X(t) x, rho] - D_xx [x, [x, rho]],
///
/// with the classical position supplied externally. `d_xx` is
/// c_diff^2 / 2 for the convention in force (see
/// [`crate::sse::SdeCoefficients::position_dissipator`]).
pub fn lindblad_oracle<T: Real>(
    ops: &OscillatorOps<T>,
    lambda: T,
    hbar: T,
    d_xx: T,
    x_protocol: &dyn Fn(T) -> T,
    rho0: DMatrix<Complex<T>>,
    t_grid: &[T],
    dt: T,
) -> Result<LindbladRun<T>> {
    let n = ops.h0_diag.len();
    if rho0.nrows() != n || rho0.ncols() != n {
        return Err(SimError::DimensionMismatch {
            left: rho0.nrows(),
            right: n,
        });
    }
    validate_density(&rho0)?;
    if t_grid.is_empty() {
        return Err(SimError::InvalidParameter {
            name: "t_grid",
            reason: "empty grid".into(),
        });
    }

    let off = &ops.position_offdiag;
    let e = &ops.h0_diag;
    let minus_i_over_hbar = Complex::new(T::zero(), -T::one() / hbar);

    let rhs = |rho: &DMatrix<Complex<T>>, x_cl: T| -> DMatrix<Complex<T>> {
        let a = x_commutator(off, rho);
        let b = x_commutator(off, &a);
        let lx = lambda * x_cl;
        let mut out = DMatrix::<Complex<T>>::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                let h0_comm = rho[(i, j)] * (e[i] - e[j]);
                out[(i, j)] =
                    (h0_comm + a[(i, j)] * lx) * minus_i_over_hbar - b[(i, j)] * d_xx;
            }
        }
        out
    };

    let mut rho = rho0;
    let mut t = T::zero();
    let mut run = LindbladRun {
        times: Vec::with_capacity(t_grid.len()),
        states: Vec::with_capacity(t_grid.len()),
        step_times: vec![T::zero()],
        purities: vec![purity(&rho)],
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
            let n_sub = (span / dt).ceil().to_usize().unwrap_or(1).max(1);
            let h = span / T::from_usize(n_sub).expect("substeps");
            for s in 0..n_sub {
                let t0 = t + h * T::from_usize(s).expect("substep");
                let half = h / T::lit(2.0);
                let k1 = rhs(&rho, x_protocol(t0));
                let k2 = rhs(&(&rho + &k1 * Complex::new(half, T::zero())), x_protocol(t0 + half));
                let k3 = rhs(&(&rho + &k2 * Complex::new(half, T::zero())), x_protocol(t0 + half));
                let k4 = rhs(&(&rho + &k3 * Complex::new(h, T::zero())), x_protocol(t0 + h));
                let sixth = Complex::new(h / T::lit(6.0), T::zero());
                let two = Complex::new(T::lit(2.0), T::zero());
                rho += (k1 + k2 * two + k3 * two + k4) * sixth;
                run.step_times.push(t0 + h);
                run.purities.push(purity(&rho));
            }
            t = target;
        }
        run.times.push(target);
        run.states.push(rho.clone());
    }
    Ok(run)
}

fn validate_density<T: Real>(rho: &DMatrix<Complex<T>>) -> Result<()> {
    let tol = T::lit(1e-10).max(T::default_epsilon() * T::lit(1e4));
    let n = rho.nrows();
    let mut herm_dev = T::zero();
    let mut trace = Complex::new(T::zero(), T::zero());
    for i in 0..n {
        trace += rho[(i, i)];
        for j in i..n {
            herm_dev = herm_dev.max((rho[(i, j)] - rho[(j, i)].conj()).norm_sqr().sqrt());
        }
    }
    if herm_dev > tol {
        return Err(SimError::InvalidDensityMatrix {
            reason: format!("not Hermitian: deviation {}", herm_dev.as_f64()),
        });
    }
    if (trace.re - T::one()).abs() > tol || trace.im.abs() > tol {
        return Err(SimError::InvalidDensityMatrix {
            reason: format!("trace {} + {}i != 1", trace.re.as_f64(), trace.im.as_f64()),
        });
    }
    let eigs = hermitian_eigenvalues(rho.clone());
    for v in eigs.iter() {
        if *v < -tol {
            return Err(SimError::InvalidDensityMatrix {
                reason: format!("negative eigenvalue {}", v.as_f64()),
            });
        }
    }
    Ok(())
}

/// [x, m] for tridiagonal x with off-diagonal `off`.
fn x_commutator<T: Real>(off: &[T], m: &DMatrix<Complex<T>>) -> DMatrix<Complex<T>> {
    let n = m.nrows();
    let mut out = DMatrix::<Complex<T>>::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let mut acc = Complex::new(T::zero(), T::zero());
            if i > 0 {
                acc += m[(i - 1, j)] * off[i - 1];
            }
            if i + 1 < n {
                acc += m[(i + 1, j)] * off[i];
            }
            if j > 0 {
                acc -= m[(i, j - 1)] * off[j - 1];
            }
            if j + 1 < n {
                acc -= m[(i, j + 1)] * off[j];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::PotentialSpec;
    use crate::hybrid::{ClassicalParams, CouplingParams, NumericsParams, PacketSpec, RunMode};
    use crate::oscillator::{build_operators, coherent_state, FockBasis};
    use crate::sse::{Convention, Integrator};

    fn packet(x: f64, p: f64, re: f64, im: f64) -> PacketSpec<f64> {
        PacketSpec {
            x,
            p,
            amp_re: re,
            amp_im: im,
        }
    }

    fn base_config(packets: Vec<PacketSpec<f64>>, t_final: f64) -> HybridConfig<f64> {
        HybridConfig {
            basis: FockBasis::natural(64).unwrap(),
            classical: ClassicalParams {
                mass: 1.0,
                potential: PotentialSpec::Free,
                x0: 0.0,
                p0: 0.0,
            },
            coupling: CouplingParams {
                lambda: 1.0,
                sigma: 1.0,
            },
            initial_packets: packets,
            numerics: NumericsParams {
                dt: 1e-3,
                t_final,
                output_stride: 10,
            },
            convention: Convention::ChainConsistent,
            integrator: Integrator::SplitStep,
            mode: RunMode::Hybrid,
            seed: 0,
            frozen_x: None,
        }
    }

    #[test]
    fn branch_spec_rejects_overlapping_centres() {
        let err = BranchSpec::<f64>::new(
            vec![(0.0, 0.0), (1.0, 0.0)],
            vec![Complex::new(1.0, 0.0), Complex::new(1.0, 0.0)],
            2.0,
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, SimError::InvalidParameter { .. }));
    }

    #[test]
    fn single_packet_localizes_at_time_zero() {
        let cfg = base_config(vec![packet(2.0, 0.0, 1.0, 0.0)], 0.5);
        let record = crate::hybrid::run_trajectory(&cfg, 5).unwrap();
        let spec = BranchSpec::from_config(&cfg).unwrap();
        let loc = localization_time(&record, &spec, &cfg).unwrap();
        match loc {
            Localization::Localized { branch, time } => {
                assert_eq!(branch, 0);
                assert_eq!(time, 0.0);
            }
            Localization::NotLocalized => panic!("single packet must classify"),
        }
    }

    #[test]
    fn classification_is_invariant_under_phase_and_relabeling() {
        let amp = std::f64::consts::FRAC_1_SQRT_2;
        let cfg = base_config(
            vec![packet(-5.0, 0.0, amp, 0.0), packet(5.0, 0.0, amp, 0.0)],
            1.0,
        );
        let spec = BranchSpec::from_config(&cfg).unwrap();
        let record = crate::hybrid::run_trajectory(&cfg, 17).unwrap();
        let loc = localization_time(&record, &spec, &cfg).unwrap();
        let branch = match loc {
            Localization::Localized { branch, .. } => branch,
            Localization::NotLocalized => panic!("cat state must localize"),
        };

        // global phase on the initial amplitudes
        let theta = 0.83_f64;
        let (c, s) = (theta.cos(), theta.sin());
        let mut cfg_phase = cfg.clone();
        for p in &mut cfg_phase.initial_packets {
            let re = p.amp_re * c - p.amp_im * s;
            let im = p.amp_re * s + p.amp_im * c;
            p.amp_re = re;
            p.amp_im = im;
        }
        let spec_phase = BranchSpec::from_config(&cfg_phase).unwrap();
        let rec_phase = crate::hybrid::run_trajectory(&cfg_phase, 17).unwrap();
        match localization_time(&rec_phase, &spec_phase, &cfg_phase).unwrap() {
            Localization::Localized { branch: b, .. } => assert_eq!(b, branch),
            Localization::NotLocalized => panic!("phased cat state must localize"),
        }

        // relabeling the packet list permutes the branch index
        let mut cfg_swap = cfg.clone();
        cfg_swap.initial_packets.reverse();
        let spec_swap = BranchSpec::from_config(&cfg_swap).unwrap();
        let rec_swap = crate::hybrid::run_trajectory(&cfg_swap, 17).unwrap();
        match localization_time(&rec_swap, &spec_swap, &cfg_swap).unwrap() {
            Localization::Localized { branch: b, .. } => assert_eq!(b, 1 - branch),
            Localization::NotLocalized => panic!("relabeled cat state must localize"),
        }
    }

    #[test]
    fn oracle_matches_unitary_evolution_without_dissipation() {
        let basis = FockBasis::<f64>::natural(32).unwrap();
        let ops = build_operators(&basis);
        let psi0 = coherent_state(&basis, 1.0, 0.0).unwrap();
        let rho0 = density_matrix(&psi0);
        let grid = [1.0];
        let run = lindblad_oracle(&ops, 0.0, 1.0, 0.0, &|_| 0.0, rho0, &grid, 1e-3).unwrap();

        use crate::scalar::cis;
        let alpha_t = basis.packet_alpha(1.0, 0.0) * cis(-1.0);
        let exact_state = crate::oscillator::coherent_state_from_alpha(&basis, alpha_t).unwrap();
        let exact = density_matrix(&exact_state);
        let d = trace_distance(&run.states[0], &exact).unwrap();
        assert!(d < 1e-8, "trace distance {d}");
        // no dissipation: purity stays 1
        for p in &run.purities {
            assert!((p - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn oracle_purity_is_nonincreasing_with_constant_x() {
        let basis = FockBasis::<f64>::natural(64).unwrap();
        let ops = build_operators(&basis);
        let amp = Complex::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let left = coherent_state(&basis, -3.0, 0.0).unwrap();
        let right = coherent_state(&basis, 3.0, 0.0).unwrap();
        let (cat, _) = crate::oscillator::superpose(&[left, right], &[amp, amp]).unwrap();
        let rho0 = density_matrix(&cat);
        let coeffs =
            crate::sse::make_coefficients(1.0, 1.0, 1.0, Convention::ChainConsistent).unwrap();
        let run = lindblad_oracle(
            &ops,
            1.0,
            1.0,
            coeffs.position_dissipator(),
            &|_| 0.0,
            rho0,
            &[1.0],
            1e-3,
        )
        .unwrap();
        for w in run.purities.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "purity rose: {} -> {}", w[0], w[1]);
        }
        assert!(run.purities.last().unwrap() < &0.9);
    }

    // Pointer-basis decoherence: the coherence between well-separated packets
    // decays at rate D_xx (x1 - x2)^2 (the packets rotate; over the short
    // window used here the correction is far below the tolerance).
    #[test]
    fn oracle_coherence_decay_rate() {
        let basis = FockBasis::<f64>::natural(64).unwrap();
        let ops = build_operators(&basis);
        let amp = Complex::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let x1 = -3.0;
        let x2 = 3.0;
        let left = coherent_state(&basis, x1, 0.0).unwrap();
        let right = coherent_state(&basis, x2, 0.0).unwrap();
        let (cat, _) = crate::oscillator::superpose(
            &[left.clone(), right.clone()],
            &[amp, amp],
        )
        .unwrap();
        let rho0 = density_matrix(&cat);
        let coeffs =
            crate::sse::make_coefficients(1.0, 3.0, 1.0, Convention::ChainConsistent).unwrap();
        let d_xx = coeffs.position_dissipator();
        let t_star = 0.1;
        let run = lindblad_oracle(&ops, 1.0, 1.0, d_xx, &|_| 0.0, rho0, &[t_star], 1e-4).unwrap();

        use crate::scalar::cis;
        let co_left = crate::oscillator::coherent_state_from_alpha(
            &basis,
            basis.packet_alpha(x1, 0.0) * cis(-t_star),
        )
        .unwrap();
        let co_right = crate::oscillator::coherent_state_from_alpha(
            &basis,
            basis.packet_alpha(x2, 0.0) * cis(-t_star),
        )
        .unwrap();
        let coherence = |rho: &DMatrix<Complex<f64>>,
                         a: &QuantumState<f64>,
                         b: &QuantumState<f64>|
         -> f64 {
            let mut acc = Complex::new(0.0, 0.0);
            for i in 0..rho.nrows() {
                for j in 0..rho.ncols() {
                    acc += a.amplitudes()[i].conj() * rho[(i, j)] * b.amplitudes()[j];
                }
            }
            acc.norm()
        };
        let c0 = 0.5; // <a1|cat><cat|a2| up to e^{-18} cross terms
        let ct = coherence(&run.states[0], &co_left, &co_right);
        let measured_rate = -(ct / c0).ln() / t_star;
        let expected = d_xx * (x1 - x2) * (x1 - x2);
        assert!(
            (measured_rate - expected).abs() / expected < 0.1,
            "measured {measured_rate} expected {expected}"
        );
    }

    #[test]
    fn ensemble_vs_oracle_is_zero_at_time_zero() {
        let basis = FockBasis::<f64>::natural(16).unwrap();
        let psi = coherent_state(&basis, 0.5, 0.0).unwrap();
        let rho = density_matrix(&psi);
        let states = vec![psi.clone(), psi.clone(), psi];
        let d = ensemble_vs_oracle(&states, &rho).unwrap();
        assert!(d < 1e-12);
    }

    #[test]
    fn ensemble_vs_oracle_rejects_dimension_mismatch() {
        let basis = FockBasis::<f64>::natural(16).unwrap();
        let psi = coherent_state(&basis, 0.5, 0.0).unwrap();
        let rho = DMatrix::<Complex<f64>>::identity(8, 8);
        assert!(matches!(
            ensemble_vs_oracle(&[psi], &rho),
            Err(SimError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn invalid_density_matrices_are_rejected() {
        let basis = FockBasis::<f64>::natural(8).unwrap();
        let ops = build_operators(&basis);
        // wrong trace
        let rho = DMatrix::<Complex<f64>>::identity(8, 8);
        let err = lindblad_oracle(&ops, 0.0, 1.0, 0.0, &|_| 0.0, rho, &[0.1], 1e-3).unwrap_err();
        assert!(matches!(err, SimError::InvalidDensityMatrix { .. }));
    }
}

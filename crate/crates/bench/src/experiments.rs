//! Evaluation studies shared by the CLI and the acceptance suite.

use cfo_core::metrics::{empirical_orders, mean_sd, relative_l2, relative_l2_vec, EvalReport};
use cfo_core::odeint::{
    ar_rollout_ensemble, integrate_fixed, rollout_ensemble, rollout_ensemble_partial, rollout_reverse_ensemble, Dynamics, Method, SolverConfig, StepMap,
    DIVERGENCE_BOUND,
};
use cfo_core::rng::substream;
use cfo_core::spline::{LinearSpline, QuinticSpline};
use cfo_core::systems::{lorenz_rhs, SystemTag, TrajectorySet};
use cfo_core::{CfoError, SplineKind, TemporalSpline};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{BenchError, Result};

fn shared_times(data: &TrajectorySet) -> Result<Vec<f64>> {
    data.shared_grid()
        .map(|g| g.times().to_vec())
        .ok_or_else(|| BenchError::Config("evaluation needs test trajectories on one shared grid".into()))
}

/// Per-trajectory relative error; `+inf` for missing (diverged) rollouts.
fn report_from(
    preds: Vec<Option<Array2<f64>>>,
    truth: &TrajectorySet,
    nfe: usize,
    fingerprint: &str,
) -> Result<EvalReport> {
    let nt = truth.states[0].nrows();
    let mut per_trajectory = Vec::with_capacity(preds.len());
    let mut final_time = Vec::with_capacity(preds.len());
    let mut per_time = vec![0.0; nt];
    let n = preds.len() as f64;
    for (p, t) in preds.iter().zip(&truth.states) {
        match p {
            Some(p) => {
                per_trajectory.push(relative_l2(p.view(), t.view())?);
                for j in 0..nt {
                    let e = relative_l2_vec(&p.row(j).to_vec(), &t.row(j).to_vec()).unwrap_or(f64::INFINITY);
                    per_time[j] += e / n;
                }
                let last = nt - 1;
                final_time.push(relative_l2_vec(&p.row(last).to_vec(), &t.row(last).to_vec())?);
            }
            None => {
                per_trajectory.push(f64::INFINITY);
                final_time.push(f64::INFINITY);
                per_time.iter_mut().for_each(|v| *v = f64::INFINITY);
            }
        }
    }
    let (mean, sd) = mean_sd(&per_trajectory);
    let final_time_mean = mean_sd(&final_time).0;
    Ok(EvalReport {
        per_trajectory,
        mean,
        sd,
        final_time,
        final_time_mean,
        per_time,
        nfe,
        fingerprint: fingerprint.to_string(),
    })
}

/// Rolls out every test trajectory from its initial state over the shared
/// test grid. Trajectories whose rollout diverges score `+inf`.
pub fn evaluate_field<D: Dynamics + ?Sized>(
    f: &D,
    test: &TrajectorySet,
    solver: &SolverConfig,
    fingerprint: &str,
) -> Result<EvalReport> {
    let times = shared_times(test)?;
    let u0 = test.initial_states();
    let nfe = (times.len() - 1) * solver.nfe_per_interval();
    let preds = match rollout_ensemble(f, u0.view(), &times, solver) {
        Ok(r) => r.states.outer_iter().map(|s| Some(s.to_owned())).collect(),
        Err(CfoError::Diverged { .. }) | Err(CfoError::Numeric(_)) => (0..test.len())
            .map(|k| {
                rollout_ensemble(f, u0.slice(ndarray::s![k..k + 1, ..]), &times, solver)
                    .ok()
                    .map(|r| r.states.index_axis(Axis(0), 0).to_owned())
            })
            .collect(),
        Err(e) => return Err(e.into()),
    };
    report_from(preds, test, nfe, fingerprint)
}

/// Recursive one-step rollout over the shared uniform test grid.
pub fn evaluate_step_map<M: StepMap + ?Sized>(model: &M, test: &TrajectorySet, fingerprint: &str) -> Result<EvalReport> {
    let times = shared_times(test)?;
    let n_steps = times.len() - 1;
    let u0 = test.initial_states();
    let preds = match ar_rollout_ensemble(model, u0.view(), n_steps, DIVERGENCE_BOUND) {
        Ok(r) => r.states.outer_iter().map(|s| Some(s.to_owned())).collect(),
        Err(CfoError::Diverged { .. }) | Err(CfoError::Numeric(_)) => (0..test.len())
            .map(|k| {
                ar_rollout_ensemble(model, u0.slice(ndarray::s![k..k + 1, ..]), n_steps, DIVERGENCE_BOUND)
                    .ok()
                    .map(|r| r.states.index_axis(Axis(0), 0).to_owned())
            })
            .collect(),
        Err(e) => return Err(e.into()),
    };
    report_from(preds, test, n_steps, fingerprint)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub spline: SplineKind,
    /// Downsampling factor relative to the dataset grid.
    pub factor: usize,
    /// Physical sample spacing in seconds.
    pub dt: f64,
    pub n_segments: usize,
    /// Mean over segments of the relative velocity error at both segment ends.
    pub error: f64,
    /// Order against the previous (finer) row; `None` on the first row.
    pub order: Option<f64>,
}

/// Endpoint-velocity accuracy of linear and quintic splines on a uniform
/// Lorenz dataset at the given downsampling factors (increasing). Spline
/// velocities are mapped to physical time and compared with the exact
/// right-hand side at both ends of every segment; each segment contributes
/// `‖s'(ends) - f(u(ends))‖ / ‖f(u(ends))‖`.
pub fn convergence_study(data: &TrajectorySet, factors: &[usize]) -> Result<Vec<ConvergenceRow>> {
    if data.system != SystemTag::Lorenz {
        return Err(BenchError::Config(format!(
            "the convergence study needs the analytic Lorenz right-hand side, dataset is {}",
            data.system
        )));
    }
    let grid = data
        .shared_grid()
        .filter(|g| g.is_uniform(1e-9))
        .ok_or_else(|| BenchError::Config("the convergence study needs a shared uniform grid".into()))?;
    if factors.is_empty() || factors.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BenchError::Config("factors must be nonempty and increasing".into()));
    }
    let base_dt = data.raw_horizon * (grid[1] - grid[0]);
    let horizon = data.raw_horizon;
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for kind in [SplineKind::Linear, SplineKind::Quintic] {
        let mut errors: Vec<f64> = Vec::new();
        let mut steps: Vec<f64> = Vec::new();
        for &factor in factors {
            let coarse = data.downsample(factor)?;
            let mut total = 0.0;
            let mut count = 0usize;
            for (g, s) in coarse.grids.iter().zip(&coarse.states) {
                let ends = endpoint_velocities(kind, g.clone(), s.view())?;
                for (seg, (v0, v1)) in ends.into_iter().enumerate() {
                    let f0 = Array1::from(lorenz_rhs([s[[seg, 0]], s[[seg, 1]], s[[seg, 2]]]).to_vec());
                    let f1 = Array1::from(lorenz_rhs([s[[seg + 1, 0]], s[[seg + 1, 1]], s[[seg + 1, 2]]]).to_vec());
                    let num = (&v0 / horizon - &f0).mapv(|v| v * v).sum() + (&v1 / horizon - &f1).mapv(|v| v * v).sum();
                    let den = f0.dot(&f0) + f1.dot(&f1);
                    if den > 0.0 {
                        total += (num / den).sqrt();
                        count += 1;
                    }
                }
            }
            if count == 0 {
                return Err(BenchError::Numeric("no usable segments".into()));
            }
            let error = total / count as f64;
            let dt = base_dt * factor as f64;
            let order = errors
                .last()
                .zip(steps.last())
                .map(|(&e_prev, &h_prev)| (error / e_prev).ln() / (dt / h_prev).ln());
            errors.push(error);
            steps.push(dt);
            rows.push(ConvergenceRow {
                spline: kind,
                factor,
                dt,
                n_segments: count,
                error,
                order,
            });
        }
    }
    Ok(rows)
}

/// Mean empirical order of the rows for one spline kind.
pub fn study_order(rows: &[ConvergenceRow], kind: SplineKind) -> Result<f64> {
    let (e, h): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| r.spline == kind).map(|r| (r.error, r.dt)).unzip();
    let orders = empirical_orders(&e, &h)?;
    Ok(orders.iter().sum::<f64>() / orders.len() as f64)
}

/// Spline velocity at the start and end of every segment, using the
/// segment's own polynomial at both ends (one-sided limits).
fn endpoint_velocities(
    kind: SplineKind,
    grid: cfo_core::TimeGrid,
    values: ArrayView2<f64>,
) -> Result<Vec<(Array1<f64>, Array1<f64>)>> {
    let n = grid.n_segments();
    match kind {
        SplineKind::Linear => {
            let s = LinearSpline::build(grid.clone(), values)?;
            (0..n)
                .map(|k| {
                    let v = s.eval_velocity(grid[k])?;
                    Ok((v.clone(), v))
                })
                .collect::<cfo_core::Result<_>>()
                .map_err(Into::into)
        }
        SplineKind::Quintic => {
            let s = QuinticSpline::build(grid, values)?;
            (0..n)
                .map(|k| {
                    let [_, v0, _] = s.eval_on_segment(k, 0.0)?;
                    let [_, v1, _] = s.eval_on_segment(k, 1.0)?;
                    Ok((v0, v1))
                })
                .collect::<cfo_core::Result<_>>()
                .map_err(Into::into)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NfeRow {
    pub method: Method,
    /// Budget as a percentage of one evaluation per data interval.
    pub budget_pct: f64,
    pub steps: usize,
    pub nfe: usize,
    /// Mean final-time relative error; `+inf` if any rollout diverged.
    pub final_error: f64,
    pub n_diverged: usize,
}

/// Final-time error at each NFE budget. A budget of `p`% allows
/// `round(p/100 · intervals)` evaluations, spent as equal steps of `method`
/// over the whole window. Budgets too small for one step are skipped.
pub fn nfe_sweep<D: Dynamics + ?Sized>(
    f: &D,
    test: &TrajectorySet,
    budgets_pct: &[f64],
    methods: &[Method],
) -> Result<Vec<NfeRow>> {
    let times = shared_times(test)?;
    let intervals = times.len() - 1;
    let u0 = test.initial_states();
    let truth: Vec<Vec<f64>> = test.states.iter().map(|s| s.row(s.nrows() - 1).to_vec()).collect();
    let mut rows = Vec::new();
    for &method in methods {
        for &p in budgets_pct {
            if !(p > 0.0) {
                return Err(BenchError::Config(format!("budget must be positive, got {p}")));
            }
            let evals = (p / 100.0 * intervals as f64).round() as usize;
            let steps = evals / method.stages();
            if steps == 0 {
                continue;
            }
            let finals = final_states(f, u0.view(), steps, method)?;
            let mut errors = Vec::with_capacity(test.len());
            let mut n_diverged = 0;
            for (k, fin) in finals.iter().enumerate() {
                match fin {
                    Some(u) => errors.push(relative_l2_vec(&u.to_vec(), &truth[k])?),
                    None => {
                        n_diverged += 1;
                        errors.push(f64::INFINITY);
                    }
                }
            }
            rows.push(NfeRow {
                method,
                budget_pct: p,
                steps,
                nfe: steps * method.stages(),
                final_error: mean_sd(&errors).0,
                n_diverged,
            });
        }
    }
    Ok(rows)
}

fn final_states<D: Dynamics + ?Sized>(
    f: &D,
    u0: ArrayView2<f64>,
    steps: usize,
    method: Method,
) -> Result<Vec<Option<Array1<f64>>>> {
    match integrate_fixed(f, u0, 0.0, 1.0, steps, method, DIVERGENCE_BOUND) {
        Ok((u, _)) => Ok(u.outer_iter().map(|r| Some(r.to_owned())).collect()),
        Err(CfoError::Diverged { .. }) | Err(CfoError::Numeric(_)) => Ok((0..u0.nrows())
            .map(|k| {
                integrate_fixed(f, u0.slice(ndarray::s![k..k + 1, ..]), 0.0, 1.0, steps, method, DIVERGENCE_BOUND)
                    .ok()
                    .map(|(u, _)| u.row(0).to_owned())
            })
            .collect()),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReverseRow {
    /// Noise standard deviation relative to the RMS of the terminal state.
    pub noise: f64,
    pub target_time: f64,
    /// `t_star - target_time`.
    pub horizon: f64,
    /// Mean relative error of the recovered state; `+inf` once any
    /// trajectory diverged.
    pub error: f64,
}

/// Perturbs each test state at `t_star` (a grid time) by Gaussian noise of
/// relative size `noise`, integrates backward over the grid and reports the
/// error at every earlier grid time. Trajectory `k` uses stream `k` of `seed`.
pub fn reverse_study<D: Dynamics + ?Sized>(
    f: &D,
    test: &TrajectorySet,
    t_star: f64,
    noise_levels: &[f64],
    solver: &SolverConfig,
    seed: u64,
) -> Result<Vec<ReverseRow>> {
    let times = shared_times(test)?;
    let Some(i_star) = times.iter().position(|&t| (t - t_star).abs() < 1e-12) else {
        return Err(BenchError::Config(format!("t_star = {t_star} is not a grid time")));
    };
    if i_star == 0 {
        return Ok(Vec::new());
    }
    let targets: Vec<f64> = times[..i_star].iter().rev().copied().collect();
    let d = test.state_dim;
    let mut rows = Vec::new();
    for &noise in noise_levels {
        if !(noise >= 0.0) {
            return Err(BenchError::Config(format!("noise level must be >= 0, got {noise}")));
        }
        let mut u_star = Array2::zeros((test.len(), d));
        for (k, s) in test.states.iter().enumerate() {
            let u = s.row(i_star);
            let rms = (u.dot(&u) / d as f64).sqrt();
            let mut rng = substream(seed, k as u64);
            for j in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                u_star[[k, j]] = u[j] + noise * rms * z;
            }
        }
        let mut path_times = vec![t_star];
        path_times.extend_from_slice(&targets);
        let paths: Vec<Array2<f64>> = match rollout_reverse_ensemble(f, u_star.view(), t_star, &targets, solver) {
            Ok(r) => r.states.outer_iter().map(|p| p.to_owned()).collect(),
            Err(CfoError::Diverged { .. }) | Err(CfoError::Numeric(_)) => (0..test.len())
                .map(|k| reverse_partial(f, u_star.slice(ndarray::s![k..k + 1, ..]), &path_times, solver))
                .collect(),
            Err(e) => return Err(e.into()),
        };
        for (j, &t) in targets.iter().enumerate() {
            let mut errs = Vec::with_capacity(test.len());
            for (k, p) in paths.iter().enumerate() {
                let truth = test.states[k].row(i_star - 1 - j).to_vec();
                errs.push(if j + 1 < p.nrows() {
                    relative_l2_vec(&p.row(j + 1).to_vec(), &truth)?
                } else {
                    f64::INFINITY
                });
            }
            rows.push(ReverseRow {
                noise,
                target_time: t,
                horizon: t_star - t,
                error: mean_sd(&errs).0,
            });
        }
    }
    Ok(rows)
}

/// States of one backward path up to its divergence, if any.
fn reverse_partial<D: Dynamics + ?Sized>(
    f: &D,
    u: ArrayView2<f64>,
    times: &[f64],
    solver: &SolverConfig,
) -> Array2<f64> {
    match rollout_ensemble_partial(f, u, times, solver) {
        (Ok(r), _) | (Err(_), Some(r)) => r.states.index_axis(Axis(0), 0).to_owned(),
        (Err(_), None) => Array2::zeros((0, u.ncols())),
    }
}

/// Integrates `[0, 1]` forward with `steps` equal steps, then back to 0,
/// and returns the mean relative error against the starting states
/// (`+inf` if either leg diverges).
pub fn round_trip_error<D: Dynamics + ?Sized>(f: &D, u0: ArrayView2<f64>, steps: usize, method: Method) -> Result<f64> {
    let fwd = match integrate_fixed(f, u0, 0.0, 1.0, steps, method, DIVERGENCE_BOUND) {
        Ok((u, _)) => u,
        Err(CfoError::Diverged { .. }) | Err(CfoError::Numeric(_)) => return Ok(f64::INFINITY),
        Err(e) => return Err(e.into()),
    };
    let back = match integrate_fixed(f, fwd.view(), 1.0, 0.0, steps, method, DIVERGENCE_BOUND) {
        Ok((u, _)) => u,
        Err(CfoError::Diverged { .. }) | Err(CfoError::Numeric(_)) => return Ok(f64::INFINITY),
        Err(e) => return Err(e.into()),
    };
    let errs: Vec<f64> = (0..u0.nrows())
        .map(|k| relative_l2_vec(&back.row(k).to_vec(), &u0.row(k).to_vec()))
        .collect::<cfo_core::Result<_>>()?;
    Ok(mean_sd(&errs).0)
}

//! Fixed-step explicit ODE solvers and rollouts.
//!
//! States are carried as ensembles (one row per initial condition) so that a
//! learned vector field is evaluated once per stage for the whole test set.
//! NFE counts right-hand-side calls per trajectory, not per ensemble.

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CfoError, Result};
use crate::vector_field::VectorField;

/// Default bound on the per-row Euclidean state norm.
pub const DIVERGENCE_BOUND: f64 = 1e8;

/// A (possibly time-dependent) right-hand side evaluated on every row.
pub trait Dynamics {
    fn eval(&self, t: f64, states: ArrayView2<f64>) -> Result<Array2<f64>>;
}

impl<F> Dynamics for F
where
    F: Fn(f64, ArrayView2<f64>) -> Array2<f64>,
{
    fn eval(&self, t: f64, states: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self(t, states))
    }
}

impl Dynamics for VectorField {
    fn eval(&self, t: f64, states: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.forward_at(t, states)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Heun,
    Rk4,
}

impl Method {
    pub fn stages(self) -> usize {
        match self {
            Method::Euler => 1,
            Method::Heun => 2,
            Method::Rk4 => 4,
        }
    }

    pub fn order(self) -> usize {
        self.stages()
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Euler => "euler",
            Method::Heun => "heun",
            Method::Rk4 => "rk4",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = CfoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Method::Euler),
            "heun" => Ok(Method::Heun),
            "rk4" => Ok(Method::Rk4),
            other => invalid(format!("unknown solver '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub substeps_per_interval: usize,
    pub divergence_bound: f64,
}

impl SolverConfig {
    pub fn new(method: Method, substeps_per_interval: usize) -> Result<Self> {
        if substeps_per_interval == 0 {
            return invalid("substeps_per_interval must be positive");
        }
        Ok(Self {
            method,
            substeps_per_interval,
            divergence_bound: DIVERGENCE_BOUND,
        })
    }

    pub fn rk4() -> Self {
        Self::new(Method::Rk4, 1).unwrap()
    }

    pub fn nfe_per_interval(&self) -> usize {
        self.substeps_per_interval * self.method.stages()
    }
}

/// One explicit step of size `h` (negative `h` integrates backward).
pub fn step<D: Dynamics + ?Sized>(method: Method, f: &D, t: f64, u: ArrayView2<f64>, h: f64) -> Result<Array2<f64>> {
    if h == 0.0 || !h.is_finite() {
        return invalid(format!("step size must be finite and nonzero, got {h}"));
    }
    let next = match method {
        Method::Euler => {
            let k1 = f.eval(t, u)?;
            &u + &(k1 * h)
        }
        Method::Heun => {
            let k1 = f.eval(t, u)?;
            let pred = &u + &(&k1 * h);
            let k2 = f.eval(t + h, pred.view())?;
            &u + &((k1 + k2) * (0.5 * h))
        }
        Method::Rk4 => {
            let k1 = f.eval(t, u)?;
            let k2 = f.eval(t + 0.5 * h, (&u + &(&k1 * (0.5 * h))).view())?;
            let k3 = f.eval(t + 0.5 * h, (&u + &(&k2 * (0.5 * h))).view())?;
            let k4 = f.eval(t + h, (&u + &(&k3 * h)).view())?;
            let incr = k1 + (k2 + k3) * 2.0 + k4;
            &u + &(incr * (h / 6.0))
        }
    };
    if next.iter().any(|v| !v.is_finite()) {
        return Err(CfoError::Numeric(format!("non-finite state after step at t={t}")));
    }
    Ok(next)
}

/// Single-trajectory step, convenience wrapper around [`step`].
pub fn step_single<D: Dynamics + ?Sized>(method: Method, f: &D, t: f64, u: ArrayView1<f64>, h: f64) -> Result<Array1<f64>> {
    Ok(step(method, f, t, u.insert_axis(Axis(0)), h)?.row(0).to_owned())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    pub times: Vec<f64>,
    /// One row per time.
    pub states: Array2<f64>,
    pub nfe: usize,
}

/// Rollout of many initial conditions on a shared time list.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRollout {
    pub times: Vec<f64>,
    /// `(trajectory, time, component)`.
    pub states: Array3<f64>,
    /// Function evaluations per trajectory.
    pub nfe: usize,
}

impl EnsembleRollout {
    pub fn trajectory(&self, k: usize) -> ArrayView2<'_, f64> {
        self.states.index_axis(Axis(0), k)
    }

    pub fn into_single(self) -> RolloutResult {
        RolloutResult {
            times: self.times,
            states: self.states.index_axis(Axis(0), 0).to_owned(),
            nfe: self.nfe,
        }
    }
}

fn max_row_norm(u: &Array2<f64>) -> f64 {
    u.axis_iter(Axis(0))
        .map(|r| r.dot(&r).sqrt())
        .fold(0.0, |m, v| if v.is_nan() || m.is_nan() { f64::NAN } else { m.max(v) })
}

/// Integrates through `times` (monotone, either direction) with
/// `substeps` equal steps per interval, recording every listed time.
/// On blow-up the error carries how many states were recorded; the partial
/// states are returned through `partial`.
fn integrate_through<D: Dynamics + ?Sized>(
    f: &D,
    u0: ArrayView2<f64>,
    times: &[f64],
    solver: &SolverConfig,
    partial: &mut Option<EnsembleRollout>,
) -> Result<EnsembleRollout> {
    if times.is_empty() {
        return invalid("rollout needs at least one time");
    }
    let forward = times.len() < 2 || times[1] > times[0];
    if times.windows(2).any(|w| (w[1] > w[0]) != forward || w[1] == w[0]) {
        return invalid("rollout times must be strictly monotone");
    }
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(CfoError::Numeric("initial state is not finite".into()));
    }
    let (n, d) = u0.dim();
    let mut states = Array3::zeros((n, times.len(), d));
    states.index_axis_mut(Axis(1), 0).assign(&u0);
    let mut u = u0.to_owned();
    let mut nfe = 0;
    let subs = solver.substeps_per_interval;
    for k in 0..times.len() - 1 {
        let (ta, tb) = (times[k], times[k + 1]);
        let h = (tb - ta) / subs as f64;
        for j in 0..subs {
            let t = ta + j as f64 * h;
            let next = step(solver.method, f, t, u.view(), h);
            nfe += solver.method.stages();
            let norm = match &next {
                Ok(v) => max_row_norm(v),
                Err(_) => f64::INFINITY,
            };
            if !(norm <= solver.divergence_bound) {
                *partial = Some(EnsembleRollout {
                    times: times[..=k].to_vec(),
                    states: states.slice(ndarray::s![.., ..=k, ..]).to_owned(),
                    nfe,
                });
                return Err(CfoError::Diverged {
                    t: t + h,
                    norm,
                    bound: solver.divergence_bound,
                    completed: k + 1,
                });
            }
            u = next?;
        }
        states.index_axis_mut(Axis(1), k + 1).assign(&u);
    }
    Ok(EnsembleRollout {
        times: times.to_vec(),
        states,
        nfe,
    })
}

/// Forward rollout of every row of `u0` through increasing `eval_times`.
pub fn rollout_ensemble<D: Dynamics + ?Sized>(
    f: &D,
    u0: ArrayView2<f64>,
    eval_times: &[f64],
    solver: &SolverConfig,
) -> Result<EnsembleRollout> {
    if eval_times.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("forward rollout needs increasing evaluation times");
    }
    integrate_through(f, u0, eval_times, solver, &mut None)
}

/// Like [`rollout_ensemble`], also returning the states recorded before a
/// divergence.
pub fn rollout_ensemble_partial<D: Dynamics + ?Sized>(
    f: &D,
    u0: ArrayView2<f64>,
    eval_times: &[f64],
    solver: &SolverConfig,
) -> (Result<EnsembleRollout>, Option<EnsembleRollout>) {
    let mut partial = None;
    let res = integrate_through(f, u0, eval_times, solver, &mut partial);
    (res, partial)
}

pub fn rollout<D: Dynamics + ?Sized>(
    f: &D,
    u0: ArrayView1<f64>,
    eval_times: &[f64],
    solver: &SolverConfig,
) -> Result<RolloutResult> {
    Ok(rollout_ensemble(f, u0.insert_axis(Axis(0)), eval_times, solver)?.into_single())
}

/// Integrates backward from `(t_star, u_star)` through decreasing
/// `target_times`. The result's times start with `t_star`.
pub fn rollout_reverse_ensemble<D: Dynamics + ?Sized>(
    f: &D,
    u_star: ArrayView2<f64>,
    t_star: f64,
    target_times: &[f64],
    solver: &SolverConfig,
) -> Result<EnsembleRollout> {
    if target_times.iter().any(|&s| !(0.0..=t_star).contains(&s)) {
        return invalid(format!("reverse targets must lie in [0, {t_star}]"));
    }
    let mut times = vec![t_star];
    times.extend_from_slice(target_times);
    if times.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("reverse targets must be strictly decreasing and below t_star");
    }
    integrate_through(f, u_star, &times, solver, &mut None)
}

pub fn rollout_reverse<D: Dynamics + ?Sized>(
    f: &D,
    u_star: ArrayView1<f64>,
    t_star: f64,
    target_times: &[f64],
    solver: &SolverConfig,
) -> Result<RolloutResult> {
    Ok(rollout_reverse_ensemble(f, u_star.insert_axis(Axis(0)), t_star, target_times, solver)?.into_single())
}

/// Integrates `[t0, t1]` with `n_steps` equal steps and returns the final
/// states; used for NFE budgets that do not align with an evaluation grid.
pub fn integrate_fixed<D: Dynamics + ?Sized>(
    f: &D,
    u0: ArrayView2<f64>,
    t0: f64,
    t1: f64,
    n_steps: usize,
    method: Method,
    divergence_bound: f64,
) -> Result<(Array2<f64>, usize)> {
    if n_steps == 0 {
        return invalid("n_steps must be positive");
    }
    let h = (t1 - t0) / n_steps as f64;
    let mut u = u0.to_owned();
    for k in 0..n_steps {
        let t = t0 + k as f64 * h;
        u = step(method, f, t, u.view(), h)?;
        let norm = max_row_norm(&u);
        if !(norm <= divergence_bound) {
            return Err(CfoError::Diverged {
                t: t + h,
                norm,
                bound: divergence_bound,
                completed: k + 1,
            });
        }
    }
    Ok((u, n_steps * method.stages()))
}

/// A learned or exact one-step map `u_i -> u_{i+1}`.
pub trait StepMap {
    fn advance(&self, states: ArrayView2<f64>) -> Result<Array2<f64>>;
}

impl<F> StepMap for F
where
    F: Fn(ArrayView2<f64>) -> Array2<f64>,
{
    fn advance(&self, states: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self(states))
    }
}

impl StepMap for VectorField {
    fn advance(&self, states: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.forward_batch(&[], states)
    }
}

/// Autoregressive rollout `u_{i+1} = F(u_i)`; one NFE per step. The returned
/// times are step indices.
pub fn ar_rollout_ensemble<M: StepMap + ?Sized>(
    model: &M,
    u0: ArrayView2<f64>,
    n_steps: usize,
    divergence_bound: f64,
) -> Result<EnsembleRollout> {
    let (n, d) = u0.dim();
    let mut states = Array3::zeros((n, n_steps + 1, d));
    states.index_axis_mut(Axis(1), 0).assign(&u0);
    let mut u = u0.to_owned();
    for k in 0..n_steps {
        u = model.advance(u.view())?;
        let norm = max_row_norm(&u);
        if !(norm <= divergence_bound) {
            return Err(CfoError::Diverged {
                t: (k + 1) as f64,
                norm,
                bound: divergence_bound,
                completed: k + 1,
            });
        }
        states.index_axis_mut(Axis(1), k + 1).assign(&u);
    }
    Ok(EnsembleRollout {
        times: (0..=n_steps).map(|k| k as f64).collect(),
        states,
        nfe: n_steps,
    })
}

pub fn ar_rollout<M: StepMap + ?Sized>(model: &M, u0: ArrayView1<f64>, n_steps: usize) -> Result<RolloutResult> {
    Ok(ar_rollout_ensemble(model, u0.insert_axis(Axis(0)), n_steps, DIVERGENCE_BOUND)?.into_single())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn decay(_t: f64, u: ArrayView2<f64>) -> Array2<f64> {
        -&u
    }

    fn zero(_t: f64, u: ArrayView2<f64>) -> Array2<f64> {
        Array2::zeros(u.dim())
    }

    #[test]
    fn single_steps_on_decay() {
        let u = array![1.0];
        let h: f64 = 0.1;
        let rk4 = step_single(Method::Rk4, &decay, 0.0, u.view(), h).unwrap()[0];
        let taylor = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert_relative_eq!(rk4, taylor, epsilon = 1e-15);
        assert!((rk4 - 0.904_837_50).abs() < 1e-8);
        assert_relative_eq!(step_single(Method::Euler, &decay, 0.0, u.view(), h).unwrap()[0], 0.9);
        let heun = step_single(Method::Heun, &decay, 0.0, u.view(), h).unwrap()[0];
        assert_relative_eq!(heun, 1.0 - h + h * h / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_field_keeps_state() {
        let u = array![[1.5, -2.0]];
        for m in [Method::Euler, Method::Heun, Method::Rk4] {
            assert_eq!(step(m, &zero, 0.3, u.view(), 0.2).unwrap(), u);
        }
        let times = [0.0, 0.3, 1.0];
        let r = rollout(&zero, array![1.0, 2.0].view(), &times, &SolverConfig::rk4()).unwrap();
        for row in r.states.rows() {
            assert_eq!(row, array![1.0, 2.0]);
        }
        let b = rollout_reverse(&zero, array![4.0].view(), 1.0, &[0.5, 0.0], &SolverConfig::rk4()).unwrap();
        assert_eq!(b.times, vec![1.0, 0.5, 0.0]);
        assert!(b.states.iter().all(|&v| v == 4.0));
    }

    #[test]
    fn zero_step_rejected() {
        assert!(step(Method::Euler, &decay, 0.0, array![[1.0]].view(), 0.0).is_err());
    }

    #[test]
    fn nfe_accounting() {
        let times: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        for (m, stages) in [(Method::Euler, 1), (Method::Heun, 2), (Method::Rk4, 4)] {
            let cfg = SolverConfig::new(m, 3).unwrap();
            let r = rollout(&decay, array![1.0].view(), &times, &cfg).unwrap();
            assert_eq!(r.nfe, 10 * 3 * stages);
            assert_eq!(r.states.nrows(), 11);
            assert_eq!(r.states[[0, 0]], 1.0);
        }
    }

    #[test]
    fn solver_orders_on_decay() {
        let exact = (-1.0f64).exp();
        for m in [Method::Euler, Method::Heun, Method::Rk4] {
            let err = |n: usize| {
                let (u, _) = integrate_fixed(&decay, array![[1.0]].view(), 0.0, 1.0, n, m, 1e8).unwrap();
                (u[[0, 0]] - exact).abs()
            };
            let p = (err(20) / err(40)).log2();
            assert!((p - m.order() as f64).abs() < 0.2, "{m}: order {p}");
        }
    }

    #[test]
    fn reverse_undoes_forward() {
        let f = |t: f64, u: ArrayView2<f64>| u.mapv(|v| (v + t).sin());
        let cfg = SolverConfig::new(Method::Rk4, 50).unwrap();
        let fwd = rollout(&f, array![0.3, -0.8].view(), &[0.0, 1.0], &cfg).unwrap();
        let back = rollout_reverse(&f, fwd.states.row(1), 1.0, &[0.0], &cfg).unwrap();
        for j in 0..2 {
            assert!((back.states[[1, j]] - fwd.states[[0, j]]).abs() < 1e-9);
        }
    }

    #[test]
    fn divergence_reports_partial_progress() {
        let blow = |_t: f64, u: ArrayView2<f64>| u.mapv(|v| v * v);
        let times: Vec<f64> = (0..=20).map(|k| k as f64 / 10.0).collect();
        let cfg = SolverConfig::rk4();
        let (res, partial) = rollout_ensemble_partial(&blow, array![[1.0]].view(), &times, &cfg);
        match res {
            Err(CfoError::Diverged { completed, .. }) => {
                let p = partial.unwrap();
                assert_eq!(p.times.len(), completed);
                assert!(completed >= 2 && completed < times.len());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn reverse_target_validation() {
        let cfg = SolverConfig::rk4();
        assert!(rollout_reverse(&zero, array![1.0].view(), 0.5, &[0.7], &cfg).is_err());
        assert!(rollout_reverse(&zero, array![1.0].view(), 0.5, &[0.1, 0.3], &cfg).is_err());
        assert!(rollout(&zero, array![1.0].view(), &[0.5, 0.2], &cfg).is_err());
    }

    #[test]
    fn ar_rollouts() {
        let identity = |u: ArrayView2<f64>| u.to_owned();
        let r = ar_rollout(&identity, array![2.0, 3.0].view(), 5).unwrap();
        assert_eq!(r.nfe, 5);
        assert!(r.states.rows().into_iter().all(|row| row == array![2.0, 3.0]));

        // exact one-step map for du/dt = -u with step 0.1
        let exact = |u: ArrayView2<f64>| u.mapv(|v| v * (-0.1f64).exp());
        let r = ar_rollout(&exact, array![1.0].view(), 10).unwrap();
        for k in 0..=10 {
            assert_relative_eq!(r.states[[k, 0]], (-0.1 * k as f64).exp(), max_relative = 1e-14);
        }
    }
}

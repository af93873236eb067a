//! Adam training loops: flow matching against spline interpolants (CFO)
//! and the teacher-forced one-step autoregressive baseline.

use ndarray::{Array2, Array3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CfoError, Result};
use crate::interpolant::sample_batch;
use crate::metrics::mean_sd;
use crate::odeint::{ar_rollout_ensemble, rollout_ensemble, SolverConfig, DIVERGENCE_BOUND};
use crate::rng::substream;
use crate::spline::{NoiseSchedule, Spline, SplineKind, TemporalSpline};
use crate::systems::TrajectorySet;
use crate::vector_field::{Affine, MlpConfig, Normalizer, VectorField, VectorFieldParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    /// Validation rollout period in steps; 0 disables periodic evaluation.
    pub eval_every: usize,
    pub gamma0: f64,
    pub noise_m: u32,
    pub spline_kind: SplineKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Desk-scale defaults.
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch_size: 256,
            learning_rate: 1e-4,
            adam_betas: (0.9, 0.99),
            adam_eps: 1e-8,
            eval_every: 2_000,
            gamma0: 1e-5,
            noise_m: 3,
            spline_kind: SplineKind::Quintic,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 {
            return invalid("steps and batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return invalid(format!("Adam betas must lie in [0, 1), got ({b1}, {b2})"));
        }
        if !(self.adam_eps > 0.0) {
            return invalid("adam_eps must be positive");
        }
        NoiseSchedule::new(self.gamma0, self.noise_m)?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.gamma0, self.noise_m)
    }
}

/// First and second moment accumulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. On a non-finite result neither the
/// parameters nor the state are modified.
pub fn adam_step(
    params: &mut VectorFieldParams,
    state: &mut AdamState,
    grads: &VectorFieldParams,
    config: &TrainConfig,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return invalid("parameter, gradient and optimizer state sizes differ");
    }
    let g = grads.as_slice();
    if g.iter().any(|v| !v.is_finite()) {
        return Err(CfoError::Numeric("non-finite gradient".into()));
    }
    let (b1, b2) = config.adam_betas;
    let t = state.step + 1;
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    let lr = config.learning_rate;
    let mut m = state.m.clone();
    let mut v = state.v.clone();
    let mut p = params.as_slice().to_vec();
    for i in 0..n {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + config.adam_eps);
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(CfoError::Numeric(format!("non-finite parameter after Adam step {t}")));
    }
    params.as_mut_slice().copy_from_slice(&p);
    state.m = m;
    state.v = v;
    state.step = t;
    Ok(())
}

/// One training step's record; `eval_error` is set on evaluation steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub loss: f64,
    pub eval_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Best-validation model (final model without validation data).
    pub model: VectorField,
    pub history: Vec<HistoryRow>,
    pub best_step: usize,
    pub best_eval: Option<f64>,
}

/// Why training stopped early, with the last good model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainFailure {
    pub error: CfoError,
    pub step: usize,
    pub last_good_step: usize,
    pub last_good: VectorField,
    pub history: Vec<HistoryRow>,
}

impl std::fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "training aborted at step {} ({}); last good model from step {}",
            self.step, self.error, self.last_good_step
        )
    }
}

impl std::error::Error for TrainFailure {}

impl From<TrainFailure> for CfoError {
    fn from(f: TrainFailure) -> Self {
        match f.error {
            CfoError::Numeric(msg) => CfoError::Numeric(format!(
                "{msg} at step {} (last good step {})",
                f.step, f.last_good_step
            )),
            other => other,
        }
    }
}

/// Moving average of the loss column over `window` steps.
pub fn smoothed_losses(history: &[HistoryRow], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(history.len());
    let mut acc = 0.0;
    for (i, row) in history.iter().enumerate() {
        acc += row.loss;
        if i >= window {
            acc -= history[i - window].loss;
        }
        out.push(acc / (i + 1).min(window) as f64);
    }
    out
}

fn column_stats(rows: impl Iterator<Item = Vec<f64>>, dim: usize) -> Affine {
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); dim];
    for r in rows {
        for (j, v) in r.into_iter().enumerate() {
            cols[j].push(v);
        }
    }
    let mut shift = Vec::with_capacity(dim);
    let mut scale = Vec::with_capacity(dim);
    for c in &cols {
        let (m, s) = mean_sd(c);
        shift.push(if m.is_finite() { m } else { 0.0 });
        scale.push(if s.is_finite() && s > 1e-12 { s } else { 1.0 });
    }
    Affine { shift, scale }
}

/// Per-component standardization of the knot states (input) and of the
/// spline velocities at the knots (output).
pub fn cfo_normalizer(data: &TrajectorySet, splines: &[Spline]) -> Result<Normalizer> {
    let d = data.state_dim;
    let input = column_stats(data.states.iter().flat_map(|s| s.rows().into_iter().map(|r| r.to_vec())), d);
    let mut vel = Vec::new();
    for s in splines {
        for &t in s.grid().times() {
            vel.push(s.eval_velocity(t)?.to_vec());
        }
    }
    let output = column_stats(vel.into_iter(), d);
    Ok(Normalizer { input, output })
}

/// Standardization of the knot states on both sides of a one-step map.
pub fn ar_normalizer(data: &TrajectorySet) -> Normalizer {
    let a = column_stats(
        data.states.iter().flat_map(|s| s.rows().into_iter().map(|r| r.to_vec())),
        data.state_dim,
    );
    Normalizer {
        input: a.clone(),
        output: a,
    }
}

/// Builds one spline per trajectory.
pub fn build_splines(data: &TrajectorySet, kind: SplineKind) -> Result<Vec<Spline>> {
    data.grids
        .iter()
        .zip(&data.states)
        .enumerate()
        .map(|(k, (g, s))| {
            if g.len() < kind.min_knots() {
                return invalid(format!(
                    "trajectory {k} has {} knots, {kind} splines need at least {}",
                    g.len(),
                    kind.min_knots()
                ));
            }
            Spline::build(kind, g.clone(), s.view())
        })
        .collect()
}

fn check_val(val: &TrajectorySet, d: usize) -> Result<Array3<f64>> {
    if val.state_dim != d {
        return invalid(format!("validation states have dimension {}, training {d}", val.state_dim));
    }
    val.stacked()
}

/// Mean relative L² of RK4 rollouts (one step per interval) from the
/// validation initial states over the validation grid. A diverged rollout
/// scores `+inf`.
pub fn cfo_validation_error(model: &VectorField, val: &TrajectorySet, truth: &Array3<f64>) -> f64 {
    let grid = val.grids[0].times();
    match rollout_ensemble(model, val.initial_states().view(), grid, &SolverConfig::rk4()) {
        Ok(r) => mean_rollout_error(&r.states, truth),
        Err(_) => f64::INFINITY,
    }
}

fn ar_validation_error(model: &VectorField, val: &TrajectorySet, truth: &Array3<f64>) -> f64 {
    let n_steps = truth.dim().1 - 1;
    match ar_rollout_ensemble(model, val.initial_states().view(), n_steps, DIVERGENCE_BOUND) {
        Ok(r) => mean_rollout_error(&r.states, truth),
        Err(_) => f64::INFINITY,
    }
}

fn mean_rollout_error(pred: &Array3<f64>, truth: &Array3<f64>) -> f64 {
    let n = truth.dim().0;
    let mut total = 0.0;
    for k in 0..n {
        match crate::metrics::relative_l2(pred.index_axis(Axis(0), k), truth.index_axis(Axis(0), k)) {
            Ok(e) if e.is_finite() => total += e,
            _ => return f64::INFINITY,
        }
    }
    total / n as f64
}

/// Shared Adam loop. `batch` produces the loss and gradient for a step,
/// `evaluate` scores the current model (lower is better).
fn optimize<B, E>(
    mut model: VectorField,
    config: &TrainConfig,
    mut batch: B,
    evaluate: Option<E>,
) -> std::result::Result<TrainOutcome, Box<TrainFailure>>
where
    B: FnMut(&VectorField) -> Result<(f64, VectorFieldParams)>,
    E: Fn(&VectorField) -> f64,
{
    let mut state = AdamState::new(model.params.len());
    let mut history = Vec::with_capacity(config.steps);
    let mut best = model.clone();
    let mut best_step = 0;
    let mut best_eval: Option<f64> = None;
    for step in 1..=config.steps {
        let res = batch(&model).and_then(|(loss, grads)| {
            adam_step(&mut model.params, &mut state, &grads, config)?;
            Ok(loss)
        });
        let loss = match res {
            Ok(l) => l,
            Err(error) => {
                let last_good_step = if best_eval.is_some() { best_step } else { step - 1 };
                let last_good = if best_eval.is_some() { best } else { model };
                return Err(Box::new(TrainFailure {
                    error,
                    step,
                    last_good_step,
                    last_good,
                    history,
                }));
            }
        };
        let is_eval = config.eval_every > 0 && (step % config.eval_every == 0 || step == config.steps);
        let eval_error = match (&evaluate, is_eval) {
            (Some(f), true) => Some(f(&model)),
            _ => None,
        };
        if let Some(e) = eval_error {
            if best_eval.is_none_or(|b| e < b) {
                best_eval = Some(e);
                best = model.clone();
                best_step = step;
            }
        }
        history.push(HistoryRow { step, loss, eval_error });
    }
    if best_eval.is_none() {
        best = model;
        best_step = config.steps;
    }
    Ok(TrainOutcome {
        model: best,
        history,
        best_step,
        best_eval,
    })
}

/// Flow-matching training on spline interpolants of `train`. Splines are
/// built once; every step draws a fresh interpolant batch. With `val`
/// (which must share one grid) the best rollout-error model is returned.
pub fn train_cfo(
    train: &TrajectorySet,
    val: Option<&TrajectorySet>,
    config: &TrainConfig,
    mlp: &MlpConfig,
) -> std::result::Result<TrainOutcome, Box<TrainFailure>> {
    let setup = || -> Result<_> {
        config.validate()?;
        if mlp.state_dim != train.state_dim || !mlp.use_time_embedding {
            return invalid("model must take time input and match the data dimension");
        }
        let splines = build_splines(train, config.spline_kind)?;
        let normalizer = cfo_normalizer(train, &splines)?;
        let mut model = VectorField::initialized(mlp.clone(), config.seed)?;
        model.normalizer = normalizer;
        let truth = val.map(|v| check_val(v, train.state_dim)).transpose()?;
        Ok((splines, model, truth, config.schedule()?))
    };
    let (splines, model, truth, schedule) = setup().map_err(|e| setup_failure(e, mlp, config))?;
    let mut rng = substream(config.seed, 1);
    let batch = |m: &VectorField| {
        let b = sample_batch(&splines, &schedule, config.batch_size, &mut rng)?;
        m.batch_loss_and_grad(&b)
    };
    let evaluate = val.zip(truth).map(|(v, t)| move |m: &VectorField| cfo_validation_error(m, v, &t));
    optimize(model, config, batch, evaluate)
}

/// Teacher-forced one-step map `u(t_i) -> u(t_{i+1})` on uniformly sampled
/// trajectories, mean squared one-step loss.
pub fn train_ar(
    train: &TrajectorySet,
    val: Option<&TrajectorySet>,
    config: &TrainConfig,
    mlp: &MlpConfig,
) -> std::result::Result<TrainOutcome, Box<TrainFailure>> {
    let setup = || -> Result<_> {
        config.validate()?;
        if mlp.state_dim != train.state_dim || mlp.use_time_embedding {
            return invalid("one-step model must not take time input and must match the data dimension");
        }
        let grid = train.shared_grid().ok_or_else(|| {
            CfoError::InvalidArgument(
                "autoregressive training requires every trajectory on the same uniform grid; \
                 irregularly subsampled data is not supported"
                    .into(),
            )
        })?;
        if !grid.is_uniform(1e-9) {
            return invalid(
                "autoregressive training requires uniform time steps; irregularly subsampled data is not supported",
            );
        }
        if grid.len() < 2 {
            return invalid("need at least two time points");
        }
        let mut model = VectorField::initialized(mlp.clone(), config.seed)?;
        model.normalizer = ar_normalizer(train);
        let truth = val.map(|v| check_val(v, train.state_dim)).transpose()?;
        Ok((model, truth))
    };
    let (model, truth) = setup().map_err(|e| setup_failure(e, mlp, config))?;
    let d = train.state_dim;
    let n_pairs = train.grids[0].len() - 1;
    let mut rng = substream(config.seed, 1);
    let mut x = Array2::zeros((config.batch_size, d));
    let mut y = Array2::zeros((config.batch_size, d));
    let batch = |m: &VectorField| {
        for r in 0..config.batch_size {
            let k = rng.random_range(0..train.len());
            let i = rng.random_range(0..n_pairs);
            x.row_mut(r).assign(&train.states[k].row(i));
            y.row_mut(r).assign(&train.states[k].row(i + 1));
        }
        m.loss_and_grad(&[], x.view(), y.view())
    };
    let evaluate = val.zip(truth).map(|(v, t)| move |m: &VectorField| ar_validation_error(m, v, &t));
    optimize(model, config, batch, evaluate)
}

fn setup_failure(error: CfoError, mlp: &MlpConfig, config: &TrainConfig) -> Box<TrainFailure> {
    let last_good = match VectorField::initialized(mlp.clone(), config.seed) {
        Ok(m) => m,
        Err(_) => {
            let fallback = MlpConfig::desk(1);
            VectorField::initialized(fallback, 0).expect("default configuration is valid")
        }
    };
    Box::new(TrainFailure {
        error,
        step: 0,
        last_good_step: 0,
        last_good,
        history: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::relative_l2;
    use crate::odeint::rollout;
    use crate::systems::SystemTag;
    use crate::timegrid::TimeGrid;
    use ndarray::{array, Array1};

    fn small_mlp(d: usize) -> MlpConfig {
        MlpConfig {
            state_dim: d,
            hidden_dims: vec![32, 32],
            embed_bands: 2,
            use_time_embedding: true,
        }
    }

    fn config(steps: usize) -> TrainConfig {
        TrainConfig {
            steps,
            batch_size: 64,
            learning_rate: 3e-3,
            eval_every: 0,
            gamma0: 0.0,
            ..TrainConfig::default()
        }
    }

    fn exp_set(u0s: &[f64]) -> TrajectorySet {
        let grid = TimeGrid::uniform(11).unwrap();
        let states = u0s
            .iter()
            .map(|&u0| Array2::from_shape_fn((11, 1), |(i, _)| u0 * (-grid[i]).exp()))
            .collect();
        TrajectorySet::new(SystemTag::Other, vec![grid; u0s.len()], states).unwrap()
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mlp = small_mlp(1);
        let mut params = VectorFieldParams::zeros(&mlp);
        let mut grads = params.zeros_like();
        for (i, g) in grads.as_mut_slice().iter_mut().enumerate() {
            *g = if i % 2 == 0 { 0.3 } else { -2.0 };
        }
        let cfg = TrainConfig::default();
        let mut state = AdamState::new(params.len());
        adam_step(&mut params, &mut state, &grads, &cfg).unwrap();
        for (p, g) in params.as_slice().iter().zip(grads.as_slice()) {
            assert!((p + cfg.learning_rate * g.signum()).abs() < 1e-9);
        }
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_zero_gradient_keeps_params_and_decays_moments() {
        let mlp = small_mlp(1);
        let mut params = crate::vector_field::init_params(&mlp, 3).unwrap();
        let before = params.clone();
        let cfg = TrainConfig::default();
        let mut state = AdamState::new(params.len());
        state.m.fill(1.0);
        state.v.fill(1.0);
        let zero = params.zeros_like();
        adam_step(&mut params, &mut state, &zero, &cfg).unwrap();
        assert!(state.m.iter().all(|&m| (m - 0.9).abs() < 1e-15));
        assert!(state.v.iter().all(|&v| (v - 0.99).abs() < 1e-15));
        let mut zeroed = AdamState::new(params.len());
        let mut p2 = before.clone();
        adam_step(&mut p2, &mut zeroed, &before.zeros_like(), &cfg).unwrap();
        assert_eq!(p2, before);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mlp = small_mlp(1);
        let mut params = VectorFieldParams::zeros(&mlp);
        let mut grads = params.zeros_like();
        grads.as_mut_slice()[0] = f64::NAN;
        let mut state = AdamState::new(params.len());
        let err = adam_step(&mut params, &mut state, &grads, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, CfoError::Numeric(_)));
        assert_eq!(state.step, 0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = |f: fn(&mut TrainConfig)| {
            let mut c = TrainConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.steps = 0));
        assert!(bad(|c| c.batch_size = 0));
        assert!(bad(|c| c.learning_rate = 0.0));
        assert!(bad(|c| c.adam_betas = (1.0, 0.9)));
        assert!(bad(|c| c.gamma0 = -1.0));
    }

    #[test]
    fn exponential_decay_is_learned() {
        let train = exp_set(&[0.5, 0.8, 1.0, 1.2, 1.5]);
        let out = train_cfo(&train, None, &config(3000), &small_mlp(1)).unwrap();
        let u0 = array![1.0];
        let r = rollout(&out.model, u0.view(), train.grids[0].times(), &SolverConfig::rk4()).unwrap();
        let truth = Array2::from_shape_fn((11, 1), |(i, _)| (-train.grids[0][i]).exp());
        let e = relative_l2(r.states.view(), truth.view()).unwrap();
        assert!(e < 1e-2, "rollout error {e}");
        let f = out.model.forward(0.5, Array1::from_elem(1, 1.0).view()).unwrap();
        assert!((f[0] + 1.0).abs() < 0.05, "field {f}");
        let smooth = smoothed_losses(&out.history, 100);
        assert!(smooth[2999] < smooth[99]);
    }

    #[test]
    fn constant_trajectory_gives_zero_field() {
        let grid = TimeGrid::uniform(11).unwrap();
        let states = vec![Array2::from_elem((11, 2), 0.7)];
        let train = TrajectorySet::new(SystemTag::Other, vec![grid.clone()], states).unwrap();
        let out = train_cfo(&train, None, &config(500), &small_mlp(2)).unwrap();
        assert!(out.history.last().unwrap().loss < 1e-6);
        let r = rollout(&out.model, array![0.7, 0.7].view(), grid.times(), &SolverConfig::rk4()).unwrap();
        assert!(r.states.iter().all(|v| (v - 0.7).abs() < 1e-3));
    }

    #[test]
    fn training_is_deterministic() {
        let train = exp_set(&[0.5, 1.0]);
        let cfg = TrainConfig {
            gamma0: 1e-3,
            ..config(50)
        };
        let a = train_cfo(&train, None, &cfg, &small_mlp(1)).unwrap();
        let b = train_cfo(&train, None, &cfg, &small_mlp(1)).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
        let c = train_cfo(&train, None, &TrainConfig { seed: 1, ..cfg }, &small_mlp(1)).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn validation_selects_best_checkpoint() {
        let train = exp_set(&[0.5, 1.0, 1.5]);
        let val = exp_set(&[0.7, 1.3]);
        let cfg = TrainConfig {
            eval_every: 100,
            ..config(600)
        };
        let out = train_cfo(&train, Some(&val), &cfg, &small_mlp(1)).unwrap();
        let evals: Vec<(usize, f64)> = out
            .history
            .iter()
            .filter_map(|r| r.eval_error.map(|e| (r.step, e)))
            .collect();
        assert_eq!(evals.len(), 6);
        let (step, best) = evals.iter().copied().fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        assert_eq!(out.best_step, step);
        assert_eq!(out.best_eval, Some(best));
        let truth = val.stacked().unwrap();
        assert_eq!(cfo_validation_error(&out.model, &val, &truth), best);
    }

    #[test]
    fn quintic_needs_three_knots() {
        let grid = TimeGrid::uniform(2).unwrap();
        let train = TrajectorySet::new(SystemTag::Other, vec![grid], vec![array![[0.0], [1.0]]]).unwrap();
        let err = train_cfo(&train, None, &config(5), &small_mlp(1)).unwrap_err();
        assert!(matches!(err.error, CfoError::InvalidArgument(_)));
        let lin = TrainConfig {
            spline_kind: SplineKind::Linear,
            ..config(5)
        };
        assert!(train_cfo(&train, None, &lin, &small_mlp(1)).is_ok());
    }

    #[test]
    fn ar_learns_identity_and_rejects_irregular_grids() {
        let grid = TimeGrid::uniform(21).unwrap();
        let states: Vec<Array2<f64>> = [0.3, -0.5, 1.0, 0.8]
            .iter()
            .map(|&c| Array2::from_shape_fn((21, 2), |(_, j)| c + j as f64 * 0.5))
            .collect();
        let train = TrajectorySet::new(SystemTag::Other, vec![grid; 4], states).unwrap();
        let mlp = small_mlp(2).autoregressive();
        let out = train_ar(&train, None, &config(1500), &mlp).unwrap();
        assert!(out.history.last().unwrap().loss < 1e-3, "{}", out.history.last().unwrap().loss);

        let sub = train.subsample(0.5, 1).unwrap();
        let err = train_ar(&sub, None, &config(5), &mlp).unwrap_err();
        match err.error {
            CfoError::InvalidArgument(msg) => assert!(msg.contains("uniform"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(train_cfo(&sub, None, &config(5), &small_mlp(2)).is_ok());
    }

    #[test]
    fn smoothing_window() {
        let rows: Vec<HistoryRow> = [4.0, 2.0, 6.0, 0.0]
            .iter()
            .enumerate()
            .map(|(i, &l)| HistoryRow {
                step: i + 1,
                loss: l,
                eval_error: None,
            })
            .collect();
        assert_eq!(smoothed_losses(&rows, 2), vec![4.0, 3.0, 4.0, 3.0]);
    }
}

//! The subcommands, independent of argument parsing.

use std::path::{Path, PathBuf};

use cfo_core::odeint::Method;
use cfo_core::systems::{generate_burgers, generate_lorenz, lorenz_dynamics, SystemTag, TrajectorySet};
use cfo_core::trainer::{train_ar, train_cfo, TrainFailure, TrainOutcome};

use crate::checkpoint::{run_name, Checkpoint, ModelKind, CHECKPOINT_VERSION};
use crate::config::{fingerprint_of, ExperimentConfig};
use crate::dataset;
use crate::error::{BenchError, Result};
use crate::experiments::{convergence_study, evaluate_field, evaluate_step_map, nfe_sweep, reverse_study};
use crate::report;

/// Default dataset path for a split inside `dir`.
pub fn dataset_path(dir: &Path, system: SystemTag, split: &str) -> PathBuf {
    dir.join(format!("{system}_{split}.cfod"))
}

/// Generated splits, in the order train / val / test.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub train: TrajectorySet,
    pub val: Option<TrajectorySet>,
    pub test: TrajectorySet,
}

/// Generates one pool of trajectories and splits it, in order, into
/// train, val and test.
pub fn generate(cfg: &ExperimentConfig) -> Result<GeneratedData> {
    cfg.validate()?;
    let d = &cfg.data;
    let total = d.n_train + d.n_val + d.n_test;
    let pool = match cfg.system {
        SystemTag::Lorenz => generate_lorenz(total, d.n_times, d.horizon, d.init_box, d.seed)?,
        SystemTag::Burgers1d => generate_burgers(total, d.n_times, &cfg.burgers(), d.horizon, d.seed)?,
        SystemTag::Other => return Err(BenchError::Config("cannot generate data for 'other'".into())),
    };
    let train = pool.slice(0..d.n_train)?;
    let val = (d.n_val > 0)
        .then(|| pool.slice(d.n_train..d.n_train + d.n_val))
        .transpose()?;
    let test = pool.slice(d.n_train + d.n_val..total)?;
    Ok(GeneratedData { train, val, test })
}

/// Writes the splits; returns their paths. `json` selects the JSON-only form.
pub fn cmd_gen_data(cfg: &ExperimentConfig, json: bool) -> Result<Vec<PathBuf>> {
    let data = generate(cfg)?;
    let dir = cfg.resolved_output_dir();
    let ext = if json { "json" } else { "cfod" };
    let mut written = Vec::new();
    let mut put = |set: &TrajectorySet, split: &str| -> Result<()> {
        let path = dataset_path(&dir, cfg.system, split).with_extension(ext);
        dataset::save(set, &path)?;
        written.push(path);
        Ok(())
    };
    put(&data.train, "train")?;
    if let Some(v) = &data.val {
        put(v, "val")?;
    }
    put(&data.test, "test")?;
    Ok(written)
}

/// Applies the keep rate with trajectory-specific seeds derived from the
/// data seed, so every model of a study sees the same irregular grids.
pub fn apply_keep_rate(train: &TrajectorySet, cfg: &ExperimentConfig) -> Result<TrajectorySet> {
    if cfg.keep_rate >= 1.0 {
        Ok(train.clone())
    } else {
        Ok(train.subsample(cfg.keep_rate, cfg.data.seed ^ 0x5eed)?)
    }
}

/// Trains one model (CFO or AR) for `seed`.
pub fn train_one(
    cfg: &ExperimentConfig,
    kind: ModelKind,
    train: &TrajectorySet,
    val: Option<&TrajectorySet>,
    seed: u64,
) -> std::result::Result<(Checkpoint, TrainOutcome), Box<TrainFailure>> {
    let tcfg = cfg.train_for_seed(seed);
    let outcome = match kind {
        ModelKind::Cfo => train_cfo(train, val, &tcfg, &cfg.model.mlp(train.state_dim))?,
        ModelKind::Ar => train_ar(train, val, &tcfg, &cfg.model.mlp(train.state_dim).autoregressive())?,
    };
    let ck = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        kind,
        system: train.system,
        state_dim: train.state_dim,
        raw_horizon: train.raw_horizon,
        keep_rate: cfg.keep_rate,
        train: tcfg,
        best_step: outcome.best_step,
        best_eval: outcome.best_eval,
        fingerprint: run_fingerprint(cfg, kind, seed),
        model: outcome.model.clone(),
    };
    Ok((ck, outcome))
}

fn run_fingerprint(cfg: &ExperimentConfig, kind: ModelKind, seed: u64) -> String {
    fingerprint_of(&(cfg, kind, seed))
}

/// Data locations for training commands.
#[derive(Debug, Clone, Default)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
}

/// Trains every configured seed; writes `<run>.json` checkpoints and
/// `history_<run>.csv` files. Returns the checkpoint paths.
pub fn cmd_train(cfg: &ExperimentConfig, kind: ModelKind, paths: &DataPaths) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let dir = cfg.resolved_output_dir();
    let train_path = paths
        .train
        .clone()
        .unwrap_or_else(|| dataset_path(&dir, cfg.system, "train"));
    let full = dataset::load(&train_path)?;
    let train = apply_keep_rate(&full, cfg)?;
    let val_path = paths.val.clone().or_else(|| {
        let p = dataset_path(&dir, cfg.system, "val");
        p.exists().then_some(p)
    });
    let val = val_path.map(|p| dataset::load(&p)).transpose()?;
    let mut written = Vec::new();
    for &seed in &cfg.seeds {
        let name = run_name(kind, cfg.spline_kind(), cfg.keep_rate, seed);
        let ck_path = dir.join(format!("{name}.json"));
        let hist_path = dir.join(format!("history_{name}.csv"));
        match train_one(cfg, kind, &train, val.as_ref(), seed) {
            Ok((ck, outcome)) => {
                ck.save(&ck_path)?;
                report::write_history(&hist_path, &ck.fingerprint, &outcome.history)?;
                written.push(ck_path);
            }
            Err(failure) => {
                let fp = run_fingerprint(cfg, kind, seed);
                if failure.step > 0 {
                    report::write_history(&hist_path, &fp, &failure.history)?;
                    let ck = Checkpoint {
                        format_version: CHECKPOINT_VERSION,
                        kind,
                        system: train.system,
                        state_dim: train.state_dim,
                        raw_horizon: train.raw_horizon,
                        keep_rate: cfg.keep_rate,
                        train: cfg.train_for_seed(seed),
                        best_step: failure.last_good_step,
                        best_eval: None,
                        fingerprint: fp,
                        model: failure.last_good.clone(),
                    };
                    let last_good = dir.join(format!("{name}_last_good.json"));
                    ck.save(&last_good)?;
                    return Err(BenchError::Numeric(format!("{failure}; saved {}", last_good.display())));
                }
                return Err(failure.error.into());
            }
        }
    }
    Ok(written)
}

fn load_test(cfg: &ExperimentConfig, data: Option<&Path>, ck: &Checkpoint) -> Result<TrajectorySet> {
    let path = data
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dataset_path(&cfg.resolved_output_dir(), ck.system, "test"));
    let test = dataset::load(&path)?;
    ck.check_compatible(&test)?;
    Ok(test)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())
}

/// Evaluates a checkpoint on the test split; writes `eval_<model>.csv` and
/// `eval_summary_<model>.csv`. Returns the report.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    data: Option<&Path>,
) -> Result<cfo_core::metrics::EvalReport> {
    let ck = Checkpoint::load(checkpoint)?;
    let test = load_test(cfg, data, &ck)?;
    let fp = fingerprint_of(&(&ck.fingerprint, &cfg.solver, stem(checkpoint)));
    let rep = match ck.kind {
        ModelKind::Cfo => evaluate_field(&ck.model, &test, &cfg.solver.solver()?, &fp)?,
        ModelKind::Ar => evaluate_step_map(&ck.model, &test, &fp)?,
    };
    let dir = cfg.resolved_output_dir();
    let name = stem(checkpoint);
    report::write_eval(&dir.join(format!("eval_{name}.csv")), &rep)?;
    report::write_eval_summary(&dir.join(format!("eval_summary_{name}.csv")), &ck.label(), &rep)?;
    Ok(rep)
}

/// Runs the spline endpoint-velocity study on a uniform Lorenz dataset.
pub fn cmd_convergence(cfg: &ExperimentConfig, data: &Path, factors: &[usize]) -> Result<PathBuf> {
    let set = dataset::load(data)?;
    let rows = convergence_study(&set, factors)?;
    let out = cfg.resolved_output_dir().join("convergence.csv");
    let fp = fingerprint_of(&(stem(data), factors));
    report::write_convergence(&out, &fp, &rows)?;
    Ok(out)
}

pub fn cmd_nfe_sweep(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    data: Option<&Path>,
    budgets: &[f64],
    methods: &[Method],
) -> Result<PathBuf> {
    let ck = Checkpoint::load(checkpoint)?;
    if ck.kind != ModelKind::Cfo {
        return Err(BenchError::Config("the NFE sweep needs a continuous-time model".into()));
    }
    let test = load_test(cfg, data, &ck)?;
    let rows = nfe_sweep(&ck.model, &test, budgets, methods)?;
    let out = cfg.resolved_output_dir().join(format!("nfe_{}.csv", stem(checkpoint)));
    report::write_nfe(&out, &fingerprint_of(&(&ck.fingerprint, budgets, methods)), &rows)?;
    Ok(out)
}

/// Reverse-time study. With `checkpoint = None` the exact Lorenz field is used.
pub fn cmd_reverse(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    data: Option<&Path>,
    t_star: f64,
    noise: &[f64],
) -> Result<PathBuf> {
    let solver = cfg.solver.solver()?;
    let (rows, fp, name) = match checkpoint {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            if ck.kind != ModelKind::Cfo {
                return Err(BenchError::Config("reverse-time integration needs a continuous-time model".into()));
            }
            let test = load_test(cfg, data, &ck)?;
            let rows = reverse_study(&ck.model, &test, t_star, noise, &solver, cfg.data.seed)?;
            (rows, fingerprint_of(&(&ck.fingerprint, t_star, noise, &solver)), stem(p))
        }
        None => {
            let path = data
                .map(Path::to_path_buf)
                .unwrap_or_else(|| dataset_path(&cfg.resolved_output_dir(), SystemTag::Lorenz, "test"));
            let test = dataset::load(&path)?;
            if test.system != SystemTag::Lorenz {
                return Err(BenchError::Config("the exact field is only available for Lorenz data".into()));
            }
            let f = lorenz_dynamics(test.raw_horizon);
            let rows = reverse_study(&f, &test, t_star, noise, &solver, cfg.data.seed)?;
            (rows, fingerprint_of(&("exact", t_star, noise, &solver)), "exact".to_string())
        }
    };
    let out = cfg.resolved_output_dir().join(format!("reverse_{name}.csv"));
    report::write_reverse(&out, &fp, &rows)?;
    Ok(out)
}

/// Parses `a,b,c`.
pub fn parse_list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|e| BenchError::Config(format!("cannot parse '{s}': {e}")))
        })
        .collect()
}

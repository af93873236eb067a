//! Reference dynamics and dataset generation: the Lorenz system and 1D
//! periodic viscous Burgers with Gaussian-random-field initial conditions.
//!
//! Generated trajectories live on normalized time; every right-hand side
//! here is in physical time and the `*_dynamics` adapters rescale by the
//! horizon (`du/dτ = T · du/dt`).

use std::f64::consts::PI;

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use num_complex::Complex;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CfoError, Result};
use crate::odeint::{step, Method};
use crate::rng::substream;
use crate::timegrid::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemTag {
    Lorenz,
    Burgers1d,
    Other,
}

impl std::fmt::Display for SystemTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SystemTag::Lorenz => "lorenz",
            SystemTag::Burgers1d => "burgers1d",
            SystemTag::Other => "other",
        })
    }
}

impl std::str::FromStr for SystemTag {
    type Err = CfoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lorenz" => Ok(SystemTag::Lorenz),
            "burgers1d" | "burgers" => Ok(SystemTag::Burgers1d),
            "other" => Ok(SystemTag::Other),
            other => invalid(format!("unknown system '{other}'")),
        }
    }
}

/// How a dataset was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorInfo {
    pub seed: u64,
    /// Solver substeps per output interval.
    pub substeps: usize,
    /// Lorenz initial-condition box half-width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_box: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burgers: Option<BurgersConfig>,
}

/// Snapshots of many trajectories, each on its own normalized grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub system: SystemTag,
    pub state_dim: usize,
    pub raw_horizon: f64,
    pub grids: Vec<TimeGrid>,
    /// One `(len(grid), state_dim)` array per trajectory.
    pub states: Vec<Array2<f64>>,
    pub generator: Option<GeneratorInfo>,
}

impl TrajectorySet {
    pub fn new(system: SystemTag, grids: Vec<TimeGrid>, states: Vec<Array2<f64>>) -> Result<Self> {
        if grids.is_empty() {
            return invalid("trajectory set is empty");
        }
        if grids.len() != states.len() {
            return invalid(format!("{} grids for {} trajectories", grids.len(), states.len()));
        }
        let state_dim = states[0].ncols();
        let raw_horizon = grids[0].raw_horizon();
        let set = Self {
            system,
            state_dim,
            raw_horizon,
            grids,
            states,
            generator: None,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 {
            return invalid("state dimension must be positive");
        }
        for (k, (g, s)) in self.grids.iter().zip(&self.states).enumerate() {
            if s.nrows() != g.len() || s.ncols() != self.state_dim {
                return invalid(format!(
                    "trajectory {k}: states {:?} do not match grid length {} / dim {}",
                    s.dim(),
                    g.len(),
                    self.state_dim
                ));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(CfoError::Numeric(format!("trajectory {k} contains non-finite states")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Row `0` of every trajectory.
    pub fn initial_states(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.len(), self.state_dim));
        for (k, s) in self.states.iter().enumerate() {
            out.row_mut(k).assign(&s.row(0));
        }
        out
    }

    /// The common grid, when every trajectory shares one.
    pub fn shared_grid(&self) -> Option<&TimeGrid> {
        let g = &self.grids[0];
        self.grids.iter().all(|h| h.times() == g.times()).then_some(g)
    }

    /// `(trajectory, time, component)` view, requires a shared grid.
    pub fn stacked(&self) -> Result<Array3<f64>> {
        let g = self
            .shared_grid()
            .ok_or_else(|| CfoError::InvalidArgument("trajectories do not share a time grid".into()))?;
        let mut out = Array3::zeros((self.len(), g.len(), self.state_dim));
        for (k, s) in self.states.iter().enumerate() {
            out.index_axis_mut(Axis(0), k).assign(s);
        }
        Ok(out)
    }

    /// Independently subsamples each trajectory's grid (stream `k` of `seed`
    /// for trajectory `k`).
    pub fn subsample(&self, keep_rate: f64, seed: u64) -> Result<Self> {
        let mut grids = Vec::with_capacity(self.len());
        let mut states = Vec::with_capacity(self.len());
        for (k, (g, s)) in self.grids.iter().zip(&self.states).enumerate() {
            let sub = g.subsample_with(keep_rate, &mut substream(seed, k as u64))?;
            let idx = g.indices_of(&sub).expect("subsample is a subset");
            states.push(s.select(Axis(0), &idx));
            grids.push(sub);
        }
        Ok(Self {
            grids,
            states,
            ..self.clone()
        })
    }

    /// Keeps every `factor`-th time of a shared uniform grid.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return invalid("downsampling factor must be positive");
        }
        let g = self
            .shared_grid()
            .ok_or_else(|| CfoError::InvalidArgument("downsampling needs a shared grid".into()))?;
        if (g.len() - 1) % factor != 0 {
            return invalid(format!("{} intervals are not divisible by {factor}", g.len() - 1));
        }
        let idx: Vec<usize> = (0..g.len()).step_by(factor).collect();
        let grid = TimeGrid::new(idx.iter().map(|&i| g[i]).collect(), g.raw_horizon())?;
        Ok(Self {
            grids: vec![grid; self.len()],
            states: self.states.iter().map(|s| s.select(Axis(0), &idx)).collect(),
            ..self.clone()
        })
    }

    /// Trajectories `range` as a new set.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return invalid(format!("bad trajectory range {range:?} for {} trajectories", self.len()));
        }
        Ok(Self {
            grids: self.grids[range.clone()].to_vec(),
            states: self.states[range].to_vec(),
            ..self.clone()
        })
    }
}

// --- Lorenz -----------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }
}

pub fn lorenz_rhs(u: [f64; 3]) -> [f64; 3] {
    lorenz_rhs_with(&LorenzParams::default(), u)
}

pub fn lorenz_rhs_with(p: &LorenzParams, [x, y, z]: [f64; 3]) -> [f64; 3] {
    [p.sigma * (y - x), x * (p.rho - z) - y, x * y - p.beta * z]
}

/// Lorenz right-hand side on normalized time for horizon `horizon` seconds,
/// applied to every row.
pub fn lorenz_dynamics(horizon: f64) -> impl Fn(f64, ArrayView2<f64>) -> Array2<f64> + Clone {
    move |_t, u| {
        let mut out = Array2::zeros(u.dim());
        for (src, mut dst) in u.rows().into_iter().zip(out.rows_mut()) {
            let r = lorenz_rhs([src[0], src[1], src[2]]);
            for j in 0..3 {
                dst[j] = horizon * r[j];
            }
        }
        out
    }
}

/// Rows of `u` stepped through `n_intervals` output intervals of the
/// normalized grid with `substeps` RK4 steps each; returns all snapshots.
fn integrate_snapshots<F>(f: &F, u0: Array2<f64>, grid: &TimeGrid, substeps: usize) -> Result<Array3<f64>>
where
    F: Fn(f64, ArrayView2<f64>) -> Array2<f64>,
{
    let (n, d) = u0.dim();
    let mut out = Array3::zeros((n, grid.len(), d));
    out.index_axis_mut(Axis(1), 0).assign(&u0);
    let mut u = u0;
    for k in 0..grid.n_segments() {
        let h = (grid[k + 1] - grid[k]) / substeps as f64;
        for j in 0..substeps {
            u = step(Method::Rk4, f, grid[k] + j as f64 * h, u.view(), h)?;
        }
        out.index_axis_mut(Axis(1), k + 1).assign(&u);
    }
    Ok(out)
}

/// Lorenz substeps per output interval for data generation.
pub const LORENZ_SUBSTEPS: usize = 10;

/// Lorenz trajectories from initial conditions uniform in
/// `[-init_box, init_box]^3`, sampled at `n_times` uniform times over
/// `horizon` seconds. Trajectory `k` draws from stream `k` of `seed`.
pub fn generate_lorenz(n_traj: usize, n_times: usize, horizon: f64, init_box: f64, seed: u64) -> Result<TrajectorySet> {
    generate_lorenz_with_substeps(n_traj, n_times, horizon, init_box, seed, LORENZ_SUBSTEPS)
}

pub fn generate_lorenz_with_substeps(
    n_traj: usize,
    n_times: usize,
    horizon: f64,
    init_box: f64,
    seed: u64,
    substeps: usize,
) -> Result<TrajectorySet> {
    if n_traj == 0 {
        return invalid("n_traj must be positive");
    }
    if !(init_box > 0.0 && horizon > 0.0) {
        return invalid("init_box and horizon must be positive");
    }
    if substeps == 0 {
        return invalid("substeps must be positive");
    }
    let grid = TimeGrid::uniform_with_horizon(n_times, horizon)?;
    let f = lorenz_dynamics(horizon);
    let mut streams: Vec<ChaCha8Rng> = (0..n_traj).map(|k| substream(seed, k as u64)).collect();
    let draw = |rng: &mut ChaCha8Rng| -> [f64; 3] {
        [0, 1, 2].map(|_| rng.random_range(-init_box..=init_box))
    };
    let mut u0 = Array2::zeros((n_traj, 3));
    for (k, rng) in streams.iter_mut().enumerate() {
        u0.row_mut(k).assign(&ArrayView1::from(&draw(rng)));
    }

    let mut snaps = integrate_snapshots(&f, u0.clone(), &grid, substeps)?;
    // Lorenz is bounded; redraw any trajectory that escaped anyway.
    for _attempt in 0..8 {
        let bad: Vec<usize> = (0..n_traj)
            .filter(|&k| snaps.index_axis(Axis(0), k).iter().any(|v| !v.is_finite() || v.abs() > 1e3))
            .collect();
        if bad.is_empty() {
            break;
        }
        let mut redo = Array2::zeros((bad.len(), 3));
        for (r, &k) in bad.iter().enumerate() {
            redo.row_mut(r).assign(&ArrayView1::from(&draw(&mut streams[k])));
        }
        let fresh = integrate_snapshots(&f, redo, &grid, substeps)?;
        for (r, &k) in bad.iter().enumerate() {
            snaps.index_axis_mut(Axis(0), k).assign(&fresh.index_axis(Axis(0), r));
        }
    }

    let states: Vec<Array2<f64>> = snaps.outer_iter().map(|s| s.to_owned()).collect();
    let mut set = TrajectorySet::new(SystemTag::Lorenz, vec![grid; n_traj], states)?;
    set.generator = Some(GeneratorInfo {
        seed,
        substeps,
        init_box: Some(init_box),
        burgers: None,
    });
    Ok(set)
}

// --- Burgers -----------------------------------------------------------------

/// Periodic viscous Burgers on the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurgersConfig {
    pub nu: f64,
    pub nx: usize,
}

impl Default for BurgersConfig {
    fn default() -> Self {
        Self { nu: 0.01, nx: 100 }
    }
}

impl BurgersConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return invalid(format!("viscosity must be positive, got {}", self.nu));
        }
        if self.nx < 16 {
            return invalid(format!("nx must be >= 16, got {}", self.nx));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    /// Largest explicit step allowed by the diffusive bound `0.5 Δx² / ν`.
    pub fn max_stable_dt(&self) -> f64 {
        0.5 * self.dx() * self.dx() / self.nu
    }
}

/// Second-order periodic central differences: `ν u_xx - (u²/2)_x`.
pub fn burgers_rhs(u: ArrayView1<f64>, config: &BurgersConfig) -> Array1<f64> {
    let mut out = Array1::zeros(u.len());
    burgers_rhs_into(u, config, 1.0, out.as_slice_mut().unwrap());
    out
}

fn burgers_rhs_into(u: ArrayView1<f64>, config: &BurgersConfig, factor: f64, out: &mut [f64]) {
    let n = u.len();
    let dx = 1.0 / n as f64;
    let diff = config.nu / (dx * dx);
    let adv = 1.0 / (2.0 * dx);
    for i in 0..n {
        let (l, r) = (u[(i + n - 1) % n], u[(i + 1) % n]);
        let c = u[i];
        out[i] = factor * (diff * (r - 2.0 * c + l) - adv * 0.5 * (r * r - l * l));
    }
}

/// Burgers right-hand side on normalized time for a `horizon`-second window.
pub fn burgers_dynamics(config: BurgersConfig, horizon: f64) -> impl Fn(f64, ArrayView2<f64>) -> Array2<f64> + Clone {
    move |_t, u| {
        let mut out = Array2::zeros(u.dim());
        for (src, mut dst) in u.rows().into_iter().zip(out.rows_mut()) {
            burgers_rhs_into(src, &config, horizon, dst.as_slice_mut().unwrap());
        }
        out
    }
}

/// GRF mode variance `25² ((2πk)² + 25)^{-4}`.
pub fn grf_mode_variance(k: usize) -> f64 {
    let lam = (2.0 * PI * k as f64).powi(2);
    625.0 * (lam + 25.0).powi(-4)
}

/// Real periodic field on `nx` points whose Fourier coefficient `k`
/// (`u(x) = Σ c_k e^{2πikx}`) is complex normal with variance
/// [`grf_mode_variance`]; `c_0` and the Nyquist mode are real.
pub fn sample_grf_initial(nx: usize, seed: u64) -> Result<Array1<f64>> {
    sample_grf_with(nx, &mut substream(seed, 0))
}

pub fn sample_grf_with<R: Rng + ?Sized>(nx: usize, rng: &mut R) -> Result<Array1<f64>> {
    if nx < 16 {
        return invalid(format!("nx must be >= 16, got {nx}"));
    }
    let mut spectrum = vec![Complex::new(0.0, 0.0); nx];
    let normal = |rng: &mut R| -> f64 { rng.sample(StandardNormal) };
    spectrum[0] = Complex::new(grf_mode_variance(0).sqrt() * normal(rng), 0.0);
    for k in 1..nx.div_ceil(2) {
        let sd = (grf_mode_variance(k) / 2.0).sqrt();
        let c = Complex::new(sd * normal(rng), sd * normal(rng));
        spectrum[k] = c;
        spectrum[nx - k] = c.conj();
    }
    if nx.is_multiple_of(2) {
        spectrum[nx / 2] = Complex::new(grf_mode_variance(nx / 2).sqrt() * normal(rng), 0.0);
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(nx).process(&mut spectrum);
    Ok(spectrum.iter().map(|c| c.re).collect())
}

/// Burgers trajectories from GRF initial conditions at `n_times` uniform
/// times over `horizon` seconds.
pub fn generate_burgers(
    n_traj: usize,
    n_times: usize,
    config: &BurgersConfig,
    horizon: f64,
    seed: u64,
) -> Result<TrajectorySet> {
    if n_times < 2 {
        return invalid("n_times must be at least 2");
    }
    let interval = horizon / (n_times - 1) as f64;
    let substeps = (interval / config.max_stable_dt()).ceil().max(1.0) as usize;
    generate_burgers_with_substeps(n_traj, n_times, config, horizon, seed, substeps)
}

pub fn generate_burgers_with_substeps(
    n_traj: usize,
    n_times: usize,
    config: &BurgersConfig,
    horizon: f64,
    seed: u64,
    substeps: usize,
) -> Result<TrajectorySet> {
    config.validate()?;
    if n_traj == 0 || substeps == 0 {
        return invalid("n_traj and substeps must be positive");
    }
    let grid = TimeGrid::uniform_with_horizon(n_times, horizon)?;
    let mut u0 = Array2::zeros((n_traj, config.nx));
    for k in 0..n_traj {
        u0.row_mut(k).assign(&sample_grf_with(config.nx, &mut substream(seed, k as u64))?);
    }
    let f = burgers_dynamics(*config, horizon);
    let unstable = || {
        let interval = horizon / (n_times - 1) as f64;
        let need = (interval / config.max_stable_dt()).ceil() as usize;
        CfoError::Numeric(format!(
            "Burgers integration unstable with {substeps} substeps per interval; at least {need} required"
        ))
    };
    let snaps = integrate_snapshots(&f, u0, &grid, substeps).map_err(|_| unstable())?;
    if snaps.iter().any(|v| !v.is_finite() || v.abs() > 1e8) {
        return Err(unstable());
    }
    let states: Vec<Array2<f64>> = snaps.outer_iter().map(|s| s.to_owned()).collect();
    let mut set = TrajectorySet::new(SystemTag::Burgers1d, vec![grid; n_traj], states)?;
    set.generator = Some(GeneratorInfo {
        seed,
        substeps,
        init_box: None,
        burgers: Some(*config),
    });
    Ok(set)
}

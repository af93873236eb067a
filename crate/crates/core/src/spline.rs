//! Piecewise temporal interpolants of trajectory snapshots.
//!
//! Two interpolants are provided: a C⁰ linear spline and a C² quintic Hermite
//! spline whose knot first/second derivatives come from finite-difference
//! estimates. Both evaluate values and analytic time derivatives on the
//! normalized grid. Segments are half-open `[t_i, t_{i+1})` except the last,
//! which also owns `t = 1`.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CfoError, Result};
use crate::stencil::{estimate_knot_derivatives, KnotDerivatives};
use crate::timegrid::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplineKind {
    Linear,
    Quintic,
}

impl SplineKind {
    /// Fewest knots the construction accepts.
    pub fn min_knots(self) -> usize {
        match self {
            SplineKind::Linear => 2,
            SplineKind::Quintic => 3,
        }
    }
}

impl std::fmt::Display for SplineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplineKind::Linear => "linear",
            SplineKind::Quintic => "quintic",
        })
    }
}

impl std::str::FromStr for SplineKind {
    type Err = CfoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(SplineKind::Linear),
            "quintic" => Ok(SplineKind::Quintic),
            other => invalid(format!("unknown spline kind '{other}'")),
        }
    }
}

/// Quintic Hermite basis `[H00, H10, H20, H01, H11, H21]` at `tau`.
pub fn quintic_basis(tau: f64) -> [f64; 6] {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    let t4 = t3 * tau;
    let t5 = t4 * tau;
    [
        1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5,
        tau - 6.0 * t3 + 8.0 * t4 - 3.0 * t5,
        0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5),
        10.0 * t3 - 15.0 * t4 + 6.0 * t5,
        -4.0 * t3 + 7.0 * t4 - 3.0 * t5,
        0.5 * (t3 - 2.0 * t4 + t5),
    ]
}

/// First derivatives of [`quintic_basis`] with respect to `tau`.
pub fn quintic_basis_d1(tau: f64) -> [f64; 6] {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    let t4 = t3 * tau;
    let h00 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
    [
        h00,
        1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4,
        0.5 * (2.0 * tau - 9.0 * t2 + 12.0 * t3 - 5.0 * t4),
        -h00,
        -12.0 * t2 + 28.0 * t3 - 15.0 * t4,
        0.5 * (3.0 * t2 - 8.0 * t3 + 5.0 * t4),
    ]
}

/// Second derivatives of [`quintic_basis`] with respect to `tau`.
pub fn quintic_basis_d2(tau: f64) -> [f64; 6] {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    let h00 = -60.0 * tau + 180.0 * t2 - 120.0 * t3;
    [
        h00,
        -36.0 * tau + 96.0 * t2 - 60.0 * t3,
        0.5 * (2.0 - 18.0 * tau + 36.0 * t2 - 20.0 * t3),
        -h00,
        -24.0 * tau + 84.0 * t2 - 60.0 * t3,
        0.5 * (6.0 * tau - 24.0 * t2 + 20.0 * t3),
    ]
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(CfoError::OutOfRange { t, lo: 0.0, hi: 1.0 });
    }
    Ok(())
}

fn check_snapshots(grid: &TimeGrid, values: &ArrayView2<f64>) -> Result<()> {
    if values.nrows() != grid.len() {
        return invalid(format!(
            "{} snapshots for a grid of {} times",
            values.nrows(),
            grid.len()
        ));
    }
    if values.ncols() == 0 {
        return invalid("state dimension must be positive");
    }
    Ok(())
}

/// Common interface of the temporal interpolants.
pub trait TemporalSpline {
    fn grid(&self) -> &TimeGrid;

    fn dim(&self) -> usize;

    /// Writes `s(t)` and `∂ₜs(t)` in one segment lookup.
    fn value_and_velocity_into(&self, t: f64, value: &mut [f64], velocity: &mut [f64]) -> Result<()>;

    fn eval(&self, t: f64) -> Result<Array1<f64>> {
        let mut v = Array1::zeros(self.dim());
        let mut scratch = vec![0.0; self.dim()];
        self.value_and_velocity_into(t, v.as_slice_mut().unwrap(), &mut scratch)?;
        Ok(v)
    }

    fn eval_velocity(&self, t: f64) -> Result<Array1<f64>> {
        let mut v = Array1::zeros(self.dim());
        let mut scratch = vec![0.0; self.dim()];
        self.value_and_velocity_into(t, &mut scratch, v.as_slice_mut().unwrap())?;
        Ok(v)
    }
}

/// Piecewise-linear interpolant; velocity is the secant slope of the segment.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSpline {
    grid: TimeGrid,
    values: Array2<f64>,
}

impl LinearSpline {
    pub fn build(grid: TimeGrid, values: ArrayView2<f64>) -> Result<Self> {
        check_snapshots(&grid, &values)?;
        Ok(Self {
            grid,
            values: values.to_owned(),
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

impl TemporalSpline for LinearSpline {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn dim(&self) -> usize {
        self.values.ncols()
    }

    fn value_and_velocity_into(&self, t: f64, value: &mut [f64], velocity: &mut [f64]) -> Result<()> {
        check_time(t)?;
        let i = self.grid.segment_of(t);
        let (t0, t1) = (self.grid[i], self.grid[i + 1]);
        let h = t1 - t0;
        let w = (t - t0) / h;
        let (u0, u1) = (self.values.row(i), self.values.row(i + 1));
        for j in 0..value.len() {
            value[j] = (1.0 - w) * u0[j] + w * u1[j];
            velocity[j] = (u1[j] - u0[j]) / h;
        }
        Ok(())
    }
}

/// C² quintic Hermite spline matching values, first and second derivatives
/// at every knot. Only knot data is stored; the basis is evaluated on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct QuinticSpline {
    grid: TimeGrid,
    values: Array2<f64>,
    derivs: KnotDerivatives,
}

impl QuinticSpline {
    /// Estimates knot derivatives with three-point stencils and builds the
    /// spline. Needs at least three knots.
    pub fn build(grid: TimeGrid, values: ArrayView2<f64>) -> Result<Self> {
        check_snapshots(&grid, &values)?;
        if grid.len() < 3 {
            return invalid(format!(
                "quintic spline needs >= 3 knots, got {}",
                grid.len()
            ));
        }
        let derivs = estimate_knot_derivatives(grid.times(), values)?;
        Ok(Self {
            grid,
            values: values.to_owned(),
            derivs,
        })
    }

    /// Builds from caller-supplied knot derivatives (e.g. exact ones).
    pub fn from_knot_data(grid: TimeGrid, values: ArrayView2<f64>, derivs: KnotDerivatives) -> Result<Self> {
        check_snapshots(&grid, &values)?;
        if derivs.d.dim() != values.dim() || derivs.a.dim() != values.dim() {
            return invalid("knot derivative shapes must match the snapshots");
        }
        Ok(Self {
            grid,
            values: values.to_owned(),
            derivs,
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn knot_derivatives(&self) -> &KnotDerivatives {
        &self.derivs
    }

    /// Combines the six knot quantities of segment `i` with basis weights
    /// `b` scaled by `1/h^order`.
    fn combine(&self, i: usize, h: f64, b: &[f64; 6], order: i32, out: &mut [f64]) {
        let (u0, u1) = (self.values.row(i), self.values.row(i + 1));
        let (d0, d1) = (self.derivs.d.row(i), self.derivs.d.row(i + 1));
        let (a0, a1) = (self.derivs.a.row(i), self.derivs.a.row(i + 1));
        let h2 = h * h;
        let inv = h.powi(-order);
        for j in 0..out.len() {
            out[j] = inv
                * (u0[j] * b[0]
                    + d0[j] * h * b[1]
                    + a0[j] * h2 * b[2]
                    + u1[j] * b[3]
                    + d1[j] * h * b[4]
                    + a1[j] * h2 * b[5]);
        }
    }

    fn locate(&self, t: f64) -> Result<(usize, f64, f64)> {
        check_time(t)?;
        let i = self.grid.segment_of(t);
        let h = self.grid[i + 1] - self.grid[i];
        Ok((i, h, (t - self.grid[i]) / h))
    }

    pub fn accel_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let (i, h, tau) = self.locate(t)?;
        self.combine(i, h, &quintic_basis_d2(tau), 2, out);
        Ok(())
    }

    pub fn eval_accel(&self, t: f64) -> Result<Array1<f64>> {
        let mut out = Array1::zeros(self.dim());
        self.accel_into(t, out.as_slice_mut().unwrap())?;
        Ok(out)
    }

    /// Value, velocity and acceleration of segment `seg` at local `tau`,
    /// bypassing the half-open lookup (used for one-sided knot limits).
    pub fn eval_on_segment(&self, seg: usize, tau: f64) -> Result<[Array1<f64>; 3]> {
        if seg >= self.grid.n_segments() {
            return invalid(format!("segment {seg} out of range"));
        }
        let h = self.grid[seg + 1] - self.grid[seg];
        let d = self.dim();
        let mut out = [Array1::zeros(d), Array1::zeros(d), Array1::zeros(d)];
        self.combine(seg, h, &quintic_basis(tau), 0, out[0].as_slice_mut().unwrap());
        self.combine(seg, h, &quintic_basis_d1(tau), 1, out[1].as_slice_mut().unwrap());
        self.combine(seg, h, &quintic_basis_d2(tau), 2, out[2].as_slice_mut().unwrap());
        Ok(out)
    }
}

impl TemporalSpline for QuinticSpline {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn dim(&self) -> usize {
        self.values.ncols()
    }

    fn value_and_velocity_into(&self, t: f64, value: &mut [f64], velocity: &mut [f64]) -> Result<()> {
        let (i, h, tau) = self.locate(t)?;
        self.combine(i, h, &quintic_basis(tau), 0, value);
        self.combine(i, h, &quintic_basis_d1(tau), 1, velocity);
        Ok(())
    }
}

/// Either interpolant, chosen at runtime.
#[derive(Debug, Clone, PartialEq)]
pub enum Spline {
    Linear(LinearSpline),
    Quintic(QuinticSpline),
}

impl Spline {
    pub fn build(kind: SplineKind, grid: TimeGrid, values: ArrayView2<f64>) -> Result<Self> {
        Ok(match kind {
            SplineKind::Linear => Spline::Linear(LinearSpline::build(grid, values)?),
            SplineKind::Quintic => Spline::Quintic(QuinticSpline::build(grid, values)?),
        })
    }

    pub fn kind(&self) -> SplineKind {
        match self {
            Spline::Linear(_) => SplineKind::Linear,
            Spline::Quintic(_) => SplineKind::Quintic,
        }
    }
}

impl TemporalSpline for Spline {
    fn grid(&self) -> &TimeGrid {
        match self {
            Spline::Linear(s) => s.grid(),
            Spline::Quintic(s) => s.grid(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Spline::Linear(s) => s.dim(),
            Spline::Quintic(s) => s.dim(),
        }
    }

    fn value_and_velocity_into(&self, t: f64, value: &mut [f64], velocity: &mut [f64]) -> Result<()> {
        match self {
            Spline::Linear(s) => s.value_and_velocity_into(t, value, velocity),
            Spline::Quintic(s) => s.value_and_velocity_into(t, value, velocity),
        }
    }
}

/// Noise magnitude `γ(t) = γ₀ τ^m (1-τ)^m` on each segment (`τ` the local
/// coordinate), vanishing at every knot and `C^{m-1}` across knots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub gamma0: f64,
    pub m: u32,
}

impl NoiseSchedule {
    pub fn new(gamma0: f64, m: u32) -> Result<Self> {
        if !(gamma0 >= 0.0 && gamma0.is_finite()) {
            return invalid(format!("gamma0 must be finite and >= 0, got {gamma0}"));
        }
        if m == 0 {
            return invalid("noise smoothness exponent m must be positive");
        }
        Ok(Self { gamma0, m })
    }

    pub fn none() -> Self {
        Self { gamma0: 0.0, m: 3 }
    }

    /// `(γ(t), dγ/dt)` on the segment of `grid` containing `t`.
    pub fn gamma(&self, grid: &TimeGrid, t: f64) -> Result<(f64, f64)> {
        check_time(t)?;
        if self.gamma0 == 0.0 {
            return Ok((0.0, 0.0));
        }
        let i = grid.segment_of(t);
        let h = grid[i + 1] - grid[i];
        let tau = (t - grid[i]) / h;
        let m = self.m as i32;
        let (p, q) = (tau, 1.0 - tau);
        let g = self.gamma0 * (p * q).powi(m);
        let dg = self.gamma0 * m as f64 * (p * q).powi(m - 1) * (q - p) / h;
        Ok((g, dg))
    }
}

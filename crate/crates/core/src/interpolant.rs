//! Stochastic interpolant `I(t) = s(t) + γ(t) z` over spline paths, and the
//! flow-matching training triples `(t, x, ∂ₜI)` drawn from it.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::spline::{NoiseSchedule, TemporalSpline};

#[derive(Debug, Clone, PartialEq)]
pub struct InterpolantSample {
    pub t: f64,
    pub x: Array1<f64>,
    pub v_target: Array1<f64>,
}

/// Evaluates the interpolant and its time derivative at `t` for noise `z`.
pub fn sample<S: TemporalSpline + ?Sized>(
    spline: &S,
    schedule: &NoiseSchedule,
    t: f64,
    z: ArrayView1<f64>,
) -> Result<InterpolantSample> {
    let d = spline.dim();
    if z.len() != d {
        return invalid(format!("noise has dimension {}, spline has {d}", z.len()));
    }
    let mut x = Array1::zeros(d);
    let mut v = Array1::zeros(d);
    spline.value_and_velocity_into(t, x.as_slice_mut().unwrap(), v.as_slice_mut().unwrap())?;
    let (g, dg) = schedule.gamma(spline.grid(), t)?;
    if g != 0.0 || dg != 0.0 {
        x.scaled_add(g, &z);
        v.scaled_add(dg, &z);
    }
    Ok(InterpolantSample { t, x, v_target: v })
}

/// A minibatch of training triples, stored row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolantBatch {
    pub t: Vec<f64>,
    pub x: Array2<f64>,
    pub v_target: Array2<f64>,
    /// Trajectory each row was drawn from.
    pub trajectory: Vec<usize>,
}

impl InterpolantBatch {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn get(&self, i: usize) -> InterpolantSample {
        InterpolantSample {
            t: self.t[i],
            x: self.x.row(i).to_owned(),
            v_target: self.v_target.row(i).to_owned(),
        }
    }

    pub fn from_samples(samples: &[InterpolantSample]) -> Result<Self> {
        let Some(first) = samples.first() else {
            return invalid("empty sample list");
        };
        let d = first.x.len();
        let mut x = Array2::zeros((samples.len(), d));
        let mut v = Array2::zeros((samples.len(), d));
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != d || s.v_target.len() != d {
                return invalid("samples have mixed dimensions");
            }
            x.row_mut(i).assign(&s.x);
            v.row_mut(i).assign(&s.v_target);
        }
        Ok(Self {
            t: samples.iter().map(|s| s.t).collect(),
            x,
            v_target: v,
            trajectory: vec![0; samples.len()],
        })
    }
}

/// Draws `batch_size` independent triples: trajectory uniformly, `t ~ U[0,1]`,
/// `z ~ N(0, I)` fresh per row.
pub fn sample_batch<S: TemporalSpline, R: Rng + ?Sized>(
    splines: &[S],
    schedule: &NoiseSchedule,
    batch_size: usize,
    rng: &mut R,
) -> Result<InterpolantBatch> {
    if splines.is_empty() {
        return invalid("sample_batch needs at least one spline");
    }
    if batch_size == 0 {
        return invalid("batch size must be positive");
    }
    let d = splines[0].dim();
    if splines.iter().any(|s| s.dim() != d) {
        return invalid("all splines must share a state dimension");
    }
    let mut t = Vec::with_capacity(batch_size);
    let mut traj = Vec::with_capacity(batch_size);
    let mut x = Array2::zeros((batch_size, d));
    let mut v = Array2::zeros((batch_size, d));
    let mut z = vec![0.0; d];
    for row in 0..batch_size {
        let k = rng.random_range(0..splines.len());
        let tk: f64 = rng.random::<f64>();
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let spline = &splines[k];
        let mut xr = x.row_mut(row);
        let mut vr = v.row_mut(row);
        let xs = xr.as_slice_mut().unwrap();
        let vs = vr.as_slice_mut().unwrap();
        spline.value_and_velocity_into(tk, xs, vs)?;
        let (g, dg) = schedule.gamma(spline.grid(), tk)?;
        if g != 0.0 || dg != 0.0 {
            for j in 0..d {
                xs[j] += g * z[j];
                vs[j] += dg * z[j];
            }
        }
        t.push(tk);
        traj.push(k);
    }
    Ok(InterpolantBatch {
        t,
        x,
        v_target: v,
        trajectory: traj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::{LinearSpline, QuinticSpline, Spline};
    use crate::timegrid::TimeGrid;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn wavy_quintic(seed_shift: f64) -> QuinticSpline {
        let times = vec![0.0, 0.1, 0.35, 0.5, 0.8, 1.0];
        let grid = TimeGrid::new(times.clone(), 1.0).unwrap();
        let values = Array2::from_shape_fn((6, 2), |(i, j)| (4.0 * times[i] + j as f64 + seed_shift).sin());
        QuinticSpline::build(grid, values.view()).unwrap()
    }

    #[test]
    fn linear_example_with_noise() {
        let grid = TimeGrid::uniform(2).unwrap();
        let s = LinearSpline::build(grid, array![[0.0], [1.0]].view()).unwrap();
        let sched = NoiseSchedule::new(1.0, 1).unwrap();
        let out = sample(&s, &sched, 0.25, array![1.0].view()).unwrap();
        assert_relative_eq!(out.x[0], 0.4375, epsilon = 1e-15);
        assert_relative_eq!(out.v_target[0], 1.5, epsilon = 1e-15);
    }

    #[test]
    fn noise_vanishes_at_knots() {
        let s = wavy_quintic(0.0);
        let sched = NoiseSchedule::new(5.0, 3).unwrap();
        let z = array![0.7, -1.3];
        for &tk in s.grid().times() {
            let out = sample(&s, &sched, tk, z.view()).unwrap();
            assert_eq!(out.x, s.eval(tk).unwrap());
            assert_eq!(out.v_target, s.eval_velocity(tk).unwrap());
        }
    }

    #[test]
    fn noiseless_reduces_to_spline() {
        let s = wavy_quintic(0.3);
        let sched = NoiseSchedule::none();
        for k in 0..=50 {
            let t = k as f64 / 50.0;
            let out = sample(&s, &sched, t, array![3.0, 4.0].view()).unwrap();
            assert_eq!(out.x, s.eval(t).unwrap());
            assert_eq!(out.v_target, s.eval_velocity(t).unwrap());
        }
    }

    #[test]
    fn boundary_continuity_near_knots() {
        let s = wavy_quintic(0.1);
        let sched = NoiseSchedule::new(2.0, 1).unwrap();
        let z = array![1.0, -2.0];
        for &tk in &s.grid().times()[1..5] {
            let at = s.eval(tk).unwrap();
            for t in [tk - 1e-9, tk + 1e-9] {
                let out = sample(&s, &sched, t, z.view()).unwrap();
                for j in 0..2 {
                    assert!((out.x[j] - at[j]).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let s = wavy_quintic(0.0);
        assert!(sample(&s, &NoiseSchedule::none(), 0.5, array![1.0].view()).is_err());
        let empty: Vec<QuinticSpline> = vec![];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_batch(&empty, &NoiseSchedule::none(), 4, &mut rng).is_err());
    }

    #[test]
    fn batch_is_reproducible() {
        let splines = vec![wavy_quintic(0.0), wavy_quintic(1.0)];
        let sched = NoiseSchedule::new(1e-2, 3).unwrap();
        let a = sample_batch(&splines, &sched, 1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_batch(&splines, &sched, 1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_times_are_uniform() {
        let splines = vec![Spline::Quintic(wavy_quintic(0.0))];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let batch = sample_batch(&splines, &NoiseSchedule::none(), 10_000, &mut rng).unwrap();
        let mut t = batch.t.clone();
        t.sort_by(f64::total_cmp);
        let n = t.len() as f64;
        let ks = t
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i + 1) as f64 / n - x).abs().max((x - i as f64 / n).abs()))
            .fold(0.0f64, f64::max);
        assert!(ks < 0.05, "KS statistic {ks}");
    }

    #[test]
    fn noiseless_batch_lies_on_spline_velocities() {
        let splines = vec![wavy_quintic(0.0), wavy_quintic(0.5), wavy_quintic(2.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch = sample_batch(&splines, &NoiseSchedule::none(), 64, &mut rng).unwrap();
        for i in 0..batch.len() {
            let s = &splines[batch.trajectory[i]];
            assert_eq!(batch.v_target.row(i), s.eval_velocity(batch.t[i]).unwrap());
            assert_eq!(batch.x.row(i), s.eval(batch.t[i]).unwrap());
        }
    }
}

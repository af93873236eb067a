//! Property tests over random grids and data.

use cfo_core::odeint::{step, Method};
use cfo_core::{Spline, SplineKind, TemporalSpline, TimeGrid};
use ndarray::{Array2, ArrayView2};
use proptest::prelude::*;

/// Strictly increasing grid on [0, 1] built from positive gaps.
fn grid_strategy(max_len: usize) -> impl Strategy<Value = TimeGrid> {
    prop::collection::vec(0.1f64..1.0, 3..max_len).prop_map(|gaps| {
        let total: f64 = gaps.iter().sum();
        let mut times = vec![0.0];
        let mut acc = 0.0;
        for g in &gaps[..gaps.len() - 1] {
            acc += g / total;
            times.push(acc);
        }
        times.push(1.0);
        TimeGrid::new(times, 2.0).unwrap()
    })
}

proptest! {
    #[test]
    fn splines_interpolate_their_knots(grid in grid_strategy(12), seed in 0u64..1000) {
        let n = grid.len();
        let values = Array2::from_shape_fn((n, 2), |(i, j)| ((i * 7 + j * 3) as f64 + seed as f64).sin());
        for kind in [SplineKind::Linear, SplineKind::Quintic] {
            let s = Spline::build(kind, grid.clone(), values.view()).unwrap();
            for (i, &t) in grid.times().iter().enumerate() {
                let v = s.eval(t).unwrap();
                for j in 0..2 {
                    prop_assert!((v[j] - values[[i, j]]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn linear_velocity_is_the_secant(grid in grid_strategy(10), frac in 0.01f64..0.99) {
        let values = Array2::from_shape_fn((grid.len(), 1), |(i, _)| (i as f64 * 1.3).cos());
        let s = Spline::build(SplineKind::Linear, grid.clone(), values.view()).unwrap();
        let i = grid.len() / 2 - 1;
        let (t0, t1) = (grid[i], grid[i + 1]);
        let v = s.eval_velocity(t0 + frac * (t1 - t0)).unwrap()[0];
        let secant = (values[[i + 1, 0]] - values[[i, 0]]) / (t1 - t0);
        prop_assert!((v - secant).abs() <= 1e-10 * secant.abs().max(1.0));
    }

    #[test]
    fn quintic_from_data_reproduces_quadratics(
        grid in grid_strategy(15),
        c in prop::array::uniform3(-3.0f64..3.0),
        t in 0.0f64..1.0,
    ) {
        let q = |t: f64| c[0] + c[1] * t + c[2] * t * t;
        let values = Array2::from_shape_fn((grid.len(), 1), |(i, _)| q(grid[i]));
        let s = Spline::build(SplineKind::Quintic, grid, values.view()).unwrap();
        let scale = 1.0 + c.iter().map(|v| v.abs()).sum::<f64>();
        prop_assert!((s.eval(t).unwrap()[0] - q(t)).abs() < 1e-8 * scale);
        prop_assert!((s.eval_velocity(t).unwrap()[0] - (c[1] + 2.0 * c[2] * t)).abs() < 1e-7 * scale);
    }

    #[test]
    fn subsampled_grids_keep_endpoints_and_count(n in 5usize..200, keep in 0.05f64..1.0, seed in 0u64..500) {
        let grid = TimeGrid::uniform(n).unwrap();
        match grid.subsample(keep, seed) {
            Ok(sub) => {
                prop_assert_eq!(sub.len(), cfo_core::timegrid::subsample_count(n, keep));
                prop_assert_eq!(sub[0], 0.0);
                prop_assert_eq!(sub[sub.len() - 1], 1.0);
                prop_assert!(grid.indices_of(&sub).is_some());
                prop_assert_eq!(sub.raw_horizon(), grid.raw_horizon());
            }
            Err(_) => prop_assert!(cfo_core::timegrid::subsample_count(n, keep) < 3),
        }
    }

    #[test]
    fn one_step_matches_the_taylor_polynomial(lambda in -2.0f64..2.0, h in 0.01f64..0.5) {
        let f = move |_t: f64, u: ArrayView2<f64>| u.mapv(|v| lambda * v);
        let u0 = Array2::from_elem((1, 1), 1.0);
        let z = lambda * h;
        for (method, taylor) in [
            (Method::Euler, 1.0 + z),
            (Method::Heun, 1.0 + z + z * z / 2.0),
            (Method::Rk4, 1.0 + z + z * z / 2.0 + z.powi(3) / 6.0 + z.powi(4) / 24.0),
        ] {
            let u = step(method, &f, 0.0, u0.view(), h).unwrap();
            prop_assert!((u[[0, 0]] - taylor).abs() < 1e-13);
        }
    }
}

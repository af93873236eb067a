//! Finite-difference weights on arbitrary nodes and knot derivative estimates.
//!
//! General weights come from the shifted Vandermonde system
//! `P w = k! e_k` with `P[r][j] = (x_j - x_c)^r`; the three-point closed forms
//! are used for interior knots, one-sided three-point weights at the ends.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{invalid, CfoError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StencilWeights {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Derivative order `k`.
    pub order: usize,
}

impl StencilWeights {
    /// `sum_j w_j f(x_j)`.
    pub fn apply(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Weights approximating the `k`-th derivative at `nodes[center_index]` from
/// samples at every node. Error is `O(h^{m+1-k})` for `m + 1` nodes.
pub fn fd_weights(nodes: &[f64], center_index: usize, k: usize) -> Result<StencilWeights> {
    let n = nodes.len();
    if n == 0 {
        return invalid("stencil needs at least one node");
    }
    if center_index >= n {
        return invalid(format!("center index {center_index} out of range for {n} nodes"));
    }
    if k > n - 1 {
        return invalid(format!("derivative order {k} exceeds m = {}", n - 1));
    }
    if nodes.iter().any(|x| !x.is_finite()) {
        return invalid("stencil nodes must be finite");
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if nodes[i] == nodes[j] {
                return Err(CfoError::SingularSystem(format!(
                    "duplicate stencil node {} at positions {i} and {j}",
                    nodes[i]
                )));
            }
        }
    }

    let x0 = nodes[center_index];
    let shifted: Vec<f64> = nodes.iter().map(|x| x - x0).collect();
    // Row-scale by h^r so entries stay O(1); the solution is unchanged up to
    // the matching scaling of the right-hand side.
    let h = shifted.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let h = if h > 0.0 { h } else { 1.0 };
    let mut mat = vec![vec![0.0; n]; n];
    for (j, d) in shifted.iter().enumerate() {
        let scaled = d / h;
        let mut p = 1.0;
        for row in mat.iter_mut() {
            row[j] = p;
            p *= scaled;
        }
    }
    let mut rhs = vec![0.0; n];
    rhs[k] = factorial(k) / h.powi(k as i32);

    let weights = solve_dense(mat, rhs)?;
    Ok(StencilWeights {
        nodes: nodes.to_vec(),
        weights,
        order: k,
    })
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() <= 1e-14 * scale {
            return Err(CfoError::SingularSystem(format!(
                "zero pivot in column {col} of the Vandermonde system"
            )));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = ((row + 1)..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

fn check_steps(h_prev: f64, h_next: f64) -> Result<()> {
    if !(h_prev > 0.0 && h_next > 0.0 && h_prev.is_finite() && h_next.is_finite()) {
        return invalid(format!(
            "three-point stencil needs positive steps, got ({h_prev}, {h_next})"
        ));
    }
    Ok(())
}

/// Nonuniform central first-derivative weights on `(t_{i-1}, t_i, t_{i+1})`,
/// second-order accurate. Nodes are reported relative to `t_i = 0`.
pub fn first_derivative_3pt(h_prev: f64, h_next: f64) -> Result<StencilWeights> {
    check_steps(h_prev, h_next)?;
    let s = h_prev + h_next;
    Ok(StencilWeights {
        nodes: vec![-h_prev, 0.0, h_next],
        weights: vec![
            -h_next / (h_prev * s),
            (h_next - h_prev) / (h_prev * h_next),
            h_prev / (h_next * s),
        ],
        order: 1,
    })
}

/// Nonuniform second-derivative weights on `(t_{i-1}, t_i, t_{i+1})`,
/// first-order accurate (second-order on uniform grids).
pub fn second_derivative_3pt(h_prev: f64, h_next: f64) -> Result<StencilWeights> {
    check_steps(h_prev, h_next)?;
    let c = 2.0 / (h_prev + h_next);
    Ok(StencilWeights {
        nodes: vec![-h_prev, 0.0, h_next],
        weights: vec![c / h_prev, -c * (1.0 / h_next + 1.0 / h_prev), c / h_next],
        order: 2,
    })
}

/// First (`d`) and second (`a`) time-derivative estimates at every knot,
/// one row per knot.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotDerivatives {
    pub d: Array2<f64>,
    pub a: Array2<f64>,
}

/// Estimates knot derivatives of `states` (one row per time in `times`).
///
/// Interior knots use the closed-form three-point stencils; the first and last
/// knots use one-sided weights over their nearest three knots.
pub fn estimate_knot_derivatives(times: &[f64], states: ArrayView2<f64>) -> Result<KnotDerivatives> {
    let n = times.len();
    if n < 3 {
        return invalid(format!("derivative estimation needs >= 3 knots, got {n}"));
    }
    if states.nrows() != n {
        return invalid(format!(
            "{} snapshots for a grid of {n} times",
            states.nrows()
        ));
    }
    let dim = states.ncols();
    let mut d = Array2::zeros((n, dim));
    let mut a = Array2::zeros((n, dim));

    let mut write = |i: usize, w1: &StencilWeights, w2: &StencilWeights, rows: [usize; 3]| {
        let (mut di, mut ai) = (d.row_mut(i), a.row_mut(i));
        for (slot, &r) in rows.iter().enumerate() {
            let u = states.index_axis(Axis(0), r);
            di.scaled_add(w1.weights[slot], &u);
            ai.scaled_add(w2.weights[slot], &u);
        }
    };

    for i in 1..n - 1 {
        let hp = times[i] - times[i - 1];
        let hn = times[i + 1] - times[i];
        let w1 = first_derivative_3pt(hp, hn)?;
        let w2 = second_derivative_3pt(hp, hn)?;
        write(i, &w1, &w2, [i - 1, i, i + 1]);
    }

    let head = [times[0], times[1], times[2]];
    write(0, &fd_weights(&head, 0, 1)?, &fd_weights(&head, 0, 2)?, [0, 1, 2]);
    let tail = [times[n - 3], times[n - 2], times[n - 1]];
    write(
        n - 1,
        &fd_weights(&tail, 2, 1)?,
        &fd_weights(&tail, 2, 2)?,
        [n - 3, n - 2, n - 1],
    );

    Ok(KnotDerivatives { d, a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::Array1;
    use proptest::prelude::*;

    fn assert_weights(got: &StencilWeights, want: &[f64], tol: f64) {
        assert_eq!(got.weights.len(), want.len());
        for (g, w) in got.weights.iter().zip(want) {
            assert_relative_eq!(*g, *w, epsilon = tol, max_relative = tol);
        }
    }

    #[test]
    fn vandermonde_forward_first_derivative() {
        let (x0, h) = (0.3, 0.05);
        let w = fd_weights(&[x0, x0 + h, x0 + 2.0 * h], 0, 1).unwrap();
        assert_weights(&w, &[-3.0 / (2.0 * h), 2.0 / h, -1.0 / (2.0 * h)], 1e-10);
    }

    #[test]
    fn vandermonde_central_identity_and_second_derivative() {
        let (x0, h) = (1.7, 0.1);
        let nodes = [x0 - h, x0, x0 + h];
        assert_weights(&fd_weights(&nodes, 1, 0).unwrap(), &[0.0, 1.0, 0.0], 1e-12);
        assert_weights(
            &fd_weights(&nodes, 1, 2).unwrap(),
            &[1.0 / (h * h), -2.0 / (h * h), 1.0 / (h * h)],
            1e-9,
        );
    }

    #[test]
    fn fd_weights_error_paths() {
        assert!(matches!(
            fd_weights(&[0.0, 0.1, 0.1], 0, 1),
            Err(CfoError::SingularSystem(_))
        ));
        assert!(matches!(
            fd_weights(&[0.0, 0.1, 0.2], 0, 3),
            Err(CfoError::InvalidArgument(_))
        ));
        assert!(fd_weights(&[0.0, 0.1], 2, 1).is_err());
    }

    #[test]
    fn three_point_closed_forms() {
        let h = 0.04;
        assert_weights(
            &first_derivative_3pt(h, h).unwrap(),
            &[-1.0 / (2.0 * h), 0.0, 1.0 / (2.0 * h)],
            1e-12,
        );
        assert_weights(
            &first_derivative_3pt(0.1, 0.2).unwrap(),
            &[-0.2 / (0.1 * 0.3), 0.1 / 0.02, 0.1 / (0.2 * 0.3)],
            1e-12,
        );
        assert_weights(
            &first_derivative_3pt(0.1, 0.2).unwrap(),
            &[-6.666_666_666_666_667, 5.0, 1.666_666_666_666_666_7],
            1e-12,
        );
        assert_weights(
            &second_derivative_3pt(h, h).unwrap(),
            &[1.0 / (h * h), -2.0 / (h * h), 1.0 / (h * h)],
            1e-12,
        );
        assert_weights(
            &second_derivative_3pt(0.1, 0.2).unwrap(),
            &[200.0 / 3.0, -100.0, 100.0 / 3.0],
            1e-12,
        );
        // the reversed ordering would give 3 on t^2 instead of 2
        let w = second_derivative_3pt(0.1, 0.2).unwrap();
        assert_relative_eq!(w.apply(&[0.01, 0.0, 0.04]), 2.0, epsilon = 1e-12);
        assert!(first_derivative_3pt(0.0, 0.1).is_err());
        assert!(second_derivative_3pt(0.1, -0.1).is_err());
    }

    #[test]
    fn second_derivative_exact_on_quadratics() {
        for &(hp, hn) in &[(0.1, 0.2), (0.3, 0.01), (1.0, 1.0), (0.07, 0.5)] {
            let t0 = 0.8;
            let w = second_derivative_3pt(hp, hn).unwrap();
            let f = [(t0 - hp) * (t0 - hp), t0 * t0, (t0 + hn) * (t0 + hn)];
            assert_relative_eq!(w.apply(&f), 2.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn knot_derivatives_of_constants_and_quadratics() {
        let times = [0.0, 0.1, 0.25, 0.3, 0.6, 0.75, 1.0];
        let n = times.len();
        let constant = Array2::from_elem((n, 2), 3.5);
        let kd = estimate_knot_derivatives(&times, constant.view()).unwrap();
        assert!(kd.d.iter().all(|v| v.abs() < 1e-10));
        assert!(kd.a.iter().all(|v| v.abs() < 1e-8));

        let quad = Array2::from_shape_fn((n, 1), |(i, _)| times[i] * times[i]);
        let kd = estimate_knot_derivatives(&times, quad.view()).unwrap();
        for i in 0..n {
            // one-sided three-point stencils are exact on quadratics too
            assert_relative_eq!(kd.d[[i, 0]], 2.0 * times[i], epsilon = 1e-10);
            assert_relative_eq!(kd.a[[i, 0]], 2.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn knot_derivatives_reject_short_grids() {
        let s = Array2::<f64>::zeros((2, 1));
        assert!(estimate_knot_derivatives(&[0.0, 1.0], s.view()).is_err());
        let s = Array2::<f64>::zeros((4, 1));
        assert!(estimate_knot_derivatives(&[0.0, 0.5, 1.0], s.view()).is_err());
    }

    /// Maximum stencil error on sin(3t) at a nonuniform interior knot.
    fn three_point_errors(h: f64) -> (f64, f64) {
        let t = 0.4;
        let (hp, hn) = (h, 1.7 * h);
        let f = |x: f64| (3.0 * x).sin();
        let vals = [f(t - hp), f(t), f(t + hn)];
        let d = first_derivative_3pt(hp, hn).unwrap().apply(&vals);
        let a = second_derivative_3pt(hp, hn).unwrap().apply(&vals);
        ((d - 3.0 * (3.0 * t).cos()).abs(), (a + 9.0 * (3.0 * t).sin()).abs())
    }

    #[test]
    fn three_point_convergence_orders() {
        let (d1, a1) = three_point_errors(0.02);
        let (d2, a2) = three_point_errors(0.01);
        let p_d = (d1 / d2).log2();
        let p_a = (a1 / a2).log2();
        assert!((p_d - 2.0).abs() < 0.1, "first-derivative order {p_d}");
        assert!(p_a > 0.9, "second-derivative order {p_a}");
    }

    #[test]
    fn closed_forms_agree_with_vandermonde() {
        for &(hp, hn) in &[(0.1, 0.2), (0.013, 0.007), (2.0, 0.5)] {
            let nodes = [-hp, 0.0, hn];
            let a = first_derivative_3pt(hp, hn).unwrap();
            let b = fd_weights(&nodes, 1, 1).unwrap();
            let c = second_derivative_3pt(hp, hn).unwrap();
            let e = fd_weights(&nodes, 1, 2).unwrap();
            let scale1 = 1.0 / hp.min(hn);
            let scale2 = scale1 * scale1;
            for j in 0..3 {
                assert!((a.weights[j] - b.weights[j]).abs() <= 1e-12 * scale1);
                assert!((c.weights[j] - e.weights[j]).abs() <= 1e-12 * scale2);
            }
        }
    }

    proptest! {
        #[test]
        fn fd_weights_exact_on_monomials(
            raw in prop::collection::vec(-1.0f64..1.0, 2..8),
            c_pick in any::<prop::sample::Index>(),
            k_pick in any::<prop::sample::Index>(),
        ) {
            let mut nodes = raw.clone();
            nodes.sort_by(f64::total_cmp);
            nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-2);
            prop_assume!(nodes.len() >= 2);
            let m = nodes.len() - 1;
            let c = c_pick.index(nodes.len());
            let k = k_pick.index(m + 1);
            let w = fd_weights(&nodes, c, k).unwrap();
            let x0 = nodes[c];
            for r in 0..=m {
                let samples: Vec<f64> = nodes.iter().map(|x| (x - x0).powi(r as i32)).collect();
                let got = w.apply(&samples);
                let want = if r == k { factorial(k) } else { 0.0 };
                let scale: f64 = w.weights.iter().zip(&samples).map(|(a, b)| (a * b).abs()).sum::<f64>().max(1.0);
                prop_assert!((got - want).abs() <= 1e-9 * scale, "r={} k={} got={} want={}", r, k, got, want);
            }
        }
    }

    #[test]
    fn knot_estimates_componentwise() {
        let times = [0.0, 0.2, 0.5, 1.0];
        let states = Array2::from_shape_fn((4, 3), |(i, j)| (j as f64 + 1.0) * times[i]);
        let kd = estimate_knot_derivatives(&times, states.view()).unwrap();
        for i in 0..4 {
            let want = Array1::from(vec![1.0, 2.0, 3.0]);
            for j in 0..3 {
                assert_relative_eq!(kd.d[[i, j]], want[j], epsilon = 1e-10);
            }
        }
    }
}

//! Relative L² errors, aggregation over test sets, and empirical orders.

use ndarray::{ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CfoError, Result};

/// `‖pred - truth‖₂ / ‖truth‖₂` over every (time, component) entry.
pub fn relative_l2(pred: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<f64> {
    if pred.dim() != truth.dim() {
        return invalid(format!(
            "prediction shape {:?} does not match truth {:?}",
            pred.dim(),
            truth.dim()
        ));
    }
    let den: f64 = truth.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(CfoError::UndefinedMetric("reference trajectory has zero norm".into()));
    }
    let num: f64 = pred.iter().zip(truth.iter()).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((num / den).sqrt())
}

/// Relative error of a single state vector (final-time metric).
pub fn relative_l2_vec(pred: &[f64], truth: &[f64]) -> Result<f64> {
    let p = ArrayView2::from_shape((1, pred.len()), pred).unwrap();
    let t = ArrayView2::from_shape((1, truth.len()), truth).unwrap();
    relative_l2(p, t)
}

/// Sample mean and standard deviation (`n - 1` denominator; 0 for `n = 1`).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Per-pair orders `log(e_{k+1}/e_k) / log(h_{k+1}/h_k)`. A zero error gives
/// `f64::INFINITY`.
pub fn empirical_orders(errors: &[f64], steps: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != steps.len() {
        return invalid("errors and steps must have equal length");
    }
    if errors.len() < 2 {
        return invalid("need at least two (error, step) pairs");
    }
    if errors.iter().any(|e| !(*e >= 0.0)) || steps.iter().any(|h| !(*h > 0.0)) {
        return invalid("errors must be >= 0 and steps > 0");
    }
    Ok(errors
        .windows(2)
        .zip(steps.windows(2))
        .map(|(e, h)| {
            if e[0] == 0.0 || e[1] == 0.0 {
                f64::INFINITY
            } else {
                (e[1] / e[0]).ln() / (h[1] / h[0]).ln()
            }
        })
        .collect())
}

/// Mean of [`empirical_orders`].
pub fn empirical_order(errors: &[f64], steps: &[f64]) -> Result<f64> {
    let orders = empirical_orders(errors, steps)?;
    Ok(orders.iter().sum::<f64>() / orders.len() as f64)
}

/// Rollout accuracy on a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Whole-trajectory relative L² per test trajectory.
    pub per_trajectory: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    /// Relative error of the final state per test trajectory.
    pub final_time: Vec<f64>,
    pub final_time_mean: f64,
    /// Mean over trajectories of the per-time relative error.
    pub per_time: Vec<f64>,
    pub nfe: usize,
    pub fingerprint: String,
}

impl EvalReport {
    /// `pred` and `truth` are `(trajectory, time, component)`.
    pub fn from_rollouts(pred: ArrayView3<f64>, truth: ArrayView3<f64>, nfe: usize, fingerprint: &str) -> Result<Self> {
        if pred.dim() != truth.dim() {
            return invalid(format!("prediction shape {:?} vs truth {:?}", pred.dim(), truth.dim()));
        }
        let (n, nt, _) = pred.dim();
        if n == 0 || nt == 0 {
            return invalid("empty rollout set");
        }
        let mut per_traj = Vec::with_capacity(n);
        let mut final_time = Vec::with_capacity(n);
        let mut per_time = vec![0.0; nt];
        for k in 0..n {
            let (p, t) = (pred.index_axis(Axis(0), k), truth.index_axis(Axis(0), k));
            per_traj.push(relative_l2(p, t)?);
            for j in 0..nt {
                let pj = p.row(j);
                let tj = t.row(j);
                let den = tj.dot(&tj).sqrt();
                let num = (&pj - &tj).mapv(|v| v * v).sum().sqrt();
                let e = if den > 0.0 { num / den } else { num };
                per_time[j] += e / n as f64;
                if j == nt - 1 {
                    final_time.push(e);
                }
            }
        }
        let (mean, sd) = mean_sd(&per_traj);
        let final_time_mean = mean_sd(&final_time).0;
        Ok(Self {
            per_trajectory: per_traj,
            mean,
            sd,
            final_time,
            final_time_mean,
            per_time,
            nfe,
            fingerprint: fingerprint.to_string(),
        })
    }

    /// `mean ± sd` in the `4.53e-2 ± 6.80e-3` style.
    pub fn mean_sd_string(&self) -> String {
        format!("{:.2e} ± {:.2e}", self.mean, self.sd)
    }
}

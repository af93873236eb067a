//! Per-trajectory time grids on the normalized interval `[0, 1]`.

use std::ops::Deref;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Strictly increasing sample times normalized to `[0, 1]`.
///
/// `raw_horizon` keeps the original length of the time window (seconds) so
/// that velocities can be mapped back to physical units: `du/dt_raw =
/// (du/dt) / raw_horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
    raw_horizon: f64,
}

impl TimeGrid {
    /// Wraps already-normalized times. Requires `times[0] == 0`,
    /// `times[last] == 1`, strictly increasing, at least two points.
    pub fn new(times: Vec<f64>, raw_horizon: f64) -> Result<Self> {
        if times.len() < 2 {
            return invalid(format!("time grid needs at least 2 points, got {}", times.len()));
        }
        if !(raw_horizon.is_finite() && raw_horizon > 0.0) {
            return invalid(format!("raw horizon must be positive, got {raw_horizon}"));
        }
        if times[0] != 0.0 || *times.last().unwrap() != 1.0 {
            return invalid("normalized grid must start at 0 and end at 1");
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("time grid must be strictly increasing");
        }
        Ok(Self { times, raw_horizon })
    }

    /// Normalizes raw times `r_i` to `(r_i - r_0) / (r_last - r_0)`.
    pub fn from_raw(raw: &[f64]) -> Result<Self> {
        if raw.len() < 2 {
            return invalid(format!("time grid needs at least 2 points, got {}", raw.len()));
        }
        if raw.iter().any(|t| !t.is_finite()) || raw.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("raw times must be finite and strictly increasing");
        }
        let t0 = raw[0];
        let horizon = raw[raw.len() - 1] - t0;
        let n = raw.len();
        let times = raw
            .iter()
            .enumerate()
            .map(|(i, &r)| if i == n - 1 { 1.0 } else { (r - t0) / horizon })
            .collect();
        Self::new(times, horizon)
    }

    /// `n_points` equispaced times `i / (n_points - 1)`, unit raw horizon.
    pub fn uniform(n_points: usize) -> Result<Self> {
        Self::uniform_with_horizon(n_points, 1.0)
    }

    pub fn uniform_with_horizon(n_points: usize, raw_horizon: f64) -> Result<Self> {
        if n_points < 2 {
            return invalid(format!("uniform grid needs n_points >= 2, got {n_points}"));
        }
        let last = (n_points - 1) as f64;
        let times = (0..n_points).map(|i| i as f64 / last).collect();
        Self::new(times, raw_horizon)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn raw_horizon(&self) -> f64 {
        self.raw_horizon
    }

    /// Segment lengths `h_i = t_{i+1} - t_i`.
    pub fn steps(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn n_segments(&self) -> usize {
        self.times.len() - 1
    }

    /// True when every step equals the mean step to within `rel_tol`.
    pub fn is_uniform(&self, rel_tol: f64) -> bool {
        let h = 1.0 / self.n_segments() as f64;
        self.steps().iter().all(|s| (s - h).abs() <= rel_tol * h)
    }

    /// Index `i` of the segment `[t_i, t_{i+1})` containing `t`; `t = 1`
    /// maps to the last segment. Caller guarantees `t ∈ [0, 1]`.
    pub fn segment_of(&self, t: f64) -> usize {
        let last = self.times.len() - 2;
        // partition_point returns the first index with times[idx] > t
        let idx = self.times.partition_point(|&s| s <= t);
        idx.saturating_sub(1).min(last)
    }

    /// Keeps both endpoints plus a uniformly drawn subset of interior times
    /// so that the total count is `round(keep_rate * len)` (half rounds up).
    pub fn subsample(&self, keep_rate: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.subsample_with(keep_rate, &mut rng)
    }

    pub fn subsample_with<R: rand::Rng + ?Sized>(&self, keep_rate: f64, rng: &mut R) -> Result<Self> {
        if !(keep_rate > 0.0 && keep_rate <= 1.0) {
            return invalid(format!("keep_rate must lie in (0, 1], got {keep_rate}"));
        }
        let n = self.times.len();
        if keep_rate == 1.0 {
            if n < 3 {
                return invalid(format!("subsampled grid would have {n} < 3 points"));
            }
            return Ok(self.clone());
        }
        let target = subsample_count(n, keep_rate);
        if target < 3 {
            return invalid(format!(
                "keep_rate {keep_rate} on {n} points leaves {target} < 3 points"
            ));
        }
        let interior = n - 2;
        let mut picked: Vec<usize> = index::sample(rng, interior, target - 2)
            .into_iter()
            .map(|i| i + 1)
            .collect();
        picked.sort_unstable();
        let mut times = Vec::with_capacity(target);
        times.push(self.times[0]);
        times.extend(picked.iter().map(|&i| self.times[i]));
        times.push(self.times[n - 1]);
        Self::new(times, self.raw_horizon)
    }

    /// Indices into `self` of every time in `sub` (which must be a subset).
    pub fn indices_of(&self, sub: &TimeGrid) -> Option<Vec<usize>> {
        let mut out = Vec::with_capacity(sub.len());
        let mut j = 0;
        for &t in sub.times() {
            while j < self.times.len() && self.times[j] < t {
                j += 1;
            }
            if j == self.times.len() || self.times[j] != t {
                return None;
            }
            out.push(j);
        }
        Some(out)
    }
}

/// `round(keep_rate * n)` with halves rounded up.
pub fn subsample_count(n: usize, keep_rate: f64) -> usize {
    (keep_rate * n as f64 + 0.5).floor() as usize
}

impl Deref for TimeGrid {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.times
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_grids() {
        assert_eq!(TimeGrid::uniform(2).unwrap().times(), &[0.0, 1.0]);
        assert_eq!(
            TimeGrid::uniform(5).unwrap().times(),
            &[0.0, 0.25, 0.5, 0.75, 1.0]
        );
        let g = TimeGrid::uniform(101).unwrap();
        assert_eq!(g.len(), 101);
        for h in g.steps() {
            assert!((h - 0.01).abs() < 1e-15);
        }
        assert!(TimeGrid::uniform(1).is_err());
        assert!(TimeGrid::uniform(0).is_err());
    }

    #[test]
    fn from_raw_normalizes_by_horizon() {
        let g = TimeGrid::from_raw(&[2.0, 3.0, 4.5, 7.0]).unwrap();
        assert_eq!(g.raw_horizon(), 5.0);
        assert_eq!(g.times(), &[0.0, 0.2, 0.5, 1.0]);
        assert!(TimeGrid::from_raw(&[0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn rejects_malformed_grids() {
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5, 1.0], 1.0).is_err());
        assert!(TimeGrid::new(vec![0.1, 1.0], 1.0).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.9], 1.0).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn subsample_count_matches_enumeration() {
        // 0.25 * 101 = 25.25 -> 25; 0.5 * 101 = 50.5 -> 51 (half up)
        assert_eq!(subsample_count(101, 0.25), 25);
        assert_eq!(subsample_count(101, 0.5), 51);
        assert_eq!(subsample_count(4, 0.625), 3);
        let g = TimeGrid::uniform(101).unwrap();
        let s = g.subsample(0.25, 7).unwrap();
        assert_eq!(s.len(), 25);
        assert_eq!(s[0], 0.0);
        assert_eq!(s[24], 1.0);
    }

    #[test]
    fn subsample_identity_and_determinism() {
        let g = TimeGrid::uniform(33).unwrap();
        assert_eq!(g.subsample(1.0, 3).unwrap(), g);
        assert_eq!(g.subsample(0.5, 11).unwrap(), g.subsample(0.5, 11).unwrap());
        assert_ne!(g.subsample(0.5, 11).unwrap(), g.subsample(0.5, 12).unwrap());
    }

    #[test]
    fn subsample_rejects_too_few_points() {
        let g = TimeGrid::uniform(5).unwrap();
        assert!(g.subsample(0.4, 0).is_err());
        assert!(g.subsample(0.0, 0).is_err());
        assert!(g.subsample(1.5, 0).is_err());
        assert!(TimeGrid::uniform(2).unwrap().subsample(1.0, 0).is_err());
    }

    #[test]
    fn segment_lookup_uses_half_open_segments() {
        let g = TimeGrid::new(vec![0.0, 0.25, 0.5, 1.0], 1.0).unwrap();
        assert_eq!(g.segment_of(0.0), 0);
        assert_eq!(g.segment_of(0.1), 0);
        assert_eq!(g.segment_of(0.25), 1);
        assert_eq!(g.segment_of(0.75), 2);
        assert_eq!(g.segment_of(1.0), 2);
    }

    proptest! {
        #[test]
        fn subsample_is_sorted_subset_with_endpoints(
            n in 3usize..200,
            keep in 0.05f64..1.0,
            seed in any::<u64>(),
        ) {
            let g = TimeGrid::uniform(n).unwrap();
            match g.subsample(keep, seed) {
                Ok(s) => {
                    prop_assert_eq!(s.len(), subsample_count(n, keep));
                    prop_assert_eq!(s[0], 0.0);
                    prop_assert_eq!(s[s.len() - 1], 1.0);
                    prop_assert!(s.windows(2).all(|w| w[1] > w[0]));
                    prop_assert!(g.indices_of(&s).is_some());
                }
                Err(_) => prop_assert!(subsample_count(n, keep) < 3),
            }
        }
    }
}

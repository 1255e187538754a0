//! Characterization-based runtime cost model.
//!
//! Total runtime of a run is the sum over iterations of the optimizer overhead
//! and the characterized batch runtime for the number of unique points that
//! iteration evaluated. Batch runtimes between characterized sizes are
//! linearly interpolated; sizes outside the characterized range clamp.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unique evaluations per iteration.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RunTrace(pub Vec<usize>);

impl RunTrace {
    pub fn new(counts: Vec<usize>) -> Self {
        Self(counts)
    }

    pub fn push(&mut self, n: usize) {
        self.0.push(n);
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn counts(&self) -> &[usize] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacterizedPoint {
    pub batch: usize,
    pub minutes: f64,
    /// Where the value comes from (measurement, or how it was filled in).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeCostModel {
    pub characterized: Vec<CharacterizedPoint>,
    #[serde(default)]
    pub logic_overhead_min: f64,
}

const DEFAULT_MODEL: &str = include_str!("../../data/runtime_model.json");

impl Default for RuntimeCostModel {
    fn default() -> Self {
        Self::from_json(DEFAULT_MODEL).expect("shipped runtime model is valid")
    }
}

impl RuntimeCostModel {
    pub fn new(points: &[(usize, f64)], logic_overhead_min: f64) -> Result<Self> {
        let model = Self {
            characterized: points
                .iter()
                .map(|&(batch, minutes)| CharacterizedPoint {
                    batch,
                    minutes,
                    source: None,
                })
                .collect(),
            logic_overhead_min,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.characterized.len() < 2 {
            return Err(Error::config("runtime model needs at least two characterized batch sizes"));
        }
        for w in self.characterized.windows(2) {
            if w[0].batch >= w[1].batch {
                return Err(Error::config("characterized batch sizes must be strictly increasing"));
            }
            if w[1].minutes < w[0].minutes {
                return Err(Error::config("characterized batch runtime must be nondecreasing"));
            }
        }
        if self.characterized.iter().any(|p| !(p.minutes.is_finite() && p.minutes >= 0.0)) {
            return Err(Error::config("batch runtimes must be finite and nonnegative"));
        }
        if !(self.logic_overhead_min.is_finite() && self.logic_overhead_min >= 0.0) {
            return Err(Error::config("logic overhead must be nonnegative"));
        }
        Ok(())
    }

    /// Batch runtime for `n` points and whether `n` fell outside the
    /// characterized range.
    pub fn batch_runtime(&self, n: usize) -> (f64, bool) {
        let pts = &self.characterized;
        let first = &pts[0];
        let last = &pts[pts.len() - 1];
        if n < first.batch {
            return (first.minutes, true);
        }
        if n > last.batch {
            return (last.minutes, true);
        }
        let hi = pts.partition_point(|p| p.batch < n);
        let upper = &pts[hi];
        if upper.batch == n {
            return (upper.minutes, false);
        }
        let lower = &pts[hi - 1];
        let t = (n - lower.batch) as f64 / (upper.batch - lower.batch) as f64;
        (lower.minutes + t * (upper.minutes - lower.minutes), false)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeEstimate {
    pub minutes: f64,
    /// Some iteration's batch size was clamped to the characterized range.
    pub clamped: bool,
}

/// Sum over iterations of logic overhead plus characterized batch runtime.
pub fn estimate_runtime(trace: &RunTrace, model: &RuntimeCostModel) -> Result<RuntimeEstimate> {
    model.validate()?;
    if trace.is_empty() {
        return Err(Error::config("runtime estimate needs a nonempty trace"));
    }
    let mut minutes = 0.0;
    let mut clamped = false;
    for &n in trace.counts() {
        minutes += model.logic_overhead_min;
        if n > 0 {
            let (t, c) = model.batch_runtime(n);
            minutes += t;
            clamped |= c;
        }
    }
    Ok(RuntimeEstimate { minutes, clamped })
}

/// `samples / batch_size * t_batch`: total runtime of a run that needed
/// `samples` evaluations in full batches.
pub fn batched_total_runtime(samples: f64, batch_size: usize, t_batch: f64) -> Result<f64> {
    if batch_size == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    Ok(samples / batch_size as f64 * t_batch)
}

/// Mean of [`batched_total_runtime`] over several algorithms' sample counts.
pub fn batched_average_runtime(samples: &[f64], batch_size: usize, t_batch: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::config("need at least one algorithm"));
    }
    let mut total = 0.0;
    for &s in samples {
        total += batched_total_runtime(s, batch_size, t_batch)?;
    }
    Ok(total / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_batch_at_characterized_point() {
        let m = RuntimeCostModel::new(&[(16, 5.9), (32, 7.2)], 0.0).unwrap();
        let est = estimate_runtime(&RunTrace::new(vec![32]), &m).unwrap();
        assert_eq!(est.minutes, 7.2);
        assert!(!est.clamped);
        assert_eq!(estimate_runtime(&RunTrace::new(vec![16]), &m).unwrap().minutes, 5.9);
    }

    #[test]
    fn midpoint_interpolation() {
        let m = RuntimeCostModel::new(&[(16, 5.9), (32, 7.2)], 0.0).unwrap();
        let est = estimate_runtime(&RunTrace::new(vec![24]), &m).unwrap();
        // (5.9 + 7.2) / 2
        assert!((est.minutes - 6.55).abs() < 1e-12);
    }

    #[test]
    fn clamps_outside_range() {
        let m = RuntimeCostModel::new(&[(16, 5.9), (32, 7.2)], 0.0).unwrap();
        let lo = estimate_runtime(&RunTrace::new(vec![3]), &m).unwrap();
        assert_eq!(lo.minutes, 5.9);
        assert!(lo.clamped);
        let hi = estimate_runtime(&RunTrace::new(vec![40]), &m).unwrap();
        assert_eq!(hi.minutes, 7.2);
        assert!(hi.clamped);
    }

    #[test]
    fn zero_evaluations_cost_only_logic() {
        let m = RuntimeCostModel::new(&[(16, 5.9), (32, 7.2)], 0.25).unwrap();
        let est = estimate_runtime(&RunTrace::new(vec![0, 0]), &m).unwrap();
        assert_eq!(est.minutes, 0.5);
    }

    #[test]
    fn rejects_bad_models() {
        assert!(RuntimeCostModel::new(&[(16, 5.9)], 0.0).is_err());
        assert!(RuntimeCostModel::new(&[(32, 5.9), (16, 7.2)], 0.0).is_err());
        assert!(RuntimeCostModel::new(&[(16, 7.2), (32, 5.9)], 0.0).is_err());
        let m = RuntimeCostModel::new(&[(16, 5.9), (32, 7.2)], 0.0).unwrap();
        assert!(estimate_runtime(&RunTrace::default(), &m).is_err());
    }

    #[test]
    fn shipped_model_contains_measured_anchors() {
        let m = RuntimeCostModel::default();
        assert_eq!(m.batch_runtime(16), (5.9, false));
        assert_eq!(m.batch_runtime(32), (7.2, false));
        assert_eq!(m.batch_runtime(48), (9.9, false));
        let batches: Vec<usize> = m.characterized.iter().map(|p| p.batch).collect();
        for b in [1, 8, 16, 24, 32] {
            assert!(batches.contains(&b));
        }
    }

    #[test]
    fn batched_runtime_helpers() {
        assert_eq!(batched_total_runtime(32.0, 32, 7.2).unwrap(), 7.2);
        assert!(batched_total_runtime(1.0, 0, 1.0).is_err());
        let avg = batched_average_runtime(&[1048.0, 622.0, 1660.0], 32, 7.2).unwrap();
        assert!((avg - 249.75).abs() < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn runtime_is_additive_over_concatenation(
                a in prop::collection::vec(0usize..64, 1..20),
                b in prop::collection::vec(0usize..64, 1..20),
            ) {
                let m = RuntimeCostModel::default();
                let ra = estimate_runtime(&RunTrace::new(a.clone()), &m).unwrap().minutes;
                let rb = estimate_runtime(&RunTrace::new(b.clone()), &m).unwrap().minutes;
                let mut ab = a;
                ab.extend(b);
                let rab = estimate_runtime(&RunTrace::new(ab), &m).unwrap().minutes;
                prop_assert!((rab - (ra + rb)).abs() <= 1e-9 * rab.max(1.0));
            }

            #[test]
            fn interpolation_stays_within_neighbours(n in 1usize..48) {
                let m = RuntimeCostModel::default();
                let (t, clamped) = m.batch_runtime(n);
                let lo = m.characterized.iter().rev().find(|p| p.batch <= n).unwrap();
                let hi = m.characterized.iter().find(|p| p.batch >= n).unwrap();
                prop_assert!(!clamped);
                prop_assert!(t >= lo.minutes - 1e-12 && t <= hi.minutes + 1e-12);
            }
        }
    }
}

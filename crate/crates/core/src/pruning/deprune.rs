//! Stochastic de-pruning: verify pruned-away values by substituting them into
//! the current best designs and restore the ones that win often enough.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design_space::{DesignPoint, DesignSpace, Value};
use crate::error::Result;
use crate::optimizer::{Objective, RunState};
use crate::surrogate::{Evaluator, PpaRecord};

/// `min(r_win * gamma, 1)`, with `r_win = wins / samples` (zero without samples).
pub fn restore_probability(wins: usize, samples: usize, gamma: f64) -> f64 {
    if samples == 0 {
        return 0.0;
    }
    (wins as f64 / samples as f64 * gamma).min(1.0)
}

/// Evaluates verification points, reusing whatever is cached.
pub trait Verifier {
    fn verify(&mut self, points: &[DesignPoint]) -> Result<Vec<(PpaRecord, bool)>>;
}

impl<E: Evaluator + ?Sized> Verifier for RunState<'_, E> {
    fn verify(&mut self, points: &[DesignPoint]) -> Result<Vec<(PpaRecord, bool)>> {
        self.evaluate(points)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueVerdict {
    pub parameter: String,
    pub value: Value,
    /// Verification samples compared against their baseline.
    pub samples: usize,
    pub wins: usize,
    pub win_rate: f64,
    pub restore_probability: f64,
    pub restored: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DepruneReport {
    pub iteration: usize,
    pub gamma: f64,
    pub per_value_budget: usize,
    /// Verification samples issued in this call (never above the budget).
    pub verifications: usize,
    pub verdicts: Vec<ValueVerdict>,
}

impl DepruneReport {
    pub fn restored(&self) -> impl Iterator<Item = &ValueVerdict> {
        self.verdicts.iter().filter(|v| v.restored)
    }
}

/// Per-parameter values of `full` missing from `current`, in declaration order.
pub fn missing_values(current: &DesignSpace, full: &DesignSpace) -> Vec<(String, Value)> {
    let mut out = Vec::new();
    for fp in full.params() {
        let cur = current.param(&fp.name);
        for v in &fp.values {
            if !cur.is_some_and(|c| c.contains(v)) {
                out.push((fp.name.clone(), v.clone()));
            }
        }
    }
    out
}

/// One de-pruning call.
///
/// Each missing value gets `max(1, n_total / |missing|)` verification samples
/// drawn without replacement from `baselines`; a sample wins when the
/// substituted design is feasible and strictly better than its baseline.
/// Substitutions that break a validity rule are replaced by another baseline
/// when one is left, otherwise they count as losses. Once `n_total` samples
/// have been issued the remaining values get none (win rate zero).
#[allow(clippy::too_many_arguments)]
pub fn deprune<V: Verifier + ?Sized, R: Rng + ?Sized>(
    current: &DesignSpace,
    full: &DesignSpace,
    baselines: &[DesignPoint],
    objective: &Objective,
    n_total: usize,
    gamma: f64,
    verifier: &mut V,
    rng: &mut R,
) -> Result<(DesignSpace, DepruneReport)> {
    let mut missing = missing_values(current, full);
    let mut report = DepruneReport {
        gamma,
        ..Default::default()
    };
    if missing.is_empty() || baselines.is_empty() {
        return Ok((current.clone(), report));
    }
    missing.shuffle(rng);
    let per_value = (n_total / missing.len()).max(1);
    report.per_value_budget = per_value;
    let base_results = verifier.verify(baselines)?;
    let score = |r: &(PpaRecord, bool)| if r.1 { objective.score(&r.0) } else { f64::NEG_INFINITY };

    let mut restored: Vec<(String, Value)> = Vec::new();
    for (param, value) in missing {
        let want = per_value.min(baselines.len()).min(n_total - report.verifications);
        let mut order: Vec<usize> = (0..baselines.len()).collect();
        order.shuffle(rng);
        let mut pairs: Vec<(usize, DesignPoint)> = Vec::new();
        for i in order {
            if pairs.len() == want {
                break;
            }
            let mut s = baselines[i].clone();
            s.set(param.clone(), value.clone());
            if full.contains(&s) {
                pairs.push((i, s));
            }
        }
        // slots no valid substitution could fill are losses
        let samples = want;
        report.verifications += pairs.len();
        let points: Vec<DesignPoint> = pairs.iter().map(|(_, s)| s.clone()).collect();
        let results = verifier.verify(&points)?;
        let wins = pairs
            .iter()
            .zip(&results)
            .filter(|((i, _), r)| r.1 && score(r) > score(&base_results[*i]))
            .count();
        let p = restore_probability(wins, samples, gamma);
        let u: f64 = rng.gen();
        let restore = u < p;
        if restore {
            restored.push((param.clone(), value.clone()));
        }
        report.verdicts.push(ValueVerdict {
            parameter: param,
            value,
            samples,
            wins,
            win_rate: if samples == 0 { 0.0 } else { wins as f64 / samples as f64 },
            restore_probability: p,
            restored: restore,
        });
    }

    let mut next = current.clone();
    for fp in full.params() {
        let extra: Vec<&Value> = restored.iter().filter(|(n, _)| *n == fp.name).map(|(_, v)| v).collect();
        if extra.is_empty() {
            continue;
        }
        let cur = current.param(&fp.name);
        let keep: Vec<Value> = fp
            .values
            .iter()
            .filter(|v| extra.contains(v) || cur.is_some_and(|c| c.contains(v)))
            .cloned()
            .collect();
        next = next.replace_param(fp.restricted(&keep)?)?;
    }
    Ok((next, report))
}

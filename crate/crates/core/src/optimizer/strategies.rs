//! Candidate generators for the individual algorithms.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{GaConfig, HistoryBuffer, TpeConfig};
use crate::design_space::{DesignPoint, DesignSpace, Value};

const VALIDITY_RETRIES: usize = 32;

/// Metropolis rule. `worse_by` is how much worse (in score) the candidate is
/// than the current point; improvements are always accepted.
pub fn metropolis_accept<R: Rng + ?Sized>(worse_by: f64, temperature: f64, rng: &mut R) -> bool {
    if worse_by <= 0.0 {
        return true;
    }
    if temperature <= 0.0 {
        return false;
    }
    rng.gen::<f64>() < (-worse_by / temperature).exp()
}

/// Value of `name` in `point` if admissible in `space`, otherwise a random
/// admissible one.
fn repaired<R: Rng + ?Sized>(point: &DesignPoint, space: &DesignSpace, rng: &mut R) -> DesignPoint {
    let mut out = DesignPoint::new();
    for p in space.params() {
        match point.get(&p.name) {
            Some(v) if p.contains(v) => out.set(p.name.clone(), v.clone()),
            _ => out.set(p.name.clone(), p.values.choose(rng).expect("nonempty").clone()),
        }
    }
    out
}

fn other_value<R: Rng + ?Sized>(values: &[Value], current: Option<&Value>, rng: &mut R) -> Value {
    let pool: Vec<&Value> = values.iter().filter(|v| Some(*v) != current).collect();
    if pool.is_empty() {
        values[0].clone()
    } else {
        pool[rng.gen_range(0..pool.len())].clone()
    }
}

/// Neighbour of `current`: one or two parameters moved to a different
/// admissible value. Falls back to a random restart when no valid neighbour
/// turns up within the retry bound.
pub fn sa_propose<R: Rng + ?Sized>(current: &DesignPoint, space: &DesignSpace, rng: &mut R) -> DesignPoint {
    let base = repaired(current, space, rng);
    let movable: Vec<&str> = space
        .params()
        .iter()
        .filter(|p| p.values.len() > 1)
        .map(|p| p.name.as_str())
        .collect();
    if movable.is_empty() {
        return base;
    }
    for _ in 0..VALIDITY_RETRIES {
        let k = rng.gen_range(1..=2usize).min(movable.len());
        let chosen: Vec<&str> = movable.choose_multiple(rng, k).copied().collect();
        let mut next = base.clone();
        for name in chosen {
            let def = space.param(name).expect("movable params exist");
            let v = other_value(&def.values, base.get(name), rng);
            next.set(name, v);
        }
        if space.satisfies_rules(&next) && next != *current {
            return next;
        }
    }
    space.random_point(rng).unwrap_or(base)
}

/// Children by uniform crossover of two distinct parents followed by
/// per-parameter mutation; every child lies in `space` and satisfies its rules.
pub fn ga_step<R: Rng + ?Sized>(
    parents: &[DesignPoint],
    space: &DesignSpace,
    cfg: &GaConfig,
    n: usize,
    rng: &mut R,
) -> Vec<DesignPoint> {
    assert!(parents.len() >= 2, "ga_step needs at least two parents");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut child = None;
        for _ in 0..VALIDITY_RETRIES {
            let a = rng.gen_range(0..parents.len());
            let mut b = rng.gen_range(0..parents.len() - 1);
            if b >= a {
                b += 1;
            }
            let cross = rng.gen::<f64>() < cfg.crossover_rate;
            let mut c = DesignPoint::new();
            for p in space.params() {
                let src = if cross && rng.gen::<bool>() { &parents[b] } else { &parents[a] };
                let mut v = match src.get(&p.name) {
                    Some(v) if p.contains(v) => v.clone(),
                    _ => p.values.choose(rng).expect("nonempty").clone(),
                };
                if rng.gen::<f64>() < cfg.mutation_rate && p.values.len() > 1 {
                    v = other_value(&p.values, Some(&v), rng);
                }
                c.set(p.name.clone(), v);
            }
            if space.satisfies_rules(&c) {
                child = Some(c);
                break;
            }
        }
        match child.or_else(|| space.random_point(rng)) {
            Some(c) => out.push(c),
            None => break,
        }
    }
    out
}

/// Per-parameter smoothed categorical densities of the good and bad sets.
#[derive(Clone, Debug, PartialEq)]
pub struct TpeModel {
    pub params: Vec<TpeParam>,
    pub good_count: usize,
    pub bad_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TpeParam {
    pub name: String,
    pub values: Vec<Value>,
    pub good: Vec<f64>,
    pub bad: Vec<f64>,
}

impl TpeModel {
    pub fn good_probability(&self, name: &str, value: &Value) -> Option<f64> {
        let p = self.params.iter().find(|p| p.name == name)?;
        let i = p.values.iter().position(|v| v == value)?;
        Some(p.good[i])
    }

    /// Sum over parameters of ln(good / bad).
    pub fn log_ratio(&self, point: &DesignPoint) -> f64 {
        self.params
            .iter()
            .map(|p| {
                let i = point
                    .get(&p.name)
                    .and_then(|v| p.values.iter().position(|x| x == v))
                    .expect("point lies in the modeled space");
                (p.good[i] / p.bad[i]).ln()
            })
            .sum()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DesignPoint {
        self.params
            .iter()
            .map(|p| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut idx = p.values.len() - 1;
                for (i, w) in p.good.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        idx = i;
                        break;
                    }
                }
                (p.name.clone(), p.values[idx].clone())
            })
            .collect()
    }
}

fn smoothed(counts: &[usize], total: usize) -> Vec<f64> {
    let k = counts.len() as f64;
    counts.iter().map(|&c| (c as f64 + 1.0) / (total as f64 + k)).collect()
}

/// Splits the history at `quantile` and builds add-one-smoothed densities
/// over the values of `space`. `None` when the history has no feasible entry.
pub fn tpe_model(history: &HistoryBuffer, space: &DesignSpace, quantile: f64) -> Option<TpeModel> {
    let ranked = history.ranked();
    if ranked.is_empty() || !ranked[0].feasible {
        return None;
    }
    let n_good = ((quantile * ranked.len() as f64).ceil() as usize).clamp(1, ranked.len());
    let (good, bad): (Vec<_>, Vec<_>) = ranked
        .into_iter()
        .enumerate()
        .partition(|(i, e)| *i < n_good && e.feasible);
    let params = space
        .params()
        .iter()
        .map(|p| {
            let count = |set: &[(usize, &super::HistoryEntry)]| {
                let mut c = vec![0usize; p.values.len()];
                let mut total = 0;
                for (_, e) in set {
                    if let Some(i) = e.point.get(&p.name).and_then(|v| p.position(v)) {
                        c[i] += 1;
                        total += 1;
                    }
                }
                (c, total)
            };
            let (gc, gt) = count(&good);
            let (bc, bt) = count(&bad);
            TpeParam {
                name: p.name.clone(),
                values: p.values.clone(),
                good: smoothed(&gc, gt),
                bad: smoothed(&bc, bt),
            }
        })
        .collect();
    Some(TpeModel {
        params,
        good_count: good.len(),
        bad_count: bad.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TpeProposal {
    pub points: Vec<DesignPoint>,
    /// The history had no feasible entry; points are uniform samples.
    pub uniform_fallback: bool,
}

/// Draws a candidate pool from the good density and keeps the `n` unseen
/// valid candidates with the largest good/bad density ratio.
pub fn tpe_propose<R: Rng + ?Sized>(
    history: &HistoryBuffer,
    space: &DesignSpace,
    cfg: &TpeConfig,
    n: usize,
    rng: &mut R,
) -> TpeProposal {
    let Some(model) = tpe_model(history, space, cfg.quantile) else {
        let mut points = Vec::new();
        for _ in 0..n * 4 {
            if points.len() == n {
                break;
            }
            if let Some(p) = space.random_point(rng) {
                if !history.contains(&p) && !points.contains(&p) {
                    points.push(p);
                }
            }
        }
        return TpeProposal {
            points,
            uniform_fallback: true,
        };
    };
    let mut pool: Vec<(f64, DesignPoint)> = Vec::new();
    for _ in 0..cfg.candidate_pool.max(n) {
        let p = model.sample(rng);
        if !space.satisfies_rules(&p) || history.contains(&p) || pool.iter().any(|(_, q)| *q == p) {
            continue;
        }
        pool.push((model.log_ratio(&p), p));
    }
    // stable: equal ratios keep draw order
    pool.sort_by(|a, b| b.0.total_cmp(&a.0));
    TpeProposal {
        points: pool.into_iter().take(n).map(|(_, p)| p).collect(),
        uniform_fallback: false,
    }
}

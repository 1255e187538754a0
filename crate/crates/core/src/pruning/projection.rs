//! Cross-space constraint projection: per memory type and constraint, fit
//! `ln Y = a1 ln X + a0` between base-model and target-model metrics on a
//! handful of boundary design points.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{complete_with_defaults, BaseDataset};
use crate::design_space::{DesignPoint, DesignSpace, Value};
use crate::error::{Error, Result};
use crate::optimizer::{Constraint, ConstraintMetric};
use crate::surrogate::{evaluate_batch, Evaluator};

/// Parameters whose boundary combinations make up the fitting candidates.
pub const FIT_KEYS: [&str; 7] = ["rowACIM", "colACIM", "typeADC", "levelADC", "muxColADC", "rowDCIM", "colDCIM"];

pub const MEMORY_PARAM: &str = "memCellType";

/// Memory label used when the spaces have no memory-type parameter.
pub const ANY_MEMORY: &str = "*";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub a0: f64,
    pub a1: f64,
    pub samples: usize,
    /// Residual sum of squares in the log domain.
    pub rss: f64,
}

/// Ordinary least squares of `ln y` on `ln x`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() {
        return Err(Error::config("x and y lengths differ"));
    }
    if let Some(v) = xs.iter().chain(ys).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!("cannot take the log of {v}")));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let distinct = {
        let mut v = lx.clone();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len()
    };
    if lx.len() < 2 || distinct < 2 || sxx <= 0.0 {
        return Err(Error::DegenerateFit {
            memory: String::new(),
            constraint: String::new(),
            reason: format!("need at least two distinct x values, got {distinct}"),
        });
    }
    let a1 = sxy / sxx;
    let a0 = my - a1 * mx;
    let rss = lx.iter().zip(&ly).map(|(x, y)| (y - (a0 + a1 * x)).powi(2)).sum();
    Ok(LogLogFit {
        a0,
        a1,
        samples: lx.len(),
        rss,
    })
}

/// `exp(a0) * x^a1`.
pub fn project(x: f64, a0: f64, a1: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("cannot project nonpositive value {x}")));
    }
    Ok(a0.exp() * x.powf(a1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionCoeff {
    pub memory: String,
    pub constraint: ConstraintMetric,
    #[serde(flatten)]
    pub fit: LogLogFit,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProjectionModel {
    pub coeffs: Vec<ProjectionCoeff>,
}

impl ProjectionModel {
    pub fn get(&self, memory: &str, constraint: ConstraintMetric) -> Option<&LogLogFit> {
        self.coeffs
            .iter()
            .find(|c| c.memory == memory && c.constraint == constraint)
            .map(|c| &c.fit)
    }

    /// Projected target value of `constraint` for a base metric value `x`.
    pub fn project(&self, memory: &str, constraint: ConstraintMetric, x: f64) -> Result<f64> {
        let f = self.get(memory, constraint).ok_or_else(|| Error::DegenerateFit {
            memory: memory.to_string(),
            constraint: constraint.name().to_string(),
            reason: "no coefficients for this pair".into(),
        })?;
        project(x, f.a0, f.a1)
    }
}

/// Memory type of a point, or [`ANY_MEMORY`].
pub fn memory_of(point: &DesignPoint) -> String {
    point.get(MEMORY_PARAM).map_or_else(|| ANY_MEMORY.to_string(), |v| v.to_string())
}

/// Memory types of a space, or `[ANY_MEMORY]`.
pub fn memory_types(space: &DesignSpace) -> Vec<Value> {
    space
        .param(MEMORY_PARAM)
        .map_or_else(|| vec![Value::from(ANY_MEMORY)], |p| p.values.clone())
}

/// Boundary-combination fitting candidates for memory type `m`, each a pair
/// of (base point, target point) valid in both spaces.
pub fn fitting_candidates(
    intersection: &DesignSpace,
    base: &DesignSpace,
    target: &DesignSpace,
    memory: &Value,
) -> Result<Vec<(DesignPoint, DesignPoint)>> {
    let keys: Vec<&str> = FIT_KEYS.iter().copied().filter(|k| intersection.has_param(k)).collect();
    let bounds = intersection.boundary_values(&keys)?;
    let mut combos: Vec<DesignPoint> = vec![DesignPoint::new()];
    for k in &keys {
        let (lo, hi) = &bounds[*k];
        let mut next = Vec::new();
        for c in &combos {
            next.push(c.clone().with(*k, lo.clone()));
            if hi != lo {
                next.push(c.clone().with(*k, hi.clone()));
            }
        }
        combos = next;
    }
    let mut out = Vec::new();
    for mut c in combos {
        if intersection.has_param(MEMORY_PARAM) {
            c.set(MEMORY_PARAM, memory.clone());
        }
        let b = complete_with_defaults(base, &c);
        let t = complete_with_defaults(target, &c);
        if base.satisfies_rules(&b) && target.satisfies_rules(&t) && intersection.satisfies_rules(&c) {
            out.push((b, t));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub model: ProjectionModel,
    /// Target-model simulations spent on fitting.
    pub evaluations: usize,
}

/// Fits one power law per (memory type, constrained metric) between the base
/// dataset and fresh target evaluations on at most `n` boundary points per
/// memory type.
#[allow(clippy::too_many_arguments)]
pub fn fit_projection<E: Evaluator + ?Sized, R: Rng + ?Sized>(
    base: &BaseDataset,
    intersection: &DesignSpace,
    target_space: &DesignSpace,
    target: &E,
    constraints: &[Constraint],
    n: usize,
    parallelism: usize,
    rng: &mut R,
) -> Result<FitOutcome> {
    let mut metrics: Vec<ConstraintMetric> = constraints.iter().map(|c| c.metric).collect();
    metrics.sort_by_key(|m| m.name());
    metrics.dedup();
    if metrics.is_empty() {
        return Ok(FitOutcome {
            model: ProjectionModel::default(),
            evaluations: 0,
        });
    }
    let mut groups: Vec<(String, Vec<(DesignPoint, DesignPoint)>)> = Vec::new();
    for m in memory_types(intersection) {
        let cands = fitting_candidates(intersection, base.space(), target_space, &m)?;
        let chosen: Vec<(DesignPoint, DesignPoint)> =
            cands.choose_multiple(rng, n.min(cands.len())).cloned().collect();
        groups.push((m.to_string(), chosen));
    }
    let targets: Vec<DesignPoint> = groups.iter().flat_map(|(_, g)| g.iter().map(|(_, t)| t.clone())).collect();
    let target_records = evaluate_batch(target, &targets, parallelism)?;
    let mut coeffs = Vec::new();
    let mut cursor = 0;
    for (memory, group) in &groups {
        let tr = &target_records[cursor..cursor + group.len()];
        cursor += group.len();
        let br = group
            .iter()
            .map(|(b, _)| base.fetch(b))
            .collect::<Result<Vec<_>>>()?;
        for &metric in &metrics {
            let xs: Vec<f64> = br.iter().map(|r| metric.value(r)).collect();
            let ys: Vec<f64> = tr.iter().map(|r| metric.value(r)).collect();
            let fit = fit_loglog(&xs, &ys).map_err(|e| match e {
                Error::DegenerateFit { reason, .. } => Error::DegenerateFit {
                    memory: memory.clone(),
                    constraint: metric.name().to_string(),
                    reason,
                },
                other => other,
            })?;
            coeffs.push(ProjectionCoeff {
                memory: memory.clone(),
                constraint: metric,
                fit,
            });
        }
    }
    Ok(FitOutcome {
        model: ProjectionModel { coeffs },
        evaluations: targets.len(),
    })
}

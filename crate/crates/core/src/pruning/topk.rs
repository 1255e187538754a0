//! Top-K pruning: keep the parameter bins that dominate the best base-model
//! designs among those projected to satisfy the target constraints.

use serde::{Deserialize, Serialize};

use super::dataset::BaseDataset;
use super::projection::{memory_of, ProjectionModel};
use crate::design_space::{discretize_bins, BinPartition, DesignSpace, ParameterDef, Value};
use crate::error::{Error, Result};
use crate::optimizer::{Constraint, Objective};

pub const NUM_BINS: usize = 3;

/// How the frequency threshold selects bins.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauMode {
    /// Smallest set of most frequent bins whose summed frequency reaches tau.
    #[default]
    Cumulative,
    /// Every bin whose own frequency reaches tau; a parameter with no such
    /// bin is left unpruned.
    PerBin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamPruning {
    pub parameter: String,
    pub base_bins: BinPartition,
    /// Share of the Top-K designs falling into each base bin.
    pub frequencies: Vec<f64>,
    /// Indices of retained base bins, ascending.
    pub retained: Vec<usize>,
    pub target_bins: BinPartition,
    pub target_values: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopKReport {
    pub intersection_size: usize,
    pub valid_size: usize,
    pub k: usize,
    pub tau_mode: TauMode,
    pub params: Vec<ParamPruning>,
}

/// `ceil(rho * valid)`.
pub fn top_k_count(rho: f64, valid: usize) -> usize {
    ((rho * valid as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Bin partition with at most [`NUM_BINS`] bins.
pub fn bins_for(param: &ParameterDef) -> Result<BinPartition> {
    discretize_bins(param, NUM_BINS.min(param.values.len()))
}

/// Bins kept for the given frequencies. Ties prefer the earlier bin.
pub fn select_bins(frequencies: &[f64], tau: f64, mode: TauMode) -> Vec<usize> {
    let mut out = match mode {
        TauMode::Cumulative => {
            let mut order: Vec<usize> = (0..frequencies.len()).collect();
            order.sort_by(|&a, &b| frequencies[b].total_cmp(&frequencies[a]));
            let mut acc = 0.0;
            let mut kept = Vec::new();
            for i in order {
                if acc >= tau - 1e-12 {
                    break;
                }
                acc += frequencies[i];
                kept.push(i);
            }
            kept
        }
        TauMode::PerBin => (0..frequencies.len()).filter(|&i| frequencies[i] >= tau - 1e-12).collect(),
    };
    if out.is_empty() {
        out = (0..frequencies.len()).collect();
    }
    out.sort_unstable();
    out
}

/// Positional mapping of a base bin index onto a target partition with a
/// possibly different bin count.
pub fn map_bin(index: usize, base_bins: usize, target_bins: usize) -> usize {
    if base_bins <= 1 || target_bins <= 1 {
        return 0;
    }
    let pos = index as f64 / (base_bins - 1) as f64;
    (pos * (target_bins - 1) as f64).round() as usize
}

/// Restricts the intersection parameters of `target_space` to the bins that
/// dominate the `ceil(rho * |valid|)` best base designs.
///
/// Filtering uses only the base dataset and the projection model; the
/// target model is never evaluated here.
#[allow(clippy::too_many_arguments)]
pub fn topk_prune(
    base: &BaseDataset,
    intersection: &DesignSpace,
    target_space: &DesignSpace,
    model: &ProjectionModel,
    constraints: &[Constraint],
    objective: &Objective,
    rho: f64,
    tau: f64,
    mode: TauMode,
) -> Result<(DesignSpace, TopKReport)> {
    let omega = intersection.enumerate();
    let mut valid = Vec::new();
    for p in &omega {
        let rec = base.fetch(p)?;
        let mem = memory_of(p);
        let mut ok = true;
        for c in constraints {
            let y = model.project(&mem, c.metric, c.metric.value(&rec))?;
            if y > c.threshold {
                ok = false;
                break;
            }
        }
        if ok {
            valid.push((p, objective.score(&rec)));
        }
    }
    if valid.is_empty() {
        return Err(Error::ProjectionInfeasible);
    }
    let k = top_k_count(rho, valid.len()).clamp(1, valid.len());
    // stable: ties keep enumeration order
    valid.sort_by(|a, b| b.1.total_cmp(&a.1));
    let top: Vec<_> = valid[..k].iter().map(|(p, _)| *p).collect();

    let mut pruned = target_space.clone();
    let mut params = Vec::new();
    for ip in intersection.params() {
        let base_bins = bins_for(ip)?;
        let mut counts = vec![0usize; base_bins.bins.len()];
        for p in &top {
            let v = p.get(&ip.name).expect("intersection point");
            counts[base_bins.bin_of(v).expect("value is binned")] += 1;
        }
        let frequencies: Vec<f64> = counts.iter().map(|&c| c as f64 / k as f64).collect();
        let retained = select_bins(&frequencies, tau, mode);
        let tparam = target_space
            .param(&ip.name)
            .ok_or_else(|| Error::schema(format!("target lacks intersection parameter `{}`", ip.name)))?;
        let target_bins = bins_for(tparam)?;
        let mut keep_bins: Vec<usize> = retained
            .iter()
            .map(|&i| map_bin(i, base_bins.bins.len(), target_bins.bins.len()))
            .collect();
        keep_bins.sort_unstable();
        keep_bins.dedup();
        let target_values: Vec<Value> = tparam
            .values
            .iter()
            .filter(|v| target_bins.bin_of(v).is_some_and(|b| keep_bins.contains(&b)))
            .cloned()
            .collect();
        pruned = pruned.restrict(&ip.name, &target_values)?;
        params.push(ParamPruning {
            parameter: ip.name.clone(),
            base_bins,
            frequencies,
            retained,
            target_bins,
            target_values,
        });
    }
    Ok((
        pruned,
        TopKReport {
            intersection_size: omega.len(),
            valid_size: valid.len(),
            k,
            tau_mode: mode,
            params,
        },
    ))
}

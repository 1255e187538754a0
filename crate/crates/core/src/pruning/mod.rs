//! Transfer-driven design-space pruning, wrapped around an optimizer run.
//!
//! Before the first iteration the target's area/power are projected from an
//! exhaustively evaluated base model ([`projection`]), the target space is
//! cut down to the bins that dominate the best feasible base designs
//! ([`topk`]), and during the run pruned values are re-verified and
//! stochastically restored ([`deprune`]) until the full space comes back at
//! the recovery iteration.

pub mod dataset;
pub mod deprune;
pub mod projection;
pub mod topk;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design_space::{DesignPoint, DesignSpace, SpaceSchema, Value};
use crate::error::{Error, Result};
use crate::optimizer::{Constraint, Objective, OptResult, OptimizerConfig, RunState};
use crate::surrogate::Evaluator;

pub use dataset::BaseDataset;
pub use deprune::{deprune, missing_values, restore_probability, DepruneReport, ValueVerdict, Verifier};
pub use projection::{fit_loglog, fit_projection, project, LogLogFit, ProjectionModel};
pub use topk::{select_bins, top_k_count, topk_prune, TauMode, TopKReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruningConfig {
    pub rho: f64,
    pub tau: f64,
    pub tau_mode: TauMode,
    /// Fitting simulations per memory type.
    pub n_fit: usize,
    /// Verification budget per de-pruning call.
    pub n_total: usize,
    pub gamma0: f64,
    pub gamma_mult: f64,
    pub deprune_interval: usize,
    pub deprune_stop_iter: usize,
    pub recovery_iter: usize,
    /// Top feasible history entries used as de-pruning baselines.
    pub baselines: usize,
}

impl Default for PruningConfig {
    fn default() -> Self {
        Self {
            rho: 0.2,
            tau: 0.85,
            tau_mode: TauMode::Cumulative,
            n_fit: 32,
            n_total: 32,
            gamma0: 1.0,
            gamma_mult: 3.0,
            deprune_interval: 2,
            deprune_stop_iter: 8,
            recovery_iter: 20,
            baselines: 5,
        }
    }
}

impl PruningConfig {
    pub fn validate(&self) -> Result<()> {
        let frac = |x: f64| x > 0.0 && x <= 1.0;
        if !frac(self.rho) || !frac(self.tau) {
            return Err(Error::config("rho and tau must lie in (0, 1]"));
        }
        if self.n_fit == 0 || self.n_total == 0 || self.deprune_interval == 0 || self.baselines == 0 {
            return Err(Error::config("pruning counts must be at least 1"));
        }
        if !(self.gamma0 > 0.0 && self.gamma_mult > 0.0) {
            return Err(Error::config("gamma and its multiplier must be positive"));
        }
        if self.deprune_stop_iter > self.recovery_iter {
            return Err(Error::config("de-pruning must stop no later than the recovery iteration"));
        }
        Ok(())
    }

    /// Iterations at which de-pruning runs.
    pub fn deprune_iterations(&self) -> Vec<usize> {
        (1..=self.deprune_stop_iter)
            .filter(|i| i % self.deprune_interval == 0 && *i < self.recovery_iter)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrunedParam {
    pub parameter: String,
    pub kept: Vec<Value>,
    pub removed: Vec<Value>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PruningAudit {
    pub intersection: Vec<String>,
    pub tau_mode: TauMode,
    pub projection: Option<ProjectionModel>,
    pub fit_evaluations: usize,
    pub topk: Option<TopKReport>,
    pub pruned: Vec<PrunedParam>,
    pub pruned_space: Option<SpaceSchema>,
    pub deprune: Vec<DepruneReport>,
    pub recovery_iteration: Option<usize>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrunedRunResult {
    pub result: OptResult,
    pub audit: PruningAudit,
}

/// Generator for pruning decisions; independent of the optimizer's stream so
/// that an immediately recovered run reproduces the unpruned one.
pub fn pruning_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn pruned_params(pruned: &DesignSpace, full: &DesignSpace) -> Vec<PrunedParam> {
    full.params()
        .iter()
        .filter_map(|fp| {
            let kept = pruned.param(&fp.name)?.values.clone();
            let removed: Vec<Value> = fp.values.iter().filter(|v| !kept.contains(v)).cloned().collect();
            (!removed.is_empty()).then(|| PrunedParam {
                parameter: fp.name.clone(),
                kept,
                removed,
            })
        })
        .collect()
}

/// Projection, Top-K pruning and de-pruning around one optimizer run.
///
/// Fitting simulations are charged to the trace as a prefix entry;
/// verification simulations join the history and count toward the
/// iteration in which they happen.
pub fn pruned_run<E: Evaluator + ?Sized>(
    space: &DesignSpace,
    base: &BaseDataset,
    objective: Objective,
    constraints: &[Constraint],
    opt: &OptimizerConfig,
    cfg: &PruningConfig,
    evaluator: &E,
) -> Result<PrunedRunResult> {
    cfg.validate()?;
    let mut rng = pruning_rng(opt.seed);
    let mut audit = PruningAudit {
        tau_mode: cfg.tau_mode,
        ..Default::default()
    };
    let intersection = DesignSpace::intersection(base.space(), space)?;
    audit.intersection = intersection.names().map(str::to_string).collect();
    let mut state = RunState::new(space, objective, constraints, opt, evaluator)?;

    let fit = fit_projection(
        base,
        &intersection,
        space,
        evaluator,
        constraints,
        cfg.n_fit,
        opt.parallelism,
        &mut rng,
    )?;
    audit.fit_evaluations = fit.evaluations;
    if fit.evaluations > 0 {
        state.charge_prefix(fit.evaluations);
    }
    let mut active = match topk_prune(
        base,
        &intersection,
        space,
        &fit.model,
        constraints,
        &objective,
        cfg.rho,
        cfg.tau,
        cfg.tau_mode,
    ) {
        Ok((pruned, report)) => {
            audit.topk = Some(report);
            pruned
        }
        Err(Error::ProjectionInfeasible) => {
            audit.warnings.push(
                "no intersection point satisfies the projected constraints; running unpruned".into(),
            );
            space.clone()
        }
        Err(e) => return Err(e),
    };
    audit.projection = Some(fit.model);
    if active.enumerate().is_empty() {
        audit
            .warnings
            .push("pruned space has no valid point; running unpruned".into());
        active = space.clone();
    }
    audit.pruned = pruned_params(&active, space);
    audit.pruned_space = Some(active.to_schema());
    if cfg.tau_mode == TauMode::Cumulative {
        audit.warnings.push(format!(
            "tau={} read as cumulative bin coverage (smallest set of most frequent bins reaching tau)",
            cfg.tau
        ));
    }
    state.set_active_space(active.clone())?;

    let schedule = cfg.deprune_iterations();
    let mut gamma = cfg.gamma0;
    let mut recovered = false;
    while !state.is_done() {
        let it = state.iteration() + 1;
        if !recovered && it >= cfg.recovery_iter {
            state.set_active_space(space.clone())?;
            active = space.clone();
            recovered = true;
            audit.recovery_iteration = Some(it);
        } else if !recovered && schedule.contains(&it) && active != *space {
            let baselines: Vec<DesignPoint> = state
                .history()
                .top_feasible(cfg.baselines)
                .into_iter()
                .map(|e| e.point.clone())
                .collect();
            if baselines.is_empty() {
                audit
                    .warnings
                    .push(format!("iteration {it}: no feasible baseline, de-pruning skipped"));
            } else {
                let (next, mut report) =
                    deprune(&active, space, &baselines, &objective, cfg.n_total, gamma, &mut state, &mut rng)?;
                report.iteration = it;
                audit.deprune.push(report);
                gamma *= cfg.gamma_mult;
                if next != active {
                    state.set_active_space(next.clone())?;
                    active = next;
                }
            }
        }
        state.step()?;
    }
    let result = state.finish()?;
    Ok(PrunedRunResult { result, audit })
}

#[cfg(test)]
mod tests;

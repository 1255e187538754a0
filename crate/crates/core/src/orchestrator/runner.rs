//! Plan execution backends.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::catalog;
use crate::design_space::DesignSpace;
use crate::error::Result;
use crate::optimizer::{self, OptResult};
use crate::pruning::{pruned_run, BaseDataset, PruningAudit};
use crate::request::{OptimizationPlan, SimulationJob};
use crate::surrogate::{simulate, PpaRecord, SurrogateConfig, SurrogateEvaluator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationOutcome {
    pub result: OptResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<PruningAudit>,
}

/// Executes the two kinds of work a plan contains.
pub trait Runner: Send + Sync {
    fn simulate(&self, job: &SimulationJob) -> Result<PpaRecord>;

    fn optimize(&self, plan: &OptimizationPlan) -> Result<OptimizationOutcome>;
}

/// Runs plans against the analytic surrogate.
///
/// Base datasets for pruned runs are built by exhaustive evaluation of the
/// base model at the plan's node and precisions, or loaded from
/// `base_dataset` when one is configured, and cached per key.
pub struct SurrogateRunner {
    pub config: SurrogateConfig,
    /// Concurrent evaluations per optimizer batch.
    pub parallelism: usize,
    pub base_dataset: Option<PathBuf>,
    cache: Mutex<HashMap<String, Arc<BaseDataset>>>,
}

impl SurrogateRunner {
    pub fn new(config: SurrogateConfig, parallelism: usize) -> Self {
        Self {
            config,
            parallelism: parallelism.max(1),
            base_dataset: None,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_base_dataset(mut self, path: impl Into<PathBuf>) -> Self {
        self.base_dataset = Some(path.into());
        self
    }

    fn base(&self, plan: &OptimizationPlan, base_model: &str) -> Result<Arc<BaseDataset>> {
        let key = match &self.base_dataset {
            Some(p) => format!("file:{}", p.display()),
            None => format!(
                "{base_model}@{}nm/{}b/{}b",
                plan.technode, plan.input_precision, plan.weight_precision
            ),
        };
        if let Some(d) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(d.clone());
        }
        let dataset = match &self.base_dataset {
            Some(p) => BaseDataset::load(p)?,
            None => {
                let (space, workload) = catalog::model_space(base_model)?;
                let workload = workload.with_precision(plan.input_precision, plan.weight_precision);
                let evaluator = SurrogateEvaluator::new(workload, plan.surrogate(&self.config));
                BaseDataset::build(space, &evaluator, self.parallelism)?
            }
        };
        let dataset = Arc::new(dataset);
        self.cache.lock().expect("cache lock").insert(key, dataset.clone());
        Ok(dataset)
    }
}

impl Default for SurrogateRunner {
    fn default() -> Self {
        Self::new(SurrogateConfig::default(), 1)
    }
}

impl Runner for SurrogateRunner {
    fn simulate(&self, job: &SimulationJob) -> Result<PpaRecord> {
        simulate(&job.design_point(), &job.workload()?, &job.surrogate(&self.config)?)
    }

    fn optimize(&self, plan: &OptimizationPlan) -> Result<OptimizationOutcome> {
        let space = DesignSpace::from_schema(plan.space.clone())?;
        let evaluator = SurrogateEvaluator::new(plan.workload()?, plan.surrogate(&self.config));
        let mut cfg = plan.optimizer.clone();
        cfg.parallelism = self.parallelism;
        match &plan.pruning {
            None => Ok(OptimizationOutcome {
                result: optimizer::run(&space, plan.objective, &plan.constraints, &cfg, &evaluator)?,
                audit: None,
            }),
            Some(p) => {
                let base = self.base(plan, &p.base_model)?;
                let r = pruned_run(&space, &base, plan.objective, &plan.constraints, &cfg, &p.config, &evaluator)?;
                Ok(OptimizationOutcome {
                    result: r.result,
                    audit: Some(r.audit),
                })
            }
        }
    }
}

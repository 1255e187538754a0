//! Execution plans: fully resolved simulation jobs, or an optimizer run
//! description for optimization requests.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::parse::is_hardware;
use super::schema::ParamSchema;
use super::{ParsedRequest, RequestCategory};
use crate::catalog;
use crate::design_space::{DesignPoint, SpaceSchema, Value};
use crate::error::{Error, Result};
use crate::optimizer::{Algorithm, Constraint, Direction, Metric, Objective, OptimizerConfig};
use crate::pruning::PruningConfig;
use crate::surrogate::workload::{self, Workload};
use crate::surrogate::SurrogateConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationJob {
    /// 1-based testbench index.
    pub testbench: usize,
    pub params: BTreeMap<String, Value>,
}

impl SimulationJob {
    fn text(&self, name: &str) -> Result<&str> {
        self.params
            .get(name)
            .and_then(Value::as_text)
            .ok_or_else(|| Error::config(format!("job is missing `{name}`")))
    }

    fn int(&self, name: &str) -> Result<i64> {
        self.params
            .get(name)
            .and_then(Value::as_int)
            .ok_or_else(|| Error::config(format!("job is missing `{name}`")))
    }

    /// Hardware parameters as a design point.
    pub fn design_point(&self) -> DesignPoint {
        let mut p = DesignPoint::new();
        for (k, v) in &self.params {
            if is_hardware(k) {
                p.set(k.clone(), v.clone());
            }
        }
        p
    }

    pub fn workload(&self) -> Result<Workload> {
        let w = workload::by_name(self.text("model")?, self.text("dataset")?)?;
        let bits = |n: &str| -> Result<u32> {
            u32::try_from(self.int(n)?).map_err(|_| Error::config(format!("`{n}` out of range")))
        };
        Ok(w.with_precision(bits("inputPrecision")?, bits("weightPrecision")?))
    }

    /// Surrogate configuration at the job's technology node.
    pub fn surrogate(&self, base: &SurrogateConfig) -> Result<SurrogateConfig> {
        Ok(base.clone().at_node(self.int("technode")? as f64))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruningPlan {
    pub base_model: String,
    pub config: PruningConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationPlan {
    pub model: String,
    pub dataset: String,
    pub technode: i64,
    pub input_precision: u32,
    pub weight_precision: u32,
    /// The model's space restricted to the requested parameters.
    pub space: SpaceSchema,
    pub explored: Vec<String>,
    pub fixed: BTreeMap<String, Value>,
    pub objective: Objective,
    pub constraints: Vec<Constraint>,
    pub optimizer: OptimizerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pruning: Option<PruningPlan>,
}

impl OptimizationPlan {
    pub fn workload(&self) -> Result<Workload> {
        Ok(workload::by_name(&self.model, &self.dataset)?.with_precision(self.input_precision, self.weight_precision))
    }

    pub fn surrogate(&self, base: &SurrogateConfig) -> SurrogateConfig {
        base.clone().at_node(self.technode as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionPlan {
    pub category: RequestCategory,
    pub jobs: Vec<SimulationJob>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimization: Option<OptimizationPlan>,
    pub notes: Vec<String>,
    /// SHA-256 of the canonical serialization of category, jobs and optimization.
    pub hash: String,
}

impl ExecutionPlan {
    pub fn compute_hash(
        category: RequestCategory,
        jobs: &[SimulationJob],
        optimization: Option<&OptimizationPlan>,
    ) -> String {
        let body = serde_json::to_vec(&(category, jobs, optimization)).expect("plan serializes");
        hex::encode(Sha256::digest(&body))
    }

    pub fn verify_hash(&self) -> bool {
        self.hash == Self::compute_hash(self.category, &self.jobs, self.optimization.as_ref())
    }
}

fn natural_dataset(model: &str) -> &'static str {
    match model {
        "VGG8" | "ResNet-18" => "CIFAR-10",
        _ => "ImageNet",
    }
}

/// Builds the plan for a ready request.
pub fn make_plan(parsed: &ParsedRequest, schema: &ParamSchema) -> Result<ExecutionPlan> {
    if parsed.category == RequestCategory::Unknown {
        return Err(Error::NotReady("the request has not been categorized".into()));
    }
    if !parsed.is_ready() {
        let mut items: Vec<String> = parsed
            .missing
            .iter()
            .map(|m| format!("missing {} ({})", m.name, m.location))
            .collect();
        items.extend(
            parsed
                .invalid
                .iter()
                .map(|x| format!("invalid {} = {} ({}): {}", x.name, x.value, x.location, x.reason)),
        );
        return Err(Error::NotReady(items.join("; ")));
    }
    let mut notes = Vec::new();
    let (jobs, optimization) = if parsed.category.is_simulation() {
        (simulation_jobs(parsed, schema, &mut notes), None)
    } else {
        (Vec::new(), Some(optimization_plan(parsed, schema, &mut notes)?))
    };
    let hash = ExecutionPlan::compute_hash(parsed.category, &jobs, optimization.as_ref());
    Ok(ExecutionPlan {
        category: parsed.category,
        jobs,
        optimization,
        notes,
        hash,
    })
}

fn simulation_jobs(parsed: &ParsedRequest, schema: &ParamSchema, notes: &mut Vec<String>) -> Vec<SimulationJob> {
    let count = parsed.testbenches.len().max(1);
    let mut defaulted: Vec<String> = Vec::new();
    let jobs: Vec<SimulationJob> = (1..=count)
        .map(|tb| {
            let mut params: BTreeMap<String, Value> = parsed
                .resolved(tb)
                .into_iter()
                .map(|(k, p)| (k, p.value))
                .collect();
            for e in schema.applicable(parsed.category) {
                if params.contains_key(&e.name) {
                    continue;
                }
                if let Some(d) = &e.default {
                    params.insert(e.name.clone(), d.clone());
                    if !defaulted.contains(&e.name) {
                        defaulted.push(e.name.clone());
                    }
                }
            }
            if !params.contains_key("dataset") {
                if let Some(m) = params.get("model").and_then(Value::as_text) {
                    params.insert("dataset".into(), Value::from(natural_dataset(m)));
                    if !defaulted.iter().any(|d| d == "dataset") {
                        defaulted.push("dataset".into());
                    }
                }
            }
            SimulationJob { testbench: tb, params }
        })
        .collect();
    if !defaulted.is_empty() {
        notes.push(format!("not given, using defaults: {}", defaulted.join(", ")));
    }
    if jobs
        .iter()
        .any(|j| matches!(j.params.get("simMode").and_then(Value::as_text), Some("accuracy" | "both")))
    {
        notes.push("accuracy simulation is not modeled; the jobs report PPA only".into());
    }
    jobs
}

fn optimization_plan(parsed: &ParsedRequest, schema: &ParamSchema, notes: &mut Vec<String>) -> Result<OptimizationPlan> {
    let p: BTreeMap<String, Value> = parsed
        .common_params
        .iter()
        .map(|(k, v)| (k.clone(), v.value.clone()))
        .collect();
    let text = |n: &str| p.get(n).and_then(Value::as_text);
    let default_int = |n: &str| -> i64 {
        p.get(n)
            .and_then(Value::as_int)
            .or_else(|| schema.entry(n).and_then(|e| e.default.as_ref()).and_then(Value::as_int))
            .unwrap_or(0)
    };
    let decimal = |n: &str| -> Result<Option<f64>> {
        text(n)
            .map(|s| s.parse::<f64>().map_err(|_| Error::config(format!("`{n}` is not a number"))))
            .transpose()
    };

    let model = text("model").ok_or_else(|| Error::NotReady("missing model".into()))?.to_string();
    let (full, _) = catalog::model_space(&model)?;
    let dataset = text("dataset").unwrap_or("ImageNet").to_string();

    let mut space = full.clone();
    let mut fixed = BTreeMap::new();
    for (k, v) in &p {
        if is_hardware(k) {
            space = space.restrict(k, std::slice::from_ref(v))?;
            fixed.insert(k.clone(), v.clone());
        }
    }
    let explored: Vec<String> = match text("explore") {
        Some(list) => {
            let named: Vec<String> = list.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect();
            let others: Vec<String> = full
                .names()
                .filter(|n| !named.iter().any(|x| x == n) && !fixed.contains_key(*n))
                .map(str::to_string)
                .collect();
            for n in &others {
                let d = full.param(n).expect("own parameter").default_or_first().clone();
                space = space.restrict(n, std::slice::from_ref(&d))?;
                fixed.insert(n.clone(), d);
            }
            if !others.is_empty() {
                notes.push(format!("not named for exploration, fixed at defaults: {}", others.join(", ")));
            }
            named
        }
        None => space
            .names()
            .filter(|n| !fixed.contains_key(*n))
            .map(str::to_string)
            .collect(),
    };
    if space.enumerate().is_empty() {
        return Err(Error::NotReady("the requested parameter values leave no valid design".into()));
    }

    let metric = Metric::parse(text("objective").unwrap_or("fom"))?;
    let direction = match text("direction") {
        Some("maximize") => Direction::Maximize,
        Some("minimize") => Direction::Minimize,
        _ => metric.natural_direction(),
    };
    let mut constraints = Vec::new();
    if let Some(a) = p.get("areaConstraint").and_then(Value::as_int) {
        constraints.push(Constraint::area(a as f64)?);
    }
    if let Some(w) = p.get("powerConstraint").and_then(Value::as_int) {
        constraints.push(Constraint::power(w as f64)?);
    }
    if constraints.is_empty() {
        notes.push("no area or power constraint given; every design is feasible".into());
    }

    let algorithm = Algorithm::parse(text("algorithm").unwrap_or("sa"))?;
    let optimizer = OptimizerConfig::new(
        algorithm,
        default_int("iterations") as usize,
        default_int("optBatchSize") as usize,
        p.get("seed").and_then(Value::as_int).unwrap_or(0) as u64,
    );
    optimizer.validate()?;

    let pruning = match text("pruneBase") {
        Some(base) => {
            let mut config = PruningConfig::default();
            if let Some(r) = decimal("rho")? {
                config.rho = r;
            }
            if let Some(t) = decimal("tau")? {
                config.tau = t;
            }
            if config.recovery_iter > optimizer.iterations {
                notes.push(format!(
                    "the run ends before the recovery iteration {}; the pruned space is kept to the end",
                    config.recovery_iter
                ));
            }
            config.validate()?;
            catalog::model_space(base)?;
            Some(PruningPlan {
                base_model: base.to_string(),
                config,
            })
        }
        None => None,
    };

    Ok(OptimizationPlan {
        model,
        dataset,
        technode: default_int("technode"),
        input_precision: default_int("inputPrecision") as u32,
        weight_precision: default_int("weightPrecision") as u32,
        space: space.to_schema(),
        explored,
        fixed,
        objective: Objective { metric, direction },
        constraints,
        optimizer,
        pruning,
    })
}

//! Paired-seed comparison of unpruned and pruned optimizer runs.
//!
//! For every algorithm and seed the same optimizer configuration runs once
//! over the full target space and once with pruning; both are scored by the
//! unique evaluations (fitting and verification included) needed to first
//! reach a feasible point within `tolerance` of the exhaustive optimum.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog;
use crate::design_space::DesignSpace;
use crate::error::{Error, Result};
use crate::optimizer::{self, feasible, Algorithm, Constraint, Objective, OptResult, OptimizerConfig};
use crate::pruning::{pruned_run, BaseDataset, PruningConfig};
use crate::surrogate::{estimate_runtime, PpaRecord, RunTrace, RuntimeCostModel, SurrogateConfig, SurrogateEvaluator};

fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::Sa]
}

fn default_seeds() -> u64 {
    50
}

fn default_iterations() -> usize {
    80
}

fn default_batch() -> usize {
    32
}

fn default_tolerance() -> f64 {
    0.01
}

fn default_parallelism() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub target_model: String,
    pub base_model: String,
    /// Prebuilt base dataset; built by exhaustive evaluation when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_dataset: Option<PathBuf>,
    #[serde(default)]
    pub objective: Objective,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    /// Seeds `0..seeds`.
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Relative distance to the optimum that counts as reaching it.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub pruning: PruningConfig,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    #[serde(default)]
    pub runtime_model: RuntimeCostModel,
    /// Seeds run concurrently.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

impl ExperimentConfig {
    /// Swin-T target, ViT-B base, 2500 mm² and 200 mW, SA, 50 seeds.
    pub fn pruning_speedup() -> Self {
        Self {
            name: "pruning-speedup".into(),
            target_model: "Swin-T".into(),
            base_model: "ViT-B".into(),
            base_dataset: None,
            objective: Objective::default(),
            constraints: vec![
                Constraint::area(2500.0).expect("positive"),
                Constraint::power(200.0).expect("positive"),
            ],
            algorithms: default_algorithms(),
            seeds: default_seeds(),
            iterations: default_iterations(),
            batch_size: default_batch(),
            tolerance: default_tolerance(),
            pruning: PruningConfig::default(),
            surrogate: SurrogateConfig::default(),
            runtime_model: RuntimeCostModel::default(),
            parallelism: default_parallelism(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 || self.algorithms.is_empty() {
            return Err(Error::config("an experiment needs at least one seed and one algorithm"));
        }
        if !(self.tolerance >= 0.0 && self.tolerance < 1.0) {
            return Err(Error::config("tolerance must lie in [0, 1)"));
        }
        self.pruning.validate()?;
        self.runtime_model.validate()?;
        OptimizerConfig::new(self.algorithms[0], self.iterations, self.batch_size, 0).validate()
    }
}

/// Outcome of one run measured against the target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeasure {
    /// Unique evaluations until the target was first reached; the run's
    /// total when it never was.
    pub evaluations: usize,
    pub reached: bool,
    /// Estimated simulation runtime until the target was reached (whole run
    /// when it never was).
    pub runtime_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedPair {
    pub seed: u64,
    pub unpruned: RunMeasure,
    pub pruned: RunMeasure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub algorithm: Algorithm,
    pub pairs: Vec<SeedPair>,
    pub mean_unpruned: f64,
    pub mean_pruned: f64,
    /// Seeds where pruning needed strictly fewer / more evaluations.
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// One-sided sign test p-value for "pruning needs fewer evaluations".
    pub sign_test_p: f64,
}

impl Comparison {
    pub fn pruning_faster(&self, alpha: f64) -> bool {
        self.mean_pruned < self.mean_unpruned && self.sign_test_p < alpha
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    /// Objective value of the exhaustive optimum.
    pub optimum: f64,
    /// Score a run must reach to count as having found it.
    pub target_score: f64,
    pub comparisons: Vec<Comparison>,
}

/// `P(X >= wins)` for `X ~ Binomial(wins + losses, 1/2)`.
pub fn sign_test_one_sided(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    // log C(n, k) accumulated to stay finite for large n
    let ln_half_n = -(n as f64) * std::f64::consts::LN_2;
    let mut ln_c = 0.0;
    let mut p = 0.0;
    for k in 0..=n {
        if k > 0 {
            ln_c += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        if k >= wins {
            p += (ln_c + ln_half_n).exp();
        }
    }
    p.min(1.0)
}

/// Nearest-rank percentile of `xs` (`q` in `[0, 1]`).
pub fn percentile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Objective value of the best feasible design in the whole space.
pub fn exhaustive_optimum(
    space: &DesignSpace,
    evaluator: &SurrogateEvaluator,
    objective: Objective,
    constraints: &[Constraint],
) -> Result<Option<f64>> {
    let points = space.enumerate();
    let scores: Vec<Option<PpaRecord>> = points
        .par_iter()
        .map(|p| {
            let r = crate::surrogate::Evaluator::evaluate(evaluator, p)?;
            Ok(feasible(&r, constraints).then_some(r))
        })
        .collect::<Result<_>>()?;
    Ok(scores
        .into_iter()
        .flatten()
        .max_by(|a, b| objective.score(a).total_cmp(&objective.score(b)))
        .map(|r| objective.value(&r)))
}

/// Evaluations and runtime until `threshold` was first reached.
pub fn measure(result: &OptResult, threshold: f64, model: &RuntimeCostModel) -> Result<RunMeasure> {
    let history = &result.history;
    let hit = history
        .entries()
        .iter()
        .find(|e| e.feasible && history.score(e) >= threshold);
    let counts = result.trace.counts();
    let prefix = counts.len().saturating_sub(result.convergence.len());
    match (hit, history.evaluations_to_reach(threshold)) {
        (Some(e), Some(evaluations)) => {
            let upto = (prefix + e.iteration).clamp(1, counts.len());
            let runtime = estimate_runtime(&RunTrace::new(counts[..upto].to_vec()), model)?;
            Ok(RunMeasure {
                evaluations,
                reached: true,
                runtime_min: runtime.minutes,
            })
        }
        _ => Ok(RunMeasure {
            evaluations: history.total_evaluations(),
            reached: false,
            runtime_min: estimate_runtime(&result.trace, model)?.minutes,
        }),
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let (space, workload) = catalog::model_space(&cfg.target_model)?;
    let evaluator = SurrogateEvaluator::new(workload, cfg.surrogate.clone());
    let base = match &cfg.base_dataset {
        Some(p) => BaseDataset::load(p)?,
        None => {
            let (bspace, bworkload) = catalog::model_space(&cfg.base_model)?;
            BaseDataset::build(
                bspace,
                &SurrogateEvaluator::new(bworkload, cfg.surrogate.clone()),
                cfg.parallelism,
            )?
        }
    };
    let optimum = exhaustive_optimum(&space, &evaluator, cfg.objective, &cfg.constraints)?
        .ok_or_else(|| Error::config("no design satisfies the constraints"))?;
    let target = cfg.objective.tolerance_threshold(optimum, cfg.tolerance);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism.max(1))
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let mut comparisons = Vec::new();
    for &algorithm in &cfg.algorithms {
        let pairs: Vec<SeedPair> = pool.install(|| {
            (0..cfg.seeds)
                .into_par_iter()
                .map(|seed| {
                    let mut opt = OptimizerConfig::new(algorithm, cfg.iterations, cfg.batch_size, seed);
                    opt.runtime_model = cfg.runtime_model.clone();
                    let u = optimizer::run(&space, cfg.objective, &cfg.constraints, &opt, &evaluator)?;
                    let p = pruned_run(&space, &base, cfg.objective, &cfg.constraints, &opt, &cfg.pruning, &evaluator)?;
                    Ok(SeedPair {
                        seed,
                        unpruned: measure(&u, target, &cfg.runtime_model)?,
                        pruned: measure(&p.result, target, &cfg.runtime_model)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let wins = pairs.iter().filter(|p| p.pruned.evaluations < p.unpruned.evaluations).count();
        let losses = pairs.iter().filter(|p| p.pruned.evaluations > p.unpruned.evaluations).count();
        comparisons.push(Comparison {
            algorithm,
            mean_unpruned: mean(pairs.iter().map(|p| p.unpruned.evaluations as f64)),
            mean_pruned: mean(pairs.iter().map(|p| p.pruned.evaluations as f64)),
            wins,
            losses,
            ties: pairs.len() - wins - losses,
            sign_test_p: sign_test_one_sided(wins, losses),
            pairs,
        });
    }
    Ok(ExperimentReport {
        name: cfg.name.clone(),
        optimum,
        target_score: target,
        comparisons,
    })
}

impl ExperimentReport {
    /// One row per seed and algorithm.
    pub fn pairs_csv(&self) -> String {
        let mut out = String::from(
            "algorithm,seed,unpruned_evals,unpruned_reached,unpruned_runtime_min,pruned_evals,pruned_reached,pruned_runtime_min\n",
        );
        for c in &self.comparisons {
            for p in &c.pairs {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    c.algorithm.name(),
                    p.seed,
                    p.unpruned.evaluations,
                    p.unpruned.reached,
                    p.unpruned.runtime_min,
                    p.pruned.evaluations,
                    p.pruned.reached,
                    p.pruned.runtime_min
                ));
            }
        }
        out
    }

    /// Mean and P95 runtime-to-target per algorithm with the pruned/unpruned ratio.
    pub fn runtime_csv(&self) -> String {
        let mut out = String::from(
            "algorithm,unpruned_mean_min,pruned_mean_min,mean_ratio,unpruned_p95_min,pruned_p95_min,p95_ratio\n",
        );
        for c in &self.comparisons {
            let u: Vec<f64> = c.pairs.iter().map(|p| p.unpruned.runtime_min).collect();
            let p: Vec<f64> = c.pairs.iter().map(|p| p.pruned.runtime_min).collect();
            let (um, pm) = (mean(u.iter().copied()), mean(p.iter().copied()));
            let (u95, p95) = (percentile(&u, 0.95), percentile(&p, 0.95));
            out.push_str(&format!(
                "{},{um:.3},{pm:.3},{:.4},{u95:.3},{p95:.3},{:.4}\n",
                c.algorithm.name(),
                pm / um,
                p95 / u95
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight-line binomial tail.
    fn tail(wins: usize, n: usize) -> f64 {
        let mut c = vec![vec![0.0f64; n + 1]; n + 1];
        for i in 0..=n {
            c[i][0] = 1.0;
            for k in 1..=i {
                c[i][k] = c[i - 1][k - 1] + if k < i { c[i - 1][k] } else { 0.0 };
            }
        }
        (wins..=n).map(|k| c[n][k]).sum::<f64>() / 2f64.powi(n as i32)
    }

    #[test]
    fn sign_test_matches_pascal_triangle() {
        for n in 0..=40 {
            for w in 0..=n {
                let a = sign_test_one_sided(w, n - w);
                let b = if n == 0 { 1.0 } else { tail(w, n) };
                assert!((a - b).abs() < 1e-12, "n={n} w={w}: {a} vs {b}");
            }
        }
        assert!(sign_test_one_sided(31, 19) > 0.05);
        assert!(sign_test_one_sided(32, 18) < 0.05);
    }

    #[test]
    fn percentile_nearest_rank() {
        let xs: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&xs, 0.95), 19.0);
        assert_eq!(percentile(&xs, 1.0), 20.0);
        assert_eq!(percentile(&xs, 0.0), 1.0);
    }

    #[test]
    fn config_defaults_fill_in() {
        let cfg = ExperimentConfig::from_json(r#"{"name":"x","target_model":"ResNet-50","base_model":"Swin-T"}"#).unwrap();
        assert_eq!(cfg.seeds, 50);
        assert_eq!(cfg.algorithms, [Algorithm::Sa]);
        assert_eq!(cfg.pruning, PruningConfig::default());
    }
}

//! Subcommand definitions and handlers.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use cimdse::catalog;
use cimdse::design_space::{DesignSpace, Value};
use cimdse::experiment::{run_experiment, ExperimentConfig};
use cimdse::optimizer::{self, Algorithm, Constraint, Objective, OptimizerConfig};
use cimdse::orchestrator::{Orchestrator, OrchestratorConfig, SessionState, Store, SurrogateRunner};
use cimdse::pruning::{pruned_run, BaseDataset, PruningConfig};
use cimdse::request::{
    AdjustOp, AdjustmentRequest, Backend, DeterministicBackend, HttpLlmBackend, Location, ParamSchema,
    RequestCategory,
};
use cimdse::surrogate::{SurrogateConfig, SurrogateEvaluator};

#[derive(Debug, Parser)]
#[command(name = "cimdse", version, about = "Design-space exploration for compute-in-memory accelerators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Interpret a natural-language request and execute its plan.
    Run(RunArgs),
    /// Search a design space with one optimizer run.
    Optimize(OptimizeArgs),
    /// Count (and optionally list) the valid points of a space.
    Enumerate(EnumerateArgs),
    /// Build a base dataset by evaluating every point of a space.
    Basegen(BasegenArgs),
    /// Run a paired-seed pruning experiment and write its CSV tables.
    Experiment(ExperimentArgs),
    /// Serve the JSON API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Request-level parameter schema (JSON).
    #[arg(long)]
    pub schema: PathBuf,
    /// File holding the request text.
    #[arg(long)]
    pub request_file: PathBuf,
    /// Seed for optimization requests.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fill absent entries with schema defaults instead of stopping.
    #[arg(long)]
    pub use_defaults: bool,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long, env = crate::DATA_DIR_ENV)]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    /// External interpreter service; the deterministic one is used otherwise.
    #[arg(long, env = crate::LLM_ENDPOINT_ENV)]
    pub llm_endpoint: Option<String>,
    #[arg(long, env = crate::LLM_MODEL_ENV)]
    pub llm_model: Option<String>,
}

impl BackendArgs {
    pub fn backend(&self) -> Arc<dyn Backend> {
        match &self.llm_endpoint {
            Some(url) => {
                let mut b = HttpLlmBackend::new(url.clone());
                if let Some(m) = &self.llm_model {
                    b = b.model(m.clone());
                }
                Arc::new(b)
            }
            None => Arc::new(DeterministicBackend),
        }
    }
}

#[derive(Debug, Args)]
pub struct SpaceArgs {
    /// Design-space schema (JSON).
    #[arg(long)]
    pub space: PathBuf,
    /// Workload model; inferred from shipped schema file names when omitted.
    #[arg(long)]
    pub model: Option<String>,
    /// Surrogate configuration (JSON); built-in coefficients otherwise.
    #[arg(long)]
    pub surrogate: Option<PathBuf>,
}

impl SpaceArgs {
    pub fn load(&self) -> anyhow::Result<(DesignSpace, SurrogateEvaluator)> {
        let space = DesignSpace::load(&self.space).with_context(|| format!("loading {}", self.space.display()))?;
        let model = match &self.model {
            Some(m) => m.clone(),
            None => catalog::model_for_schema(&self.space.to_string_lossy())
                .with_context(|| {
                    format!("cannot tell the workload of {}; pass --model", self.space.display())
                })?
                .to_string(),
        };
        let (_, workload) = catalog::model_space(&model)?;
        let cfg = match &self.surrogate {
            Some(p) => SurrogateConfig::from_json(&std::fs::read_to_string(p)?)?,
            None => SurrogateConfig::default(),
        };
        Ok((space, SurrogateEvaluator::new(workload, cfg)))
    }
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub space: SpaceArgs,
    /// Metric to optimize, in its natural direction.
    #[arg(long, default_value = "fom")]
    pub objective: String,
    /// `metric=value`, e.g. `area=2500` or `power=200mW`. Repeatable.
    #[arg(long = "constraint")]
    pub constraints: Vec<String>,
    #[arg(long, default_value = "sa")]
    pub algorithm: String,
    #[arg(long, default_value_t = 80)]
    pub iterations: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
    /// Prune the space from a base dataset before searching.
    #[arg(long, requires = "base_dataset")]
    pub prune: bool,
    /// Base dataset manifest or records file.
    #[arg(long)]
    pub base_dataset: Option<PathBuf>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub deprune_interval: Option<usize>,
    #[arg(long)]
    pub deprune_stop: Option<usize>,
    #[arg(long)]
    pub recovery: Option<usize>,
    /// Directory for result.json and convergence.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    #[arg(long)]
    pub space: PathBuf,
    /// Print every point as a JSON line after the count.
    #[arg(long)]
    pub list: bool,
}

#[derive(Debug, Args)]
pub struct BasegenArgs {
    #[command(flatten)]
    pub space: SpaceArgs,
    /// Records file; the manifest is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for pairs.csv, runtime.csv and report.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Request-level schema; the built-in one otherwise.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Base dataset used by pruned optimization requests.
    #[arg(long)]
    pub base_dataset: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long, env = crate::DATA_DIR_ENV)]
    pub data_dir: Option<PathBuf>,
}

impl ServeArgs {
    pub fn orchestrator(&self) -> anyhow::Result<Orchestrator> {
        let schema = match &self.schema {
            Some(p) => ParamSchema::from_json(&std::fs::read_to_string(p)?)?,
            None => ParamSchema::builtin(),
        };
        let mut runner = SurrogateRunner::default();
        if let Some(b) = &self.base_dataset {
            runner = runner.with_base_dataset(b);
        }
        let store = match &self.data_dir {
            Some(d) => Store::open(d)?,
            None => Store::memory(),
        };
        let mut config = OrchestratorConfig::default();
        if let Some(w) = self.workers {
            config.workers = w;
        }
        Ok(Orchestrator::new(schema, self.backend.backend(), Arc::new(runner), store, config)?)
    }
}

fn write_json(out: &mut dyn Write, value: &impl serde::Serialize) -> anyhow::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn run(args: &RunArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let schema = ParamSchema::from_json(&std::fs::read_to_string(&args.schema)?)?;
    let text = std::fs::read_to_string(&args.request_file)?;
    let store = match &args.data_dir {
        Some(d) => Store::open(d)?,
        None => Store::memory(),
    };
    let orch = Orchestrator::new(
        schema,
        args.backend.backend(),
        Arc::new(SurrogateRunner::default()),
        store,
        OrchestratorConfig::default(),
    )?;
    let session = orch.create_session()?;
    let id = session.id;
    let turn = orch.submit(&id, text.trim())?;
    let mut ops = Vec::new();
    if args.use_defaults {
        ops.push(AdjustOp::UseDefaults {
            scope: cimdse::request::DefaultScope::All,
        });
    }
    if let Some(seed) = args.seed {
        if orch.session(&id)?.category == Some(RequestCategory::PpaOptimization) {
            ops.push(AdjustOp::Set {
                location: Location::Common,
                name: "seed".into(),
                value: Value::Int(seed as i64),
            });
        }
    }
    let turn = if ops.is_empty() {
        turn
    } else {
        orch.adjust(&id, &AdjustmentRequest::new(ops))?
    };
    if orch.session(&id)?.state != SessionState::AwaitingConfirmation {
        writeln!(out, "{}", turn.text)?;
        bail!("the request is not ready to run");
    }
    writeln!(out, "{}", turn.text)?;
    let job = orch.confirm(&id)?;
    orch.wait(&job.id)?;
    let report = orch.results(&job.id)?;
    write_json(out, &report)?;
    if report.status != cimdse::orchestrator::JobStatus::Done {
        bail!("job {} failed", job.id);
    }
    Ok(())
}

fn pruning_config(args: &OptimizeArgs) -> PruningConfig {
    let mut c = PruningConfig::default();
    if let Some(v) = args.rho {
        c.rho = v;
    }
    if let Some(v) = args.tau {
        c.tau = v;
    }
    if let Some(v) = args.deprune_interval {
        c.deprune_interval = v;
    }
    if let Some(v) = args.deprune_stop {
        c.deprune_stop_iter = v;
    }
    if let Some(v) = args.recovery {
        c.recovery_iter = v;
    }
    c
}

pub fn optimize(args: &OptimizeArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let (space, evaluator) = args.space.load()?;
    let objective = Objective::parse(&args.objective)?;
    let constraints = args
        .constraints
        .iter()
        .map(|c| Constraint::parse(c))
        .collect::<cimdse::error::Result<Vec<_>>>()?;
    let mut cfg = OptimizerConfig::new(Algorithm::parse(&args.algorithm)?, args.iterations, args.batch, args.seed);
    cfg.parallelism = args.parallelism;
    cfg.validate()?;

    let (result, audit) = if args.prune {
        let path = args.base_dataset.as_ref().expect("clap enforces --base-dataset");
        let base = BaseDataset::load(path).with_context(|| format!("loading {}", path.display()))?;
        let r = pruned_run(&space, &base, objective, &constraints, &cfg, &pruning_config(args), &evaluator)?;
        (r.result, Some(r.audit))
    } else {
        (optimizer::run(&space, objective, &constraints, &cfg, &evaluator)?, None)
    };

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("result.json"), result.to_json()?)?;
        std::fs::write(dir.join("convergence.csv"), result.convergence_csv())?;
        if let Some(a) = &audit {
            std::fs::write(dir.join("audit.json"), serde_json::to_string_pretty(a)?)?;
        }
    }
    let summary = serde_json::json!({
        "status": result.status,
        "algorithm": result.algorithm,
        "seed": result.seed,
        "best": result.best,
        "evaluations": result.history.total_evaluations(),
        "evaluations_to_first_best": result.evaluations_to_first_best,
        "estimated_runtime_min": result.estimated_runtime.minutes,
        "pruning": audit,
    });
    write_json(out, &summary)
}

pub fn enumerate(args: &EnumerateArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let space = DesignSpace::load(&args.space).with_context(|| format!("loading {}", args.space.display()))?;
    let start = Instant::now();
    let points = space.enumerate();
    let elapsed = start.elapsed();
    writeln!(out, "{} valid points ({} before validity rules) in {:.3}s", points.len(), space.cardinality(), elapsed.as_secs_f64())?;
    if args.list {
        for p in &points {
            serde_json::to_writer(&mut *out, p)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn basegen(args: &BasegenArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let (space, evaluator) = args.space.load()?;
    let base = BaseDataset::build(space, &evaluator, args.parallelism)?;
    let schema_name = file_name(&args.space.space);
    let manifest = base.save(&args.out, &schema_name)?;
    writeln!(out, "{} records written; manifest {}", base.len(), manifest.display())?;
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn experiment(args: &ExperimentArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let cfg = ExperimentConfig::from_json(&std::fs::read_to_string(&args.config)?)?;
    let report = run_experiment(&cfg)?;
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("pairs.csv"), report.pairs_csv())?;
    std::fs::write(args.out.join("runtime.csv"), report.runtime_csv())?;
    std::fs::write(args.out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    writeln!(out, "{}: optimum {:.6}, target score {:.6}", report.name, report.optimum, report.target_score)?;
    for c in &report.comparisons {
        writeln!(
            out,
            "{}: mean evaluations {:.1} unpruned, {:.1} pruned; {} wins, {} losses, {} ties; sign test p = {:.4}",
            c.algorithm.name(),
            c.mean_unpruned,
            c.mean_pruned,
            c.wins,
            c.losses,
            c.ties,
            c.sign_test_p
        )?;
    }
    write!(out, "{}", report.runtime_csv())?;
    Ok(())
}

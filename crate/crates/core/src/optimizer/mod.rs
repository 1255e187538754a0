//! Constraint-aware heuristic search over a discrete design space.
//!
//! Every algorithm runs the same loop: generate candidates inside the
//! currently active space, evaluate only the ones absent from the history,
//! then update the algorithm state. Infeasible points stay in the history (so
//! TPE and SA can learn from them) but never become the best point.

mod strategies;

use std::collections::HashMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design_space::{DesignPoint, DesignSpace};
use crate::error::{Error, Result};
use crate::surrogate::{
    estimate_runtime, evaluate_batch, Evaluator, PpaRecord, RunTrace, RuntimeCostModel,
    RuntimeEstimate,
};

pub use strategies::{ga_step, metropolis_accept, sa_propose, tpe_model, tpe_propose, TpeModel, TpeProposal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Fom,
    EnergyEff,
    ComputeEff,
    Throughput,
    Area,
    Power,
    Latency,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Fom,
        Metric::EnergyEff,
        Metric::ComputeEff,
        Metric::Throughput,
        Metric::Area,
        Metric::Power,
        Metric::Latency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Fom => "fom",
            Metric::EnergyEff => "energy_eff",
            Metric::ComputeEff => "compute_eff",
            Metric::Throughput => "throughput",
            Metric::Area => "area",
            Metric::Power => "power",
            Metric::Latency => "latency",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        let key = name.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Ok(match key.as_str() {
            "fom" | "figure_of_merit" => Metric::Fom,
            "energy_eff" | "energy_efficiency" | "ee" => Metric::EnergyEff,
            "compute_eff" | "compute_efficiency" | "ce" => Metric::ComputeEff,
            "throughput" => Metric::Throughput,
            "area" => Metric::Area,
            "power" => Metric::Power,
            "latency" => Metric::Latency,
            _ => return Err(Error::config(format!("unknown metric `{name}`"))),
        })
    }

    pub fn value(self, r: &PpaRecord) -> f64 {
        match self {
            Metric::Fom => r.fom,
            Metric::EnergyEff => r.energy_eff,
            Metric::ComputeEff => r.compute_eff,
            Metric::Throughput => r.throughput,
            Metric::Area => r.area,
            Metric::Power => r.power,
            Metric::Latency => r.latency,
        }
    }

    /// Natural direction: efficiencies are maximized, costs minimized.
    pub fn natural_direction(self) -> Direction {
        match self {
            Metric::Area | Metric::Power | Metric::Latency => Direction::Minimize,
            _ => Direction::Maximize,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Objective {
    pub metric: Metric,
    pub direction: Direction,
}

impl Default for Objective {
    fn default() -> Self {
        Self::maximize(Metric::Fom)
    }
}

impl Objective {
    pub fn maximize(metric: Metric) -> Self {
        Self {
            metric,
            direction: Direction::Maximize,
        }
    }

    pub fn minimize(metric: Metric) -> Self {
        Self {
            metric,
            direction: Direction::Minimize,
        }
    }

    /// Objective in its natural direction for `name`.
    pub fn parse(name: &str) -> Result<Self> {
        let m = Metric::parse(name)?;
        Ok(Self {
            metric: m,
            direction: m.natural_direction(),
        })
    }

    pub fn value(&self, r: &PpaRecord) -> f64 {
        self.metric.value(r)
    }

    /// Larger is better regardless of direction.
    pub fn score(&self, r: &PpaRecord) -> f64 {
        match self.direction {
            Direction::Maximize => self.value(r),
            Direction::Minimize => -self.value(r),
        }
    }

    /// Score threshold that is within `rel` of `best_score`.
    pub fn tolerance_threshold(&self, best_value: f64, rel: f64) -> f64 {
        match self.direction {
            Direction::Maximize => best_value * (1.0 - rel),
            Direction::Minimize => -(best_value * (1.0 + rel)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMetric {
    Area,
    Power,
}

impl ConstraintMetric {
    pub fn name(self) -> &'static str {
        match self {
            ConstraintMetric::Area => "area",
            ConstraintMetric::Power => "power",
        }
    }

    pub fn value(self, r: &PpaRecord) -> f64 {
        match self {
            ConstraintMetric::Area => r.area,
            ConstraintMetric::Power => r.power,
        }
    }
}

/// Upper bound on area (mm^2) or power (mW).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub metric: ConstraintMetric,
    pub threshold: f64,
}

impl Constraint {
    pub fn new(metric: &str, threshold: f64) -> Result<Self> {
        let metric = match metric.trim().to_ascii_lowercase().as_str() {
            "area" => ConstraintMetric::Area,
            "power" => ConstraintMetric::Power,
            other => return Err(Error::config(format!("unknown constraint metric `{other}`"))),
        };
        if !(threshold.is_finite() && threshold > 0.0) {
            return Err(Error::config(format!("constraint threshold must be positive, got {threshold}")));
        }
        Ok(Self { metric, threshold })
    }

    pub fn area(mm2: f64) -> Result<Self> {
        Self::new("area", mm2)
    }

    pub fn power(mw: f64) -> Result<Self> {
        Self::new("power", mw)
    }

    /// Parses `area=25cm2`, `power=200mW`, `area=3600` (base units).
    pub fn parse(text: &str) -> Result<Self> {
        let (k, v) = text
            .split_once('=')
            .ok_or_else(|| Error::config(format!("constraint `{text}` is not of the form metric=value")))?;
        let v = v.trim().to_ascii_lowercase().replace(' ', "").replace('²', "2").replace("^2", "2");
        let split = v
            .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == 'e' || c == '-'))
            .unwrap_or(v.len());
        let (num, unit) = v.split_at(split);
        let num: f64 = num
            .parse()
            .map_err(|_| Error::config(format!("constraint value `{num}` is not a number")))?;
        let metric = k.trim();
        let scale = match (metric.to_ascii_lowercase().as_str(), unit) {
            ("area", "" | "mm2") => 1.0,
            ("area", "cm2") => 100.0,
            ("area", "um2") => 1e-6,
            ("power", "" | "mw") => 1.0,
            ("power", "w") => 1000.0,
            ("power", "uw") => 1e-3,
            (m, u) if m == "area" || m == "power" => {
                return Err(Error::config(format!("unknown unit `{u}` for {m}")))
            }
            _ => 1.0,
        };
        Self::new(metric, num * scale)
    }

    pub fn holds(&self, r: &PpaRecord) -> bool {
        self.metric.value(r) <= self.threshold
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let unit = match self.metric {
            ConstraintMetric::Area => "mm2",
            ConstraintMetric::Power => "mW",
        };
        write!(f, "{}<={}{}", self.metric.name(), self.threshold, unit)
    }
}

/// True iff every constrained metric is at or below its threshold.
pub fn feasible(record: &PpaRecord, constraints: &[Constraint]) -> bool {
    constraints.iter().all(|c| c.holds(record))
}

/// Feasibility check against constraints given by metric name.
pub fn feasible_by_name(record: &PpaRecord, constraints: &[(&str, f64)]) -> Result<bool> {
    let mut ok = true;
    for &(name, threshold) in constraints {
        ok &= Constraint::new(name, threshold)?.holds(record);
    }
    Ok(ok)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Rs,
    Sa,
    Ga,
    Tpe,
}

impl Algorithm {
    pub fn parse(name: &str) -> Result<Self> {
        let key = name.trim().to_ascii_lowercase().replace(['-', '_'], " ");
        Ok(match key.as_str() {
            "rs" | "random" | "random search" => Algorithm::Rs,
            "sa" | "simulated annealing" | "simulate annealing" | "annealing" => Algorithm::Sa,
            "ga" | "genetic" | "genetic algorithm" => Algorithm::Ga,
            "tpe" | "tree structured parzen estimator" | "parzen" => Algorithm::Tpe,
            _ => return Err(Error::config(format!("unknown algorithm `{name}`"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Rs => "rs",
            Algorithm::Sa => "sa",
            Algorithm::Ga => "ga",
            Algorithm::Tpe => "tpe",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaConfig {
    /// `None` starts at 10% of the initial best objective magnitude.
    #[serde(default)]
    pub initial_temperature: Option<f64>,
    pub cooling: f64,
}

impl Default for SaConfig {
    fn default() -> Self {
        Self {
            initial_temperature: None,
            cooling: 0.95,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub parent_pool: usize,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            parent_pool: 8,
            mutation_rate: 0.15,
            crossover_rate: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    /// Fraction of the history treated as "good".
    pub quantile: f64,
    /// Candidates drawn from the good density per iteration before ranking.
    pub candidate_pool: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            quantile: 0.2,
            candidate_pool: 256,
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Concurrent evaluations within a batch.
    #[serde(default = "one")]
    pub parallelism: usize,
    #[serde(default)]
    pub sa: SaConfig,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub tpe: TpeConfig,
    #[serde(default)]
    pub runtime_model: RuntimeCostModel,
}

impl OptimizerConfig {
    pub fn new(algorithm: Algorithm, iterations: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            algorithm,
            iterations,
            batch_size,
            seed,
            parallelism: 1,
            sa: SaConfig::default(),
            ga: GaConfig::default(),
            tpe: TpeConfig::default(),
            runtime_model: RuntimeCostModel::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 || self.parallelism == 0 {
            return Err(Error::config("iterations, batch size and parallelism must be at least 1"));
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let open_unit = |x: f64| x > 0.0 && x <= 1.0;
        if !open_unit(self.sa.cooling) {
            return Err(Error::config("SA cooling rate must lie in (0, 1]"));
        }
        if let Some(t) = self.sa.initial_temperature {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::config("SA initial temperature must be positive"));
            }
        }
        if !unit(self.ga.mutation_rate) || !unit(self.ga.crossover_rate) {
            return Err(Error::config("GA rates must lie in [0, 1]"));
        }
        if self.ga.parent_pool < 2 {
            return Err(Error::config("GA parent pool needs at least two members"));
        }
        if !open_unit(self.tpe.quantile) {
            return Err(Error::config("TPE quantile must lie in (0, 1]"));
        }
        if self.tpe.candidate_pool == 0 {
            return Err(Error::config("TPE candidate pool must be nonempty"));
        }
        self.runtime_model.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub point: DesignPoint,
    pub record: PpaRecord,
    pub feasible: bool,
    /// Iteration that first evaluated the point (0 = before the first iteration).
    pub iteration: usize,
}

/// Deduplicating record of every evaluated point, in evaluation order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "HistoryRepr", into = "HistoryRepr")]
pub struct HistoryBuffer {
    objective: Objective,
    entries: Vec<HistoryEntry>,
    index: HashMap<DesignPoint, usize>,
    best: Option<usize>,
    trace: RunTrace,
    /// Evaluations charged to the trace but not recorded (e.g. projection fitting).
    overhead_evaluations: usize,
}

#[derive(Serialize, Deserialize)]
struct HistoryRepr {
    objective: Objective,
    entries: Vec<HistoryEntry>,
    trace: RunTrace,
    #[serde(default)]
    overhead_evaluations: usize,
}

impl From<HistoryRepr> for HistoryBuffer {
    fn from(r: HistoryRepr) -> Self {
        let mut h = HistoryBuffer::new(r.objective);
        for e in r.entries {
            h.insert(e.point, e.record, e.feasible, e.iteration);
        }
        h.trace = r.trace;
        h.overhead_evaluations = r.overhead_evaluations;
        h
    }
}

impl From<HistoryBuffer> for HistoryRepr {
    fn from(h: HistoryBuffer) -> Self {
        HistoryRepr {
            objective: h.objective,
            entries: h.entries,
            trace: h.trace,
            overhead_evaluations: h.overhead_evaluations,
        }
    }
}

impl HistoryBuffer {
    pub fn new(objective: Objective) -> Self {
        Self {
            objective,
            entries: Vec::new(),
            index: HashMap::new(),
            best: None,
            trace: RunTrace::default(),
            overhead_evaluations: 0,
        }
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn get(&self, point: &DesignPoint) -> Option<&HistoryEntry> {
        self.index.get(point).map(|&i| &self.entries[i])
    }

    pub fn contains(&self, point: &DesignPoint) -> bool {
        self.index.contains_key(point)
    }

    /// Objective score of an entry; infeasible entries score negative infinity.
    pub fn score(&self, e: &HistoryEntry) -> f64 {
        if e.feasible {
            self.objective.score(&e.record)
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Records a new evaluation. Returns false (and changes nothing) if the
    /// point is already present.
    pub fn insert(&mut self, point: DesignPoint, record: PpaRecord, feasible: bool, iteration: usize) -> bool {
        if self.index.contains_key(&point) {
            return false;
        }
        let idx = self.entries.len();
        self.index.insert(point.clone(), idx);
        self.entries.push(HistoryEntry {
            point,
            record,
            feasible,
            iteration,
        });
        if feasible {
            let s = self.objective.score(&record);
            // strict: first-discovered wins ties
            if self.best.is_none_or(|b| s > self.score(&self.entries[b])) {
                self.best = Some(idx);
            }
        }
        true
    }

    pub fn best(&self) -> Option<&HistoryEntry> {
        self.best.map(|i| &self.entries[i])
    }

    /// The `n` best feasible entries, best first; ties keep discovery order.
    pub fn top_feasible(&self, n: usize) -> Vec<&HistoryEntry> {
        let mut v: Vec<&HistoryEntry> = self.entries.iter().filter(|e| e.feasible).collect();
        v.sort_by(|a, b| self.score(b).total_cmp(&self.score(a)));
        v.truncate(n);
        v
    }

    /// Entries ordered by score (infeasible last), ties in discovery order.
    pub fn ranked(&self) -> Vec<&HistoryEntry> {
        let mut v: Vec<&HistoryEntry> = self.entries.iter().collect();
        v.sort_by(|a, b| self.score(b).total_cmp(&self.score(a)));
        v
    }

    pub fn trace(&self) -> &RunTrace {
        &self.trace
    }

    pub fn overhead_evaluations(&self) -> usize {
        self.overhead_evaluations
    }

    /// Total evaluations spent, including unrecorded overhead.
    pub fn total_evaluations(&self) -> usize {
        self.entries.len() + self.overhead_evaluations
    }

    /// Evaluations spent (overhead included) until the first feasible entry
    /// with score at least `threshold` was evaluated.
    pub fn evaluations_to_reach(&self, threshold: f64) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.feasible && self.objective.score(&e.record) >= threshold)
            .map(|i| self.overhead_evaluations + i + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// No feasible point was found within the iteration budget.
    ExhaustedInfeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub iteration: usize,
    pub best_so_far: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub status: RunStatus,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub objective: Objective,
    pub constraints: Vec<Constraint>,
    pub best: Option<HistoryEntry>,
    /// Iteration at which the final best point was first evaluated.
    pub first_best_iteration: Option<usize>,
    pub evaluations_to_first_best: Option<usize>,
    pub runtime_to_first_best_min: Option<f64>,
    pub estimated_runtime: RuntimeEstimate,
    pub trace: RunTrace,
    pub convergence: Vec<ConvergencePoint>,
    /// Whether TPE ever had to fall back to uniform sampling.
    pub uniform_fallback: bool,
    pub history: HistoryBuffer,
}

impl OptResult {
    /// `iteration,best_so_far` rows; an empty cell before any feasible point.
    pub fn convergence_csv(&self) -> String {
        let mut out = String::from("iteration,best_so_far\n");
        for c in &self.convergence {
            match c.best_so_far {
                Some(v) => out.push_str(&format!("{},{}\n", c.iteration, v)),
                None => out.push_str(&format!("{},\n", c.iteration)),
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Per-algorithm state carried across iterations.
#[derive(Clone, Debug, Default)]
struct SaState {
    /// One state per parallel chain.
    chains: Vec<DesignPoint>,
    temperature: Option<f64>,
}

/// An optimizer run in progress.
///
/// [`run`] drives this to completion; middleware (pruning) drives it by hand
/// so it can change the active space and spend verification evaluations
/// between iterations.
pub struct RunState<'a, E: Evaluator + ?Sized> {
    full_space: DesignSpace,
    active: DesignSpace,
    objective: Objective,
    constraints: Vec<Constraint>,
    cfg: OptimizerConfig,
    evaluator: &'a E,
    rng: ChaCha8Rng,
    history: HistoryBuffer,
    iteration: usize,
    pending: usize,
    prefix_entries: usize,
    sa: SaState,
    convergence: Vec<ConvergencePoint>,
    uniform_fallback: bool,
}

/// Generator for the optimizer's own stochastic choices.
pub fn optimizer_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

impl<'a, E: Evaluator + ?Sized> RunState<'a, E> {
    pub fn new(
        space: &DesignSpace,
        objective: Objective,
        constraints: &[Constraint],
        cfg: &OptimizerConfig,
        evaluator: &'a E,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut probe = optimizer_rng(cfg.seed);
        if space.random_point(&mut probe).is_none() {
            return Err(Error::config("design space has no valid points"));
        }
        Ok(Self {
            full_space: space.clone(),
            active: space.clone(),
            objective,
            constraints: constraints.to_vec(),
            cfg: cfg.clone(),
            evaluator,
            rng: optimizer_rng(cfg.seed),
            history: HistoryBuffer::new(objective),
            iteration: 0,
            pending: 0,
            prefix_entries: 0,
            sa: SaState::default(),
            convergence: Vec::new(),
            uniform_fallback: false,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn history(&self) -> &HistoryBuffer {
        &self.history
    }

    pub fn full_space(&self) -> &DesignSpace {
        &self.full_space
    }

    pub fn active_space(&self) -> &DesignSpace {
        &self.active
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.cfg.iterations
    }

    /// Restricts (or restores) the space proposals are drawn from.
    pub fn set_active_space(&mut self, space: DesignSpace) -> Result<()> {
        if !space.is_subspace_of(&self.full_space) {
            return Err(Error::config("active space must be a subspace of the full space"));
        }
        self.active = space;
        Ok(())
    }

    /// Charges evaluations that happened outside the history before the
    /// first iteration, as their own trace entry.
    pub fn charge_prefix(&mut self, evaluations: usize) {
        assert_eq!(self.iteration, 0, "prefix must be charged before the first iteration");
        self.history.trace.push(evaluations);
        self.history.overhead_evaluations += evaluations;
        self.prefix_entries += 1;
    }

    /// Evaluates points through the history cache. New points are charged to
    /// the current iteration's unique-evaluation count.
    pub fn evaluate(&mut self, points: &[DesignPoint]) -> Result<Vec<(PpaRecord, bool)>> {
        let mut fresh: Vec<DesignPoint> = Vec::new();
        for p in points {
            if !self.history.contains(p) && !fresh.contains(p) {
                fresh.push(p.clone());
            }
        }
        if !fresh.is_empty() {
            let records = evaluate_batch(self.evaluator, &fresh, self.cfg.parallelism)?;
            // iteration in progress is `self.iteration + 1`
            let it = self.iteration + 1;
            for (p, r) in fresh.iter().zip(records) {
                let ok = feasible(&r, &self.constraints);
                self.history.insert(p.clone(), r, ok, it);
            }
            self.pending += fresh.len();
        }
        Ok(points
            .iter()
            .map(|p| {
                let e = self.history.get(p).expect("just evaluated");
                (e.record, e.feasible)
            })
            .collect())
    }

    /// Runs one generate / evaluate / update iteration.
    pub fn step(&mut self) -> Result<()> {
        if self.is_done() {
            return Err(Error::State("run already finished".into()));
        }
        let batch = self.cfg.batch_size;
        let first = self.iteration == 0;
        let candidates = match self.cfg.algorithm {
            Algorithm::Rs => self.fill_unseen(Vec::new(), batch),
            _ if first => self.fill_unseen(Vec::new(), batch),
            Algorithm::Sa => self.sa_candidates(batch),
            Algorithm::Ga => self.ga_candidates(batch),
            Algorithm::Tpe => self.tpe_candidates(batch),
        };
        let results = self.evaluate(&candidates)?;
        if self.cfg.algorithm == Algorithm::Sa {
            self.sa_update(&candidates, &results);
        }
        self.iteration += 1;
        self.history.trace.push(self.pending);
        self.pending = 0;
        self.convergence.push(ConvergencePoint {
            iteration: self.iteration,
            best_so_far: self.history.best().map(|e| self.objective.value(&e.record)),
        });
        Ok(())
    }

    /// Appends random unseen, valid points of the active space until `want`
    /// distinct points are collected (or the active space is exhausted).
    fn fill_unseen(&mut self, mut out: Vec<DesignPoint>, want: usize) -> Vec<DesignPoint> {
        let mut misses = 0;
        while out.len() < want && misses < 64 {
            match self.active.random_point(&mut self.rng) {
                Some(p) if !self.history.contains(&p) && !out.contains(&p) => out.push(p),
                _ => misses += 1,
            }
        }
        if out.len() < want {
            // sparse remainder: enumerate what is left and sample from it
            let mut rest: Vec<DesignPoint> = self
                .active
                .enumerate()
                .into_iter()
                .filter(|p| !self.history.contains(p) && !out.contains(p))
                .collect();
            while out.len() < want && !rest.is_empty() {
                let i = rand::Rng::gen_range(&mut self.rng, 0..rest.len());
                out.push(rest.swap_remove(i));
            }
        }
        out
    }

    fn push_novel(&self, out: &mut Vec<DesignPoint>, p: DesignPoint) -> bool {
        if self.history.contains(&p) || out.contains(&p) {
            return false;
        }
        out.push(p);
        true
    }

    /// One neighbour per chain. A chain whose neighbourhood yields nothing
    /// new re-proposes a cached point, which costs no evaluation.
    fn sa_candidates(&mut self, batch: usize) -> Vec<DesignPoint> {
        if self.sa.chains.is_empty() {
            self.sa.chains = self.history.ranked().into_iter().take(batch).map(|e| e.point.clone()).collect();
        }
        let chains = self.sa.chains.clone();
        let mut out = Vec::with_capacity(chains.len());
        for c in &chains {
            let mut pick = None;
            for _ in 0..8 {
                let p = sa_propose(c, &self.active, &mut self.rng);
                let novel = !self.history.contains(&p) && !out.contains(&p);
                pick = Some(p);
                if novel {
                    break;
                }
            }
            out.push(pick.expect("at least one proposal"));
        }
        out
    }

    /// Metropolis step per chain under a shared, geometrically cooled temperature.
    fn sa_update(&mut self, candidates: &[DesignPoint], results: &[(PpaRecord, bool)]) {
        if self.sa.chains.is_empty() {
            // first iteration: the random batch seeds the chains
            self.sa.chains = candidates.to_vec();
            return;
        }
        let t = match self.sa.temperature {
            Some(t) => t,
            None => self.cfg.sa.initial_temperature.unwrap_or_else(|| {
                let best = self.history.best().map_or(0.0, |e| self.objective.score(&e.record).abs());
                if best > 0.0 {
                    0.1 * best
                } else {
                    1.0
                }
            }),
        };
        for (i, (cand, r)) in candidates.iter().zip(results).enumerate() {
            let cand_score = if r.1 { self.objective.score(&r.0) } else { f64::NEG_INFINITY };
            let cur_score = self.history.get(&self.sa.chains[i]).map_or(f64::NEG_INFINITY, |e| self.history.score(e));
            let accept = if cur_score == f64::NEG_INFINITY {
                true
            } else if cand_score == f64::NEG_INFINITY {
                false
            } else {
                metropolis_accept(cur_score - cand_score, t, &mut self.rng)
            };
            if accept {
                self.sa.chains[i] = cand.clone();
            }
        }
        self.sa.temperature = Some(t * self.cfg.sa.cooling);
    }

    fn ga_candidates(&mut self, batch: usize) -> Vec<DesignPoint> {
        let mut parents: Vec<DesignPoint> = self
            .history
            .top_feasible(self.cfg.ga.parent_pool)
            .into_iter()
            .map(|e| e.point.clone())
            .collect();
        if parents.len() < 2 {
            for e in self.history.ranked() {
                if parents.len() >= self.cfg.ga.parent_pool.max(2) {
                    break;
                }
                if !parents.contains(&e.point) {
                    parents.push(e.point.clone());
                }
            }
        }
        if parents.len() < 2 {
            return self.fill_unseen(Vec::new(), batch);
        }
        let mut out = Vec::with_capacity(batch);
        let mut rounds = 0;
        while out.len() < batch && rounds < 8 {
            rounds += 1;
            let children = ga_step(&parents, &self.active, &self.cfg.ga, batch, &mut self.rng);
            for c in children {
                if out.len() == batch {
                    break;
                }
                self.push_novel(&mut out, c);
            }
        }
        self.fill_unseen(out, batch)
    }

    fn tpe_candidates(&mut self, batch: usize) -> Vec<DesignPoint> {
        let proposal = tpe_propose(&self.history, &self.active, &self.cfg.tpe, batch, &mut self.rng);
        self.uniform_fallback |= proposal.uniform_fallback;
        let mut out = Vec::with_capacity(batch);
        for p in proposal.points {
            self.push_novel(&mut out, p);
        }
        self.fill_unseen(out, batch)
    }

    pub fn finish(self) -> Result<OptResult> {
        let trace = self.history.trace.clone();
        let estimated_runtime = estimate_runtime(&trace, &self.cfg.runtime_model)?;
        let best = self.history.best().cloned();
        let (first_best_iteration, evaluations_to_first_best, runtime_to_first_best_min) = match &best {
            Some(b) => {
                let evals = self.history.index[&b.point] + 1 + self.history.overhead_evaluations;
                let upto = (self.prefix_entries + b.iteration).min(trace.len());
                let partial = RunTrace::new(trace.counts()[..upto].to_vec());
                let minutes = estimate_runtime(&partial, &self.cfg.runtime_model)?.minutes;
                (Some(b.iteration), Some(evals), Some(minutes))
            }
            None => (None, None, None),
        };
        Ok(OptResult {
            status: if best.is_some() {
                RunStatus::Completed
            } else {
                RunStatus::ExhaustedInfeasible
            },
            algorithm: self.cfg.algorithm,
            seed: self.cfg.seed,
            objective: self.objective,
            constraints: self.constraints,
            best,
            first_best_iteration,
            evaluations_to_first_best,
            runtime_to_first_best_min,
            estimated_runtime,
            trace,
            convergence: self.convergence,
            uniform_fallback: self.uniform_fallback,
            history: self.history,
        })
    }
}

/// Runs the configured algorithm for `cfg.iterations` iterations.
pub fn run<E: Evaluator + ?Sized>(
    space: &DesignSpace,
    objective: Objective,
    constraints: &[Constraint],
    cfg: &OptimizerConfig,
    evaluator: &E,
) -> Result<OptResult> {
    let mut state = RunState::new(space, objective, constraints, cfg, evaluator)?;
    while !state.is_done() {
        state.step()?;
    }
    state.finish()
}

#[cfg(test)]
mod tests;

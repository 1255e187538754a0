//! Sessions, confirmation-gated jobs and persistence.
//!
//! A session moves `awaiting_request -> awaiting_adjustment |
//! awaiting_confirmation -> running -> done | failed`. Jobs are only created
//! by [`Orchestrator::confirm`] and run on a bounded worker pool; callers poll
//! [`Orchestrator::job`] or block in [`Orchestrator::wait`].

mod report;
mod runner;
mod store;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};

use crate::design_space::{DesignPoint, Value};
use crate::error::{Error, Result};
use crate::optimizer::{OptResult, RunStatus};
use crate::pruning::PruningAudit;
use crate::request::{
    self, AdjustmentRequest, Backend, ExecutionPlan, ParamSchema, ParsedRequest, RequestCategory,
};
use crate::surrogate::PpaRecord;

pub use runner::{OptimizationOutcome, Runner, SurrogateRunner};
pub use store::Store;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    AwaitingRequest,
    AwaitingAdjustment,
    AwaitingConfirmation,
    Running,
    Done,
    Failed,
}

impl SessionState {
    /// Whether `self -> to` is an edge of the session flow.
    pub fn can_become(self, to: SessionState) -> bool {
        use SessionState::*;
        matches!(
            (self, to),
            (AwaitingRequest | AwaitingAdjustment | AwaitingConfirmation, AwaitingAdjustment | AwaitingConfirmation)
                | (AwaitingAdjustment | AwaitingConfirmation, AwaitingRequest)
                | (AwaitingConfirmation, Running)
                | (Running, Done | Failed)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    System,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: SessionState,
    pub to: SessionState,
    pub cause: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub state: SessionState,
    pub messages: Vec<Turn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<RequestCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed: Option<ParsedRequest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub job_id: Option<String>,
    /// Every state change, in order.
    pub transitions: Vec<Transition>,
}

impl Session {
    fn new(id: String) -> Self {
        Self {
            id,
            state: SessionState::AwaitingRequest,
            messages: Vec::new(),
            category: None,
            parsed: None,
            job_id: None,
            transitions: Vec::new(),
        }
    }

    fn set_state(&mut self, to: SessionState, cause: &str) {
        if to == self.state {
            return;
        }
        debug_assert!(self.state.can_become(to), "{:?} -> {to:?}", self.state);
        self.transitions.push(Transition {
            from: self.state,
            to,
            cause: cause.to_string(),
        });
        self.state = to;
    }

    fn say(&mut self, role: Role, text: impl Into<String>) -> Turn {
        let t = Turn { role, text: text.into() };
        self.messages.push(t.clone());
        t
    }

    /// Transitions all lie on the session flow and `running` is only ever
    /// entered from a confirmation.
    pub fn transitions_valid(&self) -> bool {
        let mut state = SessionState::AwaitingRequest;
        for t in &self.transitions {
            if t.from != state || !t.from.can_become(t.to) {
                return false;
            }
            if t.to == SessionState::Running && t.cause != "confirm" {
                return false;
            }
            state = t.to;
        }
        state == self.state
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Running,
    Done,
    Failed,
    Skipped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JobResult {
    Simulation {
        testbench: usize,
        params: BTreeMap<String, Value>,
        record: PpaRecord,
    },
    Optimization {
        result: Box<OptResult>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        audit: Option<PruningAudit>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub session_id: String,
    pub plan_hash: String,
    pub plan: ExecutionPlan,
    pub status: JobStatus,
    /// One entry per testbench (one for an optimization).
    pub tasks: Vec<TaskStatus>,
    pub results: Vec<JobResult>,
    pub logs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_csv: Option<PathBuf>,
}

impl Job {
    pub fn is_finished(&self) -> bool {
        matches!(self.status, JobStatus::Done | JobStatus::Failed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationSummary {
    pub status: RunStatus,
    pub best_point: Option<DesignPoint>,
    pub best_record: Option<PpaRecord>,
    pub best_value: Option<f64>,
    pub first_best_iteration: Option<usize>,
    pub evaluations_to_first_best: Option<usize>,
    pub estimated_runtime_min: f64,
    pub runtime_to_first_best_min: Option<f64>,
    pub pruned: bool,
}

impl OptimizationSummary {
    pub fn of(result: &OptResult, pruned: bool) -> Self {
        Self {
            status: result.status,
            best_point: result.best.as_ref().map(|b| b.point.clone()),
            best_record: result.best.as_ref().map(|b| b.record),
            best_value: result.best.as_ref().map(|b| result.objective.value(&b.record)),
            first_best_iteration: result.first_best_iteration,
            evaluations_to_first_best: result.evaluations_to_first_best,
            estimated_runtime_min: result.estimated_runtime.minutes,
            runtime_to_first_best_min: result.runtime_to_first_best_min,
            pruned,
        }
    }
}

/// `results(job)`: statuses always; results only once the job is finished.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobReport {
    pub job_id: String,
    pub status: JobStatus,
    pub tasks: Vec<TaskStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results: Option<Vec<JobResult>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimization: Option<OptimizationSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_csv: Option<PathBuf>,
    pub logs: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct OrchestratorConfig {
    /// Jobs executing at once.
    pub workers: usize,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self {
            workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        }
    }
}

type JobSlot = Arc<(Mutex<Job>, Condvar)>;

pub struct Orchestrator {
    schema: Arc<ParamSchema>,
    backend: Arc<dyn Backend>,
    runner: Arc<dyn Runner>,
    store: Store,
    pool: rayon::ThreadPool,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    jobs: Mutex<HashMap<String, JobSlot>>,
}

impl Orchestrator {
    pub fn new(
        schema: ParamSchema,
        backend: Arc<dyn Backend>,
        runner: Arc<dyn Runner>,
        store: Store,
        config: OrchestratorConfig,
    ) -> Result<Self> {
        schema.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers.max(1))
            .thread_name(|i| format!("cimdse-job-{i}"))
            .build()
            .map_err(|e| Error::config(format!("worker pool: {e}")))?;
        Ok(Self {
            schema: Arc::new(schema),
            backend,
            runner,
            store,
            pool,
            sessions: Mutex::new(HashMap::new()),
            jobs: Mutex::new(HashMap::new()),
        })
    }

    /// Deterministic backend, surrogate runner, in-memory store.
    pub fn in_memory() -> Result<Self> {
        Self::new(
            ParamSchema::builtin(),
            Arc::new(request::DeterministicBackend),
            Arc::new(SurrogateRunner::default()),
            Store::memory(),
            OrchestratorConfig::default(),
        )
    }

    pub fn schema(&self) -> &ParamSchema {
        &self.schema
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    fn session_slot(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        if let Some(s) = self.sessions.lock().expect("sessions lock").get(id) {
            return Ok(s.clone());
        }
        let loaded: Session = self.store.load("sessions", id)?;
        let slot = Arc::new(Mutex::new(loaded));
        Ok(self
            .sessions
            .lock()
            .expect("sessions lock")
            .entry(id.to_string())
            .or_insert(slot)
            .clone())
    }

    fn job_slot(&self, id: &str) -> Result<JobSlot> {
        if let Some(j) = self.jobs.lock().expect("jobs lock").get(id) {
            return Ok(j.clone());
        }
        let loaded: Job = self.store.load("jobs", id)?;
        let slot = Arc::new((Mutex::new(loaded), Condvar::new()));
        Ok(self
            .jobs
            .lock()
            .expect("jobs lock")
            .entry(id.to_string())
            .or_insert(slot)
            .clone())
    }

    fn save_session(&self, s: &Session) -> Result<()> {
        self.store.append("sessions", &s.id, s).map(|_| ())
    }

    pub fn create_session(&self) -> Result<Session> {
        let s = Session::new(uuid::Uuid::new_v4().to_string());
        self.save_session(&s)?;
        self.sessions
            .lock()
            .expect("sessions lock")
            .insert(s.id.clone(), Arc::new(Mutex::new(s.clone())));
        Ok(s)
    }

    pub fn session(&self, id: &str) -> Result<Session> {
        Ok(self.session_slot(id)?.lock().expect("session lock").clone())
    }

    pub fn session_ids(&self) -> Result<Vec<String>> {
        let mut ids = self.store.ids("sessions")?;
        for k in self.sessions.lock().expect("sessions lock").keys() {
            if !ids.contains(k) {
                ids.push(k.clone());
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Handles a user message: a new request, or a free-text adjustment of
    /// the current one. Validation and backend problems come back as a
    /// system turn with the state unchanged.
    pub fn submit(&self, session_id: &str, text: &str) -> Result<Turn> {
        let slot = self.session_slot(session_id)?;
        let mut s = slot.lock().expect("session lock");
        if !matches!(
            s.state,
            SessionState::AwaitingRequest | SessionState::AwaitingAdjustment | SessionState::AwaitingConfirmation
        ) {
            return Err(Error::State(format!("session is {:?}; messages are closed", s.state)));
        }
        s.say(Role::User, text);
        let turn = self.handle_message(&mut s, text);
        self.save_session(&s)?;
        Ok(turn)
    }

    fn handle_message(&self, s: &mut Session, text: &str) -> Turn {
        if text.trim().is_empty() {
            return s.say(Role::System, "The message is empty; please describe the simulation to run.");
        }
        if let Some(parsed) = s.parsed.clone() {
            match self.backend.interpret_adjustment(text, &parsed, &self.schema) {
                Ok(Some(adj)) => return self.apply_adjustment(s, &adj),
                Ok(None) => {}
                Err(e) => return s.say(Role::System, format!("The interpreter failed: {e}")),
            }
        }
        let c = match request::classify(text, self.backend.as_ref(), &self.schema) {
            Ok(c) => c,
            Err(e) => return s.say(Role::System, format!("The interpreter failed: {e}")),
        };
        if c.category == RequestCategory::Unknown {
            let q = c.clarification.clone().unwrap_or_else(|| "Could you rephrase the request?".into());
            return s.say(Role::System, q);
        }
        let parsed = match request::parse_params(text, c.category, &self.schema, self.backend.as_ref()) {
            Ok(p) => p,
            Err(e) => return s.say(Role::System, format!("The interpreter failed: {e}")),
        };
        let report = report::parse_report(&c, &parsed);
        let next = if parsed.is_ready() {
            SessionState::AwaitingConfirmation
        } else {
            SessionState::AwaitingAdjustment
        };
        s.category = Some(c.category);
        s.parsed = Some(parsed);
        s.set_state(next, "request");
        s.say(Role::System, report)
    }

    fn apply_adjustment(&self, s: &mut Session, adj: &AdjustmentRequest) -> Turn {
        let Some(parsed) = s.parsed.as_ref() else {
            return s.say(Role::System, "There is no request to adjust yet.");
        };
        match request::adjust(parsed, adj, &self.schema) {
            Ok(next) => {
                let c = request::Classification {
                    category: next.category,
                    rationale: format!("{} adjustment(s) applied", adj.ops.len()),
                    clarification: None,
                };
                let report = report::parse_report(&c, &next);
                let state = if next.is_ready() {
                    SessionState::AwaitingConfirmation
                } else {
                    SessionState::AwaitingAdjustment
                };
                s.parsed = Some(next);
                s.set_state(state, "adjustment");
                s.say(Role::System, report)
            }
            Err(e) => s.say(Role::System, format!("The adjustment was rejected: {e}")),
        }
    }

    /// Applies structured adjustment ops. A rejected op list leaves the
    /// request unchanged and is returned as an error.
    pub fn adjust(&self, session_id: &str, adj: &AdjustmentRequest) -> Result<Turn> {
        let slot = self.session_slot(session_id)?;
        let mut s = slot.lock().expect("session lock");
        if !matches!(s.state, SessionState::AwaitingAdjustment | SessionState::AwaitingConfirmation) {
            return Err(Error::State(format!("session is {:?}; nothing to adjust", s.state)));
        }
        let parsed = s.parsed.as_ref().ok_or_else(|| Error::State("no parsed request".into()))?;
        request::adjust(parsed, adj, &self.schema)?;
        s.say(Role::User, serde_json::to_string(adj)?);
        let turn = self.apply_adjustment(&mut s, adj);
        self.save_session(&s)?;
        Ok(turn)
    }

    /// Builds the plan and queues its job.
    pub fn confirm(&self, session_id: &str) -> Result<Job> {
        let slot = self.session_slot(session_id)?;
        let mut s = slot.lock().expect("session lock");
        if s.state != SessionState::AwaitingConfirmation {
            return Err(Error::State(format!("session is {:?}, not awaiting confirmation", s.state)));
        }
        let parsed = s.parsed.as_ref().ok_or_else(|| Error::State("no parsed request".into()))?;
        let plan = request::make_plan(parsed, &self.schema)?;
        let tasks = if plan.optimization.is_some() { 1 } else { plan.jobs.len() };
        let job = Job {
            id: uuid::Uuid::new_v4().to_string(),
            session_id: s.id.clone(),
            plan_hash: plan.hash.clone(),
            logs: plan.notes.clone(),
            plan,
            status: JobStatus::Queued,
            tasks: vec![TaskStatus::Pending; tasks],
            results: Vec::new(),
            convergence_csv: None,
        };
        self.store.append("jobs", &job.id, &job)?;
        let job_slot: JobSlot = Arc::new((Mutex::new(job.clone()), Condvar::new()));
        self.jobs
            .lock()
            .expect("jobs lock")
            .insert(job.id.clone(), job_slot.clone());
        s.job_id = Some(job.id.clone());
        s.set_state(SessionState::Running, "confirm");
        s.say(Role::System, format!("Running job {}.", job.id));
        self.save_session(&s)?;

        let runner = self.runner.clone();
        let store = self.store.clone();
        let session = slot.clone();
        self.pool.spawn(move || execute(&job_slot, runner.as_ref(), &store, &session));
        Ok(job)
    }

    pub fn job(&self, id: &str) -> Result<Job> {
        Ok(self.job_slot(id)?.0.lock().expect("job lock").clone())
    }

    /// Blocks until the job finishes.
    pub fn wait(&self, id: &str) -> Result<Job> {
        let slot = self.job_slot(id)?;
        let (lock, cv) = &*slot;
        let mut job = lock.lock().expect("job lock");
        while !job.is_finished() {
            job = cv.wait(job).expect("job lock");
        }
        Ok(job.clone())
    }

    pub fn results(&self, id: &str) -> Result<JobReport> {
        let job = self.job(id)?;
        let finished = job.is_finished();
        let optimization = job.results.iter().find_map(|r| match r {
            JobResult::Optimization { result, audit } => Some(OptimizationSummary::of(result, audit.is_some())),
            _ => None,
        });
        Ok(JobReport {
            job_id: job.id,
            status: job.status,
            tasks: job.tasks,
            results: finished.then_some(job.results),
            optimization: optimization.filter(|_| finished),
            convergence_csv: job.convergence_csv,
            logs: job.logs,
        })
    }
}

fn update(slot: &JobSlot, store: &Store, f: impl FnOnce(&mut Job)) {
    let (lock, cv) = &**slot;
    let mut job = lock.lock().expect("job lock");
    f(&mut job);
    if let Err(e) = store.append("jobs", &job.id, &*job) {
        job.logs.push(format!("could not persist job: {e}"));
    }
    cv.notify_all();
}

fn execute(slot: &JobSlot, runner: &dyn Runner, store: &Store, session: &Mutex<Session>) {
    let plan = slot.0.lock().expect("job lock").plan.clone();
    update(slot, store, |j| j.status = JobStatus::Running);
    let mut failed = false;
    if let Some(opt) = &plan.optimization {
        update(slot, store, |j| j.tasks[0] = TaskStatus::Running);
        match runner.optimize(opt) {
            Ok(outcome) => {
                let csv = outcome.result.convergence_csv();
                let id = slot.0.lock().expect("job lock").id.clone();
                let path = store.write_artifact(&id, "convergence.csv", &csv);
                update(slot, store, |j| {
                    match path {
                        Ok(p) => j.convergence_csv = p,
                        Err(e) => j.logs.push(format!("could not write the convergence CSV: {e}")),
                    }
                    if let Some(a) = &outcome.audit {
                        j.logs.extend(a.warnings.iter().cloned());
                    }
                    j.results.push(JobResult::Optimization {
                        result: Box::new(outcome.result),
                        audit: outcome.audit,
                    });
                    j.tasks[0] = TaskStatus::Done;
                });
            }
            Err(e) => {
                failed = true;
                update(slot, store, |j| {
                    j.tasks[0] = TaskStatus::Failed;
                    j.logs.push(format!("optimization failed: {e}"));
                });
            }
        }
    } else {
        for (i, sim) in plan.jobs.iter().enumerate() {
            if failed {
                update(slot, store, |j| j.tasks[i] = TaskStatus::Skipped);
                continue;
            }
            update(slot, store, |j| j.tasks[i] = TaskStatus::Running);
            match runner.simulate(sim) {
                Ok(record) => update(slot, store, |j| {
                    j.results.push(JobResult::Simulation {
                        testbench: sim.testbench,
                        params: sim.params.clone(),
                        record,
                    });
                    j.tasks[i] = TaskStatus::Done;
                }),
                Err(e) => {
                    failed = true;
                    update(slot, store, |j| {
                        j.tasks[i] = TaskStatus::Failed;
                        j.logs.push(format!("testbench {} failed: {e}", sim.testbench));
                    });
                }
            }
        }
    }
    let mut s = session.lock().expect("session lock");
    let (state, text) = if failed {
        (SessionState::Failed, "The job failed; see the job logs.")
    } else {
        (SessionState::Done, "The job finished; results are available.")
    };
    s.set_state(state, "job finished");
    s.say(Role::System, text);
    let _ = store.append("sessions", &s.id, &*s);
    drop(s);
    update(slot, store, |j| j.status = if failed { JobStatus::Failed } else { JobStatus::Done });
}

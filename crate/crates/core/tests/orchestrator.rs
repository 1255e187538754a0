use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;

use cimdse::orchestrator::{
    JobResult, JobStatus, OptimizationOutcome, Orchestrator, OrchestratorConfig, Role, Runner, SessionState, Store,
    SurrogateRunner, TaskStatus,
};
use cimdse::request::{
    AdjustOp, AdjustmentRequest, Backend, Classification, DefaultScope, DeterministicBackend, OptimizationPlan,
    ParamSchema, ParsedRequest, RequestCategory, SimulationJob,
};
use cimdse::surrogate::PpaRecord;
use cimdse::Error;

const MULTI: &str = "I want to simulate VGG8 on CIFAR-10 on CIM architecture using 8b quantization for both \
input and weight. I only want to get the PPA estimation under 22nm, 14nm, and 7nm tech node. The memory \
device is SRAM. The subarray size is 128x128 and ADC precision 7bit.";
const MISSING: &str = "Estimate the PPA of ResNet-50 on ImageNet with FeFET and a 256x256 subarray.";
const OPT: &str = "Optimize ResNet-50 on ImageNet for the best FoM under a power budget of 150 mW using a \
genetic algorithm with 10 generations.";

fn orch(runner: Arc<dyn Runner>, store: Store) -> Orchestrator {
    Orchestrator::new(
        ParamSchema::builtin(),
        Arc::new(DeterministicBackend),
        runner,
        store,
        OrchestratorConfig { workers: 2 },
    )
    .unwrap()
}

fn default_orch() -> Orchestrator {
    orch(Arc::new(SurrogateRunner::default()), Store::memory())
}

#[test]
fn complete_request_awaits_confirmation_then_runs_in_order() {
    let o = default_orch();
    let s = o.create_session().unwrap();
    let turn = o.submit(&s.id, MULTI).unwrap();
    assert_eq!(turn.role, Role::System);
    assert!(turn.text.contains("testbench 3: technode=7"), "{}", turn.text);
    assert!(turn.text.contains("Common parameters:"));
    assert_eq!(o.session(&s.id).unwrap().state, SessionState::AwaitingConfirmation);

    let job = o.confirm(&s.id).unwrap();
    assert_eq!(job.tasks.len(), 3);
    let done = o.wait(&job.id).unwrap();
    assert_eq!(done.status, JobStatus::Done);
    assert_eq!(done.tasks, [TaskStatus::Done; 3]);
    let nodes: Vec<(usize, i64)> = done
        .results
        .iter()
        .map(|r| match r {
            JobResult::Simulation { testbench, params, .. } => (*testbench, params["technode"].as_int().unwrap()),
            _ => panic!("simulation expected"),
        })
        .collect();
    assert_eq!(nodes, [(1, 22), (2, 14), (3, 7)]);

    let session = o.session(&s.id).unwrap();
    assert_eq!(session.state, SessionState::Done);
    assert!(session.transitions_valid());
    let report = o.results(&job.id).unwrap();
    assert_eq!(report.results.unwrap().len(), 3);
}

#[test]
fn missing_entries_are_reported_and_filled_by_defaults() {
    let o = default_orch();
    let s = o.create_session().unwrap();
    let turn = o.submit(&s.id, MISSING).unwrap();
    assert!(turn.text.contains("Missing:"));
    for name in ["technode", "levelADC", "inputPrecision", "weightPrecision"] {
        assert!(turn.text.contains(name), "{name} not reported: {}", turn.text);
    }
    assert_eq!(o.session(&s.id).unwrap().state, SessionState::AwaitingAdjustment);
    assert!(matches!(o.confirm(&s.id), Err(Error::State(_))));

    o.submit(&s.id, "Use the default values for the missing parameters.").unwrap();
    assert_eq!(o.session(&s.id).unwrap().state, SessionState::AwaitingConfirmation);
    let job = o.confirm(&s.id).unwrap();
    assert_eq!(o.wait(&job.id).unwrap().status, JobStatus::Done);
}

#[test]
fn structured_adjustments_and_rejections() {
    let o = default_orch();
    let s = o.create_session().unwrap();
    o.submit(&s.id, MULTI).unwrap();
    let bad = AdjustmentRequest::new(vec![AdjustOp::RemoveTestbench { index: 9 }]);
    assert!(matches!(o.adjust(&s.id, &bad), Err(Error::Adjustment { op_index: 0, .. })));
    let before = o.session(&s.id).unwrap();
    assert_eq!(before.parsed.as_ref().unwrap().testbenches.len(), 3);

    let ok = AdjustmentRequest::new(vec![AdjustOp::RemoveTestbench { index: 2 }]);
    o.adjust(&s.id, &ok).unwrap();
    let p = o.session(&s.id).unwrap().parsed.unwrap();
    assert_eq!(p.testbenches.len(), 2);
    assert_eq!(p.testbenches[1]["technode"].value.as_int(), Some(7));

    let defaults = AdjustmentRequest::new(vec![AdjustOp::UseDefaults { scope: DefaultScope::Common }]);
    o.adjust(&s.id, &defaults).unwrap();
    assert_eq!(o.session(&s.id).unwrap().state, SessionState::AwaitingConfirmation);
}

#[test]
fn empty_and_unclear_messages_leave_state_alone() {
    let o = default_orch();
    let s = o.create_session().unwrap();
    let t = o.submit(&s.id, "   ").unwrap();
    assert!(t.text.contains("empty"));
    let t = o.submit(&s.id, "please help me").unwrap();
    assert!(t.text.contains("Please name"), "{}", t.text);
    let session = o.session(&s.id).unwrap();
    assert_eq!(session.state, SessionState::AwaitingRequest);
    assert_eq!(session.messages.len(), 4);
    assert!(session.parsed.is_none());
}

#[test]
fn nothing_runs_without_confirm() {
    let dir = tempfile::tempdir().unwrap();
    let o = orch(Arc::new(SurrogateRunner::default()), Store::open(dir.path()).unwrap());
    let s = o.create_session().unwrap();
    o.submit(&s.id, MULTI).unwrap();
    o.submit(&s.id, "Set ADC precision to 6 bit for testbench 1").unwrap();
    assert!(o.store().ids("jobs").unwrap().is_empty());
    assert!(matches!(o.confirm("no-such-session"), Err(Error::NotFound(_))));
    o.confirm(&s.id).unwrap();
    assert!(matches!(o.confirm(&s.id), Err(Error::State(_))));
    assert!(matches!(o.submit(&s.id, MULTI), Err(Error::State(_))));
    assert_eq!(o.store().ids("jobs").unwrap().len(), 1);
}

/// Fails on one testbench.
struct FailOn(usize);

impl Runner for FailOn {
    fn simulate(&self, job: &SimulationJob) -> cimdse::Result<PpaRecord> {
        if job.testbench == self.0 {
            return Err(Error::Evaluation("injected".into()));
        }
        SurrogateRunner::default().simulate(job)
    }

    fn optimize(&self, plan: &OptimizationPlan) -> cimdse::Result<OptimizationOutcome> {
        SurrogateRunner::default().optimize(plan)
    }
}

#[test]
fn failure_marks_later_testbenches_skipped() {
    let o = orch(Arc::new(FailOn(2)), Store::memory());
    let s = o.create_session().unwrap();
    o.submit(&s.id, MULTI).unwrap();
    let job = o.wait(&o.confirm(&s.id).unwrap().id).unwrap();
    assert_eq!(job.status, JobStatus::Failed);
    assert_eq!(job.tasks, [TaskStatus::Done, TaskStatus::Failed, TaskStatus::Skipped]);
    assert_eq!(job.results.len(), 1);
    assert!(job.logs.iter().any(|l| l.contains("testbench 2 failed")));
    let session = o.session(&s.id).unwrap();
    assert_eq!(session.state, SessionState::Failed);
    assert!(session.transitions_valid());
}

/// Holds every simulation until released.
struct Gate(Mutex<mpsc::Receiver<()>>);

impl Runner for Gate {
    fn simulate(&self, job: &SimulationJob) -> cimdse::Result<PpaRecord> {
        self.0.lock().unwrap().recv().unwrap();
        SurrogateRunner::default().simulate(job)
    }

    fn optimize(&self, plan: &OptimizationPlan) -> cimdse::Result<OptimizationOutcome> {
        SurrogateRunner::default().optimize(plan)
    }
}

#[test]
fn running_job_reports_statuses_only() {
    let (tx, rx) = mpsc::channel();
    let o = orch(Arc::new(Gate(Mutex::new(rx))), Store::memory());
    let s = o.create_session().unwrap();
    o.submit(&s.id, MULTI).unwrap();
    let job = o.confirm(&s.id).unwrap();
    let report = o.results(&job.id).unwrap();
    assert!(report.results.is_none());
    assert_eq!(report.tasks.len(), 3);
    assert!(!o.job(&job.id).unwrap().is_finished());
    for _ in 0..3 {
        tx.send(()).unwrap();
    }
    let done = o.wait(&job.id).unwrap();
    assert_eq!(done.status, JobStatus::Done);
    assert_eq!(o.results(&job.id).unwrap().results.unwrap().len(), 3);
}

#[test]
fn optimization_job_summary_matches_result_and_reloads_identically() {
    let dir = tempfile::tempdir().unwrap();
    let o = orch(Arc::new(SurrogateRunner::new(Default::default(), 2)), Store::open(dir.path()).unwrap());
    let s = o.create_session().unwrap();
    o.submit(&s.id, OPT).unwrap();
    let job = o.wait(&o.confirm(&s.id).unwrap().id).unwrap();
    assert_eq!(job.status, JobStatus::Done);
    assert_eq!(job.results.len(), 1);
    let JobResult::Optimization { result, audit } = &job.results[0] else { panic!("optimization expected") };
    assert!(audit.is_none());
    let report = o.results(&job.id).unwrap();
    let summary = report.optimization.unwrap();
    let best = result.best.as_ref().unwrap();
    assert_eq!(summary.best_point.as_ref(), Some(&best.point));
    assert_eq!(summary.first_best_iteration, result.first_best_iteration);
    assert_eq!(summary.estimated_runtime_min, result.estimated_runtime.minutes);
    let csv_path = report.convergence_csv.unwrap();
    assert_eq!(std::fs::read_to_string(csv_path).unwrap(), result.convergence_csv());

    // a fresh orchestrator over the same directory sees identical bytes
    let again = orch(Arc::new(SurrogateRunner::default()), Store::open(dir.path()).unwrap());
    let loaded = again.job(&job.id).unwrap();
    assert_eq!(loaded, job);
    let raw = again.store().latest_raw("jobs", &job.id).unwrap();
    assert_eq!(serde_json::to_vec(&loaded).unwrap(), raw);
    let session = again.session(&s.id).unwrap();
    assert_eq!(serde_json::to_vec(&session).unwrap(), again.store().latest_raw("sessions", &s.id).unwrap());
    assert_eq!(session.state, SessionState::Done);
}

#[test]
fn sessions_do_not_interleave() {
    let o = Arc::new(default_orch());
    let ids: Vec<String> = (0..4).map(|_| o.create_session().unwrap().id).collect();
    let mut handles = Vec::new();
    for id in &ids {
        for _ in 0..2 {
            let (o, id) = (o.clone(), id.clone());
            handles.push(thread::spawn(move || {
                for _ in 0..5 {
                    o.submit(&id, "please help me").unwrap();
                }
            }));
        }
    }
    for h in handles {
        h.join().unwrap();
    }
    for id in &ids {
        let s = o.session(id).unwrap();
        assert_eq!(s.messages.len(), 20);
        for pair in s.messages.chunks(2) {
            assert_eq!(pair[0].role, Role::User);
            assert_eq!(pair[1].role, Role::System);
        }
    }
}

struct Down;

impl Backend for Down {
    fn name(&self) -> &str {
        "down"
    }

    fn classify(&self, _: &str, _: &ParamSchema) -> cimdse::Result<Classification> {
        Err(Error::Backend("connection refused".into()))
    }

    fn parse(&self, _: &str, _: RequestCategory, _: &ParamSchema) -> cimdse::Result<ParsedRequest> {
        Err(Error::Backend("connection refused".into()))
    }

    fn interpret_adjustment(
        &self,
        _: &str,
        _: &ParsedRequest,
        _: &ParamSchema,
    ) -> cimdse::Result<Option<AdjustmentRequest>> {
        Err(Error::Backend("connection refused".into()))
    }
}

#[test]
fn backend_failure_is_a_system_turn() {
    let o = Orchestrator::new(
        ParamSchema::builtin(),
        Arc::new(Down),
        Arc::new(SurrogateRunner::default()),
        Store::memory(),
        OrchestratorConfig { workers: 1 },
    )
    .unwrap();
    let s = o.create_session().unwrap();
    let t = o.submit(&s.id, MULTI).unwrap();
    assert!(t.text.contains("connection refused"));
    assert_eq!(o.session(&s.id).unwrap().state, SessionState::AwaitingRequest);
}

#[test]
fn unknown_ids_are_not_found() {
    let o = default_orch();
    assert!(matches!(o.job("nope"), Err(Error::NotFound(_))));
    assert!(matches!(o.results("nope"), Err(Error::NotFound(_))));
    assert!(matches!(o.session("nope"), Err(Error::NotFound(_))));
}

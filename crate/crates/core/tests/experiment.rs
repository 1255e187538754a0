use cimdse::experiment::{measure, run_experiment, ExperimentConfig};
use cimdse::optimizer::{self, Algorithm, OptimizerConfig};
use cimdse::catalog;
use cimdse::surrogate::{estimate_runtime, RuntimeCostModel, SurrogateConfig, SurrogateEvaluator};

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::pruning_speedup();
    cfg.seeds = 4;
    cfg.iterations = 12;
    cfg.batch_size = 8;
    cfg.algorithms = vec![Algorithm::Sa, Algorithm::Ga];
    cfg.parallelism = 2;
    cfg
}

#[test]
fn small_experiment_is_consistent_and_deterministic() {
    let cfg = small();
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.optimum > 0.0 && a.target_score <= a.optimum);
    assert_eq!(a.comparisons.len(), 2);
    for c in &a.comparisons {
        assert_eq!(c.pairs.len(), 4);
        assert_eq!(c.wins + c.losses + c.ties, 4);
        assert!((0.0..=1.0).contains(&c.sign_test_p));
        for p in &c.pairs {
            for m in [&p.unpruned, &p.pruned] {
                assert!(m.evaluations > 0 && m.runtime_min > 0.0);
            }
        }
    }
    let pairs = a.pairs_csv();
    assert_eq!(pairs.lines().count(), 1 + 8);
    let runtime = a.runtime_csv();
    assert_eq!(runtime.lines().count(), 3);
    assert!(runtime.lines().nth(1).unwrap().starts_with("sa,"));
}

#[test]
fn measure_matches_history_and_trace() {
    let (space, workload) = catalog::model_space("Swin-T").unwrap();
    let eval = SurrogateEvaluator::new(workload, SurrogateConfig::default());
    let cfg = OptimizerConfig::new(Algorithm::Sa, 10, 8, 1);
    let r = optimizer::run(&space, Default::default(), &[], &cfg, &eval).unwrap();
    let model = RuntimeCostModel::default();

    let m = measure(&r, f64::INFINITY, &model).unwrap();
    assert!(!m.reached);
    assert_eq!(m.evaluations, r.history.total_evaluations());
    assert!((m.runtime_min - estimate_runtime(&r.trace, &model).unwrap().minutes).abs() < 1e-9);

    // first entry reaches any threshold at or below its own score
    let first = &r.history.entries()[0];
    let m = measure(&r, r.history.score(first), &model).unwrap();
    assert!(m.reached);
    assert_eq!(m.evaluations, 1);
    assert!(m.runtime_min <= estimate_runtime(&r.trace, &model).unwrap().minutes);
}

#[test]
fn rejects_bad_configs() {
    let mut cfg = small();
    cfg.seeds = 0;
    assert!(cfg.validate().is_err());
    let mut cfg = small();
    cfg.tolerance = 1.5;
    assert!(cfg.validate().is_err());
    assert!(ExperimentConfig::from_json("{}").is_err());
}

#[test]
fn shipped_config_parses() {
    let cfg = ExperimentConfig::from_json(include_str!("../data/experiments/pruning_speedup.json")).unwrap();
    let reference = ExperimentConfig::pruning_speedup();
    assert_eq!(cfg.constraints, reference.constraints);
    assert_eq!(cfg.objective, reference.objective);
    assert_eq!(cfg.algorithms, [Algorithm::Sa, Algorithm::Ga, Algorithm::Tpe]);
    assert_eq!((cfg.seeds, cfg.iterations, cfg.batch_size), (50, 80, 32));
}

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::catalog;
use crate::design_space::{ParameterDef, ValidityRule, ROW_GE_PARALLEL_READ};
use crate::optimizer::{run, Algorithm, ConstraintMetric};
use crate::surrogate::{CountingEvaluator, PpaRecord, SurrogateConfig, SurrogateEvaluator};

/// Naive normal equations solved by Cramer's rule on raw sums.
fn naive_ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let det = n * sxx - sx * sx;
    let a1 = (n * sxy - sx * sy) / det;
    let a0 = (sy * sxx - sx * sxy) / det;
    (a0, a1)
}

#[test]
fn ols_recovers_power_law_and_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xs: Vec<f64> = (0..20).map(|i| 0.5 + i as f64 * 3.7).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x.powf(1.5)).collect();
    let f = fit_loglog(&xs, &ys).unwrap();
    assert!((f.a0 - 2f64.ln()).abs() < 1e-6);
    assert!((f.a1 - 1.5).abs() < 1e-6);
    assert!(f.rss < 1e-9);
    for _ in 0..20 {
        let ys: Vec<f64> = xs.iter().map(|x| x * rng.gen_range(0.5..2.0)).collect();
        let f = fit_loglog(&xs, &ys).unwrap();
        let (a0, a1) = naive_ols(&xs, &ys);
        assert!((f.a0 - a0).abs() < 1e-9 && (f.a1 - a1).abs() < 1e-9);
    }
}

#[test]
fn ols_error_cases() {
    assert!(matches!(fit_loglog(&[1.0, 1.0], &[2.0, 3.0]), Err(Error::DegenerateFit { .. })));
    assert!(matches!(fit_loglog(&[1.0], &[2.0]), Err(Error::DegenerateFit { .. })));
    assert!(matches!(fit_loglog(&[1.0, 0.0], &[2.0, 3.0]), Err(Error::Domain(_))));
    assert!(matches!(fit_loglog(&[1.0, 2.0], &[-2.0, 3.0]), Err(Error::Domain(_))));
}

#[test]
fn projection_examples() {
    assert_eq!(project(7.5, 0.0, 1.0).unwrap(), 7.5);
    assert!((project(4.0, 2f64.ln(), 1.5).unwrap() - 16.0).abs() < 1e-12);
    assert!(matches!(project(0.0, 0.0, 1.0), Err(Error::Domain(_))));
    // round trip on noiseless data
    let xs = [1.0, 2.0, 5.0, 9.0];
    let ys: Vec<f64> = xs.iter().map(|x| 3.0 * f64::powf(*x, 0.7)).collect();
    let f = fit_loglog(&xs, &ys).unwrap();
    for (x, y) in xs.iter().zip(&ys) {
        assert!((project(*x, f.a0, f.a1).unwrap() - y).abs() < 1e-6);
    }
}

#[test]
fn top_k_count_example() {
    assert_eq!(top_k_count(0.2, 10), 2);
    assert_eq!(top_k_count(0.1, 30), 3);
    assert_eq!(top_k_count(1.0, 7), 7);
    assert_eq!(top_k_count(0.01, 7), 1);
}

#[test]
fn bin_selection_rules() {
    assert_eq!(select_bins(&[0.1, 0.2, 0.7], 0.85, TauMode::Cumulative), vec![1, 2]);
    assert_eq!(select_bins(&[0.0, 0.1, 0.9], 0.85, TauMode::Cumulative), vec![2]);
    assert_eq!(select_bins(&[0.5, 0.5, 0.0], 0.5, TauMode::Cumulative), vec![0]);
    assert_eq!(select_bins(&[0.1, 0.2, 0.7], 0.85, TauMode::PerBin), vec![0, 1, 2]);
    assert_eq!(select_bins(&[0.05, 0.05, 0.9], 0.85, TauMode::PerBin), vec![2]);
}

fn toy_space() -> DesignSpace {
    DesignSpace::new(
        vec![
            ParameterDef::categorical("memCellType", ["SRAM", "RRAM"]).unwrap(),
            ParameterDef::ordinal("rowACIM", [32, 64, 128, 256, 512]).unwrap(),
            ParameterDef::ordinal("levelADC", [3, 4, 5]).unwrap(),
        ],
        vec![ValidityRule::builtin(ROW_GE_PARALLEL_READ).unwrap()],
    )
    .unwrap()
}

fn toy_record(p: &DesignPoint, scale: f64) -> PpaRecord {
    let rows = p.int("rowACIM").unwrap() as f64;
    let bits = p.int("levelADC").unwrap() as f64;
    let mem = if p.text("memCellType") == Some("RRAM") { 0.6 } else { 1.0 };
    let area = scale * mem * (rows / 32.0 + bits);
    let energy = mem * (1.0 + bits / rows);
    let latency = 1.0 / (rows * bits);
    PpaRecord::from_totals(1e9, energy, latency, area).unwrap()
}

fn toy_dataset(scale: f64) -> BaseDataset {
    let space = toy_space();
    let records = space.enumerate().into_iter().map(|p| {
        let r = toy_record(&p, scale);
        (p, r)
    });
    BaseDataset::new(space, records.collect()).unwrap()
}

#[test]
fn identical_models_give_identity_projection() {
    let base = toy_dataset(1.0);
    let space = toy_space();
    let ev = |p: &DesignPoint| Ok(toy_record(p, 1.0));
    let cs = [Constraint::area(100.0).unwrap(), Constraint::power(1e6).unwrap()];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = fit_projection(&base, &space, &space, &ev, &cs, 32, 1, &mut rng).unwrap();
    assert_eq!(out.model.coeffs.len(), 4);
    for c in &out.model.coeffs {
        assert!(c.fit.a0.abs() < 1e-9 && (c.fit.a1 - 1.0).abs() < 1e-9, "{c:?}");
    }
}

#[test]
fn fit_budget_caps_simulations_per_memory_type() {
    let (space, w) = catalog::model_space("ResNet-50").unwrap();
    let ev = SurrogateEvaluator::new(w, SurrogateConfig::default());
    let base = BaseDataset::build(space.clone(), &ev, 4).unwrap();
    let (swin, sw) = catalog::model_space("Swin-T").unwrap();
    let target = CountingEvaluator::new(SurrogateEvaluator::new(sw, SurrogateConfig::default()));
    let inter = DesignSpace::intersection(&space, &swin).unwrap();
    let cs = [Constraint::area(2500.0).unwrap(), Constraint::power(200.0).unwrap()];
    for n in [4, 32] {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let before = target.calls();
        let out = fit_projection(&base, &inter, &swin, &target, &cs, n, 1, &mut rng).unwrap();
        assert_eq!(target.calls() - before, out.evaluations);
        assert!(out.evaluations <= 3 * n);
        for c in &out.model.coeffs {
            assert!(c.fit.samples <= n);
        }
    }
}

#[test]
fn topk_keeps_large_bin_when_top_designs_use_it() {
    // objective rewards large rows; top 20% are all rowACIM=512
    let base = toy_dataset(1.0);
    let space = toy_space();
    let model = ProjectionModel::default();
    let (pruned, report) = topk_prune(
        &base,
        &space,
        &space,
        &model,
        &[],
        &Objective::maximize(crate::optimizer::Metric::Throughput),
        0.2,
        0.85,
        TauMode::Cumulative,
    )
    .unwrap();
    let rows = report.params.iter().find(|p| p.parameter == "rowACIM").unwrap();
    assert_eq!(rows.retained, vec![2]);
    assert_eq!(pruned.param("rowACIM").unwrap().values, vec![Value::Int(512)]);
    assert!(pruned.is_subspace_of(&space));
}

#[test]
fn topk_no_op_configuration() {
    let base = toy_dataset(1.0);
    let space = toy_space();
    let (pruned, report) = topk_prune(
        &base,
        &space,
        &space,
        &ProjectionModel::default(),
        &[],
        &Objective::default(),
        1.0,
        1.0,
        TauMode::Cumulative,
    )
    .unwrap();
    assert_eq!(report.k, report.valid_size);
    assert_eq!(pruned, space);
}

#[test]
fn topk_projection_infeasible() {
    let base = toy_dataset(1.0);
    let space = toy_space();
    let ev = |p: &DesignPoint| Ok(toy_record(p, 2.0));
    let cs = [Constraint::area(1e-6).unwrap()];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = fit_projection(&base, &space, &space, &ev, &cs, 32, 1, &mut rng).unwrap();
    let f = out.model.get("SRAM", ConstraintMetric::Area).unwrap();
    assert!((f.a0 - 2f64.ln()).abs() < 1e-9);
    let r = topk_prune(&base, &space, &space, &out.model, &cs, &Objective::default(), 0.2, 0.85, TauMode::Cumulative);
    assert!(matches!(r, Err(Error::ProjectionInfeasible)));
}

struct MapVerifier {
    records: HashMap<DesignPoint, (PpaRecord, bool)>,
    calls: usize,
}

impl Verifier for MapVerifier {
    fn verify(&mut self, points: &[DesignPoint]) -> Result<Vec<(PpaRecord, bool)>> {
        self.calls += points.len();
        Ok(points.iter().map(|p| self.records[p]).collect())
    }
}

fn toy_verifier(feasible: impl Fn(&DesignPoint) -> bool) -> MapVerifier {
    let records = toy_space()
        .enumerate()
        .into_iter()
        .map(|p| {
            let ok = feasible(&p);
            let r = toy_record(&p, 1.0);
            (p, (r, ok))
        })
        .collect();
    MapVerifier { records, calls: 0 }
}

#[test]
fn restore_probability_formula() {
    assert_eq!(restore_probability(2, 4, 1.0), 0.5);
    assert_eq!(restore_probability(2, 4, 3.0), 1.0);
    assert_eq!(restore_probability(0, 4, 9.0), 0.0);
    assert_eq!(restore_probability(0, 0, 9.0), 0.0);
}

#[test]
fn deprune_all_infeasible_restores_nothing() {
    let full = toy_space();
    let cur = full.restrict("rowACIM", &[Value::Int(128), Value::Int(256)]).unwrap();
    let mut v = toy_verifier(|p| p.int("rowACIM") != Some(512) && p.int("rowACIM") != Some(64) && p.int("rowACIM") != Some(32));
    let baselines = vec![
        DesignPoint::new().with("memCellType", "SRAM").with("rowACIM", 128).with("levelADC", 3),
        DesignPoint::new().with("memCellType", "RRAM").with("rowACIM", 256).with("levelADC", 4),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (next, report) = deprune(&cur, &full, &baselines, &Objective::default(), 32, 1e9, &mut v, &mut rng).unwrap();
    assert_eq!(next, cur);
    assert_eq!(report.verdicts.len(), 3);
    assert!(report.verdicts.iter().all(|x| x.wins == 0 && !x.restored));
}

#[test]
fn deprune_with_capped_gamma_restores_every_winner() {
    let full = toy_space();
    let cur = full.restrict("rowACIM", &[Value::Int(32), Value::Int(64)]).unwrap();
    let mut v = toy_verifier(|_| true);
    let baselines = vec![
        DesignPoint::new().with("memCellType", "SRAM").with("rowACIM", 64).with("levelADC", 3),
        DesignPoint::new().with("memCellType", "RRAM").with("rowACIM", 32).with("levelADC", 5),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (next, report) = deprune(&cur, &full, &baselines, &Objective::default(), 32, 1e12, &mut v, &mut rng).unwrap();
    for verdict in &report.verdicts {
        assert_eq!(verdict.restored, verdict.wins >= 1, "{verdict:?}");
        if verdict.restored {
            assert!(next.param(&verdict.parameter).unwrap().contains(&verdict.value));
        }
    }
    assert!(report.verifications <= 32);
    assert!(cur.is_subspace_of(&full) && next.is_subspace_of(&full));
}

#[test]
fn deprune_respects_budget_and_empty_missing_set() {
    let full = toy_space();
    let mut v = toy_verifier(|_| true);
    let b = vec![DesignPoint::new().with("memCellType", "SRAM").with("rowACIM", 64).with("levelADC", 3)];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (same, rep) = deprune(&full, &full, &b, &Objective::default(), 4, 1.0, &mut v, &mut rng).unwrap();
    assert_eq!(same, full);
    assert!(rep.verdicts.is_empty());
    let cur = full
        .restrict("rowACIM", &[Value::Int(64)])
        .unwrap()
        .restrict("levelADC", &[Value::Int(3)])
        .unwrap();
    // six missing values, two samples allowed
    let (_, rep) = deprune(&cur, &full, &b, &Objective::default(), 2, 1.0, &mut v, &mut rng).unwrap();
    assert_eq!(rep.verdicts.len(), 6);
    assert!(rep.verifications <= 2);
    assert_eq!(rep.per_value_budget, 1);
}

#[test]
fn dataset_round_trip() {
    let ds = toy_dataset(1.0);
    let dir = tempfile::tempdir().unwrap();
    let m = ds.save(dir.path().join("toy.jsonl"), "toy.json").unwrap();
    assert!(m.ends_with("toy.manifest.json"));
    let back = BaseDataset::load(&m).unwrap();
    assert_eq!(back, ds);
    let back2 = BaseDataset::load(dir.path().join("toy.jsonl")).unwrap();
    assert_eq!(back2, ds);
    let mut incomplete: HashMap<DesignPoint, PpaRecord> = HashMap::new();
    let p = ds.points()[0].clone();
    incomplete.insert(p.clone(), *ds.record(&p).unwrap());
    assert!(BaseDataset::new(toy_space(), incomplete).is_err());
}

#[test]
fn fetch_fills_missing_base_parameters_with_defaults() {
    let (space, w) = catalog::model_space("ResNet-50").unwrap();
    let ev = SurrogateEvaluator::new(w, SurrogateConfig::default());
    let base = BaseDataset::build(space, &ev, 4).unwrap();
    let partial = DesignPoint::new()
        .with("memCellType", "RRAM")
        .with("colACIM", 128)
        .with("rowACIM", 256)
        .with("typeADC", "SAR")
        .with("levelADC", 5)
        .with("muxColADC", 8);
    let full = partial.clone().with("weightDup", 0);
    assert_eq!(base.fetch(&partial).unwrap(), *base.record(&full).unwrap());
}

/// ResNet-50 target with a ResNet-18 base over the same space.
fn resnet_setup() -> (DesignSpace, SurrogateEvaluator, BaseDataset) {
    let (space, w) = catalog::model_space("ResNet-50").unwrap();
    let ev = SurrogateEvaluator::new(w, SurrogateConfig::default());
    let base_ev = SurrogateEvaluator::new(
        crate::surrogate::workload::resnet18(crate::surrogate::workload::Dataset::ImageNet),
        SurrogateConfig::default(),
    );
    let base = BaseDataset::build(space.clone(), &base_ev, 4).unwrap();
    (space, ev, base)
}

fn reference_constraints() -> Vec<Constraint> {
    vec![Constraint::area(2500.0).unwrap(), Constraint::power(200.0).unwrap()]
}

#[test]
fn immediate_recovery_reproduces_unpruned_run() {
    let (space, ev, base) = resnet_setup();
    let cs = reference_constraints();
    let opt = OptimizerConfig::new(Algorithm::Sa, 10, 16, 5);
    let cfg = PruningConfig {
        deprune_stop_iter: 0,
        recovery_iter: 0,
        ..Default::default()
    };
    let pruned = pruned_run(&space, &base, Objective::default(), &cs, &opt, &cfg, &ev).unwrap();
    let plain = run(&space, Objective::default(), &cs, &opt, &ev).unwrap();
    assert_eq!(pruned.audit.recovery_iteration, Some(1));
    assert_eq!(pruned.result.history.entries(), plain.history.entries());
    assert_eq!(pruned.result.trace.counts()[0], pruned.audit.fit_evaluations);
    assert_eq!(&pruned.result.trace.counts()[1..], plain.trace.counts());
    assert_eq!(pruned.result.best, plain.best);
}

#[test]
fn deprune_schedule_and_recovery() {
    let cfg = PruningConfig {
        deprune_interval: 2,
        deprune_stop_iter: 4,
        recovery_iter: 10,
        ..Default::default()
    };
    assert_eq!(cfg.deprune_iterations(), vec![2, 4]);
    assert_eq!(PruningConfig::default().deprune_iterations(), vec![2, 4, 6, 8]);
    let bad = PruningConfig {
        deprune_stop_iter: 12,
        recovery_iter: 10,
        ..Default::default()
    };
    assert!(bad.validate().is_err());

    let (space, ev, base) = resnet_setup();
    let cs = reference_constraints();
    let opt = OptimizerConfig::new(Algorithm::Ga, 12, 16, 3);
    let counted = CountingEvaluator::new(ev);
    let out = pruned_run(&space, &base, Objective::default(), &cs, &opt, &cfg, &counted).unwrap();
    let its: Vec<usize> = out.audit.deprune.iter().map(|r| r.iteration).collect();
    assert!(its.iter().all(|i| [2, 4].contains(i)));
    assert_eq!(out.audit.recovery_iteration, Some(10));
    assert!(out.audit.deprune.iter().all(|r| r.verifications <= cfg.n_total));
    let pruned = DesignSpace::from_schema(out.audit.pruned_space.clone().unwrap()).unwrap();
    assert!(pruned.is_subspace_of(&space));
    // every evaluation is charged: fitting prefix plus history
    assert_eq!(counted.calls(), out.result.trace.total());
    assert_eq!(counted.calls(), out.result.history.total_evaluations());
    // after recovery the proposals may use the full space; before it only
    // the pruned space plus restored values
    for e in out.result.history.entries().iter().filter(|e| e.iteration < 2) {
        assert!(pruned.contains(&e.point));
    }
}

#[test]
fn tight_constraints_degrade_to_unpruned_run() {
    let (space, ev, base) = resnet_setup();
    let cs = vec![Constraint::area(1.0).unwrap()];
    let opt = OptimizerConfig::new(Algorithm::Tpe, 4, 8, 1);
    let out = pruned_run(&space, &base, Objective::default(), &cs, &opt, &PruningConfig::default(), &ev).unwrap();
    assert!(out.audit.topk.is_none());
    assert!(out.audit.warnings.iter().any(|w| w.contains("running unpruned")));
    assert!(out.audit.pruned.is_empty());
    assert_eq!(out.result.status, crate::optimizer::RunStatus::ExhaustedInfeasible);
}

#[test]
fn pruned_runs_are_reproducible() {
    let (space, ev, base) = resnet_setup();
    let cs = reference_constraints();
    let opt = OptimizerConfig::new(Algorithm::Sa, 12, 16, 77);
    let cfg = PruningConfig {
        recovery_iter: 10,
        ..Default::default()
    };
    let a = pruned_run(&space, &base, Objective::default(), &cs, &opt, &cfg, &ev).unwrap();
    let b = pruned_run(&space, &base, Objective::default(), &cs, &opt, &cfg, &ev).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.result.convergence_csv(), b.result.convergence_csv());
    let back: PrunedRunResult = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
    assert_eq!(back, a);
}

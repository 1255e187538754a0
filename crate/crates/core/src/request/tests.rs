use std::collections::BTreeMap;

use super::*;

const SINGLE: &str = "I want to simulate VGG8 on CIFAR-10 on CIM architecture using 8b quantization for both \
input and weight. I only want to get the PPA estimation. The memory device is 22nm RRAM with 1bit cell \
precision. The state conductances are 25uS and 167uS with no variations. The subarray size is 128x128 and \
ADC precision 7bit.";
const MULTI: &str = "I want to simulate VGG8 on CIFAR-10 on CIM architecture using 8b quantization for both \
input and weight. I only want to get the PPA estimation under 22nm, 14nm, and 7nm tech node. The memory \
device is SRAM. The subarray size is 128x128 and ADC precision 7bit.";
const AUTO: &str = "Check the accuracy drop of ResNet-18 on CIFAR-100 of different input and weight \
quantization precisions. Only simulate the accuracy without the PPA. Run 5 batches with the batch size 100. \
Use 1b cell with a subarray of 128x128 and 7b ADC.";
const OPT: &str = "I'd like to design an CIM chip within 3600mm² based on 22nm tech node running ResNet-50 on \
ImageNet with the minimum power consumption. Use simulate annealing to find out the optimal parameter \
combination of device type, ADC type, ADC precision, subarray size, subarray mux with 20 episodes.";

fn schema() -> ParamSchema {
    ParamSchema::builtin()
}

fn parse(text: &str) -> ParsedRequest {
    let s = schema();
    let b = DeterministicBackend;
    let c = classify(text, &b, &s).unwrap();
    parse_params(text, c.category, &s, &b).unwrap()
}

fn common(p: &ParsedRequest, name: &str) -> Option<Value> {
    p.common_params.get(name).map(|x| x.value.clone())
}

fn int(v: i64) -> Option<Value> {
    Some(Value::Int(v))
}

fn txt(v: &str) -> Option<Value> {
    Some(Value::from(v))
}

#[test]
fn builtin_schema_is_valid() {
    let s = schema();
    s.validate().unwrap();
    assert!(s.entry("memCellType").unwrap().hardware);
    assert_eq!(s.resolve_alias("memory device", RequestCategory::SingleCall), Some("memCellType"));
    assert_eq!(s.resolve_alias("batch size", RequestCategory::SingleCall), Some("batchSize"));
    assert_eq!(s.resolve_alias("batch size", RequestCategory::PpaOptimization), Some("optBatchSize"));
    assert_eq!(s.resolve_value("algorithm", "simulate annealing"), Some(Value::from("sa")));
}

#[test]
fn colliding_alias_rejected() {
    let mut s = schema();
    s.entries
        .iter_mut()
        .find(|e| e.name == "technode")
        .unwrap()
        .aliases
        .push("memory device".into());
    assert!(s.validate().is_err());
}

#[test]
fn table_exemplars_classify() {
    let s = schema();
    let b = DeterministicBackend;
    let cat = |t: &str| classify(t, &b, &s).unwrap().category;
    assert_eq!(cat(SINGLE), RequestCategory::SingleCall);
    assert_eq!(cat(MULTI), RequestCategory::MultipleCall);
    assert_eq!(cat(AUTO), RequestCategory::TestbenchAutoDesign);
    assert_eq!(cat(OPT), RequestCategory::PpaOptimization);
    let unknown = classify("please help me", &b, &s).unwrap();
    assert_eq!(unknown.category, RequestCategory::Unknown);
    assert!(unknown.clarification.is_some());
}

#[test]
fn empty_request_is_an_error() {
    assert!(classify("  ", &DeterministicBackend, &schema()).is_err());
}

#[test]
fn unknown_category_cannot_be_parsed() {
    let r = parse_params("hello", RequestCategory::Unknown, &schema(), &DeterministicBackend);
    assert!(r.is_err());
}

#[test]
fn single_call_exemplar_values() {
    let p = parse(SINGLE);
    assert_eq!(p.testbenches.len(), 1);
    assert!(p.testbenches[0].is_empty());
    assert_eq!(common(&p, "model"), txt("VGG8"));
    assert_eq!(common(&p, "dataset"), txt("CIFAR-10"));
    assert_eq!(common(&p, "inputPrecision"), int(8));
    assert_eq!(common(&p, "weightPrecision"), int(8));
    assert_eq!(common(&p, "technode"), int(22));
    assert_eq!(common(&p, "memCellType"), txt("RRAM"));
    assert_eq!(common(&p, "cellBits"), int(1));
    assert_eq!(common(&p, "conductanceOff"), int(25));
    assert_eq!(common(&p, "conductanceOn"), int(167));
    assert_eq!(common(&p, "variation"), int(0));
    assert_eq!(common(&p, "rowACIM"), int(128));
    assert_eq!(common(&p, "colACIM"), int(128));
    assert_eq!(common(&p, "levelADC"), int(7));
    assert_eq!(common(&p, "simMode"), txt("ppa"));
    assert!(p.is_ready(), "{:?} {:?}", p.missing, p.invalid);
    assert!(audit(&p, &schema()).is_empty(), "{:?}", audit(&p, &schema()));
}

#[test]
fn multiple_call_exemplar_groups() {
    let p = parse(MULTI);
    assert_eq!(p.testbenches.len(), 3);
    let nodes: Vec<Value> = p.testbenches.iter().map(|t| t["technode"].value.clone()).collect();
    assert_eq!(nodes, [Value::Int(22), Value::Int(14), Value::Int(7)]);
    for tb in &p.testbenches {
        assert_eq!(tb.len(), 1);
    }
    assert_eq!(common(&p, "memCellType"), txt("SRAM"));
    assert_eq!(common(&p, "rowACIM"), int(128));
    assert_eq!(common(&p, "colACIM"), int(128));
    assert_eq!(common(&p, "levelADC"), int(7));
    assert!(p.is_ready());
    assert!(p.is_partition());
    assert!(audit(&p, &schema()).is_empty());
}

#[test]
fn adc_values_become_specialized() {
    let p = parse("Simulate ResNet-18 on CIFAR-10 with RRAM, 8-bit inputs and 8-bit weights at 22nm, a 128x128 subarray and ADC precision 4b, 5b and 6b.");
    assert_eq!(p.category, RequestCategory::MultipleCall);
    let levels: Vec<Value> = p.testbenches.iter().map(|t| t["levelADC"].value.clone()).collect();
    assert_eq!(levels, [Value::Int(4), Value::Int(5), Value::Int(6)]);
    for tb in &p.testbenches {
        assert_eq!(tb.keys().collect::<Vec<_>>(), ["levelADC"]);
    }
    assert_eq!(common(&p, "inputPrecision"), int(8));
}

#[test]
fn missing_device_is_reported_at_common() {
    let p = parse("Simulate VGG8 on CIFAR-10 with 8-bit input and weight precision at 22nm, 128x128 subarray and 7b ADC.");
    assert!(p
        .missing
        .contains(&MissingEntry { location: Location::Common, name: "memCellType".into() }));
}

#[test]
fn auto_design_exemplar_sweeps_precisions_together() {
    let p = parse(AUTO);
    assert_eq!(p.category, RequestCategory::TestbenchAutoDesign);
    assert_eq!(p.testbenches.len(), 4);
    for tb in &p.testbenches {
        assert_eq!(tb["inputPrecision"].value, tb["weightPrecision"].value);
        assert_eq!(tb["inputPrecision"].origin, Origin::Sweep);
    }
    assert_eq!(common(&p, "numBatches"), int(5));
    assert_eq!(common(&p, "batchSize"), int(100));
    assert_eq!(common(&p, "cellBits"), int(1));
    assert_eq!(common(&p, "levelADC"), int(7));
    assert_eq!(common(&p, "simMode"), txt("accuracy"));
    let missing: Vec<&str> = p.missing.iter().map(|m| m.name.as_str()).collect();
    assert_eq!(missing, ["memCellType", "technode"]);
    assert!(audit(&p, &schema()).is_empty());
}

#[test]
fn sweep_respects_bounds() {
    let p = parse("Sweep ADC precision from 4 to 6 bit for VGG8 on CIFAR-10 with SRAM at 22nm, 8-bit input and weight and a 128x128 subarray.");
    assert_eq!(p.category, RequestCategory::TestbenchAutoDesign);
    let levels: Vec<Value> = p.testbenches.iter().map(|t| t["levelADC"].value.clone()).collect();
    assert_eq!(levels, [Value::Int(4), Value::Int(5), Value::Int(6)]);
}

#[test]
fn sweep_capped_at_eight_testbenches() {
    let p = parse("Check ResNet-18 on CIFAR-10 across different devices and different ADC precisions with 8-bit input and weight at 22nm and a 128x128 subarray.");
    assert_eq!(p.category, RequestCategory::TestbenchAutoDesign);
    assert_eq!(p.testbenches.len(), 8);
    assert!(p.notes.iter().any(|n| n.contains("exceed")));
}

#[test]
fn optimization_exemplar_plan() {
    let s = schema();
    let p = parse(OPT);
    assert_eq!(p.category, RequestCategory::PpaOptimization);
    assert!(p.testbenches.is_empty());
    assert_eq!(common(&p, "algorithm"), txt("sa"));
    assert_eq!(common(&p, "iterations"), int(20));
    assert_eq!(common(&p, "areaConstraint"), int(3600));
    assert_eq!(common(&p, "objective"), txt("power"));
    assert_eq!(common(&p, "direction"), txt("minimize"));
    assert_eq!(
        common(&p, "explore"),
        txt("memCellType,rowACIM,colACIM,typeADC,levelADC,muxColADC")
    );
    assert!(p.is_ready(), "{:?} {:?}", p.missing, p.invalid);
    assert!(audit(&p, &s).is_empty(), "{:?}", audit(&p, &s));
    let plan = make_plan(&p, &s).unwrap();
    let o = plan.optimization.as_ref().unwrap();
    assert_eq!(o.optimizer.algorithm, crate::optimizer::Algorithm::Sa);
    assert_eq!(o.optimizer.iterations, 20);
    assert_eq!(o.constraints, [crate::optimizer::Constraint::area(3600.0).unwrap()]);
    assert_eq!(o.objective, crate::optimizer::Objective::minimize(crate::optimizer::Metric::Power));
    assert_eq!(o.fixed.get("weightDup"), Some(&Value::Int(0)));
    assert_eq!(o.model, "ResNet-50");
    assert!(plan.verify_hash());
}

#[test]
fn optimization_with_pruning_base() {
    let p = parse("Maximize the energy efficiency of Swin-T under 200 mW and 25 cm² with TPE for 40 iterations, using design space pruning based on ViT-B.");
    assert_eq!(common(&p, "model"), txt("Swin-T"));
    assert_eq!(common(&p, "pruneBase"), txt("ViT-B"));
    assert_eq!(common(&p, "areaConstraint"), int(2500));
    assert_eq!(common(&p, "powerConstraint"), int(200));
    let plan = make_plan(&p, &schema()).unwrap();
    let o = plan.optimization.unwrap();
    assert_eq!(o.pruning.unwrap().base_model, "ViT-B");
    assert_eq!(o.explored.len(), 8);
}

#[test]
fn unsupported_optimization_model_is_invalid() {
    let p = parse("Optimize VGG8 on CIFAR-10 for the best FoM with random search.");
    assert!(p.invalid.iter().any(|x| x.name == "model"));
    assert!(matches!(make_plan(&p, &schema()), Err(crate::Error::NotReady(_))));
}

#[test]
fn unknown_device_is_invalid_not_dropped() {
    let p = parse("Simulate VGG8 on CIFAR-10. The memory device is PCM.");
    let bad = p.invalid.iter().find(|x| x.name == "memCellType").unwrap();
    assert_eq!(bad.value, Value::from("PCM"));
}

#[test]
fn validity_rule_reported() {
    let p = parse("Simulate VGG8 on CIFAR-10 with SRAM at 22nm, 8-bit input and weight, a 64x64 subarray and 7b ADC.");
    assert!(p.invalid.iter().any(|x| x.name == "rowACIM"));
}

#[test]
fn set_same_value_everywhere_promotes() {
    let s = schema();
    let p = parse(MULTI);
    let ops = (1..=3)
        .map(|i| AdjustOp::Set {
            location: Location::Testbench(i),
            name: "technode".into(),
            value: Value::Int(14),
        })
        .collect();
    let q = adjust(&p, &AdjustmentRequest::new(ops), &s).unwrap();
    assert_eq!(common(&q, "technode"), int(14));
    assert!(q.testbenches.iter().all(|t| t.is_empty()));
    assert!(q.is_partition());
}

#[test]
fn setting_common_param_per_testbench_demotes() {
    let s = schema();
    let p = parse(MULTI);
    let ops = vec![AdjustOp::Set {
        location: Location::Testbench(2),
        name: "levelADC".into(),
        value: Value::Int(6),
    }];
    let q = adjust(&p, &AdjustmentRequest::new(ops), &s).unwrap();
    assert!(!q.common_params.contains_key("levelADC"));
    let levels: Vec<Value> = q.testbenches.iter().map(|t| t["levelADC"].value.clone()).collect();
    assert_eq!(levels, [Value::Int(7), Value::Int(6), Value::Int(7)]);
    assert!(q.is_partition());
}

#[test]
fn remove_testbench_reindexes() {
    let s = schema();
    let p = parse(MULTI);
    let q = adjust(&p, &AdjustmentRequest::new(vec![AdjustOp::RemoveTestbench { index: 2 }]), &s).unwrap();
    assert_eq!(q.testbenches.len(), 2);
    assert_eq!(q.testbenches[1]["technode"].value, Value::Int(7));
    let err = adjust(&q, &AdjustmentRequest::new(vec![
        AdjustOp::UseDefaults { scope: DefaultScope::All },
        AdjustOp::RemoveTestbench { index: 3 },
    ]), &s)
    .unwrap_err();
    assert!(matches!(err, crate::Error::Adjustment { op_index: 1, .. }));
}

#[test]
fn use_defaults_fills_common_missing() {
    let s = schema();
    let p = parse(AUTO);
    let q = adjust(&p, &AdjustmentRequest::new(vec![AdjustOp::UseDefaults { scope: DefaultScope::Common }]), &s).unwrap();
    assert!(q.missing.is_empty());
    assert_eq!(q.common_params["memCellType"].origin, Origin::Default);
    assert_eq!(common(&q, "technode"), int(22));
    assert!(audit(&q, &s).is_empty());
    let plan = make_plan(&q, &s).unwrap();
    assert_eq!(plan.jobs.len(), 4);
}

#[test]
fn inverse_adjustments_restore_original() {
    let s = schema();
    let p = parse(MULTI);
    let mut params = BTreeMap::new();
    params.insert("technode".to_string(), Value::Int(32));
    let q = adjust(&p, &AdjustmentRequest::new(vec![AdjustOp::AddTestbench { params }]), &s).unwrap();
    assert_eq!(q.testbenches.len(), 4);
    let r = adjust(&q, &AdjustmentRequest::new(vec![AdjustOp::RemoveTestbench { index: 4 }]), &s).unwrap();
    assert!(r.same_parameters(&p));

    let q = adjust(&p, &AdjustmentRequest::new(vec![AdjustOp::Set {
        location: Location::Common,
        name: "weightDup".into(),
        value: Value::Int(1),
    }]), &s)
    .unwrap();
    let r = adjust(&q, &AdjustmentRequest::new(vec![AdjustOp::Remove {
        location: Location::Common,
        name: "weightDup".into(),
    }]), &s)
    .unwrap();
    assert!(r.same_parameters(&p));
}

#[test]
fn free_text_adjustments() {
    let s = schema();
    let p = parse(AUTO);
    let adj = interpret_adjustment("Use the default values for the missing parameters.", &p, &s).unwrap();
    assert_eq!(adj.ops, [AdjustOp::UseDefaults { scope: DefaultScope::All }]);
    let adj = interpret_adjustment("The device is FeFET at 14nm.", &p, &s).unwrap();
    let q = adjust(&p, &adj, &s).unwrap();
    assert_eq!(common(&q, "memCellType"), txt("FeFET"));
    assert_eq!(common(&q, "technode"), int(14));
    let m = parse(MULTI);
    let adj = interpret_adjustment("Remove testbench 2", &m, &s).unwrap();
    assert_eq!(adj.ops, [AdjustOp::RemoveTestbench { index: 2 }]);
    let adj = interpret_adjustment("Set ADC precision to 5 bit for testbench 3", &m, &s).unwrap();
    assert_eq!(
        adj.ops,
        [AdjustOp::Set { location: Location::Testbench(3), name: "levelADC".into(), value: Value::Int(5) }]
    );
    assert!(interpret_adjustment("looks good", &m, &s).is_none());
}

#[test]
fn plan_hash_is_deterministic_and_roundtrips() {
    let s = schema();
    let p = parse(MULTI);
    let a = make_plan(&p, &s).unwrap();
    let b = make_plan(&parse(MULTI), &s).unwrap();
    assert_eq!(a.hash, b.hash);
    assert_eq!(a.jobs.len(), 3);
    for j in &a.jobs {
        assert_eq!(j.params["memCellType"], Value::from("SRAM"));
        assert_eq!(j.params["typeADC"], Value::from("Flash"));
    }
    let json = serde_json::to_string(&a).unwrap();
    let back: ExecutionPlan = serde_json::from_str(&json).unwrap();
    assert_eq!(back, a);
    assert!(back.verify_hash());
    let other = make_plan(&parse(SINGLE), &s).unwrap();
    assert_ne!(other.hash, a.hash);
}

#[test]
fn plan_refuses_missing_entries() {
    let p = parse(AUTO);
    let err = make_plan(&p, &schema()).unwrap_err();
    assert!(err.to_string().contains("memCellType"));
}

#[test]
fn audit_catches_invented_values() {
    let s = schema();
    let mut p = parse(SINGLE);
    p.common_params.insert(
        "muxColADC".into(),
        Param::new(Value::Int(16), Origin::Text { spans: vec!["16".into()] }),
    );
    assert_eq!(audit(&p, &s).len(), 1);
    p.common_params.insert(
        "muxColADC".into(),
        Param::new(Value::Int(16), Origin::Text { spans: vec!["128x128".into()] }),
    );
    assert_eq!(audit(&p, &s).len(), 1);
}

#[test]
fn parsed_request_json_shape() {
    let p = parse(MULTI);
    let v: serde_json::Value = serde_json::to_value(&p).unwrap();
    assert_eq!(v["category"], "multiple_call");
    assert_eq!(v["testbenches"][0]["technode"]["origin"]["kind"], "text");
    let back: ParsedRequest = serde_json::from_value(v).unwrap();
    assert_eq!(back, p);
    let op: AdjustOp = serde_json::from_str(r#"{"op":"set","location":{"testbench":2},"name":"levelADC","value":6}"#).unwrap();
    assert_eq!(op, AdjustOp::Set { location: Location::Testbench(2), name: "levelADC".into(), value: Value::Int(6) });
}


#[test]
fn coordinated_run_stops_at_a_name_with_its_own_number() {
    let p = parse("Simulate ResNet-50 on ImageNet with SRAM, 22nm, 8-bit input and weight and ADC precision 5bit.");
    assert_eq!(p.category, RequestCategory::SingleCall);
    assert_eq!(common(&p, "inputPrecision"), int(8));
    assert_eq!(common(&p, "weightPrecision"), int(8));
    assert_eq!(common(&p, "levelADC"), int(5));
    assert!(p.invalid.is_empty());
}

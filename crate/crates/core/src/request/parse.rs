//! Building a [`ParsedRequest`] from extracted values, and validation.

use std::collections::BTreeMap;

use super::extract::{extract, int_value, Extraction, Found};
use super::lexer::{lex, phrase_regex, Tok, Unit};
use super::schema::{EntryKind, ParamSchema};
use super::{InvalidEntry, Location, MissingEntry, Origin, Param, ParsedRequest, RequestCategory};
use crate::catalog;
use crate::design_space::Value;
use crate::surrogate::workload;

/// Multi-valued entries that move together, with their per-testbench values.
type LinkedGroup = Vec<(String, Vec<Param>)>;

/// Testbench cap for expanded requests.
pub const MAX_TESTBENCHES: usize = 8;

fn text_param(f: &Found) -> Param {
    Param::new(
        f.value.clone(),
        Origin::Text {
            spans: f.spans.clone(),
        },
    )
}

/// Deterministic parse of `text` for `category`.
pub(crate) fn build(text: &str, category: RequestCategory, schema: &ParamSchema) -> ParsedRequest {
    let ext = extract(text, schema, category);
    let mut parsed = ParsedRequest {
        text: text.to_string(),
        category,
        testbenches: Vec::new(),
        common_params: BTreeMap::new(),
        missing: Vec::new(),
        invalid: Vec::new(),
        notes: ext.notes.clone(),
    };
    if category.is_simulation() {
        build_simulation(&ext, category, schema, &mut parsed);
    } else {
        for (name, founds) in &ext.values {
            let Some(first) = founds.first() else { continue };
            if founds.len() > 1 {
                let all: Vec<String> = founds.iter().map(|f| f.value.to_string()).collect();
                parsed.notes.push(format!(
                    "{name} was given several values ({}); an optimization takes one, using {}",
                    all.join(", "),
                    first.value
                ));
            }
            parsed.common_params.insert(name.clone(), text_param(first));
        }
        if ext.prune_requested && !ext.values.contains_key("pruneBase") {
            parsed
                .notes
                .push("design-space pruning needs a base model; running without pruning".into());
        }
    }
    revalidate(&mut parsed, schema);
    parsed
}

fn build_simulation(ext: &Extraction, category: RequestCategory, schema: &ParamSchema, parsed: &mut ParsedRequest) {
    // each group is a list of (entry, values) zipped together; groups combine as a product
    let mut groups: Vec<Vec<(String, Vec<Param>)>> = Vec::new();
    let order = |name: &str| schema.entry_index(name).unwrap_or(usize::MAX);

    let mut multi: Vec<(&String, &Vec<Found>)> = ext.values.iter().filter(|(_, v)| v.len() > 1).collect();
    multi.sort_by_key(|(n, _)| order(n));
    let same_len = multi.windows(2).all(|w| w[0].1.len() == w[1].1.len());
    if ext.respectively && multi.len() > 1 && same_len {
        groups.push(
            multi
                .iter()
                .map(|(n, v)| ((*n).clone(), v.iter().map(text_param).collect()))
                .collect(),
        );
    } else {
        // values read from the same spans (`64x64, 128x128`) move together
        let spans = |v: &Vec<Found>| v.iter().map(|f| f.spans.clone()).collect::<Vec<_>>();
        let mut linked: Vec<(Vec<Vec<String>>, LinkedGroup)> = Vec::new();
        for (n, v) in &multi {
            let key = spans(v);
            let entry = ((*n).clone(), v.iter().map(text_param).collect());
            match linked.iter_mut().find(|(k, _)| *k == key) {
                Some((_, g)) => g.push(entry),
                None => linked.push((key, vec![entry])),
            }
        }
        groups.extend(linked.into_iter().map(|(_, g)| g));
    }
    for (name, founds) in &ext.values {
        if founds.len() == 1 {
            parsed.common_params.insert(name.clone(), text_param(&founds[0]));
        }
    }

    if category == RequestCategory::TestbenchAutoDesign {
        let mut swept: Vec<(String, Vec<Value>)> = Vec::new();
        for (name, _) in &ext.swept {
            let Some(e) = schema.entry(name) else { continue };
            let Some(values) = e.sweep_values(ext.bounds.get(name).copied()) else { continue };
            if values.is_empty() {
                parsed.notes.push(format!("no admissible {name} value lies within the stated bounds"));
                continue;
            }
            swept.push((name.clone(), values));
        }
        swept.sort_by_key(|(n, _)| order(n));
        // parameters swept over the same value list move together
        let mut sweep_groups: Vec<Vec<(String, Vec<Value>)>> = Vec::new();
        for s in swept {
            match sweep_groups.iter_mut().find(|g| g[0].1 == s.1) {
                Some(g) => g.push(s),
                None => sweep_groups.push(vec![s]),
            }
        }
        for g in sweep_groups {
            let names: Vec<&str> = g.iter().map(|(n, _)| n.as_str()).collect();
            let vals: Vec<String> = g[0].1.iter().map(ToString::to_string).collect();
            parsed
                .notes
                .push(format!("sweeping {} over {}", names.join(" and "), vals.join(", ")));
            groups.push(
                g.into_iter()
                    .map(|(n, v)| (n, v.into_iter().map(|x| Param::new(x, Origin::Sweep)).collect()))
                    .collect(),
            );
        }
        if ext.swept.is_empty() {
            parsed
                .notes
                .push("no parameter was named for sweeping; nothing to expand".into());
        }
    } else if !ext.swept.is_empty() {
        let names: Vec<&str> = ext.swept.iter().map(|(n, _)| n.as_str()).collect();
        parsed.notes.push(format!(
            "{} named for sweeping; not expanded for a {} request",
            names.join(", "),
            category.label()
        ));
    }

    let total: usize = groups.iter().map(|g| g[0].1.len()).product();
    let mut combos: Vec<BTreeMap<String, Param>> = vec![BTreeMap::new()];
    for g in &groups {
        let len = g[0].1.len();
        let mut next = Vec::with_capacity(combos.len() * len);
        for base in &combos {
            for k in 0..len {
                let mut tb = base.clone();
                for (name, vals) in g {
                    if let Some(p) = vals.get(k) {
                        tb.insert(name.clone(), p.clone());
                    }
                }
                next.push(tb);
            }
        }
        combos = next;
    }
    if total > MAX_TESTBENCHES {
        parsed.notes.push(format!(
            "{total} parameter combinations exceed the limit of {MAX_TESTBENCHES} testbenches; keeping the first {MAX_TESTBENCHES}"
        ));
        combos.truncate(MAX_TESTBENCHES);
    }
    if groups.len() > 1 {
        parsed
            .notes
            .push(format!("{} testbenches from all combinations of the listed values", combos.len()));
    }
    parsed.testbenches = combos;
    super::adjust::normalize(parsed);
}

/// Recomputes `missing` and `invalid`.
pub fn revalidate(parsed: &mut ParsedRequest, schema: &ParamSchema) {
    let category = parsed.category;
    let mut missing = Vec::new();
    for e in schema.entries.iter().filter(|e| e.required_in(category)) {
        if parsed.common_params.contains_key(&e.name) {
            continue;
        }
        let lacking: Vec<usize> = parsed
            .testbenches
            .iter()
            .enumerate()
            .filter(|(_, tb)| !tb.contains_key(&e.name))
            .map(|(i, _)| i + 1)
            .collect();
        if parsed.testbenches.is_empty() || lacking.len() == parsed.testbenches.len() {
            missing.push(MissingEntry {
                location: Location::Common,
                name: e.name.clone(),
            });
        } else {
            missing.extend(lacking.into_iter().map(|i| MissingEntry {
                location: Location::Testbench(i),
                name: e.name.clone(),
            }));
        }
    }

    let mut invalid: Vec<InvalidEntry> = Vec::new();
    for (location, name, p) in parsed.params() {
        let reason = match schema.entry(name) {
            None => Some(format!("`{name}` is not a known parameter")),
            Some(e) if !e.applies(category) => Some(format!("{name} does not apply to a {} request", category.label())),
            Some(e) => e.admits(&p.value).err(),
        };
        if let Some(reason) = reason {
            invalid.push(InvalidEntry {
                location,
                name: name.to_string(),
                value: p.value.clone(),
                reason,
            });
        }
    }

    let configs: Vec<usize> = if parsed.testbenches.is_empty() {
        vec![0]
    } else {
        (1..=parsed.testbenches.len()).collect()
    };
    for tb in configs {
        let resolved = parsed.resolved(tb);
        for (name, reason) in cross_checks(&resolved, category) {
            let location = match tb {
                0 => Location::Common,
                i if parsed.testbenches[i - 1].contains_key(&name) => Location::Testbench(i),
                _ => Location::Common,
            };
            let value = resolved[&name].value.clone();
            let dup = invalid
                .iter()
                .any(|x| x.location == location && x.name == name && x.reason == reason);
            if !dup {
                invalid.push(InvalidEntry {
                    location,
                    name,
                    value,
                    reason,
                });
            }
        }
    }
    parsed.missing = missing;
    parsed.invalid = invalid;
}

fn int(params: &BTreeMap<String, Param>, name: &str) -> Option<i64> {
    params.get(name).and_then(|p| p.value.as_int())
}

fn text<'a>(params: &'a BTreeMap<String, Param>, name: &str) -> Option<&'a str> {
    params.get(name).and_then(|p| p.value.as_text())
}

/// Rules spanning several parameters; returns (offending parameter, reason).
fn cross_checks(params: &BTreeMap<String, Param>, category: RequestCategory) -> Vec<(String, String)> {
    let mut out = Vec::new();
    if let (Some(rows), Some(level)) = (int(params, "rowACIM"), int(params, "levelADC")) {
        if (0..=20).contains(&level) && rows < (1i64 << level) {
            out.push((
                "rowACIM".to_string(),
                format!(
                    "{rows} rows is fewer than the {} rows a {level}-bit ADC reads in parallel",
                    1i64 << level
                ),
            ));
        }
    }
    if let (Some(mux), Some(cols)) = (int(params, "muxColADC"), int(params, "colACIM")) {
        if mux > cols {
            out.push((
                "muxColADC".to_string(),
                format!("{mux} columns per ADC exceeds the {cols} subarray columns"),
            ));
        }
    }
    if let (Some(model), Some(dataset)) = (text(params, "model"), text(params, "dataset")) {
        if workload::MODELS.contains(&model) {
            if let Err(e) = workload::by_name(model, dataset) {
                out.push(("dataset".to_string(), e.to_string()));
            }
        }
    }
    if category == RequestCategory::PpaOptimization {
        if let Some(model) = text(params, "model") {
            match catalog::model_space(model) {
                Err(_) if workload::MODELS.contains(&model) => out.push((
                    "model".to_string(),
                    format!(
                        "no optimization space is available for {model}; supported: {}",
                        catalog::OPTIMIZABLE_MODELS.join(", ")
                    ),
                )),
                Err(_) => {}
                Ok((space, _)) => {
                    for (name, p) in params {
                        if !is_hardware(name) {
                            continue;
                        }
                        match space.param(name) {
                            None => out.push((
                                name.clone(),
                                format!("{name} is not a parameter of the {model} design space"),
                            )),
                            Some(def) if !def.contains(&p.value) => out.push((
                                name.clone(),
                                format!("{} is outside the {model} design space for {name}", p.value),
                            )),
                            Some(_) => {}
                        }
                    }
                    if let Some(list) = text(params, "explore") {
                        for n in list.split(',').filter(|n| !n.is_empty()) {
                            if !space.has_param(n) {
                                out.push((
                                    "explore".to_string(),
                                    format!("{n} is not a parameter of the {model} design space"),
                                ));
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) const HARDWARE: [&str; 9] = [
    "memCellType",
    "rowACIM",
    "colACIM",
    "typeADC",
    "levelADC",
    "muxColADC",
    "weightDup",
    "rowDCIM",
    "colDCIM",
];

pub(crate) fn is_hardware(name: &str) -> bool {
    HARDWARE.contains(&name)
}

/// Values the given source spans can stand for under `name`'s aliases and
/// units (the audit's normalizer).
pub(crate) fn normalize_spans(schema: &ParamSchema, name: &str, spans: &[String]) -> Vec<Value> {
    let Some(e) = schema.entry(name) else { return Vec::new() };
    let joined = spans.join(" ; ");
    let mut out: Vec<Value> = Vec::new();
    for s in spans {
        out.push(Value::from(s.as_str()));
    }
    for v in &e.values {
        let hit = e
            .spellings(v)
            .iter()
            .filter_map(|s| phrase_regex(s))
            .any(|re| re.is_match(&joined));
        if hit {
            out.push(v.clone());
        }
    }
    if name == "simMode" {
        let has = |w: &str| phrase_regex(w).is_some_and(|re| re.is_match(&joined));
        if has("ppa") && has("accuracy") {
            out.push(Value::from("both"));
        }
    }
    if name == "pruneBase" {
        if let Some(model) = schema.entry("model") {
            for v in &model.values {
                if model
                    .spellings(v)
                    .iter()
                    .filter_map(|s| phrase_regex(s))
                    .any(|re| re.is_match(&joined))
                {
                    out.push(v.clone());
                }
            }
        }
    }
    let category = if e.applies(RequestCategory::SingleCall) {
        RequestCategory::SingleCall
    } else {
        RequestCategory::PpaOptimization
    };
    let unit = Unit::of_entry(e.unit.as_deref());
    let tokens = lex(&joined, schema, category);
    let negated = tokens
        .iter()
        .any(|t| t.is_word(&["no", "without", "not", "disable", "disabled", "non"]));
    let mut list: Vec<String> = Vec::new();
    for t in &tokens {
        match &t.tok {
            Tok::Num { value, text, unit: u } if u.is_none() || *u == unit => {
                out.push(int_value(e, *value, text));
            }
            Tok::Dims(a, b) => {
                out.push(Value::Int(*a));
                out.push(Value::Int(*b));
            }
            Tok::Alias { entry } => {
                if e.kind == EntryKind::Flag && *entry == schema.entry_index(name).unwrap_or(usize::MAX) {
                    out.push(Value::Int(if negated { 0 } else { 1 }));
                }
                list.push(schema.entries[*entry].name.clone());
            }
            Tok::DimsAlias { rule } => {
                let r = &schema.dims[*rule];
                list.push(r.rows.clone());
                list.push(r.cols.clone());
            }
            _ => {}
        }
    }
    if negated && matches!(e.kind, EntryKind::Integer | EntryKind::Flag) {
        out.push(Value::Int(0));
    }
    if e.kind == EntryKind::List {
        let names: Vec<String> = e
            .values
            .iter()
            .filter_map(|v| v.as_text())
            .filter(|n| list.iter().any(|l| l == n))
            .map(str::to_string)
            .collect();
        out.push(Value::from(names.join(",").as_str()));
    }
    out
}

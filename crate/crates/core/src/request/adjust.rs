//! User adjustments: set/remove parameters, add/remove testbenches, fill
//! defaults; followed by scope normalization and revalidation.

use regex::Regex;

use super::extract::extract;
use super::parse::revalidate;
use super::schema::ParamSchema;
use super::{AdjustOp, AdjustmentRequest, DefaultScope, Location, Origin, Param, ParsedRequest};
use crate::error::{Error, Result};

/// Moves a common parameter into every testbench (keeping values already set there).
fn demote(p: &mut ParsedRequest, name: &str) {
    if p.testbenches.is_empty() {
        return;
    }
    if let Some(common) = p.common_params.remove(name) {
        for tb in &mut p.testbenches {
            tb.entry(name.to_string()).or_insert_with(|| common.clone());
        }
    }
}

/// Restores the partition: a name set per testbench is specialized, and a
/// specialized name with one value across all testbenches becomes common.
pub(crate) fn normalize(p: &mut ParsedRequest) {
    if p.testbenches.is_empty() {
        return;
    }
    let clashes: Vec<String> = p
        .common_params
        .keys()
        .filter(|k| p.testbenches.iter().any(|tb| tb.contains_key(*k)))
        .cloned()
        .collect();
    for name in clashes {
        demote(p, &name);
    }
    let names: Vec<String> = p.testbenches[0].keys().cloned().collect();
    for name in names {
        let first = p.testbenches[0][&name].clone();
        let uniform = p
            .testbenches
            .iter()
            .all(|tb| tb.get(&name).is_some_and(|x| x.value == first.value));
        if uniform {
            for tb in &mut p.testbenches {
                tb.remove(&name);
            }
            p.common_params.insert(name, first);
        }
    }
}

fn check_testbench(p: &ParsedRequest, index: usize) -> std::result::Result<(), String> {
    if index == 0 || index > p.testbenches.len() {
        Err(format!(
            "testbench {index} does not exist (there are {})",
            p.testbenches.len()
        ))
    } else {
        Ok(())
    }
}

fn check_name(schema: &ParamSchema, name: &str) -> std::result::Result<(), String> {
    match schema.entry(name) {
        Some(_) => Ok(()),
        None => Err(format!("`{name}` is not a known parameter")),
    }
}

fn apply(p: &mut ParsedRequest, op: &AdjustOp, schema: &ParamSchema) -> std::result::Result<(), String> {
    match op {
        AdjustOp::Set { location, name, value } => {
            check_name(schema, name)?;
            let param = Param::new(value.clone(), Origin::User);
            match *location {
                Location::Common => {
                    for tb in &mut p.testbenches {
                        tb.remove(name);
                    }
                    p.common_params.insert(name.clone(), param);
                }
                Location::Testbench(i) => {
                    check_testbench(p, i)?;
                    demote(p, name);
                    p.testbenches[i - 1].insert(name.clone(), param);
                }
            }
        }
        AdjustOp::Remove { location, name } => {
            check_name(schema, name)?;
            match *location {
                Location::Common => {
                    if p.common_params.remove(name).is_none() {
                        p.notes.push(format!("{name} was not a common parameter; nothing removed"));
                    }
                }
                Location::Testbench(i) => {
                    check_testbench(p, i)?;
                    demote(p, name);
                    p.testbenches[i - 1].remove(name);
                }
            }
        }
        AdjustOp::AddTestbench { params } => {
            if !p.category.is_simulation() {
                return Err(format!("a {} request has no testbenches", p.category.label()));
            }
            for name in params.keys() {
                check_name(schema, name)?;
            }
            let mut tb = std::collections::BTreeMap::new();
            for (name, value) in params {
                match p.common_params.get(name) {
                    Some(c) if c.value == *value => continue,
                    Some(_) => demote(p, name),
                    None => {}
                }
                tb.insert(name.clone(), Param::new(value.clone(), Origin::User));
            }
            p.testbenches.push(tb);
            p.notes.push(format!("added testbench {}", p.testbenches.len()));
        }
        AdjustOp::RemoveTestbench { index } => {
            check_testbench(p, *index)?;
            if p.testbenches.len() == 1 {
                return Err("cannot remove the only testbench".into());
            }
            p.testbenches.remove(index - 1);
            p.notes.push(format!("removed testbench {index}"));
            for j in *index..=p.testbenches.len() {
                p.notes.push(format!("testbench {} is now testbench {j}", j + 1));
            }
        }
        AdjustOp::UseDefaults { scope } => {
            if let DefaultScope::Testbench(i) = scope {
                check_testbench(p, *i)?;
            }
            revalidate(p, schema);
            let missing = p.missing.clone();
            for m in missing {
                let in_scope = match (scope, m.location) {
                    (DefaultScope::All, _) => true,
                    (DefaultScope::Common, Location::Common) => true,
                    (DefaultScope::Testbench(i), Location::Testbench(j)) => *i == j,
                    _ => false,
                };
                if !in_scope {
                    continue;
                }
                let Some(default) = schema.entry(&m.name).and_then(|e| e.default.clone()) else {
                    p.notes.push(format!("{} has no default; it still needs a value", m.name));
                    continue;
                };
                let param = Param::new(default, Origin::Default);
                match m.location {
                    Location::Common => {
                        p.common_params.insert(m.name.clone(), param);
                    }
                    Location::Testbench(j) => {
                        p.testbenches[j - 1].insert(m.name.clone(), param);
                    }
                }
            }
        }
    }
    Ok(())
}

/// Applies the ops in order, then normalizes scopes and recomputes
/// missing/invalid entries. The input is left untouched.
pub fn adjust(parsed: &ParsedRequest, adj: &AdjustmentRequest, schema: &ParamSchema) -> Result<ParsedRequest> {
    let mut p = parsed.clone();
    for (op_index, op) in adj.ops.iter().enumerate() {
        apply(&mut p, op, schema).map_err(|reason| Error::Adjustment { op_index, reason })?;
    }
    normalize(&mut p);
    revalidate(&mut p, schema);
    Ok(p)
}

/// Deterministic reading of a free-text adjustment: "use defaults",
/// "remove testbench 2", "add a testbench with ...", and parameter values
/// (optionally "for testbench N"). `None` when nothing was recognized.
pub fn interpret_adjustment(text: &str, parsed: &ParsedRequest, schema: &ParamSchema) -> Option<AdjustmentRequest> {
    let tb_re = Regex::new(r"(?i)\btestbench\s*(?:#|no\.?\s*)?(\d+)").expect("regex");
    let remove_re =
        Regex::new(r"(?i)\b(?:remove|delete|drop)\s+(?:the\s+)?testbench\s*(?:#|no\.?\s*)?(\d+)").expect("regex");
    let add_re = Regex::new(r"(?i)\badd\b.*\btestbench").expect("regex");
    let default_re = Regex::new(r"(?i)\bdefaults?\b").expect("regex");
    let common_re = Regex::new(r"(?i)\bcommon\b").expect("regex");

    let mut ops = Vec::new();
    let mut removals: Vec<usize> = Vec::new();
    for sentence in text.split(['.', ';', '\n']).filter(|s| !s.trim().is_empty()) {
        if remove_re.is_match(sentence) {
            removals.extend(remove_re.captures_iter(sentence).filter_map(|c| c[1].parse::<usize>().ok()));
            continue;
        }
        let target = tb_re
            .captures(sentence)
            .and_then(|c| c[1].parse::<usize>().ok());
        if default_re.is_match(sentence) {
            let scope = match target {
                Some(i) => DefaultScope::Testbench(i),
                None if common_re.is_match(sentence) => DefaultScope::Common,
                None => DefaultScope::All,
            };
            ops.push(AdjustOp::UseDefaults { scope });
            continue;
        }
        let ext = extract(sentence, schema, parsed.category);
        if add_re.is_match(sentence) {
            let params = ext
                .values
                .iter()
                .filter_map(|(k, v)| v.first().map(|f| (k.clone(), f.value.clone())))
                .collect();
            ops.push(AdjustOp::AddTestbench { params });
            continue;
        }
        for (name, founds) in &ext.values {
            match (founds.len(), target) {
                (1, t) => ops.push(AdjustOp::Set {
                    location: t.map_or(Location::Common, Location::Testbench),
                    name: name.clone(),
                    value: founds[0].value.clone(),
                }),
                (n, None) if n == parsed.testbenches.len() => {
                    for (i, f) in founds.iter().enumerate() {
                        ops.push(AdjustOp::Set {
                            location: Location::Testbench(i + 1),
                            name: name.clone(),
                            value: f.value.clone(),
                        });
                    }
                }
                _ => {}
            }
        }
    }
    removals.sort_unstable_by(|a, b| b.cmp(a));
    removals.dedup();
    ops.extend(removals.into_iter().map(|index| AdjustOp::RemoveTestbench { index }));
    (!ops.is_empty()).then(|| AdjustmentRequest::new(ops))
}

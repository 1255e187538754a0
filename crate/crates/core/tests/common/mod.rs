//! Request-corpus checks shared by the corpus and acceptance targets.

use std::collections::BTreeMap;

use cimdse::design_space::Value;
use cimdse::orchestrator::{Runner, SurrogateRunner};
use cimdse::request::{self, audit, make_plan, DeterministicBackend, ParamSchema, ParsedRequest, RequestCategory};
use serde::Deserialize;

#[derive(Deserialize)]
pub struct Corpus {
    pub requests: Vec<Entry>,
}

#[derive(Deserialize)]
pub struct Entry {
    pub id: String,
    pub category: RequestCategory,
    pub text: String,
    #[serde(default)]
    pub follow_ups: Vec<String>,
    pub expect: Expect,
}

/// Hand-read from each request text.
#[derive(Deserialize)]
pub struct Expect {
    pub testbenches: usize,
    pub common: BTreeMap<String, Value>,
}

pub fn corpus() -> Corpus {
    serde_json::from_str(include_str!("../../data/requests/corpus.json")).unwrap()
}

fn parse(schema: &ParamSchema, e: &Entry) -> Result<ParsedRequest, String> {
    let b = DeterministicBackend;
    let c = request::classify(&e.text, &b, schema).map_err(|x| x.to_string())?;
    if c.category != e.category {
        return Err(format!("classified {:?} ({})", c.category, c.rationale));
    }
    let mut p = request::parse_params(&e.text, c.category, schema, &b).map_err(|x| x.to_string())?;
    for f in &e.follow_ups {
        let adj = request::interpret_adjustment(f, &p, schema).ok_or_else(|| format!("follow-up `{f}` not understood"))?;
        p = request::adjust(&p, &adj, schema).map_err(|x| x.to_string())?;
    }
    if p.testbenches.len() != e.expect.testbenches {
        return Err(format!("{} testbenches, expected {}", p.testbenches.len(), e.expect.testbenches));
    }
    for (k, v) in &e.expect.common {
        let got = p.common_params.get(k).map(|x| &x.value);
        if got != Some(v) {
            return Err(format!("{k} = {got:?}, expected {v}"));
        }
    }
    let violations = audit(&p, schema);
    if !violations.is_empty() {
        return Err(format!("audit: {violations:?}"));
    }
    Ok(p)
}

/// Classifies, parses, plans and executes every corpus request. Returns one
/// message per request that fails any step, and the number that succeeded.
pub fn run_corpus() -> (usize, Vec<String>) {
    let schema = ParamSchema::builtin();
    let runner = SurrogateRunner::new(Default::default(), 4);
    let mut failures = Vec::new();
    let mut ok = 0;
    for e in corpus().requests {
        let p = match parse(&schema, &e) {
            Ok(p) => p,
            Err(why) => {
                failures.push(format!("{}: {why}", e.id));
                continue;
            }
        };
        let plan = match make_plan(&p, &schema) {
            Ok(plan) => plan,
            Err(why) => {
                failures.push(format!("{}: {why}", e.id));
                continue;
            }
        };
        let run = match &plan.optimization {
            Some(o) => runner.optimize(o).map(|_| ()),
            None => plan.jobs.iter().try_for_each(|j| runner.simulate(j).map(|_| ())),
        };
        match run {
            Ok(()) => ok += 1,
            Err(why) => failures.push(format!("{}: execution: {why}", e.id)),
        }
    }
    (ok, failures)
}

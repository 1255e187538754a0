//! Natural-language simulation requests: categorization, parameter parsing
//! into specialized (per-testbench) and common parameters, validation,
//! adjustment and execution-plan generation.
//!
//! All entry points take a [`Backend`]; [`DeterministicBackend`] is a
//! rule/pattern interpreter and the reference implementation.

mod adjust;
mod backend;
mod classify;
mod extract;
mod lexer;
mod parse;
mod plan;
pub mod schema;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::design_space::Value;
use crate::error::{Error, Result};

pub use adjust::{adjust, interpret_adjustment};
pub use backend::{Backend, DeterministicBackend, HttpLlmBackend, API_KEY_ENV};
pub use parse::revalidate;
pub use plan::{make_plan, ExecutionPlan, OptimizationPlan, PruningPlan, SimulationJob};
pub use schema::{EntryKind, ParamSchema, SchemaEntry, Scope};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestCategory {
    SingleCall,
    MultipleCall,
    TestbenchAutoDesign,
    PpaOptimization,
    Unknown,
}

impl RequestCategory {
    pub const ACTIONABLE: [RequestCategory; 4] = [
        RequestCategory::SingleCall,
        RequestCategory::MultipleCall,
        RequestCategory::TestbenchAutoDesign,
        RequestCategory::PpaOptimization,
    ];

    pub fn is_simulation(self) -> bool {
        matches!(
            self,
            RequestCategory::SingleCall | RequestCategory::MultipleCall | RequestCategory::TestbenchAutoDesign
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            RequestCategory::SingleCall => "single call",
            RequestCategory::MultipleCall => "multiple call",
            RequestCategory::TestbenchAutoDesign => "testbench auto-design",
            RequestCategory::PpaOptimization => "PPA optimization",
            RequestCategory::Unknown => "unknown",
        }
    }
}

/// Where a parameter lives: shared by all testbenches, or specialized to one
/// (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Common,
    Testbench(usize),
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Location::Common => f.write_str("common"),
            Location::Testbench(i) => write!(f, "testbench {i}"),
        }
    }
}

/// Where a parameter value came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Origin {
    /// Written in the request; `spans` are the verbatim source substrings.
    Text { spans: Vec<String> },
    /// Filled from the schema default by a `use_defaults` adjustment.
    Default,
    /// Expanded from the schema's admissible values for a named sweep.
    Sweep,
    /// Set by an explicit adjustment.
    User,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub value: Value,
    pub origin: Origin,
}

impl Param {
    pub fn new(value: Value, origin: Origin) -> Self {
        Self { value, origin }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingEntry {
    pub location: Location,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvalidEntry {
    pub location: Location,
    pub name: String,
    pub value: Value,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedRequest {
    /// The request text the values were extracted from.
    pub text: String,
    pub category: RequestCategory,
    /// Specialized parameters per testbench; testbench `i` is `testbenches[i - 1]`.
    pub testbenches: Vec<BTreeMap<String, Param>>,
    pub common_params: BTreeMap<String, Param>,
    pub missing: Vec<MissingEntry>,
    pub invalid: Vec<InvalidEntry>,
    pub notes: Vec<String>,
}

impl ParsedRequest {
    pub fn is_ready(&self) -> bool {
        self.missing.is_empty() && self.invalid.is_empty()
    }

    /// Common parameters merged with testbench `index`'s specialized ones.
    pub fn resolved(&self, index: usize) -> BTreeMap<String, Param> {
        let mut out = self.common_params.clone();
        if let Some(tb) = index.checked_sub(1).and_then(|i| self.testbenches.get(i)) {
            out.extend(tb.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        out
    }

    /// Every parameter with its location.
    pub fn params(&self) -> Vec<(Location, &str, &Param)> {
        let mut out: Vec<(Location, &str, &Param)> = self
            .common_params
            .iter()
            .map(|(k, p)| (Location::Common, k.as_str(), p))
            .collect();
        for (i, tb) in self.testbenches.iter().enumerate() {
            out.extend(tb.iter().map(|(k, p)| (Location::Testbench(i + 1), k.as_str(), p)));
        }
        out
    }

    /// Equality of everything except the notes log.
    pub fn same_parameters(&self, other: &Self) -> bool {
        self.category == other.category
            && self.testbenches == other.testbenches
            && self.common_params == other.common_params
            && self.missing == other.missing
            && self.invalid == other.invalid
    }

    /// True when no name is both common and specialized, and no testbench
    /// is out of range.
    pub fn is_partition(&self) -> bool {
        self.testbenches
            .iter()
            .all(|tb| tb.keys().all(|k| !self.common_params.contains_key(k)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefaultScope {
    All,
    Common,
    Testbench(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AdjustOp {
    Set { location: Location, name: String, value: Value },
    Remove { location: Location, name: String },
    AddTestbench { params: BTreeMap<String, Value> },
    RemoveTestbench { index: usize },
    UseDefaults { scope: DefaultScope },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentRequest {
    pub ops: Vec<AdjustOp>,
}

impl AdjustmentRequest {
    pub fn new(ops: Vec<AdjustOp>) -> Self {
        Self { ops }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub category: RequestCategory,
    pub rationale: String,
    /// Question to put to the user when the category is unknown.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clarification: Option<String>,
}

pub fn classify(text: &str, backend: &dyn Backend, schema: &ParamSchema) -> Result<Classification> {
    if text.trim().is_empty() {
        return Err(Error::config("empty request"));
    }
    backend.classify(text, schema)
}

/// Parses a request for a known category. Values a backend reports without
/// a verifiable source span are dropped with a note; missing and invalid
/// entries are always recomputed locally.
pub fn parse_params(
    text: &str,
    category: RequestCategory,
    schema: &ParamSchema,
    backend: &dyn Backend,
) -> Result<ParsedRequest> {
    if category == RequestCategory::Unknown {
        return Err(Error::config("cannot parse parameters of an unclassified request"));
    }
    let mut parsed = backend.parse(text, category, schema)?;
    parsed.text = text.to_string();
    parsed.category = category;
    drop_unsourced(&mut parsed, schema);
    revalidate(&mut parsed, schema);
    Ok(parsed)
}

fn drop_unsourced(parsed: &mut ParsedRequest, schema: &ParamSchema) {
    let bad: Vec<(Location, String)> = audit_entries(parsed, schema)
        .into_iter()
        .map(|(loc, name, _)| (loc, name))
        .collect();
    for (loc, name) in bad {
        let map = match loc {
            Location::Common => Some(&mut parsed.common_params),
            Location::Testbench(i) => parsed.testbenches.get_mut(i - 1),
        };
        if let Some(p) = map.and_then(|m| m.remove(&name)) {
            parsed
                .notes
                .push(format!("dropped {name} = {} ({loc}): not found in the request text", p.value));
        }
    }
}

/// No-hallucination audit: every text-sourced value must come from spans that
/// occur verbatim in the request and normalize to the stored value; defaults
/// must equal the schema default and sweep values must be admissible.
/// Returns one message per violation.
pub fn audit(parsed: &ParsedRequest, schema: &ParamSchema) -> Vec<String> {
    audit_entries(parsed, schema)
        .into_iter()
        .map(|(loc, name, why)| format!("{name} ({loc}): {why}"))
        .collect()
}

/// True when `span` occurs in `text` not glued to further letters or digits.
fn occurs_bounded(text: &str, span: &str) -> bool {
    if span.is_empty() {
        return false;
    }
    text.match_indices(span).any(|(i, _)| {
        let before = text[..i].chars().next_back();
        let after = text[i + span.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}

fn audit_entries(parsed: &ParsedRequest, schema: &ParamSchema) -> Vec<(Location, String, String)> {
    let mut out = Vec::new();
    for (loc, name, p) in parsed.params() {
        let problem = match &p.origin {
            Origin::Text { spans } => {
                if spans.is_empty() {
                    Some("no source span".to_string())
                } else if let Some(s) = spans.iter().find(|s| !occurs_bounded(&parsed.text, s)) {
                    Some(format!("span `{s}` does not occur in the request"))
                } else if !parse::normalize_spans(schema, name, spans).contains(&p.value) {
                    Some(format!("spans {spans:?} do not normalize to `{}`", p.value))
                } else {
                    None
                }
            }
            Origin::Default => match schema.entry(name).and_then(|e| e.default.as_ref()) {
                Some(d) if *d == p.value => None,
                _ => Some(format!("`{}` is not the schema default", p.value)),
            },
            Origin::Sweep => match schema.entry(name).and_then(|e| e.sweep_values(None)) {
                Some(vals) if vals.contains(&p.value) => None,
                _ => Some(format!("`{}` is not an admissible sweep value", p.value)),
            },
            Origin::User => None,
        };
        if let Some(why) = problem {
            out.push((loc, name.to_string(), why));
        }
    }
    out
}

#[cfg(test)]
mod tests;

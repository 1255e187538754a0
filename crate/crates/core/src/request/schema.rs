//! Request-level parameter schema: the hardware parameters of the shipped
//! design spaces plus request entries (model, dataset, precisions, optimizer
//! settings), with aliases, units and defaults.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::RequestCategory;
use crate::catalog;
use crate::design_space::{ParamKind, SpaceSchema, Value};
use crate::error::{Error, Result};

pub const REQUEST_SCHEMA: &str = include_str!("../../data/requests/request_schema.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Categorical,
    Integer,
    /// Stored as the decimal text it was written in.
    Decimal,
    /// 0 or 1.
    Flag,
    /// Comma-separated subset of `values`.
    List,
}

/// Which request categories an entry applies to (or is required in).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    #[default]
    All,
    Simulation,
    Optimization,
}

impl Scope {
    pub fn covers(self, category: RequestCategory) -> bool {
        match self {
            Scope::All => category != RequestCategory::Unknown,
            Scope::Simulation => category.is_simulation(),
            Scope::Optimization => category == RequestCategory::PpaOptimization,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaEntry {
    pub name: String,
    pub kind: EntryKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<Value>,
    /// Inclusive bounds when `values` is empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
    /// Alternative spellings per value (keyed by the value's display form).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub value_aliases: BTreeMap<String, Vec<String>>,
    /// Context words that claim a nearby number carrying this entry's unit.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub scope: Scope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required: Option<Scope>,
    /// Matched only by dedicated phrase rules, never by plain value lookup.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub contextual: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub hardware: bool,
    /// Ascending order among entries sharing a unit (low value first).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<u8>,
}

impl SchemaEntry {
    pub fn applies(&self, category: RequestCategory) -> bool {
        self.scope.covers(category)
    }

    pub fn required_in(&self, category: RequestCategory) -> bool {
        self.required.is_some_and(|s| s.covers(category)) && self.applies(category)
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self.kind, EntryKind::Integer | EntryKind::Decimal | EntryKind::Flag)
    }

    /// Every spelling of `value`, its display form first.
    pub fn spellings(&self, value: &Value) -> Vec<String> {
        let display = value.to_string();
        let mut out = vec![display.clone()];
        if let Some(extra) = self.value_aliases.get(&display) {
            out.extend(extra.iter().filter(|a| **a != display).cloned());
        }
        out
    }

    /// Checks a value against the entry; the error is a human-readable reason.
    pub fn admits(&self, value: &Value) -> std::result::Result<(), String> {
        let in_range = |x: f64| match self.range {
            Some([lo, hi]) => x >= lo && x <= hi,
            None => true,
        };
        let range_text = || match self.range {
            Some([lo, hi]) => format!("between {lo} and {hi}"),
            None => String::new(),
        };
        let listed = || {
            self.values
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        };
        match (self.kind, value) {
            (EntryKind::Categorical, Value::Text(_)) | (EntryKind::Integer, Value::Int(_))
                if !self.values.is_empty() =>
            {
                if self.values.contains(value) {
                    Ok(())
                } else {
                    Err(format!("`{value}` is not supported; expected one of {}", listed()))
                }
            }
            (EntryKind::Integer, Value::Int(v)) => {
                if in_range(*v as f64) {
                    Ok(())
                } else {
                    Err(format!("{v} is out of range; expected a value {}", range_text()))
                }
            }
            (EntryKind::Decimal, Value::Text(s)) => match s.parse::<f64>() {
                Ok(x) if in_range(x) => Ok(()),
                Ok(x) => Err(format!("{x} is out of range; expected a value {}", range_text())),
                Err(_) => Err(format!("`{s}` is not a number")),
            },
            (EntryKind::Flag, Value::Int(0 | 1)) => Ok(()),
            (EntryKind::Flag, _) => Err(format!("`{value}` is not a flag (0 or 1)")),
            (EntryKind::List, Value::Text(s)) => {
                for item in s.split(',').filter(|x| !x.is_empty()) {
                    if !self.values.contains(&Value::from(item)) {
                        return Err(format!("`{item}` is not one of {}", listed()));
                    }
                }
                Ok(())
            }
            _ => Err(format!("`{value}` has the wrong type for {}", self.name)),
        }
    }

    /// Admissible values in declaration order, or `None` for unbounded kinds.
    pub fn sweep_values(&self, bounds: Option<(f64, f64)>) -> Option<Vec<Value>> {
        if self.values.is_empty() || matches!(self.kind, EntryKind::List) {
            return None;
        }
        let keep = |v: &Value| match (bounds, v.as_int()) {
            (Some((lo, hi)), Some(x)) => (x as f64) >= lo && (x as f64) <= hi,
            _ => true,
        };
        Some(self.values.iter().filter(|v| keep(v)).cloned().collect())
    }
}

/// A phrase naming a two-dimensional array size (`128x128`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimsRule {
    pub aliases: Vec<String>,
    pub rows: String,
    pub cols: String,
}

#[derive(Clone, Debug, Default, Deserialize)]
struct HardwareOverlay {
    #[serde(default)]
    kind: Option<EntryKind>,
    #[serde(default)]
    aliases: Vec<String>,
    #[serde(default)]
    value_aliases: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    keywords: Vec<String>,
    #[serde(default)]
    required: Option<Scope>,
}

#[derive(Clone, Debug, Deserialize)]
struct SchemaFile {
    hardware_from: Vec<String>,
    #[serde(default)]
    hardware: BTreeMap<String, HardwareOverlay>,
    #[serde(default)]
    dims: Vec<DimsRule>,
    entries: Vec<SchemaEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSchema {
    pub entries: Vec<SchemaEntry>,
    #[serde(default)]
    pub dims: Vec<DimsRule>,
}

fn shipped_space(name: &str) -> Result<SpaceSchema> {
    let text = match name {
        "resnet50_22nm" => catalog::RESNET50_SCHEMA,
        "swint_22nm" => catalog::SWINT_SCHEMA,
        "vitb_22nm" => catalog::VITB_SCHEMA,
        other => return Err(Error::schema(format!("unknown design-space schema `{other}`"))),
    };
    Ok(serde_json::from_str(text)?)
}

/// Case- and separator-insensitive key for alias comparison.
pub(crate) fn alias_key(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

impl ParamSchema {
    /// The shipped schema.
    pub fn builtin() -> Self {
        Self::from_json(REQUEST_SCHEMA).expect("shipped request schema is valid")
    }

    /// Builds a schema from a request-schema file; hardware entries are taken
    /// from the named shipped design spaces and merged with the file's overlay.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: SchemaFile = serde_json::from_str(text)?;
        let spaces = file
            .hardware_from
            .iter()
            .map(|n| shipped_space(n))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(&spaces, &file.hardware, file.dims, file.entries)
    }

    fn from_parts(
        spaces: &[SpaceSchema],
        overlays: &BTreeMap<String, HardwareOverlay>,
        dims: Vec<DimsRule>,
        request_entries: Vec<SchemaEntry>,
    ) -> Result<Self> {
        let mut entries: Vec<SchemaEntry> = Vec::new();
        for space in spaces {
            for p in &space.params {
                if let Some(e) = entries.iter_mut().find(|e| e.name == p.name) {
                    for v in &p.values {
                        if !e.values.contains(v) {
                            e.values.push(v.clone());
                        }
                    }
                    continue;
                }
                let ov = overlays.get(&p.name).cloned().unwrap_or_default();
                let kind = ov.kind.unwrap_or(match p.kind {
                    ParamKind::Categorical => EntryKind::Categorical,
                    ParamKind::Ordinal => EntryKind::Integer,
                });
                let mut aliases = p.aliases.clone();
                aliases.extend(ov.aliases);
                entries.push(SchemaEntry {
                    name: p.name.clone(),
                    kind,
                    values: p.values.clone(),
                    range: None,
                    default: p.default.clone(),
                    unit: p.unit.clone().filter(|u| u == "bit"),
                    aliases,
                    value_aliases: ov.value_aliases,
                    keywords: ov.keywords,
                    scope: Scope::All,
                    required: ov.required,
                    contextual: false,
                    hardware: true,
                    rank: None,
                });
            }
        }
        for name in overlays.keys() {
            if !entries.iter().any(|e| e.name == *name) {
                return Err(Error::schema(format!("overlay for unknown hardware parameter `{name}`")));
            }
        }
        for e in &mut entries {
            if let Some(v) = e.values.first() {
                if v.as_int().is_some() {
                    e.values.sort();
                }
            }
        }
        entries.extend(request_entries);
        let schema = Self { entries, dims };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for e in &self.entries {
            if !names.insert(e.name.as_str()) {
                return Err(Error::schema(format!("duplicate request entry `{}`", e.name)));
            }
            if e.values.is_empty() && e.range.is_none() && e.kind != EntryKind::Flag {
                return Err(Error::schema(format!("entry `{}` has neither values nor a range", e.name)));
            }
            if let Some(d) = &e.default {
                e.admits(d)
                    .map_err(|r| Error::schema(format!("default of `{}` is invalid: {r}", e.name)))?;
            }
            for key in e.value_aliases.keys() {
                if !e.values.iter().any(|v| v.to_string() == *key) {
                    return Err(Error::schema(format!(
                        "value alias key `{key}` is not a value of `{}`",
                        e.name
                    )));
                }
            }
        }
        for rule in &self.dims {
            for p in [&rule.rows, &rule.cols] {
                if self.entry(p).is_none() {
                    return Err(Error::schema(format!("dims rule names unknown entry `{p}`")));
                }
            }
        }
        // aliases must resolve to one entry within every category
        for category in RequestCategory::ACTIONABLE {
            let mut seen: BTreeMap<String, String> = BTreeMap::new();
            let mut claim = |alias: &str, owner: &str| -> Result<()> {
                let key = alias_key(alias);
                match seen.get(&key) {
                    Some(prev) if prev != owner => Err(Error::schema(format!(
                        "alias `{alias}` maps to both `{prev}` and `{owner}`"
                    ))),
                    _ => {
                        seen.insert(key, owner.to_string());
                        Ok(())
                    }
                }
            };
            for e in self.entries.iter().filter(|e| e.applies(category)) {
                claim(&e.name, &e.name)?;
                for a in &e.aliases {
                    claim(a, &e.name)?;
                }
            }
            for (i, rule) in self.dims.iter().enumerate() {
                for a in &rule.aliases {
                    claim(a, &format!("dims#{i}"))?;
                }
            }
        }
        Ok(())
    }

    pub fn entry(&self, name: &str) -> Option<&SchemaEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn entry_index(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    /// Entries applicable to a category, in schema order.
    pub fn applicable(&self, category: RequestCategory) -> impl Iterator<Item = &SchemaEntry> {
        self.entries.iter().filter(move |e| e.applies(category))
    }

    /// Canonical entry name for an alias or name, within a category.
    pub fn resolve_alias(&self, text: &str, category: RequestCategory) -> Option<&str> {
        let key = alias_key(text);
        self.applicable(category)
            .find(|e| alias_key(&e.name) == key || e.aliases.iter().any(|a| alias_key(a) == key))
            .map(|e| e.name.as_str())
    }

    /// Resolves a written value (a canonical value or any of its aliases) for an entry.
    pub fn resolve_value(&self, name: &str, text: &str) -> Option<Value> {
        let e = self.entry(name)?;
        let key = alias_key(text);
        if let Some(v) = e
            .values
            .iter()
            .find(|v| e.spellings(v).iter().any(|s| alias_key(s) == key))
        {
            return Some(v.clone());
        }
        match e.kind {
            EntryKind::Integer | EntryKind::Flag => text.trim().parse::<i64>().ok().map(Value::Int),
            EntryKind::Decimal => text.trim().parse::<f64>().ok().map(|_| Value::from(text.trim())),
            EntryKind::Categorical | EntryKind::List => None,
        }
    }
}

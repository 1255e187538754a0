//! Discrete hardware design spaces.
//!
//! A [`DesignSpace`] is an ordered list of named discrete parameters plus a set of
//! named validity rules over joint assignments. Spaces are immutable once built;
//! pruning produces new spaces whose per-parameter value lists are subsets of
//! the original.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the rule rejecting subarrays with fewer rows than the ADC parallel read.
pub const ROW_GE_PARALLEL_READ: &str = "row_ge_parallel_read";

/// A single admissible parameter value.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Text(String),
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            Value::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            Value::Int(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    /// Unordered labels; declared order is used wherever an order is needed.
    Categorical,
    /// Integer values, strictly increasing.
    Ordinal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterDef {
    pub name: String,
    pub kind: ParamKind,
    pub values: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
}

impl ParameterDef {
    pub fn ordinal(name: &str, values: impl IntoIterator<Item = i64>) -> Result<Self> {
        Self {
            name: name.to_string(),
            kind: ParamKind::Ordinal,
            values: values.into_iter().map(Value::Int).collect(),
            default: None,
            unit: None,
            aliases: Vec::new(),
        }
        .validated()
    }

    pub fn categorical<'a>(name: &str, values: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        Self {
            name: name.to_string(),
            kind: ParamKind::Categorical,
            values: values.into_iter().map(Value::from).collect(),
            default: None,
            unit: None,
            aliases: Vec::new(),
        }
        .validated()
    }

    pub fn with_default(mut self, default: impl Into<Value>) -> Result<Self> {
        self.default = Some(default.into());
        self.validated()
    }

    /// Checks the definition invariants and returns `self` on success.
    pub fn validated(self) -> Result<Self> {
        if self.name.is_empty() {
            return Err(Error::schema("parameter with empty name"));
        }
        if self.values.is_empty() {
            return Err(Error::schema(format!("parameter `{}` has no values", self.name)));
        }
        let unique: BTreeSet<&Value> = self.values.iter().collect();
        if unique.len() != self.values.len() {
            return Err(Error::schema(format!("parameter `{}` has duplicate values", self.name)));
        }
        if self.kind == ParamKind::Ordinal {
            let ints: Option<Vec<i64>> = self.values.iter().map(Value::as_int).collect();
            let ints = ints.ok_or_else(|| {
                Error::schema(format!("ordinal parameter `{}` has non-integer values", self.name))
            })?;
            if ints.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::schema(format!(
                    "ordinal parameter `{}` values are not strictly increasing",
                    self.name
                )));
            }
        }
        if let Some(d) = &self.default {
            if !self.values.contains(d) {
                return Err(Error::schema(format!(
                    "default `{d}` of parameter `{}` is not an admissible value",
                    self.name
                )));
            }
        }
        Ok(self)
    }

    pub fn position(&self, value: &Value) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }

    pub fn contains(&self, value: &Value) -> bool {
        self.values.contains(value)
    }

    /// Default value, falling back to the first admissible value.
    pub fn default_or_first(&self) -> &Value {
        self.default.as_ref().unwrap_or(&self.values[0])
    }

    /// Same parameter restricted to `keep`, preserving declared order.
    pub fn restricted(&self, keep: &[Value]) -> Result<Self> {
        let values: Vec<Value> = self.values.iter().filter(|v| keep.contains(v)).cloned().collect();
        let default = self.default.clone().filter(|d| values.contains(d));
        Self {
            values,
            default,
            ..self.clone()
        }
        .validated()
    }
}

/// One full assignment of parameter values.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesignPoint(BTreeMap<String, Value>);

impl DesignPoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name)
    }

    pub fn int(&self, name: &str) -> Option<i64> {
        self.get(name).and_then(Value::as_int)
    }

    pub fn text(&self, name: &str) -> Option<&str> {
        self.get(name).and_then(Value::as_text)
    }

    pub fn set(&mut self, name: impl Into<String>, value: impl Into<Value>) {
        self.0.insert(name.into(), value.into());
    }

    pub fn with(mut self, name: impl Into<String>, value: impl Into<Value>) -> Self {
        self.set(name, value);
        self
    }

    pub fn remove(&mut self, name: &str) -> Option<Value> {
        self.0.remove(name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.0.iter()
    }

    /// Keeps only the named parameters.
    pub fn project<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> DesignPoint {
        let mut out = DesignPoint::new();
        for n in names {
            if let Some(v) = self.get(n) {
                out.set(n, v.clone());
            }
        }
        out
    }
}

impl fmt::Display for DesignPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, v) in &self.0 {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

impl<K: Into<String>, V: Into<Value>> FromIterator<(K, V)> for DesignPoint {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        DesignPoint(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

type Predicate = dyn Fn(&DesignPoint) -> bool + Send + Sync;

/// A named predicate over joint assignments.
#[derive(Clone)]
pub struct ValidityRule {
    name: String,
    params: Vec<String>,
    predicate: Arc<Predicate>,
}

impl ValidityRule {
    pub fn new(
        name: impl Into<String>,
        params: &[&str],
        predicate: impl Fn(&DesignPoint) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            params: params.iter().map(|s| s.to_string()).collect(),
            predicate: Arc::new(predicate),
        }
    }

    /// Looks up a rule shipped with the crate by name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            ROW_GE_PARALLEL_READ => Some(Self::new(name, &["rowACIM", "levelADC"], |p| {
                match (p.int("rowACIM"), p.int("levelADC")) {
                    (Some(rows), Some(bits)) if (0..62).contains(&bits) => rows >= 1i64 << bits,
                    (Some(_), Some(_)) => false,
                    _ => true,
                }
            })),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    pub fn holds(&self, point: &DesignPoint) -> bool {
        (self.predicate)(point)
    }
}

impl fmt::Debug for ValidityRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ValidityRule")
            .field("name", &self.name)
            .field("params", &self.params)
            .finish()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Validity {
    Valid,
    Violated(String),
}

/// On-disk form of a design space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceSchema {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub params: Vec<ParameterDef>,
    #[serde(default)]
    pub rules: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct DesignSpace {
    name: Option<String>,
    params: Vec<ParameterDef>,
    rules: Vec<ValidityRule>,
}

impl PartialEq for DesignSpace {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.rule_names() == other.rule_names()
    }
}

impl DesignSpace {
    pub fn new(params: Vec<ParameterDef>, rules: Vec<ValidityRule>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut checked = Vec::with_capacity(params.len());
        for p in params {
            let p = p.validated()?;
            if !seen.insert(p.name.clone()) {
                return Err(Error::schema(format!("duplicate parameter `{}`", p.name)));
            }
            checked.push(p);
        }
        for r in &rules {
            if let Some(missing) = r.params.iter().find(|n| !seen.contains(*n)) {
                return Err(Error::schema(format!(
                    "rule `{}` references undeclared parameter `{missing}`",
                    r.name
                )));
            }
        }
        Ok(Self {
            name: None,
            params: checked,
            rules,
        })
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn from_schema(schema: SpaceSchema) -> Result<Self> {
        let rules = schema
            .rules
            .iter()
            .map(|n| {
                ValidityRule::builtin(n).ok_or_else(|| Error::schema(format!("unknown rule `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let space = Self::new(schema.params, rules)?;
        Ok(match schema.name {
            Some(n) => space.named(n),
            None => space,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_schema(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_schema(&self) -> SpaceSchema {
        SpaceSchema {
            name: self.name.clone(),
            params: self.params.clone(),
            rules: self.rule_names().into_iter().map(String::from).collect(),
        }
    }

    pub fn params(&self) -> &[ParameterDef] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&ParameterDef> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn has_param(&self, name: &str) -> bool {
        self.param(name).is_some()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    pub fn rules(&self) -> &[ValidityRule] {
        &self.rules
    }

    pub fn rule_names(&self) -> Vec<&str> {
        self.rules.iter().map(|r| r.name()).collect()
    }

    /// Size of the Cartesian product, ignoring validity rules.
    pub fn cardinality(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).product()
    }

    /// All valid points, lexicographic over declared parameter order (first
    /// parameter varies slowest).
    pub fn enumerate(&self) -> Vec<DesignPoint> {
        let mut out = Vec::new();
        if self.params.is_empty() {
            return out;
        }
        let mut idx = vec![0usize; self.params.len()];
        loop {
            let point: DesignPoint = self
                .params
                .iter()
                .zip(&idx)
                .map(|(p, &i)| (p.name.clone(), p.values[i].clone()))
                .collect();
            if self.rules.iter().all(|r| r.holds(&point)) {
                out.push(point);
            }
            // odometer increment, last parameter fastest
            let mut k = self.params.len();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < self.params[k].values.len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    /// First violated rule in declaration order, or `Valid`.
    pub fn check_validity(&self, point: &DesignPoint) -> Result<Validity> {
        for (name, _) in point.iter() {
            if !self.has_param(name) {
                return Err(Error::schema(format!("unknown parameter `{name}` in design point")));
            }
        }
        if let Some(p) = self.params.iter().find(|p| point.get(&p.name).is_none()) {
            return Err(Error::schema(format!("parameter `{}` is not assigned", p.name)));
        }
        Ok(self
            .rules
            .iter()
            .find(|r| !r.holds(point))
            .map_or(Validity::Valid, |r| Validity::Violated(r.name.clone())))
    }

    /// True when the point assigns exactly this space's parameters, every value is
    /// admissible and every rule holds.
    pub fn contains(&self, point: &DesignPoint) -> bool {
        point.len() == self.params.len()
            && self
                .params
                .iter()
                .all(|p| point.get(&p.name).is_some_and(|v| p.contains(v)))
            && self.rules.iter().all(|r| r.holds(point))
    }

    pub fn satisfies_rules(&self, point: &DesignPoint) -> bool {
        self.rules.iter().all(|r| r.holds(point))
    }

    /// Shared parameters of two spaces. Values are intersected in base order;
    /// rules from either side survive when all their parameters do.
    pub fn intersection(base: &DesignSpace, target: &DesignSpace) -> Result<DesignSpace> {
        let mut params = Vec::new();
        for bp in &base.params {
            let Some(tp) = target.param(&bp.name) else {
                continue;
            };
            let values: Vec<Value> = bp.values.iter().filter(|v| tp.contains(v)).cloned().collect();
            if values.is_empty() {
                return Err(Error::TransferInfeasible(format!(
                    "parameter `{}` has no shared values",
                    bp.name
                )));
            }
            params.push(bp.restricted(&values)?);
        }
        if params.is_empty() {
            return Err(Error::TransferInfeasible("spaces share no parameters".into()));
        }
        let names: BTreeSet<&str> = params.iter().map(|p| p.name.as_str()).collect();
        let mut rules: Vec<ValidityRule> = Vec::new();
        for r in base.rules.iter().chain(&target.rules) {
            let survives = r.params.iter().all(|n| names.contains(n.as_str()));
            if survives && !rules.iter().any(|x| x.name == r.name) {
                rules.push(r.clone());
            }
        }
        DesignSpace::new(params, rules)
    }

    /// First and last admissible value per key.
    pub fn boundary_values(&self, keys: &[&str]) -> Result<BTreeMap<String, (Value, Value)>> {
        keys.iter()
            .map(|k| {
                let p = self
                    .param(k)
                    .ok_or_else(|| Error::schema(format!("unknown parameter `{k}`")))?;
                let first = p.values.first().cloned().expect("validated nonempty");
                let last = p.values.last().cloned().expect("validated nonempty");
                Ok((k.to_string(), (first, last)))
            })
            .collect()
    }

    /// Copy of this space with one parameter's values restricted to `keep`.
    pub fn restrict(&self, name: &str, keep: &[Value]) -> Result<DesignSpace> {
        let mut params = self.params.clone();
        let slot = params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::schema(format!("unknown parameter `{name}`")))?;
        *slot = slot.restricted(keep)?;
        Ok(DesignSpace {
            name: self.name.clone(),
            params,
            rules: self.rules.clone(),
        })
    }

    /// Copy of this space with the same-named parameter replaced by `def`.
    pub fn replace_param(&self, def: ParameterDef) -> Result<DesignSpace> {
        let mut params = self.params.clone();
        let slot = params
            .iter_mut()
            .find(|p| p.name == def.name)
            .ok_or_else(|| Error::schema(format!("unknown parameter `{}`", def.name)))?;
        *slot = def.validated()?;
        Ok(DesignSpace {
            name: self.name.clone(),
            params,
            rules: self.rules.clone(),
        })
    }

    /// True when both spaces declare the same parameters and every value list
    /// here is a subset of the other's.
    pub fn is_subspace_of(&self, other: &DesignSpace) -> bool {
        self.params.len() == other.params.len()
            && self.params.iter().all(|p| {
                other
                    .param(&p.name)
                    .is_some_and(|o| p.values.iter().all(|v| o.contains(v)))
            })
    }

    /// Uniformly random valid point. Returns `None` for a space without valid points.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<DesignPoint> {
        for _ in 0..1000 {
            let point: DesignPoint = self
                .params
                .iter()
                .map(|p| (p.name.clone(), p.values[rng.gen_range(0..p.values.len())].clone()))
                .collect();
            if self.satisfies_rules(&point) {
                return Some(point);
            }
        }
        let all = self.enumerate();
        if all.is_empty() {
            None
        } else {
            Some(all[rng.gen_range(0..all.len())].clone())
        }
    }

    /// Point built from every parameter's default (or first) value.
    pub fn default_point(&self) -> DesignPoint {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.default_or_first().clone()))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bin {
    pub label: String,
    pub values: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinPartition {
    pub parameter: String,
    pub bins: Vec<Bin>,
}

impl BinPartition {
    pub fn bin_of(&self, value: &Value) -> Option<usize> {
        self.bins.iter().position(|b| b.values.contains(value))
    }
}

/// Positional labels for a partition into `n` bins.
pub fn bin_labels(n: usize) -> Vec<String> {
    match n {
        1 => vec!["mid".into()],
        2 => vec!["small".into(), "large".into()],
        3 => vec!["small".into(), "mid".into(), "large".into()],
        _ => (0..n).map(|i| format!("bin{i}")).collect(),
    }
}

/// Contiguous near-equal split of the ordered values; earlier bins take the
/// extra elements.
pub fn discretize_bins(param: &ParameterDef, num_bins: usize) -> Result<BinPartition> {
    let n = param.values.len();
    if num_bins == 0 || num_bins > n {
        return Err(Error::Partition {
            values: n,
            bins: num_bins,
        });
    }
    let base = n / num_bins;
    let extra = n % num_bins;
    let mut bins = Vec::with_capacity(num_bins);
    let mut start = 0;
    for (i, label) in bin_labels(num_bins).into_iter().enumerate() {
        let len = base + usize::from(i < extra);
        bins.push(Bin {
            label,
            values: param.values[start..start + len].to_vec(),
        });
        start += len;
    }
    Ok(BinPartition {
        parameter: param.name.clone(),
        bins,
    })
}

//! Attribution of tokens to schema entries.
//!
//! Every value found here carries the verbatim text span it came from; the
//! extractor never produces a value that is not written in the request
//! (sweeps are recorded separately and expanded by the parser).

use std::collections::BTreeMap;

use regex::Regex;

use super::lexer::{clauses, lex, phrase_regex, Tok, Token, Unit};
use super::schema::{EntryKind, ParamSchema, SchemaEntry};
use super::RequestCategory;
use crate::design_space::Value;

pub(crate) const SWEEP_WORDS: &[&str] = &[
    "different", "various", "varying", "vary", "varied", "sweep", "sweeping", "swept", "across", "trend",
    "trends", "scaling", "several",
];
const PRECISION_NOUNS: &[&str] = &[
    "precision", "precisions", "quantization", "quantizations", "bitwidth", "bitwidths", "resolution",
    "resolutions", "bits",
];
const LEFT_FILLERS: &[&str] = &[
    "of", "is", "are", "be", "to", "at", "as", "set", "with", "equal", "equals", "the", "a", "an", "was", "were",
    "using", "use",
];
const NEGATIONS: &[&str] = &["no", "without", "not", "disable", "disabled", "non"];
const ENABLERS: &[&str] = &["with", "enable", "enabled", "using", "use", "apply", "applying"];
const PRUNE_WORDS: &[&str] = &["prune", "pruning", "pruned", "transfer", "transferred"];
const BASE_WORDS: &[&str] = &["base", "based", "from", "transfer", "transferred", "using"];

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Found {
    pub value: Value,
    pub spans: Vec<String>,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct Extraction {
    /// Distinct values per entry, in order of appearance.
    pub values: BTreeMap<String, Vec<Found>>,
    /// Entries named for sweeping without values, with the naming span.
    pub swept: Vec<(String, String)>,
    pub bounds: BTreeMap<String, (f64, f64)>,
    /// Hardware entries named without a value.
    pub mentioned: Vec<(String, String)>,
    pub respectively: bool,
    pub prune_requested: bool,
    pub notes: Vec<String>,
}

impl Extraction {
    fn push(&mut self, name: &str, value: Value, span: &str) {
        let list = self.values.entry(name.to_string()).or_default();
        if list.iter().any(|f| f.value == value) {
            return;
        }
        list.push(Found {
            value,
            spans: vec![span.to_string()],
        });
    }

    fn push_spans(&mut self, name: &str, value: Value, spans: Vec<String>) {
        let list = self.values.entry(name.to_string()).or_default();
        if !list.iter().any(|f| f.value == value) {
            list.push(Found { value, spans });
        }
    }

    pub fn has(&self, name: &str) -> bool {
        self.values.get(name).is_some_and(|v| !v.is_empty())
    }

    /// Entries with more than one distinct value.
    pub fn multi_valued(&self) -> Vec<&str> {
        self.values
            .iter()
            .filter(|(_, v)| v.len() > 1)
            .map(|(k, _)| k.as_str())
            .collect()
    }
}

struct Ctx<'a> {
    text: &'a str,
    schema: &'a ParamSchema,
    category: RequestCategory,
    tokens: Vec<Token>,
    clause_of: Vec<usize>,
    clauses: Vec<(usize, usize)>,
    used: Vec<bool>,
    /// Parameter-name tokens already shared out by a coordinated run.
    coordinated: Vec<bool>,
}

impl Ctx<'_> {
    fn span(&self, i: usize) -> &str {
        &self.text[self.tokens[i].start..self.tokens[i].end]
    }

    fn span_range(&self, a: usize, b: usize) -> &str {
        &self.text[self.tokens[a].start..self.tokens[b].end]
    }

    fn entry(&self, i: usize) -> &SchemaEntry {
        &self.schema.entries[i]
    }

    fn clause(&self, i: usize) -> (usize, usize) {
        self.clauses[self.clause_of[i]]
    }

    /// True when token `j` names entry `e` by alias or keyword.
    fn hits(&self, j: usize, e: usize) -> bool {
        match &self.tokens[j].tok {
            Tok::Alias { entry } => *entry == e,
            Tok::Word(w) => self.entry(e).keywords.iter().any(|k| lexer_word_matches(w, k)),
            _ => false,
        }
    }
}

fn lexer_word_matches(word: &str, keyword: &str) -> bool {
    word == keyword || word.strip_suffix('s') == Some(keyword)
}

pub(crate) fn int_value(e: &SchemaEntry, value: f64, text: &str) -> Value {
    match e.kind {
        EntryKind::Decimal => Value::from(text),
        _ if value.fract() == 0.0 && value.abs() < 9.0e15 => Value::Int(value as i64),
        _ => Value::from(format!("{value}").as_str()),
    }
}

fn unit_of(t: &Tok) -> Option<Unit> {
    match t {
        Tok::Num { unit, .. } => *unit,
        _ => None,
    }
}

/// Runs of same-unit number tokens joined by commas/`and`/`or`, filtered by `keep`.
fn number_lists(tokens: &[Token], used: &[bool], keep: impl Fn(&Tok) -> bool) -> Vec<Vec<usize>> {
    let mut lists: Vec<Vec<usize>> = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    let mut gap_ok = false;
    for (i, t) in tokens.iter().enumerate() {
        let is_num = !used[i] && matches!(t.tok, Tok::Num { .. }) && keep(&t.tok);
        if is_num {
            let same_unit = cur.last().is_some_and(|&k| unit_of(&tokens[k].tok) == unit_of(&t.tok));
            if !cur.is_empty() && (!gap_ok || !same_unit) {
                lists.push(std::mem::take(&mut cur));
            }
            cur.push(i);
            gap_ok = false;
            continue;
        }
        let connector = t.tok == Tok::Comma || t.is_word(&["and", "or"]);
        if connector && !cur.is_empty() {
            gap_ok = true;
            continue;
        }
        if !cur.is_empty() {
            lists.push(std::mem::take(&mut cur));
        }
        gap_ok = false;
    }
    if !cur.is_empty() {
        lists.push(cur);
    }
    lists
}

pub(crate) fn extract(text: &str, schema: &ParamSchema, category: RequestCategory) -> Extraction {
    let tokens = lex(text, schema, category);
    let cl = clauses(&tokens);
    let mut clause_of = vec![0; tokens.len()];
    for (c, (a, b)) in cl.iter().enumerate() {
        for slot in &mut clause_of[*a..*b] {
            *slot = c;
        }
    }
    let n = tokens.len();
    let mut ctx = Ctx {
        text,
        schema,
        category,
        tokens,
        clause_of,
        clauses: cl,
        used: vec![false; n],
        coordinated: vec![false; n],
    };
    let mut out = Extraction {
        respectively: ctx.tokens.iter().any(|t| t.is_word(&["respectively"])),
        ..Default::default()
    };

    categorical_values(&mut ctx, &mut out);
    dims(&mut ctx, &mut out);
    let ranges = ranges(&mut ctx);
    unit_numbers(&mut ctx, &mut out);
    bare_numbers(&mut ctx, &mut out);
    flags(&mut ctx, &mut out);
    unknown_categoricals(&mut ctx, &mut out);
    if category.is_simulation() {
        sim_mode(&ctx, &mut out);
        sweeps(&mut ctx, &mut out, &ranges);
    }
    mentions(&ctx, &mut out);
    if category == RequestCategory::PpaOptimization {
        objective(&ctx, &mut out);
        prune_base(&ctx, &mut out);
        explore(&ctx, &mut out);
    }
    out
}

fn categorical_values(ctx: &mut Ctx, out: &mut Extraction) {
    for i in 0..ctx.tokens.len() {
        if let Tok::Value { entry, value } = &ctx.tokens[i].tok {
            let name = ctx.entry(*entry).name.clone();
            out.push(&name, value.clone(), ctx.span(i));
            ctx.used[i] = true;
        }
    }
}

fn dims(ctx: &mut Ctx, out: &mut Extraction) {
    for i in 0..ctx.tokens.len() {
        let Tok::Dims(r, c) = ctx.tokens[i].tok else { continue };
        let (a, b) = ctx.clause(i);
        let nearest = (a..b)
            .filter_map(|j| match ctx.tokens[j].tok {
                Tok::DimsAlias { rule } => Some((j.abs_diff(i), j > i, rule, j)),
                _ => None,
            })
            .min_by_key(|(d, after, _, _)| (*d, *after));
        let rule = match nearest {
            Some((_, _, rule, j)) => {
                ctx.used[j] = true;
                rule
            }
            None => {
                out.notes.push(format!(
                    "`{}` has no array named next to it; read as the ACIM subarray size",
                    ctx.span(i)
                ));
                0
            }
        };
        let Some(rule) = ctx.schema.dims.get(rule) else { continue };
        let span = ctx.span(i).to_string();
        let (rows, cols) = (rule.rows.clone(), rule.cols.clone());
        out.push(&rows, Value::Int(r), &span);
        out.push(&cols, Value::Int(c), &span);
        ctx.used[i] = true;
    }
}

struct Range {
    lo: f64,
    hi: f64,
    unit: Option<Unit>,
    clause: usize,
}

/// `from A to B` / `between A and B`.
fn ranges(ctx: &mut Ctx) -> Vec<Range> {
    let mut out = Vec::new();
    let t = &ctx.tokens;
    for i in 0..t.len().saturating_sub(3) {
        let joiner = match t[i].word() {
            Some("from") => "to",
            Some("between") => "and",
            _ => continue,
        };
        let (Tok::Num { value: lo, unit: u1, .. }, Tok::Num { value: hi, unit: u2, .. }) =
            (&t[i + 1].tok, &t[i + 3].tok)
        else {
            continue;
        };
        if !t[i + 2].is_word(&[joiner]) {
            continue;
        }
        out.push(Range {
            lo: lo.min(*hi),
            hi: lo.max(*hi),
            unit: u2.or(*u1),
            clause: ctx.clause_of[i],
        });
        ctx.used[i + 1] = true;
        ctx.used[i + 3] = true;
    }
    out
}

fn unit_numbers(ctx: &mut Ctx, out: &mut Extraction) {
    let lists = number_lists(&ctx.tokens, &ctx.used, |t| matches!(t, Tok::Num { unit: Some(_), .. }));
    for list in lists {
        let Tok::Num { unit: Some(unit), .. } = ctx.tokens[list[0]].tok else { continue };
        let candidates: Vec<usize> = ctx
            .schema
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| {
                e.applies(ctx.category) && !e.contextual && Unit::of_entry(e.unit.as_deref()) == Some(unit)
            })
            .map(|(i, _)| i)
            .collect();
        let (first, last) = (list[0], *list.last().expect("nonempty"));
        let (a, b) = ctx.clause(first);
        let assign = |ctx: &Ctx, out: &mut Extraction, e: usize, toks: &[usize]| {
            let entry = ctx.entry(e);
            for &k in toks {
                if let Tok::Num { value, text, .. } = &ctx.tokens[k].tok {
                    out.push(&entry.name, int_value(entry, *value, text), ctx.span(k));
                }
            }
        };
        for &k in &list {
            ctx.used[k] = true;
        }
        if candidates.is_empty() {
            out.notes.push(format!("`{}` does not belong to any parameter here; ignored", ctx.span_range(first, last)));
            continue;
        }
        if candidates.len() == 1 {
            assign(ctx, out, candidates[0], &list);
            continue;
        }
        // ordered pair such as off/on conductance
        if candidates.iter().all(|&c| ctx.entry(c).rank.is_some()) && list.len() == candidates.len() {
            let mut by_rank = candidates.clone();
            by_rank.sort_by_key(|&c| ctx.entry(c).rank);
            let mut by_value = list.clone();
            by_value.sort_by(|&x, &y| {
                let v = |k: usize| match ctx.tokens[k].tok {
                    Tok::Num { value, .. } => value,
                    _ => 0.0,
                };
                v(x).total_cmp(&v(y))
            });
            for (c, k) in by_rank.into_iter().zip(by_value) {
                assign(ctx, out, c, &[k]);
            }
            continue;
        }
        // `A and B for input and weight, respectively`
        if out.respectively && list.len() > 1 {
            let mut order: Vec<usize> = Vec::new();
            for j in last + 1..b {
                if let Some(&c) = candidates.iter().find(|&&c| ctx.hits(j, c)) {
                    if !order.contains(&c) {
                        order.push(c);
                    }
                }
            }
            if order.len() == list.len() {
                for (c, &k) in order.into_iter().zip(&list) {
                    assign(ctx, out, c, &[k]);
                }
                continue;
            }
        }
        // `8b for both input and weight`, `8-bit input and weight`,
        // `input and weight precision of 8 bit`
        let named = coordinated(ctx, &candidates, last + 1, b, true);
        let named = if named.len() >= 2 { named } else { coordinated(ctx, &candidates, first, a, false) };
        if named.len() >= 2 {
            for (c, k) in named {
                ctx.coordinated[k] = true;
                assign(ctx, out, c, &list);
            }
            continue;
        }
        let nearest = candidates
            .iter()
            .flat_map(|&c| {
                (a..b).filter(move |&j| j < first || j > last).map(move |j| (c, j))
            })
            .filter(|&(c, j)| ctx.hits(j, c))
            .map(|(c, j)| {
                let d = if j < first { first - j } else { j - last };
                (d, j > last, c)
            })
            .min();
        match nearest {
            Some((_, _, c)) => assign(ctx, out, c, &list),
            None => out.notes.push(format!(
                "could not tell which parameter `{}` refers to; ignored",
                ctx.span_range(first, last)
            )),
        }
    }
}

const COORD_SKIP: &[&str] = &["for", "both", "the", "of", "is", "are", "at", "with", "on"];
const COORD_JOIN: &[&str] = &["and", "or"];

/// Whether the name at `k` is directly followed by a number of its own
/// (`ADC precision 5bit`, `ADC precision of 5 bit`).
fn has_own_number(ctx: &Ctx, k: usize) -> bool {
    ctx.tokens[k + 1..]
        .iter()
        .find(|t| !(t.is_word(PRECISION_NOUNS) || t.is_word(&["of", "is", "at"])))
        .is_some_and(|t| matches!(t.tok, Tok::Num { .. }))
}

/// Candidates named in a coordinated run (`X and Y`) adjacent to a number
/// list, with the token naming each, scanning forward from `from` up to
/// `limit`, or backward from `from - 1` down to `limit`. The run ends at a
/// name that carries its own number or was shared out by an earlier run.
fn coordinated(ctx: &Ctx, candidates: &[usize], from: usize, limit: usize, forward: bool) -> Vec<(usize, usize)> {
    let mut named: Vec<(usize, usize)> = Vec::new();
    let mut j = from;
    let mut leading = true;
    loop {
        let k = if forward {
            if j >= limit {
                break;
            }
            j
        } else {
            if j <= limit {
                break;
            }
            j - 1
        };
        let t = &ctx.tokens[k];
        if let Some(&c) = candidates.iter().find(|&&c| ctx.hits(k, c)) {
            if ctx.coordinated[k] || (forward && has_own_number(ctx, k)) {
                break;
            }
            if !named.iter().any(|n| n.0 == c) {
                named.push((c, k));
            }
            leading = false;
        } else if t.tok == Tok::Comma || t.is_word(COORD_JOIN) || t.is_word(PRECISION_NOUNS) {
            if leading && !t.is_word(PRECISION_NOUNS) {
                break;
            }
        } else if !(leading && t.is_word(COORD_SKIP)) {
            break;
        }
        if forward {
            j += 1;
        } else {
            j -= 1;
        }
    }
    named
}

fn bare_numbers(ctx: &mut Ctx, out: &mut Extraction) {
    let lists = number_lists(&ctx.tokens, &ctx.used, |t| matches!(t, Tok::Num { unit: None, .. }));
    for list in lists {
        let (first, last) = (list[0], *list.last().expect("nonempty"));
        let (a, b) = ctx.clause(first);
        let mut target: Option<(Tok, usize)> = None;
        // `20 episodes`, `5 batches`
        if let Some(t @ Tok::Alias { .. }) = ctx.tokens.get(last + 1).map(|t| &t.tok) {
            if last + 1 < b {
                target = Some((t.clone(), last + 1));
            }
        }
        let mut j = if target.is_some() { a } else { first };
        let mut skipped = 0;
        while j > a && skipped <= 3 {
            j -= 1;
            match &ctx.tokens[j].tok {
                t @ (Tok::Alias { .. } | Tok::DimsAlias { .. }) => {
                    target = Some((t.clone(), j));
                    break;
                }
                Tok::Word(w) if LEFT_FILLERS.contains(&w.as_str()) => skipped += 1,
                _ => break,
            }
        }
        if target.is_none() {
            let mut j = last + 1;
            while j < b {
                match &ctx.tokens[j].tok {
                    t @ (Tok::Alias { .. } | Tok::DimsAlias { .. }) => {
                        target = Some((t.clone(), j));
                        break;
                    }
                    Tok::Word(w) if w == "the" => j += 1,
                    _ => break,
                }
            }
        }
        let names: Vec<usize> = match target {
            Some((Tok::Alias { entry }, j)) if ctx.entry(entry).is_numeric() => {
                ctx.used[j] = true;
                vec![entry]
            }
            Some((Tok::DimsAlias { rule }, j)) => {
                ctx.used[j] = true;
                let r = &ctx.schema.dims[rule];
                [&r.rows, &r.cols]
                    .iter()
                    .filter_map(|n| ctx.schema.entry_index(n))
                    .collect()
            }
            _ => continue,
        };
        for &k in &list {
            ctx.used[k] = true;
            let Tok::Num { value, text, .. } = &ctx.tokens[k].tok else { continue };
            for &e in &names {
                let entry = ctx.entry(e);
                out.push(&entry.name, int_value(entry, *value, text), ctx.span(k));
            }
        }
    }
}

fn flags(ctx: &mut Ctx, out: &mut Extraction) {
    for i in 0..ctx.tokens.len() {
        let Tok::Alias { entry } = ctx.tokens[i].tok else { continue };
        if ctx.used[i] {
            continue;
        }
        let e = ctx.entry(entry);
        let (a, b) = ctx.clause(i);
        let before = |words: &[&str]| (i.saturating_sub(2).max(a)..i).find(|&j| ctx.tokens[j].is_word(words));
        let value = match e.kind {
            EntryKind::Flag => {
                if let Some(j) = before(NEGATIONS) {
                    Some((0, j))
                } else if let Some(j) = before(ENABLERS) {
                    Some((1, j))
                } else {
                    // `weight duplication enabled`
                    (i + 1 < b && ctx.tokens[i + 1].is_word(ENABLERS)).then_some((1, i + 1))
                }
            }
            EntryKind::Integer if i > a && ctx.tokens[i - 1].is_word(&["no"]) => {
                e.admits(&Value::Int(0)).is_ok().then_some((0, i - 1))
            }
            _ => None,
        };
        if let Some((v, j)) = value {
            let name = e.name.clone();
            let span = ctx.span_range(j.min(i), j.max(i)).to_string();
            out.push(&name, Value::Int(v), &span);
            ctx.used[i] = true;
        }
    }
}

/// `<alias> is <Word>` where the word is not a known value: recorded verbatim
/// so that validation reports it.
fn unknown_categoricals(ctx: &mut Ctx, out: &mut Extraction) {
    for i in 0..ctx.tokens.len() {
        let Tok::Alias { entry } = ctx.tokens[i].tok else { continue };
        let e = ctx.entry(entry);
        if e.kind != EntryKind::Categorical || e.contextual || ctx.used[i] {
            continue;
        }
        let (a, b) = ctx.clause(i);
        let has_value = (a..b).any(|j| matches!(ctx.tokens[j].tok, Tok::Value { entry: x, .. } if x == entry));
        if has_value {
            continue;
        }
        let mut j = i + 1;
        while j < b && ctx.tokens[j].is_word(&["is", "are", "of", "as", "uses", "being", "be", "type"]) {
            j += 1;
        }
        if j == i + 1 || j >= b {
            continue;
        }
        if ctx.tokens[j].word().is_none() {
            continue;
        }
        let raw = ctx.span(j).to_string();
        if raw.chars().any(|c| c.is_ascii_uppercase()) {
            let name = e.name.clone();
            out.notes.push(format!("`{raw}` is not a known value of {name}"));
            out.push(&name, Value::from(raw.as_str()), &raw);
            ctx.used[i] = true;
        }
    }
}

fn sim_mode(ctx: &Ctx, out: &mut Extraction) {
    let Some(e) = ctx.schema.entry("simMode") else { return };
    if !e.applies(ctx.category) {
        return;
    }
    let mut ppa: Option<usize> = None;
    let mut acc: Option<usize> = None;
    for (i, t) in ctx.tokens.iter().enumerate() {
        let slot = match t.word() {
            Some("ppa") => &mut ppa,
            Some("accuracy") => &mut acc,
            _ => continue,
        };
        let negated = (i.saturating_sub(2)..i).any(|j| ctx.tokens[j].is_word(&["without", "no", "not"]));
        if !negated && slot.is_none() {
            *slot = Some(i);
        }
    }
    match (ppa, acc) {
        (Some(p), Some(a)) => out.push_spans(
            "simMode",
            Value::from("both"),
            vec![ctx.span(a.min(p)).to_string(), ctx.span(a.max(p)).to_string()],
        ),
        (Some(p), None) => out.push("simMode", Value::from("ppa"), ctx.span(p)),
        (None, Some(a)) => out.push("simMode", Value::from("accuracy"), ctx.span(a)),
        (None, None) => {}
    }
}

fn sweeps(ctx: &mut Ctx, out: &mut Extraction, ranges: &[Range]) {
    for (c, &(a, b)) in ctx.clauses.iter().enumerate() {
        let sweep_word = (a..b).any(|j| ctx.tokens[j].is_word(SWEEP_WORDS));
        let clause_ranges: Vec<&Range> = ranges.iter().filter(|r| r.clause == c).collect();
        if !sweep_word && clause_ranges.is_empty() {
            continue;
        }
        let precision_noun = (a..b).any(|j| ctx.tokens[j].is_word(PRECISION_NOUNS));
        let mut named: Vec<(usize, usize)> = Vec::new();
        for j in a..b {
            match ctx.tokens[j].tok {
                Tok::Alias { entry } if !ctx.used[j] => named.push((entry, j)),
                Tok::DimsAlias { rule } if !ctx.used[j] => {
                    let r = &ctx.schema.dims[rule];
                    for n in [&r.rows, &r.cols] {
                        if let Some(e) = ctx.schema.entry_index(n) {
                            named.push((e, j));
                        }
                    }
                }
                Tok::Word(_) if precision_noun => {
                    for (e, entry) in ctx.schema.entries.iter().enumerate() {
                        if entry.applies(ctx.category)
                            && Unit::of_entry(entry.unit.as_deref()) == Some(Unit::Bit)
                            && ctx.hits(j, e)
                        {
                            named.push((e, j));
                        }
                    }
                }
                _ => {}
            }
        }
        for (e, j) in named {
            let entry = &ctx.schema.entries[e];
            if out.has(&entry.name) || entry.sweep_values(None).is_none() {
                continue;
            }
            if out.swept.iter().any(|(n, _)| *n == entry.name) {
                continue;
            }
            let unit = Unit::of_entry(entry.unit.as_deref());
            if let Some(r) = clause_ranges.iter().find(|r| r.unit.is_none() || r.unit == unit) {
                out.bounds.insert(entry.name.clone(), (r.lo, r.hi));
            }
            out.swept.push((entry.name.clone(), ctx.span(j).to_string()));
        }
    }
}

fn mentions(ctx: &Ctx, out: &mut Extraction) {
    for (j, t) in ctx.tokens.iter().enumerate() {
        if ctx.used[j] {
            continue;
        }
        let names: Vec<&str> = match t.tok {
            Tok::Alias { entry } if ctx.entry(entry).hardware => vec![ctx.entry(entry).name.as_str()],
            Tok::DimsAlias { rule } => {
                let r = &ctx.schema.dims[rule];
                vec![r.rows.as_str(), r.cols.as_str()]
            }
            _ => continue,
        };
        for n in names {
            if !out.has(n) && !out.mentioned.iter().any(|(m, _)| m == n) {
                out.mentioned.push((n.to_string(), ctx.span(j).to_string()));
            }
        }
    }
}

fn phrase_hits(text: &str, entry: &SchemaEntry) -> Vec<(usize, usize, Value)> {
    let mut found: Vec<(usize, usize, Value)> = Vec::new();
    for v in &entry.values {
        for s in entry.spellings(v) {
            if let Some(re) = phrase_regex(&s) {
                found.extend(re.find_iter(text).map(|m| (m.start(), m.end(), v.clone())));
            }
        }
    }
    found.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));
    let mut kept: Vec<(usize, usize, Value)> = Vec::new();
    for f in found {
        if kept.iter().all(|k| f.1 <= k.0 || f.0 >= k.1) {
            kept.push(f);
        }
    }
    kept.sort_by_key(|k| k.0);
    kept
}

fn objective(ctx: &Ctx, out: &mut Extraction) {
    let (Some(obj), Some(dir)) = (ctx.schema.entry("objective"), ctx.schema.entry("direction")) else {
        return;
    };
    let metrics = phrase_hits(ctx.text, obj);
    let directions = phrase_hits(ctx.text, dir);
    let anchors = Regex::new(r"(?i)\b(optimi[sz]e|optimi[sz]ing|optimi[sz]es|best|objective|target|goal)\b")
        .expect("anchor regex");
    const GAP: usize = 24;
    for (ms, me, metric) in &metrics {
        let before = |end: usize| end <= *ms && ms - end <= GAP && !ctx.text[end..*ms].contains(['.', ';', ',']);
        if let Some((ds, de, d)) = directions.iter().rev().find(|(_, de, _)| before(*de)) {
            out.push("objective", metric.clone(), &ctx.text[*ms..*me]);
            out.push("direction", d.clone(), &ctx.text[*ds..*de]);
            return;
        }
        if anchors.find_iter(ctx.text).any(|m| before(m.end())) {
            out.push("objective", metric.clone(), &ctx.text[*ms..*me]);
            return;
        }
    }
}

fn prune_base(ctx: &Ctx, out: &mut Extraction) {
    if !ctx.tokens.iter().any(|t| t.is_word(PRUNE_WORDS)) {
        return;
    }
    out.prune_requested = true;
    let Some(model) = ctx.schema.entry_index("model") else { return };
    let base_alias = ctx.schema.entry_index("pruneBase");
    let mut base: Option<(usize, Value)> = None;
    for (i, t) in ctx.tokens.iter().enumerate() {
        let Tok::Value { entry, value } = &t.tok else { continue };
        if *entry != model {
            continue;
        }
        let lead = (i.saturating_sub(3)..i).any(|j| ctx.tokens[j].is_word(BASE_WORDS));
        let trail = (i + 1..(i + 4).min(ctx.tokens.len()))
            .any(|j| base_alias.is_some_and(|b| ctx.tokens[j].tok == Tok::Alias { entry: b }));
        if lead || trail {
            base = Some((i, value.clone()));
        }
    }
    let Some((i, value)) = base else {
        out.notes.push("pruning was requested but no base model was named".into());
        return;
    };
    let span = ctx.span(i).to_string();
    // the base model is not the target unless it is also named elsewhere
    let other = ctx
        .tokens
        .iter()
        .enumerate()
        .any(|(j, t)| j != i && matches!(&t.tok, Tok::Value { entry, value: v } if *entry == model && *v == value));
    if !other {
        if let Some(list) = out.values.get_mut("model") {
            list.retain(|f| f.value != value);
        }
    }
    out.push("pruneBase", value, &span);
}

fn explore(ctx: &Ctx, out: &mut Extraction) {
    if out.mentioned.is_empty() {
        return;
    }
    let Some(e) = ctx.schema.entry("explore") else { return };
    let names: Vec<String> = e
        .values
        .iter()
        .filter_map(|v| v.as_text())
        .filter(|n| out.mentioned.iter().any(|(m, _)| m == n))
        .map(str::to_string)
        .collect();
    let mut spans: Vec<String> = Vec::new();
    for (_, s) in &out.mentioned {
        if !spans.contains(s) {
            spans.push(s.clone());
        }
    }
    out.push_spans("explore", Value::from(names.join(",").as_str()), spans);
}

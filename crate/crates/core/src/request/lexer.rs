//! Normalized token stream over a request: categorical values and parameter
//! aliases are recognized as single tokens, numbers carry their unit
//! converted to the schema's base unit.

use regex::Regex;
use std::sync::OnceLock;

use super::schema::{EntryKind, ParamSchema};
use super::RequestCategory;
use crate::design_space::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Unit {
    Nm,
    Mm2,
    MilliWatt,
    MicroSiemens,
    Bit,
    Percent,
}

impl Unit {
    /// Unit named in a schema entry.
    pub fn of_entry(unit: Option<&str>) -> Option<Unit> {
        match unit?.to_ascii_lowercase().as_str() {
            "nm" => Some(Unit::Nm),
            "mm2" => Some(Unit::Mm2),
            "mw" => Some(Unit::MilliWatt),
            "us" => Some(Unit::MicroSiemens),
            "bit" => Some(Unit::Bit),
            "%" => Some(Unit::Percent),
            _ => None,
        }
    }

    /// Parses a written unit suffix into (unit, scale to base unit).
    fn parse(suffix: &str) -> Option<(Unit, f64)> {
        let s = suffix
            .to_lowercase()
            .replace('$', "")
            .replace('²', "2")
            .replace("^2", "2")
            .replace(['µ', 'μ'], "u");
        Some(match s.as_str() {
            "nm" => (Unit::Nm, 1.0),
            "mm2" => (Unit::Mm2, 1.0),
            "cm2" => (Unit::Mm2, 100.0),
            "um2" => (Unit::Mm2, 1e-6),
            "mw" => (Unit::MilliWatt, 1.0),
            "w" => (Unit::MilliWatt, 1000.0),
            "uw" => (Unit::MilliWatt, 1e-3),
            "us" => (Unit::MicroSiemens, 1.0),
            "b" | "bit" | "bits" => (Unit::Bit, 1.0),
            "%" => (Unit::Percent, 1.0),
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Tok {
    Word(String),
    Num { value: f64, text: String, unit: Option<Unit> },
    Dims(i64, i64),
    Comma,
    Stop,
    /// A categorical value of entry `entry`.
    Value { entry: usize, value: Value },
    /// An alias (or canonical name) of entry `entry`.
    Alias { entry: usize },
    /// An alias of dims rule `rule`.
    DimsAlias { rule: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn word(&self) -> Option<&str> {
        match &self.tok {
            Tok::Word(w) => Some(w),
            _ => None,
        }
    }

    pub fn is_word(&self, options: &[&str]) -> bool {
        self.word().is_some_and(|w| options.contains(&w))
    }
}

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?ix)
            (?P<dims>(?P<d1>\d+)\s*[x×*]\s*(?P<d2>\d+)\b)
            | (?P<num>\d+(?:\.\d+)?)
              (?:\s*-?\s*
                (?: (?P<unit>nm|mm2|cm2|um2|µm2|μm2|mw|uw|µw|μw|w|us|µs|μs|bits|bit|b)\b
                  | (?P<sunit>mm²|cm²|um²|µm²|μm²|mm\^2|cm\^2|mm\$\^2\$|cm\$\^2\$|%)
                )
              )?
            | (?P<word>[a-z]+)
            | (?P<comma>,)
            | (?P<stop>[.;!?](?:\s|$)|\n)
            ",
        )
        .expect("token regex")
    })
}

/// Splits a phrase into alphanumeric chunks, also at letter/digit boundaries.
fn chunks(phrase: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut cur = String::new();
    let mut prev_digit: Option<bool> = None;
    for c in phrase.chars() {
        if !c.is_alphanumeric() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            prev_digit = None;
            continue;
        }
        let d = c.is_ascii_digit();
        if prev_digit.is_some_and(|p| p != d) && !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        cur.push(c);
        prev_digit = Some(d);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Regex matching a phrase with optional separators between its chunks;
/// short all-caps acronyms match case-sensitively.
pub(crate) fn phrase_regex(phrase: &str) -> Option<Regex> {
    let parts = chunks(phrase);
    if parts.is_empty() {
        return None;
    }
    let acronym = phrase.len() <= 3 && phrase.chars().all(|c| c.is_ascii_uppercase());
    let body = parts
        .iter()
        .map(|p| regex::escape(p))
        .collect::<Vec<_>>()
        .join(r"[-\s_/]?");
    let flags = if acronym { "" } else { "(?i)" };
    Regex::new(&format!(r"{flags}\b{body}\b")).ok()
}

/// Lowercased words of an alias phrase.
pub(crate) fn phrase_words(phrase: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"[A-Za-z]+").expect("word regex"));
    re.find_iter(phrase).map(|m| m.as_str().to_ascii_lowercase()).collect()
}

fn word_matches(word: &str, alias: &str) -> bool {
    if word == alias {
        return true;
    }
    if let Some(stem) = word.strip_suffix("es") {
        if stem == alias {
            return true;
        }
    }
    if let Some(stem) = word.strip_suffix('s') {
        if stem == alias {
            return true;
        }
    }
    match (word.strip_suffix("ies"), alias.strip_suffix('y')) {
        (Some(a), Some(b)) => a == b,
        _ => false,
    }
}

/// Categorical value occurrences `(start, end, entry, value)` for entries applicable
/// to `category`, longest match first and non-overlapping.
pub(crate) fn value_matches(
    text: &str,
    schema: &ParamSchema,
    category: RequestCategory,
) -> Vec<(usize, usize, usize, Value)> {
    let mut found = Vec::new();
    for (i, e) in schema.entries.iter().enumerate() {
        if !e.applies(category) || e.contextual || e.kind != EntryKind::Categorical {
            continue;
        }
        for v in &e.values {
            for spelling in e.spellings(v) {
                if let Some(re) = phrase_regex(&spelling) {
                    for m in re.find_iter(text) {
                        found.push((m.start(), m.end(), i, v.clone()));
                    }
                }
            }
        }
    }
    select_non_overlapping(found)
}

fn select_non_overlapping(mut found: Vec<(usize, usize, usize, Value)>) -> Vec<(usize, usize, usize, Value)> {
    found.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));
    let mut kept: Vec<(usize, usize, usize, Value)> = Vec::new();
    for f in found {
        if kept.iter().all(|k| f.1 <= k.0 || f.0 >= k.1) {
            kept.push(f);
        }
    }
    kept.sort_by_key(|k| k.0);
    kept
}

fn lex_segment(text: &str, offset: usize, out: &mut Vec<Token>) {
    for c in token_regex().captures_iter(text) {
        let m = c.get(0).expect("whole match");
        let (start, end) = (offset + m.start(), offset + m.end());
        let tok = if c.name("dims").is_some() {
            let a = c["d1"].parse().unwrap_or(0);
            let b = c["d2"].parse().unwrap_or(0);
            Tok::Dims(a, b)
        } else if let Some(n) = c.name("num") {
            let raw: f64 = n.as_str().parse().unwrap_or(0.0);
            let suffix = c.name("unit").or_else(|| c.name("sunit"));
            match suffix.and_then(|s| Unit::parse(s.as_str())) {
                Some((unit, scale)) => Tok::Num {
                    value: raw * scale,
                    text: n.as_str().to_string(),
                    unit: Some(unit),
                },
                None => Tok::Num {
                    value: raw,
                    text: n.as_str().to_string(),
                    unit: None,
                },
            }
        } else if let Some(w) = c.name("word") {
            Tok::Word(w.as_str().to_ascii_lowercase())
        } else if c.name("comma").is_some() {
            Tok::Comma
        } else {
            Tok::Stop
        };
        out.push(Token { tok, start, end });
    }
}

/// Replaces alias word sequences with alias tokens (longest alias first).
fn merge_aliases(tokens: Vec<Token>, schema: &ParamSchema, category: RequestCategory) -> Vec<Token> {
    let mut phrases: Vec<(Vec<String>, Tok)> = Vec::new();
    for (i, e) in schema.entries.iter().enumerate() {
        if !e.applies(category) {
            continue;
        }
        for a in std::iter::once(&e.name).chain(&e.aliases) {
            phrases.push((phrase_words(a), Tok::Alias { entry: i }));
        }
    }
    for (r, rule) in schema.dims.iter().enumerate() {
        for a in &rule.aliases {
            phrases.push((phrase_words(a), Tok::DimsAlias { rule: r }));
        }
    }
    phrases.retain(|(w, _)| !w.is_empty());
    phrases.sort_by_key(|p| std::cmp::Reverse(p.0.len()));

    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        let hit = phrases.iter().find(|(words, _)| {
            words.len() <= tokens.len() - i
                && words
                    .iter()
                    .zip(&tokens[i..])
                    .all(|(a, t)| t.word().is_some_and(|w| word_matches(w, a)))
        });
        match hit {
            Some((words, tok)) => {
                let n = words.len();
                out.push(Token {
                    tok: tok.clone(),
                    start: tokens[i].start,
                    end: tokens[i + n - 1].end,
                });
                i += n;
            }
            None => {
                out.push(tokens[i].clone());
                i += 1;
            }
        }
    }
    out
}

/// Tokenizes a request for the entries applicable to `category`.
pub(crate) fn lex(text: &str, schema: &ParamSchema, category: RequestCategory) -> Vec<Token> {
    let values = value_matches(text, schema, category);
    let mut tokens = Vec::new();
    let mut pos = 0;
    for (start, end, entry, value) in values {
        lex_segment(&text[pos..start], pos, &mut tokens);
        tokens.push(Token {
            tok: Tok::Value { entry, value },
            start,
            end,
        });
        pos = end;
    }
    lex_segment(&text[pos..], pos, &mut tokens);
    let mut tokens = merge_aliases(tokens, schema, category);
    inherit_units(&mut tokens);
    tokens
}

/// A bare number in a list ending in a number with a unit takes that unit
/// (`5, 6 and 7 bit`).
fn inherit_units(tokens: &mut [Token]) {
    let mut pending: Option<(Unit, f64)> = None;
    for t in tokens.iter_mut().rev() {
        match &mut t.tok {
            Tok::Num {
                unit: Some(u),
                value,
                text,
            } => {
                let raw: f64 = text.parse().unwrap_or(*value);
                let scale = if raw == 0.0 { 1.0 } else { *value / raw };
                pending = Some((*u, scale));
            }
            Tok::Num { unit, value, .. } => {
                if let Some((p, scale)) = pending {
                    *unit = Some(p);
                    *value *= scale;
                }
            }
            Tok::Comma => {}
            Tok::Word(w) if w == "and" || w == "or" => {}
            _ => pending = None,
        }
    }
}

/// Clause boundaries: `(start, end)` token index ranges between stops.
pub(crate) fn clauses(tokens: &[Token]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        if t.tok == Tok::Stop {
            if i > start {
                out.push((start, i));
            }
            start = i + 1;
        }
    }
    if start < tokens.len() {
        out.push((start, tokens.len()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(text: &str) -> Vec<Tok> {
        lex(text, &ParamSchema::builtin(), RequestCategory::SingleCall)
            .into_iter()
            .map(|t| t.tok)
            .collect()
    }

    #[test]
    fn units_and_dims() {
        let t = toks("22nm RRAM 128x128, 7bit 8-bit 25uS");
        assert!(matches!(t[0], Tok::Num { value, unit: Some(Unit::Nm), .. } if value == 22.0));
        assert!(matches!(t[1], Tok::Value { .. }));
        assert_eq!(t[2], Tok::Dims(128, 128));
        assert_eq!(t[3], Tok::Comma);
        assert!(matches!(t[4], Tok::Num { unit: Some(Unit::Bit), .. }));
        assert!(matches!(t[5], Tok::Num { value, unit: Some(Unit::Bit), .. } if value == 8.0));
        assert!(matches!(t[6], Tok::Num { unit: Some(Unit::MicroSiemens), .. }));
    }

    #[test]
    fn area_units_convert_to_mm2() {
        let s = ParamSchema::builtin();
        let t = lex("within 25 cm² or 3600mm$^2$", &s, RequestCategory::PpaOptimization);
        let vals: Vec<f64> = t
            .iter()
            .filter_map(|t| match t.tok {
                Tok::Num { value, unit: Some(Unit::Mm2), .. } => Some(value),
                _ => None,
            })
            .collect();
        assert_eq!(vals, [2500.0, 3600.0]);
    }

    #[test]
    fn model_names_are_not_numbers() {
        let t = toks("VGG8 on CIFAR-10 and ResNet-50");
        assert_eq!(t.iter().filter(|t| matches!(t, Tok::Value { .. })).count(), 3);
        assert!(!t.iter().any(|t| matches!(t, Tok::Num { .. })));
    }

    #[test]
    fn cifar10_does_not_match_cifar100() {
        let s = ParamSchema::builtin();
        let m = value_matches("CIFAR-100", &s, RequestCategory::SingleCall);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].3, Value::from("CIFAR-100"));
    }

    #[test]
    fn unit_inherited_across_list() {
        let t = toks("5, 6 and 7 bit");
        let units: Vec<Option<Unit>> = t
            .iter()
            .filter_map(|t| match t {
                Tok::Num { unit, .. } => Some(*unit),
                _ => None,
            })
            .collect();
        assert_eq!(units, [Some(Unit::Bit); 3]);
    }

    #[test]
    fn batches_is_not_a_bit_suffix() {
        let t = toks("Run 5 batches");
        assert!(matches!(t[1], Tok::Num { unit: None, .. }));
        assert!(matches!(t[2], Tok::Alias { .. }));
    }

    #[test]
    fn longest_alias_wins() {
        let s = ParamSchema::builtin();
        let t = lex("8 columns per ADC", &s, RequestCategory::SingleCall);
        let mux = s.entry_index("muxColADC").unwrap();
        assert_eq!(t[1].tok, Tok::Alias { entry: mux });
        assert_eq!(t.len(), 2);
    }
}

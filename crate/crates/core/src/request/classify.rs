//! Ordered decision rules for the request category.

use super::extract::extract;
use super::lexer::{phrase_words, value_matches};
use super::schema::ParamSchema;
use super::{Classification, RequestCategory};

const OPT_STEMS: &[&str] = &["optimi", "minimi", "maximi", "constrain"];
const OPT_WORDS: &[&str] = &["minimum", "maximum", "lowest", "highest"];
const SIM_VERBS: &[&str] = &[
    "simulate", "simulation", "simulations", "evaluate", "estimate", "estimation", "run", "check", "measure",
];

pub(crate) const CLARIFICATION: &str = "I could not tell what to run. Please name the DNN model and the \
hardware parameters to simulate (for example device, subarray size and ADC precision), or state an \
optimization goal with its constraints and search algorithm.";

pub(crate) fn classify(text: &str, schema: &ParamSchema) -> Classification {
    let words = phrase_words(text);
    let opt_word = words
        .iter()
        .find(|w| OPT_STEMS.iter().any(|s| w.starts_with(s)) || OPT_WORDS.contains(&w.as_str()));
    let algorithm = schema.entry_index("algorithm").and_then(|a| {
        value_matches(text, schema, RequestCategory::PpaOptimization)
            .into_iter()
            .find(|m| m.2 == a)
            .map(|m| text[m.0..m.1].to_string())
    });
    if opt_word.is_some() || algorithm.is_some() {
        let mut why = Vec::new();
        if let Some(w) = opt_word {
            why.push(format!("optimization keyword `{w}`"));
        }
        if let Some(a) = algorithm {
            why.push(format!("search algorithm `{a}`"));
        }
        return Classification {
            category: RequestCategory::PpaOptimization,
            rationale: why.join(" and "),
            clarification: None,
        };
    }

    let ext = extract(text, schema, RequestCategory::TestbenchAutoDesign);
    let multi = ext.multi_valued();
    if !multi.is_empty() {
        let detail: Vec<String> = multi
            .iter()
            .map(|n| {
                let vals: Vec<String> = ext.values[*n].iter().map(|f| f.value.to_string()).collect();
                format!("{n} = {}", vals.join(", "))
            })
            .collect();
        return Classification {
            category: RequestCategory::MultipleCall,
            rationale: format!("several explicit values: {}", detail.join("; ")),
            clarification: None,
        };
    }
    if !ext.swept.is_empty() {
        let named: Vec<String> = ext.swept.iter().map(|(n, s)| format!("{n} (`{s}`)")).collect();
        return Classification {
            category: RequestCategory::TestbenchAutoDesign,
            rationale: format!("named for sweeping without values: {}", named.join(", ")),
            clarification: None,
        };
    }
    let verb = words.iter().any(|w| SIM_VERBS.contains(&w.as_str()));
    if ext.has("model") || (verb && !ext.values.is_empty()) {
        return Classification {
            category: RequestCategory::SingleCall,
            rationale: format!(
                "one configuration with {} parameter(s) given",
                ext.values.len()
            ),
            clarification: None,
        };
    }
    Classification {
        category: RequestCategory::Unknown,
        rationale: "no model, parameter values or optimization goal found".into(),
        clarification: Some(CLARIFICATION.into()),
    }
}

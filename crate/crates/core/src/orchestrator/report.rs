//! Plain-text system turns.

use std::fmt::Write;

use crate::request::{Classification, Location, ParsedRequest};

pub(crate) fn parse_report(c: &Classification, p: &ParsedRequest) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Request type: {} ({}).", c.category.label(), c.rationale);
    if !p.testbenches.is_empty() && p.testbenches.iter().any(|t| !t.is_empty()) {
        let _ = writeln!(s, "Specialized parameters:");
        for (i, tb) in p.testbenches.iter().enumerate() {
            let items: Vec<String> = tb.iter().map(|(k, v)| format!("{k}={}", v.value)).collect();
            let _ = writeln!(s, "  testbench {}: {}", i + 1, items.join(", "));
        }
    }
    if !p.common_params.is_empty() {
        let items: Vec<String> = p.common_params.iter().map(|(k, v)| format!("{k}={}", v.value)).collect();
        let _ = writeln!(s, "Common parameters: {}", items.join(", "));
    }
    if !p.missing.is_empty() {
        let _ = writeln!(s, "Missing:");
        for m in &p.missing {
            let _ = writeln!(s, "  {} ({})", m.name, loc(m.location));
        }
    }
    if !p.invalid.is_empty() {
        let _ = writeln!(s, "Invalid:");
        for x in &p.invalid {
            let _ = writeln!(s, "  {} = {} ({}): {}", x.name, x.value, loc(x.location), x.reason);
        }
    }
    for n in &p.notes {
        let _ = writeln!(s, "Note: {n}");
    }
    if p.is_ready() {
        s.push_str("Confirm to run, or send adjustments.");
    } else {
        s.push_str("Provide the missing values, or ask to use the defaults.");
    }
    s
}

fn loc(l: Location) -> String {
    l.to_string()
}

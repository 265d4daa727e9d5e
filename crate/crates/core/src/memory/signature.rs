//! Normalization of raw error text into comparable failure signatures.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureCategory {
    Dependency,
    Script,
    Environment,
    Resource,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FailureSignature {
    pub normalized_message: String,
    pub category: FailureCategory,
}

struct Patterns {
    timestamp: Regex,
    clock: Regex,
    hex: Regex,
    path: Regex,
    line_no: Regex,
    path_suffix: Regex,
    space: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        timestamp: Regex::new(
            r"\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}:\d{2}(?:[.,]\d+)?(?:Z|[+-]\d{2}:?\d{2})?",
        )
        .unwrap(),
        clock: Regex::new(r"\b\d{2}:\d{2}:\d{2}(?:[.,]\d+)?\b").unwrap(),
        hex: Regex::new(r"\b0[xX][0-9a-fA-F]+\b").unwrap(),
        path: Regex::new(r#"(^|[\s"'(=\[,])(?:[A-Za-z]:)?(?:[/\\][\w.\-@+~]+)+[/\\]?"#).unwrap(),
        line_no: Regex::new(r"(?i)\bline \d+").unwrap(),
        path_suffix: Regex::new(r"<path>(?::\d+)+").unwrap(),
        space: Regex::new(r"\s+").unwrap(),
    })
}

const RESOURCE_TERMS: &[&str] = &[
    "out of memory",
    "outofmemory",
    "memoryerror",
    "oomkill",
    "resource exhausted",
    "timeout",
    "timed out",
    "deadline exceeded",
    "killed",
];
const DEPENDENCY_TERMS: &[&str] = &[
    "modulenotfounderror",
    "importerror",
    "no module named",
    "cannot import",
    "package",
    "pip ",
    "dependency",
    "version conflict",
    "requirement",
];
const ENVIRONMENT_TERMS: &[&str] = &[
    "environment",
    "conda",
    "activate",
    "venv",
    "env var",
    "not set",
    "driver",
    "permission denied",
];

fn classify(message: &str) -> FailureCategory {
    let lower = message.to_lowercase();
    let hit = |terms: &[&str]| terms.iter().any(|t| lower.contains(t));
    if hit(RESOURCE_TERMS) {
        FailureCategory::Resource
    } else if hit(DEPENDENCY_TERMS) {
        FailureCategory::Dependency
    } else if hit(ENVIRONMENT_TERMS) {
        FailureCategory::Environment
    } else {
        FailureCategory::Script
    }
}

/// Strips run-specific noise (absolute paths, hex addresses, timestamps,
/// line numbers), collapses whitespace and classifies by keyword.
pub fn normalize_error(raw: &str) -> FailureSignature {
    let p = patterns();
    let s = p.timestamp.replace_all(raw, "<ts>");
    let s = p.clock.replace_all(&s, "<ts>");
    let s = p.hex.replace_all(&s, "<addr>");
    let s = p.path.replace_all(&s, "${1}<path>");
    let s = p.path_suffix.replace_all(&s, "<path>");
    let s = p.line_no.replace_all(&s, "line <n>");
    let s = p.space.replace_all(&s, " ");
    let mut message = s.trim().to_owned();
    if message.is_empty() {
        message = "<empty>".to_owned();
    }
    FailureSignature {
        category: classify(&message),
        normalized_message: message,
    }
}

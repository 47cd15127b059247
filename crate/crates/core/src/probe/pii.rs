//! PII and model-pinning heuristics run over trace text inside a probe.
//!
//! Only counts leave this module. Patterns:
//! - email: `local@domain.tld`
//! - TFN: a run of exactly nine digits (spaces or hyphens allowed between
//!   digits, no leading `+`) whose weighted checksum is divisible by 11
//! - phone: any other run of 8 to 12 digits, optionally led by `+`
//! - full name: two adjacent capitalised alphabetic tokens where the first
//!   does not start a sentence, plus email local parts shaped `first.last`

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::sim::fixture::TraceRecord;

static EMAIL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)[a-z0-9._%+-]+@[a-z0-9-]+(?:\.[a-z0-9-]+)*\.[a-z]{2,}").unwrap()
});
static EMAIL_NAME_LOCAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[A-Za-z]{2,}\.[A-Za-z]{2,}$").unwrap());
static DIGIT_RUN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\+?\d(?:[ -]?\d)*").unwrap());
static CAPITALISED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[A-Z][a-z]+$").unwrap());
static DATE_PIN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\d{8}|\d{4}-\d{2}-\d{2}").unwrap());
static VERSION_PIN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:-v\d+(?:\.\d+)*|:\d+|@\d+(?:\.\d+)*)(?:$|[-:.])").unwrap());

const TFN_WEIGHTS: [u32; 9] = [1, 4, 3, 7, 5, 8, 6, 9, 10];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternCounts {
    pub email_count: u32,
    pub tfn_count: u32,
    pub phone_count: u32,
    pub name_count: u32,
}

impl PatternCounts {
    pub fn total(&self) -> u32 {
        self.email_count + self.tfn_count + self.phone_count + self.name_count
    }

    pub fn as_tuple(&self) -> (u32, u32, u32, u32) {
        (self.email_count, self.tfn_count, self.phone_count, self.name_count)
    }
}

impl std::ops::AddAssign for PatternCounts {
    fn add_assign(&mut self, o: Self) {
        self.email_count += o.email_count;
        self.tfn_count += o.tfn_count;
        self.phone_count += o.phone_count;
        self.name_count += o.name_count;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PiiReport {
    pub counts: PatternCounts,
    pub unpinned_model_refs: Vec<String>,
}

pub fn tfn_checksum_ok(digits: &[u32]) -> bool {
    digits.len() == 9
        && digits
            .iter()
            .zip(TFN_WEIGHTS)
            .map(|(d, w)| d * w)
            .sum::<u32>()
            % 11
            == 0
}

fn is_sentence_end(token: &str) -> bool {
    token.ends_with(['.', '!', '?'])
}

fn strip_trailing_punct(token: &str) -> &str {
    token.trim_end_matches(['.', ',', ';', ':', '!', '?', ')', '"', '\''])
}

/// Counts patterns in one text.
pub fn scan_text(text: &str) -> PatternCounts {
    let mut counts = PatternCounts::default();

    // Emails first; their spans are blanked so digits and names inside an
    // address are not counted twice.
    let mut blanked = String::with_capacity(text.len());
    let mut last = 0;
    for m in EMAIL.find_iter(text) {
        counts.email_count += 1;
        let local = m.as_str().split('@').next().unwrap_or("");
        if EMAIL_NAME_LOCAL.is_match(local) {
            counts.name_count += 1;
        }
        blanked.push_str(&text[last..m.start()]);
        blanked.push(' ');
        last = m.end();
    }
    blanked.push_str(&text[last..]);

    let bytes = blanked.as_bytes();
    for m in DIGIT_RUN.find_iter(&blanked) {
        let before_ok = m.start() == 0 || !(bytes[m.start() - 1] as char).is_ascii_alphanumeric();
        let after_ok = m.end() == bytes.len() || !(bytes[m.end()] as char).is_ascii_alphanumeric();
        if !before_ok || !after_ok {
            continue;
        }
        let digits: Vec<u32> = m.as_str().chars().filter_map(|c| c.to_digit(10)).collect();
        let plus = m.as_str().starts_with('+');
        if !plus && tfn_checksum_ok(&digits) {
            counts.tfn_count += 1;
        } else if (8..=12).contains(&digits.len()) {
            counts.phone_count += 1;
        }
    }

    let tokens: Vec<&str> = blanked.split_whitespace().collect();
    let mut i = 0;
    while i + 1 < tokens.len() {
        let sentence_start = i == 0 || is_sentence_end(tokens[i - 1]);
        if !sentence_start
            && CAPITALISED.is_match(tokens[i])
            && CAPITALISED.is_match(strip_trailing_punct(tokens[i + 1]))
        {
            counts.name_count += 1;
            i += 2;
        } else {
            i += 1;
        }
    }
    counts
}

/// Counts patterns across many texts.
pub fn scan_texts(texts: &[&str]) -> PatternCounts {
    let mut total = PatternCounts::default();
    for t in texts {
        total += scan_text(t);
    }
    total
}

/// A reference is unpinned if it is a `-latest` alias or carries neither a
/// date nor an explicit version suffix.
pub fn is_unpinned(model_ref: &str) -> bool {
    model_ref.ends_with("-latest") || !(DATE_PIN.is_match(model_ref) || VERSION_PIN.is_match(model_ref))
}

/// Sorted, de-duplicated unpinned references.
pub fn unpinned_refs<'a>(refs: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = refs
        .into_iter()
        .filter(|r| is_unpinned(r))
        .map(str::to_string)
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Runs the heuristics over the traces of projects that do not scrub PII
/// from their logs. Scrubbed traces are skipped.
pub fn run_pii_heuristics(traces: &[TraceRecord]) -> PiiReport {
    let scanned: Vec<&TraceRecord> = traces.iter().filter(|t| !t.pii_scrubbing_in_logs).collect();
    let texts: Vec<&str> = scanned.iter().map(|t| t.logged_text.as_str()).collect();
    PiiReport {
        counts: scan_texts(&texts),
        unpinned_model_refs: unpinned_refs(scanned.iter().map(|t| t.model_ref.as_str())),
    }
}

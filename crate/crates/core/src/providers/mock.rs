//! Deterministic offline providers.
//!
//! [`MockEmbedder`] hashes word unigrams and bigrams into buckets, so texts
//! sharing tokens have higher cosine similarity. [`MockChat`] answers each
//! prompt step with a small rule-based heuristic, unless a fixture rule
//! matches first. Both are pure functions of their inputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChatProvider, ChatRequest, EmbeddingProvider, EmbeddingVector, ProviderError};
use crate::answer::{FACTS_HEADER, PASSAGES_HEADER, QUESTION_HEADER};
use crate::error::{Error, Result};
use crate::prompts::task_of;
use crate::text::word_tokens;

pub const MOCK_EMBED_MODEL: &str = "mock-embed-v1";
pub const MOCK_CHAT_MODEL: &str = "mock-chat-v1";
pub const MIN_MOCK_DIM: usize = 8;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer spreads the low bits used for bucketing
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Unit-norm bag-of-ngrams embedding.
///
/// Panics if `dim < 8`.
pub fn mock_embed(text: &str, dim: usize, seed: u64) -> EmbeddingVector {
    assert!(dim >= MIN_MOCK_DIM, "mock embedding dim must be at least {MIN_MOCK_DIM}");
    let tokens = word_tokens(text);
    let mut values = vec![0.0f64; dim];
    let mut bump = |feature: &str| {
        let bucket = (fnv1a(seed, feature.as_bytes()) % dim as u64) as usize;
        values[bucket] += 1.0;
    };
    if tokens.is_empty() {
        bump(&format!("raw:{}", text.trim()));
    }
    for t in &tokens {
        bump(&format!("u:{t}"));
    }
    for pair in tokens.windows(2) {
        bump(&format!("b:{} {}", pair[0], pair[1]));
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut values {
        *v /= norm;
    }
    EmbeddingVector::new(values).expect("finite by construction")
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockEmbedder {
    dim: usize,
    seed: u64,
}

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64) -> std::result::Result<Self, ProviderError> {
        if dim < MIN_MOCK_DIM {
            return Err(ProviderError::InvalidInput(format!(
                "mock embedding dim {dim} is below {MIN_MOCK_DIM}"
            )));
        }
        Ok(Self { dim, seed })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn model_id(&self) -> &str {
        MOCK_EMBED_MODEL
    }

    fn embed(&self, texts: &[String]) -> std::result::Result<Vec<EmbeddingVector>, ProviderError> {
        Ok(texts.iter().map(|t| mock_embed(t, self.dim, self.seed)).collect())
    }
}

/// A canned response. A rule matches when its `task` (if set) equals the
/// request's task and `user_text` contains `contains`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureRule {
    #[serde(default)]
    pub task: Option<String>,
    pub contains: String,
    pub response: String,
}

#[derive(Debug, Clone, Default)]
pub struct MockChat {
    rules: Vec<FixtureRule>,
}

impl MockChat {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_rules(rules: Vec<FixtureRule>) -> Self {
        Self { rules }
    }

    pub fn rule(mut self, task: Option<&str>, contains: &str, response: &str) -> Self {
        self.rules.push(FixtureRule {
            task: task.map(str::to_owned),
            contains: contains.into(),
            response: response.into(),
        });
        self
    }

    /// Loads a JSON array of [`FixtureRule`]s.
    pub fn from_fixture_file(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io("reading mock fixtures", path, e))?;
        let rules: Vec<FixtureRule> = serde_json::from_str(&src).map_err(|e| Error::Malformed {
            stage: "mock fixtures",
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        Ok(Self { rules })
    }

    fn respond(&self, req: &ChatRequest) -> String {
        let task = task_of(&req.system_text);
        let hit = self.rules.iter().find(|r| {
            r.task.as_deref().is_none_or(|t| Some(t) == task) && req.user_text.contains(&r.contains)
        });
        if let Some(rule) = hit {
            return rule.response.clone();
        }
        match task {
            Some("entity-extraction") => heuristic_entities(&req.user_text),
            Some("triple-extraction") => heuristic_triples(&req.user_text),
            Some("fact-gate") => heuristic_gate(&req.user_text),
            Some("answer") => heuristic_answer(&req.user_text),
            _ => format!("echo: {}", req.user_text.lines().next().unwrap_or_default()),
        }
    }
}

impl ChatProvider for MockChat {
    fn model_id(&self) -> &str {
        MOCK_CHAT_MODEL
    }

    fn complete(&self, req: &ChatRequest) -> std::result::Result<String, ProviderError> {
        Ok(self.respond(req))
    }
}

fn section_after<'a>(text: &'a str, label: &str) -> &'a str {
    match text.find(label) {
        Some(i) => &text[i + label.len()..],
        None => "",
    }
}

fn line_value<'a>(text: &'a str, label: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(label)).map(str::trim)
}

const SPAN_STOPWORDS: &[&str] = &[
    "A", "An", "The", "In", "On", "At", "It", "He", "She", "They", "His", "Her", "Its", "Their", "This", "That",
    "These", "Those", "There", "After", "Before", "During", "When", "While", "Although", "As", "By", "For",
    "From", "With", "Of", "To", "And", "But", "Or", "If", "Since", "Both", "Which", "What", "Who", "Where",
];

/// Maximal runs of capitalized words, allowing inner "of"/"de"/"the".
fn capitalized_spans(text: &str) -> Vec<String> {
    let mut spans = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut pending_connector: Option<&str> = None;

    let flush = |current: &mut Vec<&str>, spans: &mut Vec<String>| {
        if current.len() == 1 && SPAN_STOPWORDS.contains(&current[0]) {
            current.clear();
        }
        if !current.is_empty() {
            spans.push(current.join(" "));
            current.clear();
        }
    };

    for raw in text.split_whitespace() {
        let word = raw.trim_matches(|c: char| !c.is_alphanumeric());
        let ends_clause = raw.ends_with([',', '.', ';', ':', '!', '?', ')']);
        let capitalized = word.chars().next().is_some_and(|c| c.is_uppercase());
        if capitalized {
            if current.len() == 1 && SPAN_STOPWORDS.contains(&current[0]) {
                current.clear();
            }
            if let Some(conn) = pending_connector.take() {
                current.push(conn);
            }
            current.push(word);
        } else if !current.is_empty() && pending_connector.is_none() && matches!(word, "of" | "de" | "the") && !ends_clause {
            pending_connector = Some(word);
            continue;
        } else {
            pending_connector = None;
            flush(&mut current, &mut spans);
        }
        if ends_clause {
            pending_connector = None;
            flush(&mut current, &mut spans);
        }
    }
    flush(&mut current, &mut spans);
    spans
}

fn heuristic_entities(user: &str) -> String {
    let passage = section_after(user, "Passage:\n");
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for span in capitalized_spans(passage) {
        if seen.insert(span.to_lowercase()) {
            out.push(span);
        }
    }
    if out.is_empty() {
        "none".into()
    } else {
        out.join("; ")
    }
}

fn heuristic_triples(user: &str) -> String {
    let entities: Vec<String> = line_value(user, "Entities:")
        .unwrap_or_default()
        .split(';')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    let passage = section_after(user, "Passage:\n");
    let mut lines = Vec::new();
    for sentence in passage.split_inclusive(['.', '!', '?']) {
        let lower = sentence.to_lowercase();
        // non-overlapping occurrences, longer names first
        let mut names: Vec<&String> = entities.iter().collect();
        names.sort_by_key(|n| std::cmp::Reverse(n.len()));
        let mut taken: Vec<(usize, usize, &String)> = Vec::new();
        for name in names {
            let needle = name.to_lowercase();
            let mut from = 0;
            while let Some(pos) = lower[from..].find(&needle) {
                let start = from + pos;
                let end = start + needle.len();
                if !taken.iter().any(|(s, e, _)| start < *e && *s < end) {
                    taken.push((start, end, name));
                }
                from = end;
            }
        }
        taken.sort();
        for pair in taken.windows(2) {
            let (_, a_end, a) = pair[0];
            let (b_start, _, b) = pair[1];
            if a.to_lowercase() == b.to_lowercase() {
                continue;
            }
            let between = sentence.get(a_end..b_start).unwrap_or_default();
            let predicate = between
                .trim_matches(|c: char| !c.is_alphanumeric())
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ");
            let words = predicate.split(' ').count();
            let predicate = if predicate.is_empty() || words > 8 || between.contains([',', ';']) {
                "related to".to_string()
            } else {
                predicate
            };
            let line = format!("({a} | {predicate} | {b})");
            if !lines.contains(&line) {
                lines.push(line);
            }
        }
    }
    if lines.is_empty() {
        "none".into()
    } else {
        lines.join("\n")
    }
}

fn mentions(haystack_lower: &str, name: &str) -> bool {
    let needle = name.trim().to_lowercase();
    if needle.is_empty() {
        return false;
    }
    let bytes = haystack_lower.as_bytes();
    let mut from = 0;
    while let Some(pos) = haystack_lower[from..].find(&needle) {
        let start = from + pos;
        let end = start + needle.len();
        let left_ok = start == 0 || !bytes[start - 1].is_ascii_alphanumeric();
        let right_ok = end == bytes.len() || !bytes[end].is_ascii_alphanumeric();
        if left_ok && right_ok {
            return true;
        }
        from = end;
    }
    false
}

fn parse_fact_line(line: &str) -> Option<(String, String, String)> {
    let inner = line.trim();
    let inner = inner.trim_start_matches(|c: char| c.is_ascii_digit() || c == '.' || c == '-' || c == ' ');
    let inner = inner.trim().trim_start_matches('(').trim_end_matches(')');
    let parts: Vec<&str> = inner.split('|').map(str::trim).collect();
    match parts.as_slice() {
        [s, p, o] => Some((s.to_string(), p.to_string(), o.to_string())),
        _ => None,
    }
}

fn heuristic_gate(user: &str) -> String {
    let question = line_value(user, "Question:").unwrap_or_default().to_lowercase();
    let facts = section_after(user, "Candidate facts:\n");
    let mut keep = Vec::new();
    for line in facts.lines() {
        let Some((num, _)) = line.trim().split_once('.') else { continue };
        let Ok(n) = num.trim().parse::<usize>() else { continue };
        if let Some((s, _, o)) = parse_fact_line(line) {
            if mentions(&question, &s) || mentions(&question, &o) {
                keep.push(n.to_string());
            }
        }
    }
    if keep.is_empty() {
        "keep: none".into()
    } else {
        format!("keep: {}", keep.join(","))
    }
}

fn heuristic_answer(user: &str) -> String {
    let question = section_after(user, QUESTION_HEADER).trim().to_lowercase();
    let facts_block = section_after(user, FACTS_HEADER);
    let facts: Vec<(String, String, String)> = facts_block
        .lines()
        .skip(1)
        .take_while(|l| !l.starts_with("## "))
        .filter_map(|l| l.strip_prefix("- ").and_then(parse_fact_line))
        .collect();
    let passages = section_after(user, PASSAGES_HEADER);
    let first_passage = passages.lines().skip(1).find_map(|l| {
        let rest = l.strip_prefix('[')?;
        let (id, title) = rest.split_once("] ")?;
        Some((id.to_string(), title.to_string()))
    });

    let answer = facts
        .iter()
        .find(|(_, _, o)| !mentions(&question, o))
        .map(|(_, _, o)| o.clone())
        .or_else(|| facts.iter().find(|(s, _, _)| !mentions(&question, s)).map(|(s, _, _)| s.clone()))
        .or_else(|| first_passage.as_ref().map(|(_, t)| t.clone()))
        .unwrap_or_else(|| "unknown".into());
    match first_passage {
        Some((id, _)) => format!("Evidence: [{id}]\nAnswer: {answer}"),
        None => format!("Answer: {answer}"),
    }
}

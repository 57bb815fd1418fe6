//! Prompted entity and triple extraction, plus parsers for the model output.

use std::collections::BTreeSet;

use super::Passage;
use crate::error::Result;
use crate::prompts::{render, PromptSet};
use crate::providers::{chat_complete, ChatProvider, ChatRequest, ProviderError};
use crate::text::{canonicalize, collapse_whitespace};

const EXTRACTION_MAX_TOKENS: u32 = 512;
const MAX_ENTITY_CHARS: usize = 120;
const MAX_ENTITY_WORDS: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedEntity {
    pub surface: String,
    pub canonical: String,
}

/// A triple before ids and embeddings are assigned; endpoints are canonical names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedTriple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub source_passage: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction<T> {
    pub items: Vec<T>,
    pub warnings: Vec<String>,
}

fn strip_list_marker(item: &str) -> &str {
    let t = item.trim();
    let t = t.trim_start_matches(['-', '*', '•']).trim_start();
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix(['.', ')']) {
            return r.trim_start();
        }
    }
    t
}

fn is_none_marker(s: &str) -> bool {
    let t = s.trim().trim_end_matches('.').to_ascii_lowercase();
    t.is_empty() || t == "none" || t == "[]" || t == "n/a"
}

/// Parses an entity list: a JSON array of strings, or names separated by
/// semicolons/newlines (commas when neither occurs). `None` means unparseable.
pub fn parse_entity_list(output: &str) -> Option<Vec<String>> {
    let mut body = output.trim();
    if let Some(rest) = body.strip_prefix("Entities:").or_else(|| body.strip_prefix("entities:")) {
        body = rest.trim();
    }
    if is_none_marker(body) {
        return Some(Vec::new());
    }
    let items: Vec<String> = if body.starts_with('[') {
        serde_json::from_str::<Vec<String>>(body).ok()?
    } else if body.contains([';', '\n']) {
        body.split([';', '\n']).map(str::to_owned).collect()
    } else {
        body.split(',').map(str::to_owned).collect()
    };
    let mut out = Vec::new();
    for item in &items {
        let name = strip_list_marker(item).trim_matches(['"', '\'', '`']).trim();
        if name.is_empty() || is_none_marker(name) {
            continue;
        }
        if name.chars().count() > MAX_ENTITY_CHARS || name.split_whitespace().count() > MAX_ENTITY_WORDS {
            return None;
        }
        out.push(name.to_string());
    }
    Some(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTriples {
    pub triples: Vec<(String, String, String)>,
    pub skipped_lines: usize,
}

/// Parses `(subject | predicate | object)` lines. `None` when nothing parses
/// and at least one line was present.
pub fn parse_triple_lines(output: &str) -> Option<ParsedTriples> {
    if is_none_marker(output) {
        return Some(ParsedTriples {
            triples: Vec::new(),
            skipped_lines: 0,
        });
    }
    let mut triples = Vec::new();
    let mut skipped = 0;
    for line in output.lines() {
        let line = strip_list_marker(line);
        if line.is_empty() || is_none_marker(line) {
            continue;
        }
        let inner = line.strip_prefix('(').unwrap_or(line);
        let inner = inner.strip_suffix(')').unwrap_or(inner);
        let parts: Vec<&str> = inner.split('|').map(str::trim).collect();
        match parts.as_slice() {
            [s, p, o] if !s.is_empty() && !p.is_empty() && !o.is_empty() => {
                triples.push((s.to_string(), p.to_string(), o.to_string()));
            }
            _ => skipped += 1,
        }
    }
    if triples.is_empty() && skipped > 0 {
        return None;
    }
    Some(ParsedTriples {
        triples,
        skipped_lines: skipped,
    })
}

/// Sends `req`; if `parse` rejects the reply, reprompts once. An empty
/// completion counts as an empty (parseable-as-nothing) reply.
fn ask_with_reprompt<T>(
    chat: &dyn ChatProvider,
    prompts: &PromptSet,
    req: ChatRequest,
    parse: impl Fn(&str) -> Option<T>,
    empty: impl Fn() -> T,
) -> std::result::Result<Option<T>, ProviderError> {
    let first = match chat_complete(chat, &req) {
        Ok(s) => s,
        Err(ProviderError::EmptyCompletion) => return Ok(Some(empty())),
        Err(e) => return Err(e),
    };
    if let Some(v) = parse(&first) {
        return Ok(Some(v));
    }
    let retry = ChatRequest {
        user_text: format!("{}\n\n{}", req.user_text, prompts.reprompt),
        ..req
    };
    match chat_complete(chat, &retry) {
        Ok(s) => Ok(parse(&s)),
        Err(ProviderError::EmptyCompletion) => Ok(Some(empty())),
        Err(e) => Err(e),
    }
}

pub fn extract_entities(
    passage: &Passage,
    chat: &dyn ChatProvider,
    prompts: &PromptSet,
) -> Result<Extraction<ExtractedEntity>> {
    let t = &prompts.entity_extraction;
    let req = ChatRequest::deterministic(
        t.system.clone(),
        render(&t.user, &[("title", &passage.title), ("text", &passage.text)]),
        EXTRACTION_MAX_TOKENS,
    );
    let mut warnings = Vec::new();
    let names = match ask_with_reprompt(chat, prompts, req, parse_entity_list, Vec::new)? {
        Some(n) => n,
        None => {
            warnings.push(format!(
                "passage `{}`: entity output unparseable after reprompt; indexing without entities",
                passage.passage_id
            ));
            Vec::new()
        }
    };
    let mut seen = BTreeSet::new();
    let mut items = Vec::new();
    for surface in names {
        let canonical = canonicalize(&surface);
        if canonical.is_empty() || !seen.insert(canonical.clone()) {
            continue;
        }
        items.push(ExtractedEntity { surface, canonical });
    }
    Ok(Extraction { items, warnings })
}

pub fn extract_triples(
    passage: &Passage,
    entities: &[ExtractedEntity],
    chat: &dyn ChatProvider,
    prompts: &PromptSet,
) -> Result<Extraction<ExtractedTriple>> {
    let mut warnings = Vec::new();
    if entities.is_empty() {
        return Ok(Extraction {
            items: Vec::new(),
            warnings,
        });
    }
    let known: BTreeSet<&str> = entities.iter().map(|e| e.canonical.as_str()).collect();
    let listed = entities.iter().map(|e| e.surface.as_str()).collect::<Vec<_>>().join("; ");
    let t = &prompts.triple_extraction;
    let req = ChatRequest::deterministic(
        t.system.clone(),
        render(
            &t.user,
            &[("entities", &listed), ("title", &passage.title), ("text", &passage.text)],
        ),
        EXTRACTION_MAX_TOKENS,
    );
    let empty = || ParsedTriples {
        triples: Vec::new(),
        skipped_lines: 0,
    };
    let parsed = match ask_with_reprompt(chat, prompts, req, parse_triple_lines, empty)? {
        Some(p) => p,
        None => {
            warnings.push(format!(
                "passage `{}`: triple output unparseable after reprompt; no triples kept",
                passage.passage_id
            ));
            empty()
        }
    };
    if parsed.skipped_lines > 0 {
        warnings.push(format!(
            "passage `{}`: skipped {} malformed triple line(s)",
            passage.passage_id, parsed.skipped_lines
        ));
    }
    let mut seen = BTreeSet::new();
    let mut items = Vec::new();
    for (s, p, o) in parsed.triples {
        let subject = canonicalize(&s);
        let object = canonicalize(&o);
        let unknown: Vec<&str> = [subject.as_str(), object.as_str()]
            .into_iter()
            .filter(|x| !known.contains(x))
            .collect();
        if !unknown.is_empty() {
            warnings.push(format!(
                "passage `{}`: dropped triple ({s} | {p} | {o}); unknown entity `{}`",
                passage.passage_id,
                unknown.join("`, `")
            ));
            continue;
        }
        let predicate = collapse_whitespace(&p);
        if seen.insert((subject.clone(), predicate.clone(), object.clone())) {
            items.push(ExtractedTriple {
                subject,
                predicate,
                object,
                source_passage: passage.passage_id.clone(),
            });
        }
    }
    Ok(Extraction { items, warnings })
}

//! Evidence-first answer prompt and answer extraction.
//!
//! Prompt user text layout (headers are fixed, wording comes from the prompt
//! set):
//!
//! ```text
//! ## Evidence passages
//! [p1] Title
//! passage text
//!
//! ## Seed entities
//! - name
//!
//! ## Facts
//! - (subject | predicate | object)
//!
//! ## Instructions
//! directive
//!
//! ## Question
//! question
//! ```

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indexer::GraphIndex;
use crate::prompts::PromptSet;
use crate::providers::{chat_complete, ChatProvider, ChatRequest, ProviderError};
use crate::retrieval::QueryTrace;

pub const PASSAGES_HEADER: &str = "## Evidence passages";
pub const SEEDS_HEADER: &str = "## Seed entities";
pub const FACTS_HEADER: &str = "## Facts";
pub const DIRECTIVE_HEADER: &str = "## Instructions";
pub const QUESTION_HEADER: &str = "## Question";

pub const DEFAULT_CHAR_BUDGET: usize = 12_000;
const ANSWER_MAX_TOKENS: u32 = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPassage {
    pub passage_id: String,
    pub title: String,
    pub text: String,
}

impl PromptPassage {
    pub fn block(&self) -> String {
        format!("[{}] {}\n{}", self.passage_id, self.title, self.text)
    }
}

/// Worked example shown to the model in few-shot mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exemplar {
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub evidence: String,
}

/// Reads a JSON array of exemplars.
pub fn load_exemplars(path: &Path) -> Result<Vec<Exemplar>> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::io("reading exemplars", path, e))?;
    serde_json::from_str(&src).map_err(|e| Error::Malformed {
        stage: "exemplars",
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerPrompt {
    pub ranked_passages: Vec<PromptPassage>,
    pub seeds: Vec<String>,
    pub kept_triples: Vec<String>,
    pub directive: String,
    pub question: String,
    pub system: String,
}

impl AnswerPrompt {
    pub fn passage_ids(&self) -> impl Iterator<Item = &str> {
        self.ranked_passages.iter().map(|p| p.passage_id.as_str())
    }

    pub fn user_text(&self) -> String {
        let mut out = String::new();
        out.push_str(PASSAGES_HEADER);
        out.push('\n');
        let blocks: Vec<String> = self.ranked_passages.iter().map(PromptPassage::block).collect();
        out.push_str(&blocks.join("\n\n"));
        out.push_str("\n\n");
        out.push_str(SEEDS_HEADER);
        out.push('\n');
        for s in &self.seeds {
            out.push_str(&format!("- {s}\n"));
        }
        out.push('\n');
        out.push_str(FACTS_HEADER);
        out.push('\n');
        for t in &self.kept_triples {
            out.push_str(&format!("- ({t})\n"));
        }
        out.push('\n');
        out.push_str(DIRECTIVE_HEADER);
        out.push('\n');
        out.push_str(self.directive.trim_end());
        out.push_str("\n\n");
        out.push_str(QUESTION_HEADER);
        out.push('\n');
        out.push_str(self.question.trim());
        out.push('\n');
        out
    }

    pub fn request(&self) -> ChatRequest {
        ChatRequest::deterministic(self.system.clone(), self.user_text(), ANSWER_MAX_TOKENS)
    }
}

fn system_text(prompts: &PromptSet, exemplars: &[Exemplar]) -> String {
    let mut s = prompts.answer.system.trim_end().to_string();
    if !exemplars.is_empty() {
        s.push_str("\n\nExamples:");
        for ex in exemplars {
            s.push_str("\n\nQuestion: ");
            s.push_str(&ex.question);
            if !ex.evidence.is_empty() {
                s.push_str("\nEvidence: ");
                s.push_str(&ex.evidence);
            }
            s.push_str("\nAnswer: ");
            s.push_str(&ex.answer);
        }
    }
    s
}

/// Builds the prompt from `trace`. Passages are added in rank order while
/// their blocks fit in `char_budget`; the first passage that does not fit and
/// everything after it is dropped. The top passage is always present, cut
/// short if it alone exceeds the budget.
pub fn assemble_answer_prompt(
    trace: &QueryTrace,
    index: &GraphIndex,
    question: &str,
    prompts: &PromptSet,
    exemplars: &[Exemplar],
    char_budget: usize,
) -> Result<AnswerPrompt> {
    if trace.ranked_passages.is_empty() {
        return Err(Error::NoEvidence);
    }
    let mut passages = Vec::new();
    let mut used = 0usize;
    for (rank, r) in trace.ranked_passages.iter().enumerate() {
        let p = index.passage(&r.passage_id).ok_or_else(|| Error::UnknownId {
            kind: "passage",
            id: r.passage_id.clone(),
        })?;
        let mut pp = PromptPassage {
            passage_id: p.passage_id.clone(),
            title: p.title.clone(),
            text: p.text.clone(),
        };
        let size = pp.block().chars().count();
        if used + size > char_budget {
            if rank == 0 {
                let head = pp.block().chars().count() - pp.text.chars().count();
                let keep = char_budget.saturating_sub(head);
                pp.text = pp.text.chars().take(keep).collect();
                passages.push(pp);
            }
            break;
        }
        used += size;
        passages.push(pp);
    }
    let seeds = trace
        .seeds
        .iter()
        .map(|s| index.entity(s).map(|e| e.canonical_name.clone()).unwrap_or_else(|| s.clone()))
        .collect();
    let kept_triples = trace
        .kept_triples
        .iter()
        .filter_map(|id| index.triples().iter().find(|t| &t.triple_id == id))
        .map(|t| t.rendered())
        .collect();
    Ok(AnswerPrompt {
        ranked_passages: passages,
        seeds,
        kept_triples,
        directive: prompts.answer.directive.clone(),
        question: question.to_string(),
        system: system_text(prompts, exemplars),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub question: String,
    pub answer_text: String,
    pub cited_passage_ids: Vec<String>,
    pub trace_ref: String,
    pub warnings: Vec<String>,
}

fn citation_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[([^\[\]\n]{1,200})\]").expect("valid regex"))
}

/// Answer text and bracketed citations from a completion. Citations are
/// restricted to `allowed` ids and returned in first-appearance order.
pub fn parse_completion(completion: &str, allowed: &BTreeSet<&str>) -> (String, Vec<String>) {
    let text = completion.trim();
    let answer_line = text
        .lines()
        .rev()
        .find_map(|l| l.trim().strip_prefix("Answer:").map(str::trim));
    let raw = answer_line.unwrap_or(text);

    let mut cited = Vec::new();
    for cap in citation_re().captures_iter(text) {
        for id in cap[1].split(',').map(str::trim) {
            if allowed.contains(id) && !cited.iter().any(|c| c == id) {
                cited.push(id.to_string());
            }
        }
    }
    let stripped = citation_re().replace_all(raw, |c: &regex::Captures<'_>| {
        let all_ids = c[1].split(',').map(str::trim).all(|id| allowed.contains(id));
        if all_ids {
            String::new()
        } else {
            c[0].to_string()
        }
    });
    let answer = stripped.split_whitespace().collect::<Vec<_>>().join(" ");
    (answer, cited)
}

/// Sends the prompt at temperature 0 and parses the reply. An empty completion
/// yields an empty answer and a warning.
pub fn generate_answer(
    prompt: &AnswerPrompt,
    chat: &dyn ChatProvider,
    trace_ref: &str,
) -> std::result::Result<AnswerRecord, ProviderError> {
    let allowed: BTreeSet<&str> = prompt.passage_ids().collect();
    let mut warnings = Vec::new();
    let (answer_text, cited_passage_ids) = match chat_complete(chat, &prompt.request()) {
        Ok(reply) => parse_completion(&reply, &allowed),
        Err(ProviderError::EmptyCompletion) => {
            let w = "answer model returned an empty completion".to_string();
            log::warn!("{w}");
            warnings.push(w);
            (String::new(), Vec::new())
        }
        Err(e) => return Err(e),
    };
    Ok(AnswerRecord {
        question: prompt.question.clone(),
        answer_text,
        cited_passage_ids,
        trace_ref: trace_ref.to_string(),
        warnings,
    })
}

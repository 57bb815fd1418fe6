use crate::indexer::FactTriple;
use crate::prompts::{render, PromptSet};
use crate::providers::{chat_complete, ChatProvider, ChatRequest, ProviderError};

const GATE_MAX_TOKENS: u32 = 64;

/// Result of keep-drop gating: positions into the candidate list, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct GateOutcome {
    pub kept: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Parses a `keep: 1,3` / `keep: none` reply against `n` candidates.
/// Numbers are 1-based. Returns `None` for anything else.
pub fn parse_keep_list(reply: &str, n: usize) -> Option<Vec<usize>> {
    let line = reply.lines().rev().find_map(|l| {
        let l = l.trim();
        let lower = l.to_ascii_lowercase();
        let at = lower.find("keep:")?;
        Some(l[at + "keep:".len()..].trim().to_string())
    })?;
    let rest = line.trim_end_matches('.').trim();
    if rest.eq_ignore_ascii_case("none") {
        return Some(Vec::new());
    }
    let mut kept = Vec::new();
    for tok in rest.split([',', ' ']).map(str::trim).filter(|t| !t.is_empty()) {
        let k: usize = tok.parse().ok()?;
        if k == 0 || k > n {
            return None;
        }
        kept.push(k - 1);
    }
    if kept.is_empty() {
        return None;
    }
    kept.sort_unstable();
    kept.dedup();
    Some(kept)
}

fn gate_request(query: &str, candidates: &[&FactTriple], prompts: &PromptSet) -> ChatRequest {
    let facts: Vec<String> = candidates
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. ({})", i + 1, t.rendered()))
        .collect();
    let t = &prompts.fact_gate;
    ChatRequest::deterministic(
        t.system.clone(),
        render(&t.user, &[("question", query), ("facts", &facts.join("\n"))]),
        GATE_MAX_TOKENS,
    )
}

fn ask(chat: &dyn ChatProvider, req: &ChatRequest) -> Result<Option<String>, ProviderError> {
    match chat_complete(chat, req) {
        Ok(s) => Ok(Some(s)),
        Err(ProviderError::EmptyCompletion) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Asks the chat model which candidates help answer `query`. An unparseable
/// reply is retried once; if that fails too every candidate is kept.
pub fn filter_facts(
    query: &str,
    candidates: &[&FactTriple],
    chat: &dyn ChatProvider,
    prompts: &PromptSet,
) -> Result<GateOutcome, ProviderError> {
    if candidates.is_empty() {
        return Ok(GateOutcome {
            kept: Vec::new(),
            warnings: Vec::new(),
        });
    }
    let n = candidates.len();
    let req = gate_request(query, candidates, prompts);
    if let Some(kept) = ask(chat, &req)?.and_then(|r| parse_keep_list(&r, n)) {
        return Ok(GateOutcome {
            kept,
            warnings: Vec::new(),
        });
    }
    let retry = ChatRequest {
        user_text: format!("{}\n\n{}", req.user_text, prompts.reprompt),
        ..req
    };
    if let Some(kept) = ask(chat, &retry)?.and_then(|r| parse_keep_list(&r, n)) {
        return Ok(GateOutcome {
            kept,
            warnings: Vec::new(),
        });
    }
    let warning = format!("fact gate reply unparseable after reprompt; keeping all {n} candidates");
    log::warn!("{warning}");
    Ok(GateOutcome {
        kept: (0..n).collect(),
        warnings: vec![warning],
    })
}

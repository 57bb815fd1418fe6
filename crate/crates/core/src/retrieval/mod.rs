//! Online query path: candidate triples, keep-drop gating, seed entities,
//! personalized PageRank over the index graph, and passage re-ranking.

mod gate;
mod ppr;
mod rank;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use gate::{filter_facts, parse_keep_list, GateOutcome};
pub use ppr::{restart_distribution, run_ppr, run_ppr_observed, Restart, ScoreVector};
pub use rank::{dense_ranking, overlap, rerank, retrieve_candidate_triples, seed_entities, RankedPassage};

use crate::error::{Error, Result};
use crate::indexer::{FactTriple, GraphIndex};
use crate::prompts::PromptSet;
use crate::providers::{embed_texts, ChatProvider, EmbeddingProvider, EmbeddingVector, ProviderError};
use crate::text::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalParams {
    /// Restart probability.
    pub alpha: f64,
    pub lambda_rerank: f64,
    pub k_triples: usize,
    pub k_passages: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub use_node_score_restart: bool,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            lambda_rerank: 1.0,
            k_triples: 5,
            k_passages: 5,
            tol: 1e-8,
            max_iter: 200,
            use_node_score_restart: false,
        }
    }
}

impl RetrievalParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.lambda_rerank >= 0.0 && self.lambda_rerank.is_finite()) {
            return bad(format!("lambda_rerank must be a non-negative number, got {}", self.lambda_rerank));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.k_triples == 0 || self.k_passages == 0 || self.max_iter == 0 {
            return bad("k_triples, k_passages and max_iter must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTriple {
    pub triple_id: String,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PprSummary {
    pub iteration_count: usize,
    pub converged: bool,
    pub mass: f64,
}

/// Wall-clock milliseconds per stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub embed_ms: f64,
    pub candidates_ms: f64,
    pub gate_ms: f64,
    pub ppr_ms: f64,
    pub rerank_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTrace {
    pub trace_id: String,
    pub query_text: String,
    pub query_embedding: EmbeddingVector,
    pub candidate_triples: Vec<CandidateTriple>,
    pub kept_triples: Vec<String>,
    pub seeds: Vec<String>,
    pub fallback: bool,
    pub ppr: Option<PprSummary>,
    pub ranked_passages: Vec<RankedPassage>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<StageTimings>,
}

impl QueryTrace {
    pub fn ranked_ids(&self) -> Vec<&str> {
        self.ranked_passages.iter().map(|r| r.passage_id.as_str()).collect()
    }
}

/// Providers and templates used by [`retrieve`].
pub struct RetrievalContext<'a> {
    pub chat: &'a dyn ChatProvider,
    pub embedder: &'a dyn EmbeddingProvider,
    pub prompts: &'a PromptSet,
    /// Record per-stage timings in the trace (makes traces non-reproducible).
    pub record_timings: bool,
}

/// Stable id for a query's trace.
pub fn trace_id(query: &str) -> String {
    sha256_hex(query.as_bytes())[..16].to_string()
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

pub fn retrieve(query: &str, index: &GraphIndex, ctx: &RetrievalContext<'_>, params: &RetrievalParams) -> Result<QueryTrace> {
    params.validate()?;
    if query.trim().is_empty() {
        return Err(Error::InvalidParam("query is empty".into()));
    }
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let q_emb = embed_texts(ctx.embedder, &[query.to_string()])?.remove(0);
    if q_emb.dim() != index.embedding_dim() {
        return Err(ProviderError::DimensionMismatch {
            position: 0,
            expected: index.embedding_dim(),
            found: q_emb.dim(),
        }
        .into());
    }
    timings.embed_ms = elapsed_ms(t);

    let t = Instant::now();
    let candidates = retrieve_candidate_triples(&q_emb, index, params.k_triples);
    timings.candidates_ms = elapsed_ms(t);

    let t = Instant::now();
    let refs: Vec<&FactTriple> = candidates.iter().map(|(c, _)| *c).collect();
    let gate = filter_facts(query, &refs, ctx.chat, ctx.prompts)?;
    let kept: Vec<&FactTriple> = gate.kept.iter().map(|&i| refs[i]).collect();
    let seeds = seed_entities(kept.iter().copied());
    timings.gate_ms = elapsed_ms(t);

    let mut warnings = gate.warnings;
    let restart = if seeds.is_empty() {
        Err(Error::NoSeeds)
    } else {
        restart_distribution(&seeds, index, params)
    };

    let (ranked, ppr, fallback) = match restart {
        Ok(restart) => {
            warnings.extend(restart.skipped.iter().map(|s| format!("seed `{s}` not in index")));
            let t = Instant::now();
            let scores = run_ppr(index.transition(), &restart.values, params)?;
            timings.ppr_ms = elapsed_ms(t);
            if !scores.converged {
                warnings.push(format!("PPR stopped at max_iter = {} before converging", params.max_iter));
            }
            let t = Instant::now();
            let ranked = rerank(&scores.values, &restart.used, &kept, index, params.lambda_rerank, params.k_passages);
            timings.rerank_ms = elapsed_ms(t);
            let summary = PprSummary {
                iteration_count: scores.iteration_count,
                converged: scores.converged,
                mass: scores.mass(),
            };
            (ranked, Some(summary), false)
        }
        Err(Error::NoSeeds) => {
            warnings.push("no seed entities; using dense passage ranking".into());
            let t = Instant::now();
            let ranked = dense_ranking(&q_emb, index, params.k_passages);
            timings.rerank_ms = elapsed_ms(t);
            (ranked, None, true)
        }
        Err(e) => return Err(e),
    };

    Ok(QueryTrace {
        trace_id: trace_id(query),
        query_text: query.to_string(),
        query_embedding: q_emb,
        candidate_triples: candidates
            .iter()
            .map(|(t, c)| CandidateTriple {
                triple_id: t.triple_id.clone(),
                cosine: *c,
            })
            .collect(),
        kept_triples: kept.iter().map(|t| t.triple_id.clone()).collect(),
        seeds,
        fallback,
        ppr,
        ranked_passages: ranked,
        warnings,
        timings: ctx.record_timings.then_some(timings),
    })
}

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::QaExample;
use super::metrics::{exact_match, recall_at_k, token_f1, RECALL_KS};
use crate::answer::{assemble_answer_prompt, generate_answer, Exemplar};
use crate::error::{Error, Result};
use crate::indexer::GraphIndex;
use crate::prompts::PromptSet;
use crate::providers::{ChatProvider, EmbeddingProvider};
use crate::retrieval::{retrieve, QueryTrace, RetrievalContext, RetrievalParams};

/// Retrieval depth used for scoring, so Recall@10 is always defined.
pub const MIN_RETRIEVAL_DEPTH: usize = 10;

pub struct EvalContext<'a> {
    pub chat: &'a dyn ChatProvider,
    pub embedder: &'a dyn EmbeddingProvider,
    pub prompts: &'a PromptSet,
    pub params: &'a RetrievalParams,
    pub exemplars: &'a [Exemplar],
    pub char_budget: usize,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub question_id: String,
    pub question: String,
    pub gold_answer: String,
    pub prediction: String,
    pub em: f64,
    pub f1: f64,
    /// Hit flag per cutoff; absent when the example has no usable gold.
    pub recall: Option<BTreeMap<usize, bool>>,
    pub cited_passage_ids: Vec<String>,
    pub error: Option<String>,
    pub trace: Option<QueryTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n_queries: usize,
    pub n_failed: usize,
    pub n_recall_scored: usize,
    pub em: f64,
    pub f1: f64,
    pub recall_at: BTreeMap<usize, f64>,
    pub index_fingerprint: String,
    pub params: RetrievalParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub summary: EvalSummary,
    pub per_query: Vec<QueryRecord>,
}

fn run_one(ex: &QaExample, index: &GraphIndex, ctx: &EvalContext<'_>) -> Result<QueryRecord> {
    let deep = RetrievalParams {
        k_passages: ctx.params.k_passages.max(MIN_RETRIEVAL_DEPTH),
        ..ctx.params.clone()
    };
    let rctx = RetrievalContext {
        chat: ctx.chat,
        embedder: ctx.embedder,
        prompts: ctx.prompts,
        record_timings: false,
    };
    let trace = retrieve(&ex.question, index, &rctx, &deep)?;
    let mut for_answer = trace.clone();
    for_answer.ranked_passages.truncate(ctx.params.k_passages);
    let prompt = assemble_answer_prompt(&for_answer, index, &ex.question, ctx.prompts, ctx.exemplars, ctx.char_budget)?;
    let answer = generate_answer(&prompt, ctx.chat, &trace.trace_id)?;

    let ranked = trace.ranked_ids();
    let recall = ex.recall_scorable.then(|| {
        RECALL_KS
            .iter()
            .map(|&k| (k, recall_at_k(&ranked, &ex.gold_passage_ids, k).unwrap_or(false)))
            .collect()
    });
    Ok(QueryRecord {
        question_id: ex.question_id.clone(),
        question: ex.question.clone(),
        gold_answer: ex.gold_answer.clone(),
        em: exact_match(&answer.answer_text, &ex.gold_answer),
        f1: token_f1(&answer.answer_text, &ex.gold_answer),
        prediction: answer.answer_text,
        recall,
        cited_passage_ids: answer.cited_passage_ids,
        error: None,
        trace: Some(trace),
    })
}

fn failed(ex: &QaExample, err: &Error) -> QueryRecord {
    log::warn!("question {}: {err}", ex.question_id);
    QueryRecord {
        question_id: ex.question_id.clone(),
        question: ex.question.clone(),
        gold_answer: ex.gold_answer.clone(),
        prediction: String::new(),
        em: 0.0,
        f1: 0.0,
        recall: ex
            .recall_scorable
            .then(|| RECALL_KS.iter().map(|&k| (k, false)).collect()),
        cited_passage_ids: Vec::new(),
        error: Some(err.to_string()),
        trace: None,
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Aggregates per-query records (sorted by question id first).
pub fn summarize(mut per_query: Vec<QueryRecord>, index_fingerprint: &str, params: &RetrievalParams) -> EvalReport {
    per_query.sort_by(|a, b| a.question_id.cmp(&b.question_id));
    let scored: Vec<&BTreeMap<usize, bool>> = per_query.iter().filter_map(|q| q.recall.as_ref()).collect();
    let recall_at = RECALL_KS
        .iter()
        .map(|&k| (k, mean(scored.iter().map(|r| if r[&k] { 1.0 } else { 0.0 }))))
        .collect();
    let summary = EvalSummary {
        n_queries: per_query.len(),
        n_failed: per_query.iter().filter(|q| q.error.is_some()).count(),
        n_recall_scored: scored.len(),
        em: mean(per_query.iter().map(|q| q.em)),
        f1: mean(per_query.iter().map(|q| q.f1)),
        recall_at,
        index_fingerprint: index_fingerprint.to_string(),
        params: params.clone(),
    };
    EvalReport { summary, per_query }
}

/// Retrieves, answers and scores every example. Per-query failures become
/// zero-score rows; only invalid parameters or a broken thread pool abort.
pub fn run_eval(index: &GraphIndex, examples: &[QaExample], ctx: &EvalContext<'_>) -> Result<EvalReport> {
    ctx.params.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParam(format!("thread pool: {e}")))?;
    let rows: Vec<QueryRecord> = pool.install(|| {
        examples
            .par_iter()
            .map(|ex| run_one(ex, index, ctx).unwrap_or_else(|e| failed(ex, &e)))
            .collect()
    });
    Ok(summarize(rows, &index.meta().fingerprint, ctx.params))
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ReportLine {
    Summary(EvalSummary),
    Query(Box<QueryRecord>),
}

impl EvalReport {
    /// JSON lines: one summary object, then one object per query.
    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut push = |line: &ReportLine| {
            serde_json::to_writer(&mut out, line).expect("report serializes");
            out.push(b'\n');
        };
        push(&ReportLine::Summary(self.summary.clone()));
        for q in &self.per_query {
            push(&ReportLine::Query(Box::new(q.clone())));
        }
        out
    }

    pub fn write_jsonl(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_jsonl())
    }

    pub fn from_jsonl(src: &str) -> Result<Self> {
        let mut summary = None;
        let mut per_query = Vec::new();
        for (i, line) in src.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let malformed = |message: String| Error::Malformed {
                stage: "eval report",
                path: "report".into(),
                line: i + 1,
                message,
            };
            let value: serde_json::Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
            match value.get("kind").and_then(|k| k.as_str()) {
                Some("summary") if summary.is_none() => {
                    summary = Some(serde_json::from_value::<EvalSummary>(value).map_err(|e| malformed(e.to_string()))?)
                }
                Some("summary") => return Err(Error::corrupt("report", "more than one summary line")),
                Some("query") => {
                    per_query.push(serde_json::from_value::<QueryRecord>(value).map_err(|e| malformed(e.to_string()))?)
                }
                _ => return Err(malformed("missing or unknown `kind`".into())),
            }
        }
        let summary = summary.ok_or_else(|| Error::corrupt("report", "missing summary line"))?;
        Ok(Self { summary, per_query })
    }
}

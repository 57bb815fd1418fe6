use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::indexer::{FactTriple, GraphIndex};
use crate::providers::{cosine, EmbeddingVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPassage {
    pub passage_id: String,
    pub ppr_score: f64,
    pub overlap: f64,
    pub final_score: f64,
}

/// Top `k` triples by cosine to the query, descending; ties by triple id.
pub fn retrieve_candidate_triples<'a>(
    q_emb: &EmbeddingVector,
    index: &'a GraphIndex,
    k: usize,
) -> Vec<(&'a FactTriple, f64)> {
    let mut scored: Vec<(&FactTriple, f64)> = index
        .triples()
        .iter()
        .filter_map(|t| t.embedding.as_ref().map(|e| (t, q_emb.cosine(e))))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.triple_id.cmp(&b.0.triple_id)));
    scored.truncate(k);
    scored
}

/// Subjects and objects of `kept`, deduplicated in first-appearance order.
pub fn seed_entities<'a>(kept: impl IntoIterator<Item = &'a FactTriple>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for t in kept {
        for e in [&t.subject, &t.object] {
            if seen.insert(e.as_str()) {
                out.push(e.clone());
            }
        }
    }
    out
}

/// Share of seeds mentioned in the passage plus kept triples sourced from it,
/// over `|seeds| + |kept|`.
pub fn overlap(passage_id: &str, seeds: &[String], kept: &[&FactTriple], index: &GraphIndex) -> f64 {
    let denom = seeds.len() + kept.len();
    if denom == 0 {
        return 0.0;
    }
    let Some(node) = index.passage_node(passage_id) else {
        return 0.0;
    };
    let pos = node - index.entities().len();
    let mentioned: BTreeSet<usize> = index.entities_in_passage(pos).collect();
    let hits = seeds
        .iter()
        .filter(|s| index.entity_node(s).is_some_and(|e| mentioned.contains(&e)))
        .count();
    let sourced = kept.iter().filter(|t| t.source_passage == passage_id).count();
    (hits + sourced) as f64 / denom as f64
}

fn by_score_then_id(a: &RankedPassage, b: &RankedPassage) -> Ordering {
    b.final_score
        .total_cmp(&a.final_score)
        .then_with(|| a.passage_id.cmp(&b.passage_id))
}

/// Passage ranking by min-max normalized PPR score plus `lambda` times
/// overlap; top `k`.
pub fn rerank(
    ppr: &[f64],
    seeds: &[String],
    kept: &[&FactTriple],
    index: &GraphIndex,
    lambda: f64,
    k: usize,
) -> Vec<RankedPassage> {
    let offset = index.entities().len();
    let raw: Vec<f64> = (0..index.passages().len()).map(|i| ppr[offset + i]).collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = hi - lo;
    let mut ranked: Vec<RankedPassage> = index
        .passages()
        .iter()
        .zip(&raw)
        .map(|(p, &v)| {
            let norm = if spread > 0.0 { (v - lo) / spread } else { 0.0 };
            let ov = overlap(&p.passage_id, seeds, kept, index);
            RankedPassage {
                passage_id: p.passage_id.clone(),
                ppr_score: v,
                overlap: ov,
                final_score: norm + lambda * ov,
            }
        })
        .collect();
    ranked.sort_by(by_score_then_id);
    ranked.truncate(k);
    ranked
}

/// Passages by cosine between the query and passage-text embeddings.
pub fn dense_ranking(q_emb: &EmbeddingVector, index: &GraphIndex, k: usize) -> Vec<RankedPassage> {
    let mut ranked: Vec<RankedPassage> = index
        .passages()
        .iter()
        .zip(index.passage_embeddings())
        .map(|(p, e)| RankedPassage {
            passage_id: p.passage_id.clone(),
            ppr_score: 0.0,
            overlap: 0.0,
            final_score: cosine(q_emb.values(), e.values()),
        })
        .collect();
    ranked.sort_by(by_score_then_id);
    ranked.truncate(k);
    ranked
}

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::{EdgeKind, EntityNode, FactTriple, NodeId, NodeScoreMode, TypedEdge};
use crate::error::{Error, Result};
use crate::providers::{embed_in_batches, EmbeddingProvider};
use crate::sparse::CscMatrix;

fn both_ways(a: &str, b: &str, kind: EdgeKind, weight: f64) -> [TypedEdge; 2] {
    [
        TypedEdge {
            src: NodeId::Entity(a.to_string()),
            dst: NodeId::Entity(b.to_string()),
            kind,
            weight,
        },
        TypedEdge {
            src: NodeId::Entity(b.to_string()),
            dst: NodeId::Entity(a.to_string()),
            kind,
            weight,
        },
    ]
}

/// Pairs whose canonical-name embeddings reach `threshold` cosine get a
/// Synonymy edge in each direction, weighted by the cosine.
pub fn build_synonymy_edges(
    entities: &[EntityNode],
    embedder: &dyn EmbeddingProvider,
    threshold: f64,
    batch: usize,
) -> Result<Vec<TypedEdge>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParam(format!(
            "synonymy threshold must lie in (0, 1), got {threshold}"
        )));
    }
    if entities.len() < 2 {
        return Ok(Vec::new());
    }
    let names: Vec<String> = entities.iter().map(|e| e.canonical_name.clone()).collect();
    let vecs = embed_in_batches(embedder, &names, batch)?;
    let pairs: Vec<Vec<TypedEdge>> = (0..entities.len())
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            for j in i + 1..entities.len() {
                if entities[i].entity_id == entities[j].entity_id {
                    log::warn!("synonymy: skipping self pair `{}`", entities[i].entity_id);
                    continue;
                }
                let sim = vecs[i].cosine(&vecs[j]);
                if sim >= threshold {
                    out.extend(both_ways(&entities[i].entity_id, &entities[j].entity_id, EdgeKind::Synonymy, sim));
                }
            }
            out
        })
        .collect();
    Ok(pairs.into_iter().flatten().collect())
}

/// One Relatedness edge per direction for each entity pair linked by at least
/// one triple; the weight counts the linking triples.
pub fn build_relatedness_edges(triples: &[FactTriple]) -> Vec<TypedEdge> {
    let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for t in triples {
        if t.subject == t.object {
            continue;
        }
        let key = if t.subject < t.object {
            (t.subject.as_str(), t.object.as_str())
        } else {
            (t.object.as_str(), t.subject.as_str())
        };
        *counts.entry(key).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .flat_map(|((a, b), n)| both_ways(a, b, EdgeKind::Relatedness, n as f64))
        .collect()
}

/// Directed entity -> passage edges of weight 1.
pub fn mentioned_in_edges(mentions: &BTreeMap<String, BTreeSet<String>>) -> Vec<TypedEdge> {
    mentions
        .iter()
        .flat_map(|(e, ps)| {
            ps.iter().map(move |p| TypedEdge {
                src: NodeId::Entity(e.clone()),
                dst: NodeId::Passage(p.clone()),
                kind: EdgeKind::MentionedIn,
                weight: 1.0,
            })
        })
        .collect()
}

/// Node score per entity from an entity x passage incidence matrix whose row
/// `i` belongs to `entity_ids[i]`.
pub fn compute_node_scores(
    incidence: &CscMatrix,
    entity_ids: &[String],
    mode: NodeScoreMode,
) -> Result<BTreeMap<String, f64>> {
    if incidence.rows() != entity_ids.len() {
        return Err(Error::corrupt(
            "incidence",
            format!("{} rows for {} entities", incidence.rows(), entity_ids.len()),
        ));
    }
    let mut freq = vec![0usize; incidence.rows()];
    for (r, _, v) in incidence.triplets() {
        if v != 0.0 {
            freq[r] += 1;
        }
    }
    let n_passages = incidence.cols() as f64;
    entity_ids
        .iter()
        .zip(freq)
        .map(|(id, f)| {
            if f == 0 {
                return Err(Error::corrupt("incidence", format!("entity `{id}` is mentioned in no passage")));
            }
            let score = match mode {
                NodeScoreMode::Inverse => 1.0 / f as f64,
                NodeScoreMode::Log => (1.0 + n_passages / f as f64).ln(),
            };
            Ok((id.clone(), score))
        })
        .collect()
}

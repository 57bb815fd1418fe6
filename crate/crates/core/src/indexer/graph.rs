use std::collections::{BTreeSet, HashMap};

use super::{BuildParams, EdgeKind, EntityNode, FactTriple, IndexMeta, NodeId, Passage, TypedEdge};
use super::edges::compute_node_scores;
use super::store::{table_bytes, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::providers::EmbeddingVector;
use crate::sparse::CscMatrix;
use crate::text::sha256_hex;

/// Column-stochastic transition operator: column `j` holds the normalized
/// outgoing weights of node `j`, so one propagation step is `P v`. Columns of
/// nodes without outgoing edges are empty and flagged dangling.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    matrix: CscMatrix,
    dangling: Vec<bool>,
}

impl TransitionMatrix {
    /// Normalizes each source's outgoing `(src, dst, weight)` edges jointly,
    /// whatever their kind.
    pub fn from_weighted_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let edges: Vec<(usize, usize, f64)> = edges.into_iter().collect();
        let mut out_weight = vec![0.0f64; n];
        for &(s, _, w) in &edges {
            out_weight[s] += w;
        }
        let matrix = CscMatrix::from_triplets(n, n, edges.iter().map(|&(s, d, w)| (d, s, w / out_weight[s])));
        Self::from_matrix(matrix)
    }

    pub(crate) fn from_matrix(matrix: CscMatrix) -> Self {
        let dangling = (0..matrix.cols()).map(|c| matrix.column_is_empty(c)).collect();
        Self { matrix, dangling }
    }

    pub fn n(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &CscMatrix {
        &self.matrix
    }

    pub fn is_dangling(&self, node: usize) -> bool {
        self.dangling[node]
    }

    pub fn dangling(&self) -> &[bool] {
        &self.dangling
    }
}

/// Raw material for [`assemble_graph`].
#[derive(Debug, Clone)]
pub struct GraphParts {
    pub passages: Vec<Passage>,
    pub entities: Vec<EntityNode>,
    pub triples: Vec<FactTriple>,
    pub edges: Vec<TypedEdge>,
    /// One per passage, same order, for the dense fallback ranking.
    pub passage_embeddings: Vec<EmbeddingVector>,
}

/// The immutable heterogeneous graph. Node order is entities (sorted by id)
/// followed by passages (corpus order).
#[derive(Debug, Clone, PartialEq)]
pub struct GraphIndex {
    pub(crate) meta: IndexMeta,
    pub(crate) entities: Vec<EntityNode>,
    pub(crate) passages: Vec<Passage>,
    pub(crate) triples: Vec<FactTriple>,
    pub(crate) edges: Vec<TypedEdge>,
    pub(crate) transition: TransitionMatrix,
    pub(crate) incidence: CscMatrix,
    pub(crate) passage_embeddings: Vec<EmbeddingVector>,
    entity_pos: HashMap<String, usize>,
    passage_pos: HashMap<String, usize>,
}

impl GraphIndex {
    pub fn meta(&self) -> &IndexMeta {
        &self.meta
    }

    pub fn entities(&self) -> &[EntityNode] {
        &self.entities
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn triples(&self) -> &[FactTriple] {
        &self.triples
    }

    pub fn edges(&self) -> &[TypedEdge] {
        &self.edges
    }

    pub fn transition(&self) -> &TransitionMatrix {
        &self.transition
    }

    /// Entity x passage 0/1 matrix.
    pub fn incidence(&self) -> &CscMatrix {
        &self.incidence
    }

    pub fn passage_embeddings(&self) -> &[EmbeddingVector] {
        &self.passage_embeddings
    }

    pub fn n_nodes(&self) -> usize {
        self.entities.len() + self.passages.len()
    }

    pub fn entity(&self, id: &str) -> Option<&EntityNode> {
        self.entity_pos.get(id).map(|&i| &self.entities[i])
    }

    pub fn passage(&self, id: &str) -> Option<&Passage> {
        self.passage_pos.get(id).map(|&i| &self.passages[i])
    }

    /// Graph node index of an entity.
    pub fn entity_node(&self, id: &str) -> Option<usize> {
        self.entity_pos.get(id).copied()
    }

    /// Graph node index of a passage.
    pub fn passage_node(&self, id: &str) -> Option<usize> {
        self.passage_pos.get(id).map(|&i| self.entities.len() + i)
    }

    /// Row indices (entity positions) of entities mentioned in passage `p`.
    pub fn entities_in_passage(&self, passage_pos: usize) -> impl Iterator<Item = usize> + '_ {
        self.incidence.column(passage_pos).map(|(r, _)| r)
    }

    pub fn embedding_dim(&self) -> usize {
        self.meta.embedding_dim
    }
}

fn resolve(
    node: &NodeId,
    entity_pos: &HashMap<String, usize>,
    passage_pos: &HashMap<String, usize>,
    n_entities: usize,
) -> Result<usize> {
    match node {
        NodeId::Entity(id) => entity_pos.get(id).copied().ok_or_else(|| Error::UnknownId {
            kind: "entity",
            id: id.clone(),
        }),
        NodeId::Passage(id) => passage_pos.get(id).map(|&i| n_entities + i).ok_or_else(|| Error::UnknownId {
            kind: "passage",
            id: id.clone(),
        }),
    }
}

/// Validates the parts and derives adjacency, incidence, node scores and the
/// fingerprint.
pub fn assemble_graph(
    parts: GraphParts,
    build: BuildParams,
    embed_model_id: &str,
    chat_model_id: &str,
    prompt_version: &str,
) -> Result<GraphIndex> {
    let GraphParts {
        passages,
        mut entities,
        triples,
        edges,
        passage_embeddings,
    } = parts;

    entities.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));
    let mut entity_pos = HashMap::with_capacity(entities.len());
    for (i, e) in entities.iter().enumerate() {
        if e.canonical_name.is_empty() {
            return Err(Error::corrupt("entities", format!("entity `{}` has an empty name", e.entity_id)));
        }
        if entity_pos.insert(e.entity_id.clone(), i).is_some() {
            return Err(Error::corrupt("entities", format!("duplicate entity `{}`", e.entity_id)));
        }
    }
    let mut passage_pos = HashMap::with_capacity(passages.len());
    for (i, p) in passages.iter().enumerate() {
        if passage_pos.insert(p.passage_id.clone(), i).is_some() {
            return Err(Error::DuplicateId(p.passage_id.clone()));
        }
    }
    if passage_embeddings.len() != passages.len() {
        return Err(Error::corrupt(
            "passage_embeddings",
            format!("{} vectors for {} passages", passage_embeddings.len(), passages.len()),
        ));
    }
    let dim = passage_embeddings.first().map(EmbeddingVector::dim).unwrap_or(0);
    if passage_embeddings.iter().any(|v| v.dim() != dim) {
        return Err(Error::corrupt("passage_embeddings", "mixed dimensions"));
    }

    for t in &triples {
        for end in [&t.subject, &t.object] {
            if !entity_pos.contains_key(end) {
                return Err(Error::UnknownId {
                    kind: "entity",
                    id: end.clone(),
                });
            }
        }
        if !passage_pos.contains_key(&t.source_passage) {
            return Err(Error::UnknownId {
                kind: "passage",
                id: t.source_passage.clone(),
            });
        }
        match &t.embedding {
            Some(v) if v.dim() == dim => {}
            Some(v) => {
                return Err(Error::corrupt(
                    "triple_embeddings",
                    format!("triple `{}` has dim {} (index dim {dim})", t.triple_id, v.dim()),
                ))
            }
            None => {
                return Err(Error::corrupt(
                    "triple_embeddings",
                    format!("triple `{}` has no embedding", t.triple_id),
                ))
            }
        }
    }

    let n_entities = entities.len();
    let n = n_entities + passages.len();
    let mut weighted = Vec::with_capacity(edges.len());
    let mut mentioned: BTreeSet<(usize, usize)> = BTreeSet::new();
    for e in &edges {
        let s = resolve(&e.src, &entity_pos, &passage_pos, n_entities)?;
        let d = resolve(&e.dst, &entity_pos, &passage_pos, n_entities)?;
        if !(e.weight > 0.0 && e.weight.is_finite()) {
            return Err(Error::corrupt("edges", format!("non-positive weight on {:?} -> {:?}", e.src, e.dst)));
        }
        if s == d {
            return Err(Error::corrupt("edges", format!("self edge on {:?}", e.src)));
        }
        let shape_ok = match e.kind {
            EdgeKind::Synonymy | EdgeKind::Relatedness => s < n_entities && d < n_entities,
            EdgeKind::MentionedIn => s < n_entities && d >= n_entities,
        };
        if !shape_ok {
            return Err(Error::corrupt("edges", format!("{:?} edge {:?} -> {:?} has wrong endpoints", e.kind, e.src, e.dst)));
        }
        if e.kind == EdgeKind::MentionedIn && !mentioned.insert((s, d - n_entities)) {
            return Err(Error::corrupt("edges", format!("repeated mentioned-in edge {:?} -> {:?}", e.src, e.dst)));
        }
        weighted.push((s, d, e.weight));
    }

    let incidence = CscMatrix::from_triplets(n_entities, passages.len(), mentioned.iter().map(|&(e, p)| (e, p, 1.0)));
    let ids: Vec<String> = entities.iter().map(|e| e.entity_id.clone()).collect();
    let scores = compute_node_scores(&incidence, &ids, build.node_score_mode)?;
    let mut freq = vec![0usize; n_entities];
    for &(e, _) in &mentioned {
        freq[e] += 1;
    }
    for (i, e) in entities.iter_mut().enumerate() {
        e.passage_frequency = freq[i];
        e.node_score = scores[&e.entity_id];
    }

    let transition = TransitionMatrix::from_weighted_edges(n, weighted);

    let mut index = GraphIndex {
        meta: IndexMeta {
            format_version: FORMAT_VERSION,
            fingerprint: String::new(),
            build,
            embed_model_id: embed_model_id.to_string(),
            chat_model_id: chat_model_id.to_string(),
            prompt_version: prompt_version.to_string(),
            embedding_dim: dim,
            n_entities,
            n_passages: passages.len(),
            n_triples: triples.len(),
            n_edges: edges.len(),
        },
        entities,
        passages,
        triples,
        edges,
        transition,
        incidence,
        passage_embeddings,
        entity_pos,
        passage_pos,
    };
    index.meta.fingerprint = fingerprint(&index);
    Ok(index)
}

pub(crate) fn fingerprint(index: &GraphIndex) -> String {
    let mut meta = index.meta.clone();
    meta.fingerprint.clear();
    let mut buf = serde_json::to_vec(&meta).expect("meta serializes");
    for (name, bytes) in table_bytes(index) {
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
        buf.extend_from_slice(&bytes);
    }
    sha256_hex(&buf)
}

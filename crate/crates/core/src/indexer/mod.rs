//! Offline construction of the entity-passage knowledge graph.
//!
//! Pipeline: ingest passages, extract entities and triples per passage with
//! the chat provider, derive synonymy / relatedness / mentioned-in edges,
//! score entities by inverse passage frequency, and assemble an immutable
//! [`GraphIndex`] that can be persisted and reloaded.

mod corpus;
mod edges;
mod extract;
mod graph;
mod store;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use corpus::{ingest_corpus, parse_corpus};
pub use edges::{build_relatedness_edges, build_synonymy_edges, compute_node_scores, mentioned_in_edges};
pub use extract::{
    extract_entities, extract_triples, parse_entity_list, parse_triple_lines, ExtractedEntity, ExtractedTriple,
    Extraction, ParsedTriples,
};
pub use graph::{assemble_graph, GraphIndex, GraphParts, TransitionMatrix};
pub use store::{load_index, parse_meta, persist_index, MetaFile, FORMAT_VERSION, META_FILE};

use crate::error::{Error, Result};
use crate::providers::{embed_in_batches, ChatProvider, EmbeddingProvider, EmbeddingVector};
use crate::prompts::PromptSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    #[serde(rename = "id")]
    pub passage_id: String,
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityNode {
    pub entity_id: String,
    pub canonical_name: String,
    pub surface_forms: BTreeSet<String>,
    pub passage_frequency: usize,
    pub node_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactTriple {
    pub triple_id: String,
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub source_passage: String,
    /// Stored separately on disk.
    #[serde(skip)]
    pub embedding: Option<EmbeddingVector>,
}

impl FactTriple {
    /// Text that gets embedded for candidate retrieval.
    pub fn rendered(&self) -> String {
        render_triple(&self.subject, &self.predicate, &self.object)
    }
}

pub fn render_triple(subject: &str, predicate: &str, object: &str) -> String {
    format!("{subject} | {predicate} | {object}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Synonymy,
    Relatedness,
    MentionedIn,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeId {
    Entity(String),
    Passage(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypedEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeScoreMode {
    /// `1 / passage_frequency`.
    #[default]
    Inverse,
    /// `ln(1 + n_passages / passage_frequency)`.
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildParams {
    pub synonymy_threshold: f64,
    pub node_score_mode: NodeScoreMode,
    pub embed_batch: usize,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            synonymy_threshold: 0.9,
            node_score_mode: NodeScoreMode::Inverse,
            embed_batch: 64,
        }
    }
}

impl BuildParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.synonymy_threshold > 0.0 && self.synonymy_threshold < 1.0) {
            return Err(Error::InvalidParam(format!(
                "synonymy threshold must lie in (0, 1), got {}",
                self.synonymy_threshold
            )));
        }
        if self.embed_batch == 0 {
            return Err(Error::InvalidParam("embed batch must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub format_version: u32,
    /// Digest over build inputs and every persisted table.
    pub fingerprint: String,
    pub build: BuildParams,
    pub embed_model_id: String,
    pub chat_model_id: String,
    pub prompt_version: String,
    pub embedding_dim: usize,
    pub n_entities: usize,
    pub n_passages: usize,
    pub n_triples: usize,
    pub n_edges: usize,
}

/// Everything the build needs besides the corpus.
pub struct BuildContext<'a> {
    pub chat: &'a dyn ChatProvider,
    pub embedder: &'a dyn EmbeddingProvider,
    pub prompts: &'a PromptSet,
    pub params: &'a BuildParams,
    /// Worker threads for per-passage extraction.
    pub jobs: usize,
}

#[derive(Debug, Default)]
pub struct BuildReport {
    pub warnings: Vec<String>,
}

/// Builds a complete index from `passages`.
pub fn build_index(passages: Vec<Passage>, ctx: &BuildContext<'_>) -> Result<(GraphIndex, BuildReport)> {
    ctx.params.validate()?;
    if passages.is_empty() {
        return Err(Error::InvalidParam("corpus has no passages".into()));
    }
    let mut seen = BTreeSet::new();
    for p in &passages {
        if !seen.insert(p.passage_id.as_str()) {
            return Err(Error::DuplicateId(p.passage_id.clone()));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParam(format!("thread pool: {e}")))?;
    let per_passage: Vec<Result<(Extraction<ExtractedEntity>, Extraction<ExtractedTriple>)>> = pool.install(|| {
        passages
            .par_iter()
            .map(|p| {
                let ents = extract_entities(p, ctx.chat, ctx.prompts)?;
                let triples = extract_triples(p, &ents.items, ctx.chat, ctx.prompts)?;
                Ok((ents, triples))
            })
            .collect()
    });

    let mut report = BuildReport::default();
    let mut surface: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut mentions: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut drafts: Vec<ExtractedTriple> = Vec::new();
    for (p, result) in passages.iter().zip(per_passage) {
        let (ents, triples) = result?;
        report.warnings.extend(ents.warnings);
        report.warnings.extend(triples.warnings);
        for e in ents.items {
            surface.entry(e.canonical.clone()).or_default().insert(e.surface);
            mentions.entry(e.canonical).or_default().insert(p.passage_id.clone());
        }
        drafts.extend(triples.items);
    }

    let mut entities: Vec<EntityNode> = surface
        .into_iter()
        .map(|(canonical, forms)| EntityNode {
            entity_id: canonical.clone(),
            canonical_name: canonical,
            surface_forms: forms,
            passage_frequency: 0,
            node_score: 0.0,
        })
        .collect();
    entities.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));

    let mut triples: Vec<FactTriple> = drafts
        .into_iter()
        .enumerate()
        .map(|(i, d)| FactTriple {
            triple_id: format!("t{i:07}"),
            subject: d.subject,
            predicate: d.predicate,
            object: d.object,
            source_passage: d.source_passage,
            embedding: None,
        })
        .collect();

    let batch = ctx.params.embed_batch;
    if !triples.is_empty() {
        let texts: Vec<String> = triples.iter().map(FactTriple::rendered).collect();
        let vecs = embed_in_batches(ctx.embedder, &texts, batch)?;
        for (t, v) in triples.iter_mut().zip(vecs) {
            t.embedding = Some(v);
        }
    }
    let passage_texts: Vec<String> = passages.iter().map(|p| p.text.clone()).collect();
    let passage_embeddings = embed_in_batches(ctx.embedder, &passage_texts, batch)?;

    let mut edges = if entities.len() >= 2 {
        build_synonymy_edges(&entities, ctx.embedder, ctx.params.synonymy_threshold, batch)?
    } else {
        Vec::new()
    };
    edges.extend(build_relatedness_edges(&triples));
    edges.extend(mentioned_in_edges(&mentions));

    let parts = GraphParts {
        passages,
        entities,
        triples,
        edges,
        passage_embeddings,
    };
    let index = assemble_graph(
        parts,
        ctx.params.clone(),
        ctx.embedder.model_id(),
        ctx.chat.model_id(),
        &ctx.prompts.version,
    )?;
    for w in &report.warnings {
        log::warn!("index build: {w}");
    }
    Ok((index, report))
}

//! Index directory layout.
//!
//! ```text
//! meta.json               format version, build metadata, per-file SHA-256
//! passages.jsonl          one passage per line
//! entities.jsonl          one entity per line
//! triples.jsonl           one triple per line (embeddings live in the .vec file)
//! edges.jsonl             one typed edge per line
//! adjacency.csc           column-stochastic transition matrix
//! incidence.csc           entity x passage 0/1 matrix
//! triple_embeddings.vec   one vector per triple, triples.jsonl order
//! passage_embeddings.vec  one vector per passage, passages.jsonl order
//! ```
//!
//! `meta.json` is written last. Loading verifies every checksum before
//! parsing anything and then re-derives the graph from the tables, so a loaded
//! index is either complete and consistent or not returned at all.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::graph::{assemble_graph, GraphIndex, GraphParts};
use super::{EntityNode, FactTriple, IndexMeta, Passage, TypedEdge};
use crate::error::{Error, Result};
use crate::providers::EmbeddingVector;
use crate::sparse::{decode_vectors, encode_vectors, CscMatrix};
use crate::text::sha256_hex;

pub const FORMAT_VERSION: u32 = 1;

pub const META_FILE: &str = "meta.json";
const PASSAGES: &str = "passages.jsonl";
const ENTITIES: &str = "entities.jsonl";
const TRIPLES: &str = "triples.jsonl";
const EDGES: &str = "edges.jsonl";
const ADJACENCY: &str = "adjacency.csc";
const INCIDENCE: &str = "incidence.csc";
const TRIPLE_VECS: &str = "triple_embeddings.vec";
const PASSAGE_VECS: &str = "passage_embeddings.vec";

const TABLES: [&str; 8] = [
    PASSAGES,
    ENTITIES,
    TRIPLES,
    EDGES,
    ADJACENCY,
    INCIDENCE,
    TRIPLE_VECS,
    PASSAGE_VECS,
];

#[derive(Debug, Serialize, Deserialize)]
pub struct MetaFile {
    pub format_version: u32,
    pub meta: IndexMeta,
    pub files: BTreeMap<String, String>,
}

fn jsonl<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r).expect("table rows serialize");
        out.push(b'\n');
    }
    out
}

/// Serialized tables in a fixed order; shared by persistence and fingerprinting.
pub(crate) fn table_bytes(index: &GraphIndex) -> Vec<(&'static str, Vec<u8>)> {
    let dim = index.meta.embedding_dim;
    let triple_vecs: Vec<&[f64]> = index
        .triples
        .iter()
        .map(|t| t.embedding.as_ref().map(EmbeddingVector::values).unwrap_or(&[]))
        .collect();
    let passage_vecs: Vec<&[f64]> = index.passage_embeddings.iter().map(EmbeddingVector::values).collect();
    vec![
        (PASSAGES, jsonl(&index.passages)),
        (ENTITIES, jsonl(&index.entities)),
        (TRIPLES, jsonl(&index.triples)),
        (EDGES, jsonl(&index.edges)),
        (ADJACENCY, index.transition.matrix().encode()),
        (INCIDENCE, index.incidence.encode()),
        (TRIPLE_VECS, encode_vectors(dim, &triple_vecs)),
        (PASSAGE_VECS, encode_vectors(dim, &passage_vecs)),
    ]
}

pub fn persist_index(index: &GraphIndex, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io("creating index directory", dir, e))?;
    let mut files = BTreeMap::new();
    for (name, bytes) in table_bytes(index) {
        let path = dir.join(name);
        std::fs::write(&path, &bytes).map_err(|e| Error::io("writing index table", &path, e))?;
        files.insert(name.to_string(), sha256_hex(&bytes));
    }
    let meta = MetaFile {
        format_version: FORMAT_VERSION,
        meta: index.meta.clone(),
        files,
    };
    let path = dir.join(META_FILE);
    let body = serde_json::to_vec_pretty(&meta).expect("meta serializes");
    std::fs::write(&path, body).map_err(|e| Error::io("writing index meta", &path, e))
}

/// Reads and version-checks `meta.json` without touching the tables.
pub fn parse_meta(bytes: &[u8]) -> Result<MetaFile> {
    #[derive(Deserialize)]
    struct VersionProbe {
        format_version: u32,
    }
    let probe: VersionProbe =
        serde_json::from_slice(bytes).map_err(|e| Error::corrupt(META_FILE, e.to_string()))?;
    if probe.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: probe.format_version,
            supported: FORMAT_VERSION,
        });
    }
    let meta: MetaFile = serde_json::from_slice(bytes).map_err(|e| Error::corrupt(META_FILE, e.to_string()))?;
    if meta.meta.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: meta.meta.format_version,
            supported: FORMAT_VERSION,
        });
    }
    Ok(meta)
}

pub(crate) fn parse_jsonl<T: DeserializeOwned>(file: &str, bytes: &[u8]) -> Result<Vec<T>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::corrupt(file, e.to_string()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::corrupt(file, format!("line {}: {e}", i + 1))))
        .collect()
}

fn vectors(file: &str, bytes: &[u8], dim: usize) -> Result<Vec<Vec<f64>>> {
    let (d, rows) = decode_vectors(bytes).map_err(|e| Error::corrupt(file, e.to_string()))?;
    if d != dim && !rows.is_empty() {
        return Err(Error::corrupt(file, format!("dimension {d}, meta says {dim}")));
    }
    Ok(rows)
}

fn to_embedding(file: &str, v: Vec<f64>) -> Result<EmbeddingVector> {
    EmbeddingVector::new(v).map_err(|e| Error::corrupt(file, e.to_string()))
}

pub fn load_index(dir: &Path) -> Result<GraphIndex> {
    let meta_path = dir.join(META_FILE);
    let meta_bytes = std::fs::read(&meta_path).map_err(|e| Error::io("reading index meta", &meta_path, e))?;
    let meta = parse_meta(&meta_bytes)?;

    let mut blobs: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for name in TABLES {
        let expected = meta
            .files
            .get(name)
            .ok_or_else(|| Error::corrupt(META_FILE, format!("no checksum recorded for `{name}`")))?;
        let path = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| Error::io("reading index table", &path, e))?;
        let found = sha256_hex(&bytes);
        if &found != expected {
            return Err(Error::Checksum {
                file: path.display().to_string(),
                expected: expected.clone(),
                found,
            });
        }
        blobs.insert(name, bytes);
    }

    let dim = meta.meta.embedding_dim;
    let passages: Vec<Passage> = parse_jsonl(PASSAGES, &blobs[PASSAGES])?;
    let entities: Vec<EntityNode> = parse_jsonl(ENTITIES, &blobs[ENTITIES])?;
    let mut triples: Vec<FactTriple> = parse_jsonl(TRIPLES, &blobs[TRIPLES])?;
    let edges: Vec<TypedEdge> = parse_jsonl(EDGES, &blobs[EDGES])?;
    let triple_vecs = vectors(TRIPLE_VECS, &blobs[TRIPLE_VECS], dim)?;
    let passage_vecs = vectors(PASSAGE_VECS, &blobs[PASSAGE_VECS], dim)?;
    if triple_vecs.len() != triples.len() {
        return Err(Error::corrupt(
            TRIPLE_VECS,
            format!("{} vectors for {} triples", triple_vecs.len(), triples.len()),
        ));
    }
    for (t, v) in triples.iter_mut().zip(triple_vecs) {
        t.embedding = Some(to_embedding(TRIPLE_VECS, v)?);
    }
    let passage_embeddings = passage_vecs
        .into_iter()
        .map(|v| to_embedding(PASSAGE_VECS, v))
        .collect::<Result<Vec<_>>>()?;
    let adjacency = CscMatrix::decode(&blobs[ADJACENCY]).map_err(|e| Error::corrupt(ADJACENCY, e.to_string()))?;
    let incidence = CscMatrix::decode(&blobs[INCIDENCE]).map_err(|e| Error::corrupt(INCIDENCE, e.to_string()))?;

    let stored_entities = entities.clone();
    let parts = GraphParts {
        passages,
        entities,
        triples,
        edges,
        passage_embeddings,
    };
    let m = &meta.meta;
    let index = assemble_graph(parts, m.build.clone(), &m.embed_model_id, &m.chat_model_id, &m.prompt_version)?;

    if index.transition.matrix() != &adjacency {
        return Err(Error::corrupt(ADJACENCY, "stored adjacency disagrees with the edge table"));
    }
    if index.incidence != incidence {
        return Err(Error::corrupt(INCIDENCE, "stored incidence disagrees with mentioned-in edges"));
    }
    if index.entities != stored_entities {
        return Err(Error::corrupt(ENTITIES, "stored node scores disagree with the incidence matrix"));
    }
    if index.meta != meta.meta {
        return Err(Error::corrupt(META_FILE, "metadata or fingerprint disagrees with the tables"));
    }
    Ok(index)
}

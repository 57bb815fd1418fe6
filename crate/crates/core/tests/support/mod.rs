#![allow(dead_code)]

use std::path::PathBuf;

use propex_core::indexer::{build_index, ingest_corpus, BuildContext, BuildParams, GraphIndex};
use propex_core::prompts::PromptSet;
use propex_core::providers::{ChatProvider, EmbeddingProvider, MockChat, MockEmbedder};
use propex_core::retrieval::{retrieve, QueryTrace, RetrievalContext, RetrievalParams};

pub const DIM: usize = 512;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

pub fn build_with(chat: &dyn ChatProvider, embedder: &dyn EmbeddingProvider, jobs: usize) -> GraphIndex {
    let passages = ingest_corpus(&fixture("synthetic/corpus.jsonl")).unwrap();
    let prompts = PromptSet::default();
    build_index(
        passages,
        &BuildContext {
            chat,
            embedder,
            prompts: &prompts,
            params: &BuildParams::default(),
            jobs,
        },
    )
    .unwrap()
    .0
}

pub fn mock_index(jobs: usize) -> GraphIndex {
    build_with(&MockChat::new(), &MockEmbedder::new(DIM, 0).unwrap(), jobs)
}

pub fn mock_retrieve(query: &str, index: &GraphIndex) -> QueryTrace {
    let chat = MockChat::new();
    let embedder = MockEmbedder::new(DIM, 0).unwrap();
    let prompts = PromptSet::default();
    let ctx = RetrievalContext {
        chat: &chat,
        embedder: &embedder,
        prompts: &prompts,
        record_timings: false,
    };
    retrieve(query, index, &ctx, &RetrievalParams::default()).unwrap()
}

pub const QUERY: &str = "Which body of water lies next to the hometown of painter Ozrel Vantu?";

//! Regenerates the canned response cache for the HotpotQA-format slice.
//!
//! Run with `cargo test -p propex-cli --test regen_slice -- --ignored`. The
//! canned provider answers extraction and gating with the offline heuristics,
//! returns the completions in `canned_answers.json` for answer prompts, and
//! stores everything under the default model ids so `propex eval` can replay
//! it without credentials.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use propex_core::eval::{load_dataset, run_eval, CachedChat, CachedEmbedder, DatasetFormat, EvalContext, ResponseCache};
use propex_core::indexer::{build_index, BuildContext, BuildParams};
use propex_core::prompts::PromptSet;
use propex_core::providers::{
    ChatProvider, ChatRequest, EmbeddingProvider, EmbeddingVector, MockChat, MockEmbedder, ProviderConfig,
    ProviderError,
};
use propex_core::retrieval::RetrievalParams;
use serde::Deserialize;

const CANNED_DIM: usize = 64;

struct Renamed<P> {
    inner: P,
    id: String,
}

impl ChatProvider for Renamed<MockChat> {
    fn model_id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        self.inner.complete(req)
    }
}

impl EmbeddingProvider for Renamed<MockEmbedder> {
    fn model_id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        self.inner.embed(texts)
    }
}

#[derive(Deserialize)]
struct Canned {
    question: String,
    completion: String,
}

fn slice_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/hotpot_slice")
}

fn sort_lines(path: &Path) {
    let src = std::fs::read_to_string(path).unwrap();
    let mut lines: Vec<&str> = src.lines().collect();
    lines.sort_unstable();
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

#[test]
#[ignore = "rewrites checked-in fixtures"]
fn regenerate_slice_cache() {
    let dir = slice_dir();
    let cache_dir = dir.join("cache");
    let _ = std::fs::remove_dir_all(&cache_dir);

    let canned: BTreeMap<String, Canned> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("canned_answers.json")).unwrap()).unwrap();
    let mut chat = MockChat::new();
    for c in canned.values() {
        chat = chat.rule(Some("answer"), &format!("## Question\n{}", c.question), &c.completion);
    }
    let cfg = ProviderConfig::default();
    let chat = Renamed {
        inner: chat,
        id: cfg.chat_model_id.clone(),
    };
    let embedder = Renamed {
        inner: MockEmbedder::new(CANNED_DIM, 0).unwrap(),
        id: cfg.embed_model_id.clone(),
    };

    let prompts = PromptSet::default();
    let dataset = load_dataset(&dir.join("dev.json"), DatasetFormat::HotpotQa).unwrap();
    let cache = ResponseCache::open(&cache_dir).unwrap();
    let cached_chat = CachedChat {
        inner: &chat,
        cache: &cache,
        prompt_version: prompts.version.clone(),
    };
    let cached_embed = CachedEmbedder {
        inner: &embedder,
        cache: &cache,
    };
    let (index, _) = build_index(
        dataset.passages.clone(),
        &BuildContext {
            chat: &cached_chat,
            embedder: &cached_embed,
            prompts: &prompts,
            params: &BuildParams::default(),
            jobs: 1,
        },
    )
    .unwrap();
    let params = RetrievalParams::default();
    let report = run_eval(
        &index,
        &dataset.examples,
        &EvalContext {
            chat: &cached_chat,
            embedder: &cached_embed,
            prompts: &prompts,
            params: &params,
            exemplars: &[],
            char_budget: propex_core::answer::DEFAULT_CHAR_BUDGET,
            jobs: 1,
        },
    )
    .unwrap();
    assert_eq!(report.summary.n_failed, 0);

    let rankings: BTreeMap<&str, Vec<&str>> = report
        .per_query
        .iter()
        .map(|q| (q.question_id.as_str(), q.trace.as_ref().unwrap().ranked_ids()))
        .collect();
    let mut out = serde_json::to_string_pretty(&rankings).unwrap();
    out.push('\n');
    std::fs::write(dir.join("rankings.json"), out).unwrap();
    for f in ["chat.jsonl", "embed.jsonl"] {
        sort_lines(&cache_dir.join(f));
    }
}

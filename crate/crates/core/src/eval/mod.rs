//! Dataset adapters, answer and retrieval metrics, the batch runner and a
//! response cache for reproducible runs.

mod cache;
mod dataset;
mod metrics;
mod runner;

pub use cache::{chat_key, embed_key, CacheStats, CachedChat, CachedEmbedder, ResponseCache, CHAT_FILE, EMBED_FILE};
pub use dataset::{load_dataset, parse_dataset, Dataset, DatasetFormat, QaExample};
pub use metrics::{exact_match, normalize_answer, recall_at_k, token_f1, RECALL_KS};
pub use runner::{run_eval, summarize, EvalContext, EvalReport, EvalSummary, QueryRecord, MIN_RETRIEVAL_DEPTH};

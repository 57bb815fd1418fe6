//! Read-through cache of provider responses.
//!
//! A cache directory holds `chat.jsonl` and `embed.jsonl`, one
//! `{"key", "response"}` object per line. Keys are SHA-256 digests of the
//! serialized request, model id and prompt-set version included.

use std::collections::hash_map::Entry as Slot;
use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::providers::{ChatProvider, ChatRequest, EmbeddingProvider, EmbeddingVector, ProviderError};
use crate::text::sha256_hex;

pub const CHAT_FILE: &str = "chat.jsonl";
pub const EMBED_FILE: &str = "embed.jsonl";

#[derive(Serialize, Deserialize)]
struct Entry<T> {
    key: String,
    response: T,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
}

#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    chat: RwLock<HashMap<String, String>>,
    embed: RwLock<HashMap<String, EmbeddingVector>>,
    append: Mutex<()>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

fn load<T: DeserializeOwned>(path: &Path) -> Result<HashMap<String, T>> {
    let mut map = HashMap::new();
    let src = match std::fs::read_to_string(path) {
        Ok(s) => s,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(map),
        Err(e) => return Err(Error::io("reading response cache", path, e)),
    };
    for (i, line) in src.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: Entry<T> = serde_json::from_str(line).map_err(|e| Error::Malformed {
            stage: "response cache",
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        map.entry(entry.key).or_insert(entry.response);
    }
    Ok(map)
}

impl ResponseCache {
    /// Opens (creating if needed) the cache directory and loads both files.
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io("creating cache directory", dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            chat: RwLock::new(load(&dir.join(CHAT_FILE))?),
            embed: RwLock::new(load(&dir.join(EMBED_FILE))?),
            append: Mutex::new(()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }

    pub fn len(&self) -> usize {
        self.chat.read().expect("cache lock").len() + self.embed.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn append_line<T: Serialize>(&self, file: &str, key: &str, response: &T) -> std::result::Result<(), ProviderError> {
        let _guard = self.append.lock().expect("cache append lock");
        let path = self.dir.join(file);
        let mut line = serde_json::to_string(&serde_json::json!({"key": key, "response": response})).expect("cache entry serializes");
        line.push('\n');
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .and_then(|mut f| f.write_all(line.as_bytes()))
            .map_err(|e| ProviderError::InvalidInput(format!("writing {}: {e}", path.display())))
    }
}

pub fn chat_key(model_id: &str, prompt_version: &str, req: &ChatRequest) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        kind: &'static str,
        model: &'a str,
        prompts: &'a str,
        request: &'a ChatRequest,
    }
    let body = serde_json::to_vec(&Key {
        kind: "chat",
        model: model_id,
        prompts: prompt_version,
        request: req,
    })
    .expect("key serializes");
    sha256_hex(&body)
}

pub fn embed_key(model_id: &str, text: &str) -> String {
    let body = serde_json::to_vec(&serde_json::json!({"kind": "embed", "model": model_id, "text": text}))
        .expect("key serializes");
    sha256_hex(&body)
}

/// Chat provider answering from the cache and recording misses.
pub struct CachedChat<'a> {
    pub inner: &'a dyn ChatProvider,
    pub cache: &'a ResponseCache,
    pub prompt_version: String,
}

impl ChatProvider for CachedChat<'_> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn complete(&self, req: &ChatRequest) -> std::result::Result<String, ProviderError> {
        let key = chat_key(self.inner.model_id(), &self.prompt_version, req);
        if let Some(hit) = self.cache.chat.read().expect("cache lock").get(&key) {
            self.cache.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit.clone());
        }
        self.cache.misses.fetch_add(1, Ordering::Relaxed);
        let reply = self.inner.complete(req)?;
        let mut map = self.cache.chat.write().expect("cache lock");
        if let Slot::Vacant(slot) = map.entry(key) {
            self.cache.append_line(CHAT_FILE, slot.key(), &reply)?;
            slot.insert(reply.clone());
        }
        Ok(reply)
    }
}

/// Embedding provider answering per text from the cache; misses are sent to
/// the inner provider in one batch.
pub struct CachedEmbedder<'a> {
    pub inner: &'a dyn EmbeddingProvider,
    pub cache: &'a ResponseCache,
}

impl EmbeddingProvider for CachedEmbedder<'_> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn embed(&self, texts: &[String]) -> std::result::Result<Vec<EmbeddingVector>, ProviderError> {
        let model = self.inner.model_id();
        let keys: Vec<String> = texts.iter().map(|t| embed_key(model, t)).collect();
        let mut out: Vec<Option<EmbeddingVector>> = {
            let map = self.cache.embed.read().expect("cache lock");
            keys.iter().map(|k| map.get(k).cloned()).collect()
        };
        let missing: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
        self.cache.hits.fetch_add(texts.len() - missing.len(), Ordering::Relaxed);
        if !missing.is_empty() {
            self.cache.misses.fetch_add(missing.len(), Ordering::Relaxed);
            let batch: Vec<String> = missing.iter().map(|&i| texts[i].clone()).collect();
            let fresh = self.inner.embed(&batch)?;
            if fresh.len() != batch.len() {
                return Err(ProviderError::MalformedResponse(format!(
                    "{} embeddings for {} inputs",
                    fresh.len(),
                    batch.len()
                )));
            }
            let mut map = self.cache.embed.write().expect("cache lock");
            for (&i, v) in missing.iter().zip(fresh) {
                if !map.contains_key(&keys[i]) {
                    self.cache.append_line(EMBED_FILE, &keys[i], &v)?;
                    map.insert(keys[i].clone(), v.clone());
                }
                out[i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled")).collect())
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::AtomicUsize;

    use super::*;
    use crate::providers::{MockChat, MockEmbedder};

    struct Counting<'a> {
        inner: &'a dyn ChatProvider,
        calls: AtomicUsize,
    }

    impl ChatProvider for Counting<'_> {
        fn model_id(&self) -> &str {
            self.inner.model_id()
        }

        fn complete(&self, req: &ChatRequest) -> std::result::Result<String, ProviderError> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            self.inner.complete(req)
        }
    }

    #[test]
    fn warm_cache_answers_without_the_provider() {
        let dir = tempfile::tempdir().unwrap();
        let mock = MockChat::new().rule(None, "", "hello");
        let counting = Counting {
            inner: &mock,
            calls: AtomicUsize::new(0),
        };
        let req = ChatRequest::deterministic("Task: answer", "q", 8);
        {
            let cache = ResponseCache::open(dir.path()).unwrap();
            let c = CachedChat {
                inner: &counting,
                cache: &cache,
                prompt_version: "v1".into(),
            };
            assert_eq!(c.complete(&req).unwrap(), "hello");
            assert_eq!(c.complete(&req).unwrap(), "hello");
            assert_eq!(cache.stats(), CacheStats { hits: 1, misses: 1 });
        }
        assert_eq!(counting.calls.load(Ordering::Relaxed), 1);
        let before = std::fs::read(dir.path().join(CHAT_FILE)).unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let c = CachedChat {
            inner: &counting,
            cache: &cache,
            prompt_version: "v1".into(),
        };
        assert_eq!(c.complete(&req).unwrap(), "hello");
        assert_eq!(counting.calls.load(Ordering::Relaxed), 1);
        assert_eq!(std::fs::read(dir.path().join(CHAT_FILE)).unwrap(), before);
    }

    #[test]
    fn keys_depend_on_model_template_and_request() {
        let req = ChatRequest::deterministic("s", "u", 8);
        let base = chat_key("m", "v1", &req);
        assert_ne!(base, chat_key("m2", "v1", &req));
        assert_ne!(base, chat_key("m", "v2", &req));
        assert_ne!(base, chat_key("m", "v1", &ChatRequest::deterministic("s", "u2", 8)));
        assert_eq!(base, chat_key("m", "v1", &req));
        assert_ne!(embed_key("m", "a"), embed_key("m", "b"));
    }

    #[test]
    fn embeddings_cached_per_text() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let mock = MockEmbedder::new(16, 0).unwrap();
        let e = CachedEmbedder {
            inner: &mock,
            cache: &cache,
        };
        let a = e.embed(&["x".into(), "y".into()]).unwrap();
        let b = e.embed(&["y".into(), "z".into(), "x".into()]).unwrap();
        assert_eq!(a[0], b[2]);
        assert_eq!(a[1], b[0]);
        assert_eq!(cache.stats(), CacheStats { hits: 2, misses: 3 });
        let reopened = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(reopened.len(), 3);
    }

    #[test]
    fn malformed_cache_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(CHAT_FILE), "{\"key\":\"k\",\"response\":\"r\"}\nnot json\n").unwrap();
        match ResponseCache::open(dir.path()).unwrap_err() {
            Error::Malformed { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e:?}"),
        }
    }
}

//! NL → FOL translation through a chat model, with a durable cache.

mod cache;
pub mod llm;
pub mod prompts;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fol::{extract_fol_from_llm_response, join_formulas, tokenize_fol, FolError};
pub use cache::TranslationCache;
pub use llm::{complete_with_retry, ChatModel, LlmError, OpenAiChat, RetryPolicy};

pub const DEFAULT_TEMPERATURE: f64 = 0.5;
pub const DEFAULT_DOC_CHAR_LIMIT: usize = 6000;

#[derive(Debug, Error)]
pub enum TranslateError {
    #[error("text is empty")]
    EmptyText,
    #[error("translation not cached and no LLM endpoint configured")]
    NotConfigured,
    #[error("LLM endpoint returned HTTP {0}")]
    EndpointError(u16),
    #[error("LLM endpoint kept rate limiting")]
    RateLimited,
    #[error("LLM transport failure: {0}")]
    Transport(String),
    #[error("could not parse FOL from response: {0}")]
    ParseFailure(#[source] FolError),
    #[error("translation cache line {line}: {reason}")]
    CacheFormat { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<LlmError> for TranslateError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Endpoint { status } => TranslateError::EndpointError(status),
            LlmError::RateLimited => TranslateError::RateLimited,
            LlmError::Transport(m) | LlmError::Malformed(m) => TranslateError::Transport(m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextKind {
    Query,
    Document,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationRecord {
    pub text_hash: String,
    pub kind: TextKind,
    pub fol_text: String,
    pub raw_response: String,
    pub model_id: String,
    pub temperature: f64,
    #[serde(default)]
    pub truncated: bool,
}

/// Hex SHA-256 of the UTF-8 text; the cache key's text component.
pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Anything that can produce a FOL translation for a text.
pub trait FolTranslator: Send + Sync {
    fn translate(&self, text: &str, kind: TextKind) -> Result<TranslationRecord, TranslateError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslatorConfig {
    pub model_id: String,
    pub temperature: f64,
    pub doc_char_limit: usize,
    pub retry: RetryPolicy,
}

impl Default for TranslatorConfig {
    fn default() -> Self {
        TranslatorConfig {
            model_id: "gpt-4o".to_string(),
            temperature: DEFAULT_TEMPERATURE,
            doc_char_limit: DEFAULT_DOC_CHAR_LIMIT,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct WarmSummary {
    pub ok: usize,
    pub failed: usize,
    pub cached: usize,
}

pub struct Translator {
    chat: Option<Box<dyn ChatModel>>,
    cache: TranslationCache,
    config: TranslatorConfig,
}

impl Translator {
    pub fn new(chat: Option<Box<dyn ChatModel>>, cache: TranslationCache, config: TranslatorConfig) -> Self {
        Translator { chat, cache, config }
    }

    /// Cache-only translator: misses fail with [`TranslateError::NotConfigured`].
    pub fn offline(cache: TranslationCache, config: TranslatorConfig) -> Self {
        Self::new(None, cache, config)
    }

    pub fn cache(&self) -> &TranslationCache {
        &self.cache
    }

    pub fn config(&self) -> &TranslatorConfig {
        &self.config
    }

    pub fn is_cached(&self, text: &str, kind: TextKind) -> bool {
        self.cache
            .get(&text_hash(text), kind, &self.config.model_id)
            .is_some()
    }

    fn prompt_for(&self, text: &str, kind: TextKind) -> (String, bool) {
        match kind {
            TextKind::Query => (prompts::query_prompt(text), false),
            TextKind::Document => {
                let limit = self.config.doc_char_limit;
                match text.char_indices().nth(limit) {
                    Some((cut, _)) => (prompts::document_prompt(&text[..cut]), true),
                    None => (prompts::document_prompt(text), false),
                }
            }
        }
    }

    /// Translates every text once with up to `concurrency` requests in flight.
    pub fn warm_cache(&self, texts: &[&str], kind: TextKind, concurrency: usize) -> WarmSummary {
        use rayon::prelude::*;

        #[derive(Clone, Copy)]
        enum Outcome {
            Ok,
            Failed,
            Cached,
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(concurrency.max(1))
            .build()
            .expect("thread pool");
        let outcomes: Vec<Outcome> = pool.install(|| {
            texts
                .par_iter()
                .map(|t| {
                    if self.is_cached(t, kind) {
                        Outcome::Cached
                    } else if self.translate(t, kind).is_ok() {
                        Outcome::Ok
                    } else {
                        Outcome::Failed
                    }
                })
                .collect()
        });
        let mut summary = WarmSummary::default();
        for o in outcomes {
            match o {
                Outcome::Ok => summary.ok += 1,
                Outcome::Failed => summary.failed += 1,
                Outcome::Cached => summary.cached += 1,
            }
        }
        summary
    }
}

/// Keeps the formulas the tokenizer accepts; errors when none survive.
fn usable_formulas(response: &str) -> Result<Vec<String>, FolError> {
    let formulas = extract_fol_from_llm_response(response)?;
    let mut first_err = None;
    let kept: Vec<String> = formulas
        .into_iter()
        .filter(|f| match tokenize_fol(f) {
            Ok(_) => true,
            Err(e) => {
                first_err.get_or_insert(e);
                false
            }
        })
        .collect();
    if kept.is_empty() {
        return Err(first_err.unwrap_or(FolError::NoFormulaFound));
    }
    Ok(kept)
}

impl FolTranslator for Translator {
    fn translate(&self, text: &str, kind: TextKind) -> Result<TranslationRecord, TranslateError> {
        if text.trim().is_empty() {
            return Err(TranslateError::EmptyText);
        }
        let hash = text_hash(text);
        if let Some(hit) = self.cache.get(&hash, kind, &self.config.model_id) {
            return Ok(hit);
        }
        let chat = self.chat.as_deref().ok_or(TranslateError::NotConfigured)?;
        let (prompt, truncated) = self.prompt_for(text, kind);
        let raw = complete_with_retry(chat, &prompt, self.config.temperature, self.config.retry)?;
        let formulas = usable_formulas(&raw).map_err(TranslateError::ParseFailure)?;
        let fol_text = join_formulas(&formulas).map_err(TranslateError::ParseFailure)?;
        let record = TranslationRecord {
            text_hash: hash,
            kind,
            fol_text,
            raw_response: raw,
            model_id: self.config.model_id.clone(),
            temperature: self.config.temperature,
            truncated,
        };
        self.cache.insert(record.clone())?;
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;
    use std::time::Duration;

    fn fast_config() -> TranslatorConfig {
        TranslatorConfig {
            retry: RetryPolicy {
                max_attempts: 5,
                base_delay: Duration::ZERO,
            },
            ..TranslatorConfig::default()
        }
    }

    fn counting_model(
        calls: Arc<AtomicUsize>,
        reply: &'static str,
    ) -> Box<dyn ChatModel> {
        Box::new(move |_: &str, _: f64| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok(reply.to_string())
        })
    }

    #[test]
    fn cache_hit_makes_no_call() {
        let calls = Arc::new(AtomicUsize::new(0));
        let t = Translator::new(
            Some(counting_model(calls.clone(), "Conclusion:\nA(x) ::: a.")),
            TranslationCache::in_memory(),
            fast_config(),
        );
        let first = t.translate("some query", TextKind::Query).unwrap();
        let second = t.translate("some query", TextKind::Query).unwrap();
        assert_eq!(first, second);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        // Same text as a document is a different key.
        t.translate("some query", TextKind::Document).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn prose_without_formulas_is_a_parse_failure_and_not_cached() {
        let calls = Arc::new(AtomicUsize::new(0));
        let t = Translator::new(
            Some(counting_model(calls, "I cannot translate this.")),
            TranslationCache::in_memory(),
            fast_config(),
        );
        assert!(matches!(
            t.translate("q", TextKind::Query),
            Err(TranslateError::ParseFailure(FolError::NoFormulaFound))
        ));
        assert!(t.cache().is_empty());
    }

    #[test]
    fn untokenizable_formulas_are_dropped() {
        let reply = "Conclusion:\nA(x) $ B(x) ::: bad.\nC(x) ::: fine.";
        let t = Translator::new(
            Some(Box::new(move |_: &str, _: f64| Ok(reply.to_string()))),
            TranslationCache::in_memory(),
            fast_config(),
        );
        assert_eq!(t.translate("q", TextKind::Query).unwrap().fol_text, "C(x)");
    }

    #[test]
    fn offline_miss() {
        let t = Translator::offline(TranslationCache::in_memory(), fast_config());
        assert!(matches!(t.translate("q", TextKind::Query), Err(TranslateError::NotConfigured)));
    }

    #[test]
    fn long_documents_are_truncated_and_flagged() {
        let seen = Arc::new(std::sync::Mutex::new(String::new()));
        let seen2 = seen.clone();
        let t = Translator::new(
            Some(Box::new(move |p: &str, _: f64| {
                *seen2.lock().unwrap() = p.to_string();
                Ok("Conclusion:\nA(x) ::: a.".to_string())
            })),
            TranslationCache::in_memory(),
            TranslatorConfig {
                doc_char_limit: 5,
                ..fast_config()
            },
        );
        let rec = t.translate("abcdéfghij", TextKind::Document).unwrap();
        assert!(rec.truncated);
        assert!(seen.lock().unwrap().ends_with("Document:\nabcdé\n"));
        let rec = t.translate("abc", TextKind::Document).unwrap();
        assert!(!rec.truncated);
    }

    #[test]
    fn endpoint_status_maps() {
        let t = Translator::new(
            Some(Box::new(|_: &str, _: f64| Err(LlmError::Endpoint { status: 503 }))),
            TranslationCache::in_memory(),
            fast_config(),
        );
        assert!(matches!(t.translate("q", TextKind::Query), Err(TranslateError::EndpointError(503))));
    }
}

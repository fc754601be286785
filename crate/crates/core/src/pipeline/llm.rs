//! The language-model boundary and a deterministic stand-in.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use parking_lot::Mutex;
use thiserror::Error;

use super::prompt::EngineeredPrompt;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("language model call failed: {0}")]
pub struct LlmError(pub String);

/// Turns an engineered prompt into response text. Implementations are
/// stateless with respect to the conversation: everything they may use
/// arrives in the prompt.
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &EngineeredPrompt) -> Result<String, LlmError>;
}

/// Answers with a digest of the question and the retrieved ids in rank
/// order, so responses can be matched exactly in tests.
#[derive(Debug, Default)]
pub struct MockLlm {
    fail: AtomicBool,
    calls: AtomicUsize,
    last_prompt: Mutex<Option<EngineeredPrompt>>,
}

impl MockLlm {
    pub fn new() -> Self {
        Self::default()
    }

    /// While set, every call fails.
    pub fn set_failing(&self, fail: bool) {
        self.fail.store(fail, Ordering::SeqCst);
    }

    /// Number of calls received, failed ones included.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn last_prompt(&self) -> Option<EngineeredPrompt> {
        self.last_prompt.lock().clone()
    }

    /// The response this mock gives for `prompt`.
    pub fn digest(prompt: &EngineeredPrompt) -> String {
        let ids: Vec<&str> = prompt
            .sources
            .retrieved
            .iter()
            .map(|(id, _)| id.as_str())
            .collect();
        format!(
            "[mock] question: {} | retrieved: [{}]",
            prompt.question,
            ids.join(", ")
        )
    }
}

impl LlmClient for MockLlm {
    fn complete(&self, prompt: &EngineeredPrompt) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        *self.last_prompt.lock() = Some(prompt.clone());
        if self.fail.load(Ordering::SeqCst) {
            return Err(LlmError("injected failure".into()));
        }
        Ok(Self::digest(prompt))
    }
}

impl<T: LlmClient + ?Sized> LlmClient for std::sync::Arc<T> {
    fn complete(&self, prompt: &EngineeredPrompt) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }
}

//! The query workflow: cache check, history, profile, embedding, retrieval,
//! prompt assembly and model call, persistence, and response delivery.
//!
//! ```
//! use std::sync::Arc;
//! use contextdb::fixture::{shoe_documents, DEMO_QUESTION};
//! use contextdb::pipeline::{MockLlm, Pipeline};
//! use contextdb::{FilterExpr, FixtureEmbedder, SharedIndex, VectorIndex};
//!
//! let mut index = VectorIndex::flat();
//! for doc in shoe_documents() {
//!     index.insert(doc).unwrap();
//! }
//! let pipeline = Pipeline::new(
//!     Arc::new(SharedIndex::new(index)),
//!     Arc::new(FixtureEmbedder),
//!     Arc::new(MockLlm::new()),
//! );
//! let filter = FilterExpr::parse("price<100").unwrap();
//! let response = pipeline.handle_query("s1", "u1", DEMO_QUESTION, 1, Some(&filter)).unwrap();
//! assert_eq!(response.retrieved[0].doc_id, "reebok-floatride");
//! assert!(pipeline.handle_query("s1", "u1", DEMO_QUESTION, 1, Some(&filter)).unwrap().cached);
//! ```

mod llm;
mod prompt;

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

pub use llm::{LlmClient, LlmError, MockLlm};
pub use prompt::{
    assemble_prompt, EngineeredPrompt, Placeholder, PromptSources, PromptTemplate, TemplateError,
    DEFAULT_TEMPLATE_BODY, DEFAULT_TEMPLATE_NAME, NO_SITUATION,
};

use crate::cache::{cache_key, ResponseCache};
use crate::clock::{Clock, SystemClock};
use crate::conversation::{ConversationError, ConversationStore, Message, NewMessage, Role};
use crate::document::{Document, Metadata};
use crate::embed::{EmbedError, EmbeddingProvider};
use crate::filter::FilterExpr;
use crate::index::{IndexError, SearchHit, SharedIndex, VectorIndex};
use crate::situational::ProfileStore;

pub const DEFAULT_HISTORY_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Cache,
    History,
    Situation,
    Embed,
    Search,
    Llm,
    Persist,
}

impl Stage {
    /// Execution order on a cache miss.
    pub const ALL: [Stage; 7] = [
        Stage::Cache,
        Stage::History,
        Stage::Situation,
        Stage::Embed,
        Stage::Search,
        Stage::Llm,
        Stage::Persist,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Cache => "cache",
            Stage::History => "history",
            Stage::Situation => "situation",
            Stage::Embed => "embed",
            Stage::Search => "search",
            Stage::Llm => "llm",
            Stage::Persist => "persist",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("embed stage failed: {0}")]
    Embed(#[source] EmbedError),
    #[error("search stage failed: {0}")]
    Search(#[source] IndexError),
    #[error("llm stage failed: {0}")]
    Llm(#[source] LlmError),
    #[error("persist stage failed: {0}")]
    Persist(#[source] ConversationError),
    #[error("persist stage failed to index the question: {0}")]
    QuestionIndex(#[source] IndexError),
}

impl PipelineError {
    pub fn stage(&self) -> Stage {
        match self {
            PipelineError::Embed(_) => Stage::Embed,
            PipelineError::Search(_) => Stage::Search,
            PipelineError::Llm(_) => Stage::Llm,
            PipelineError::Persist(_) | PipelineError::QuestionIndex(_) => Stage::Persist,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineResponse {
    pub text: String,
    pub cached: bool,
    pub retrieved: Vec<SearchHit>,
    /// Milliseconds per stage in execution order. A cache hit reports only
    /// the cache stage.
    pub latency: Vec<(Stage, f64)>,
    /// The prompt sent to the model; absent on a cache hit.
    pub prompt: Option<EngineeredPrompt>,
}

impl PipelineResponse {
    pub fn latency_ms(&self, stage: Stage) -> Option<f64> {
        self.latency
            .iter()
            .find(|(s, _)| *s == stage)
            .map(|(_, ms)| *ms)
    }
}

struct Timer {
    start: Instant,
    spans: Vec<(Stage, f64)>,
}

impl Timer {
    fn new() -> Self {
        Self {
            start: Instant::now(),
            spans: Vec::with_capacity(Stage::ALL.len()),
        }
    }

    fn lap(&mut self, stage: Stage) {
        let now = Instant::now();
        self.spans
            .push((stage, (now - self.start).as_secs_f64() * 1e3));
        self.start = now;
    }
}

/// Trims the model output and lists the retrieved ids underneath.
pub fn post_process(text: &str, hits: &[SearchHit]) -> String {
    let body = text.trim();
    if hits.is_empty() {
        return body.to_owned();
    }
    let ids: Vec<&str> = hits.iter().map(|h| h.doc_id.as_str()).collect();
    format!("{body}\n\nReferences: {}", ids.join(", "))
}

pub struct Pipeline {
    index: Arc<SharedIndex>,
    embedder: Arc<dyn EmbeddingProvider>,
    llm: Arc<dyn LlmClient>,
    conversations: Arc<ConversationStore>,
    profiles: Arc<ProfileStore>,
    cache: Arc<ResponseCache>,
    template: PromptTemplate,
    history_window: usize,
    questions: Option<SharedIndex>,
    clock: Arc<dyn Clock>,
}

impl fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pipeline")
            .field("template", &self.template.name())
            .field("history_window", &self.history_window)
            .field("index_len", &self.index.len())
            .finish_non_exhaustive()
    }
}

impl Pipeline {
    /// A pipeline with in-memory stores, the default cache and the built-in
    /// template. Use the `with_*` methods to replace any part.
    pub fn new(
        index: Arc<SharedIndex>,
        embedder: Arc<dyn EmbeddingProvider>,
        llm: Arc<dyn LlmClient>,
    ) -> Self {
        let clock: Arc<dyn Clock> = Arc::new(SystemClock);
        Self {
            index,
            embedder,
            llm,
            conversations: Arc::new(ConversationStore::in_memory(Arc::clone(&clock))),
            profiles: Arc::new(ProfileStore::in_memory(Arc::clone(&clock))),
            cache: Arc::new(ResponseCache::default()),
            template: PromptTemplate::default(),
            history_window: DEFAULT_HISTORY_WINDOW,
            questions: None,
            clock,
        }
    }

    pub fn with_conversations(mut self, store: Arc<ConversationStore>) -> Self {
        self.conversations = store;
        self
    }

    pub fn with_profiles(mut self, store: Arc<ProfileStore>) -> Self {
        self.profiles = store;
        self
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_template(mut self, template: PromptTemplate) -> Self {
        self.template = template;
        self
    }

    pub fn with_history_window(mut self, messages: usize) -> Self {
        self.history_window = messages;
        self
    }

    /// Time source for cache expiry.
    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    /// When enabled, each answered question's embedding is stored in a
    /// separate flat index with id `<session>:<seq>`.
    pub fn with_question_index(mut self, enabled: bool) -> Self {
        self.questions = enabled.then(|| SharedIndex::new(VectorIndex::flat()));
        self
    }

    pub fn index(&self) -> &Arc<SharedIndex> {
        &self.index
    }

    pub fn conversations(&self) -> &Arc<ConversationStore> {
        &self.conversations
    }

    pub fn profiles(&self) -> &Arc<ProfileStore> {
        &self.profiles
    }

    pub fn cache(&self) -> &Arc<ResponseCache> {
        &self.cache
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.template
    }

    pub fn question_index(&self) -> Option<&SharedIndex> {
        self.questions.as_ref()
    }

    /// Answers `question` for `user_id` in `session_id`.
    ///
    /// A cached answer is returned before any store is touched. Otherwise the
    /// question and answer are appended together only after the model call
    /// succeeds, and the answer is cached only after that append is durable.
    pub fn handle_query(
        &self,
        session_id: &str,
        user_id: &str,
        question: &str,
        k: usize,
        filter: Option<&FilterExpr>,
    ) -> Result<PipelineResponse, PipelineError> {
        let mut timer = Timer::new();
        let key = cache_key(user_id, question);
        let cached = self.cache.get(&key, self.clock.now_ms());
        timer.lap(Stage::Cache);
        if let Some(text) = cached {
            return Ok(PipelineResponse {
                text,
                cached: true,
                retrieved: Vec::new(),
                latency: timer.spans,
                prompt: None,
            });
        }

        let history = self
            .conversations
            .get_history(session_id, self.history_window);
        timer.lap(Stage::History);

        let profile = self.profiles.get_profile(user_id);
        timer.lap(Stage::Situation);

        let embedding = self
            .embedder
            .embed(question)
            .map_err(PipelineError::Embed)?;
        timer.lap(Stage::Embed);

        let hits = match self.index.search_with_documents(&embedding, k, filter) {
            Ok(hits) => hits,
            // Nothing indexed yet: answer without retrieved context.
            Err(IndexError::Empty) => Vec::new(),
            Err(e) => return Err(PipelineError::Search(e)),
        };
        timer.lap(Stage::Search);

        let prompt = assemble_prompt(&self.template, question, &history, profile.as_ref(), &hits);
        let raw = self.llm.complete(&prompt).map_err(PipelineError::Llm)?;
        let retrieved: Vec<SearchHit> = hits.into_iter().map(|(hit, _)| hit).collect();
        let text = post_process(&raw, &retrieved);
        timer.lap(Stage::Llm);

        let mut meta = Metadata::new();
        meta.insert("user_id".into(), user_id.into());
        let ids: Vec<&str> = retrieved.iter().map(|h| h.doc_id.as_str()).collect();
        meta.insert("retrieved".into(), ids.join(",").into());
        let (asked, _) = self.record_exchange(session_id, question, &text, meta)?;
        if let Some(questions) = &self.questions {
            let mut doc_meta = Metadata::new();
            doc_meta.insert("session_id".into(), session_id.into());
            doc_meta.insert("user_id".into(), user_id.into());
            let doc = Document::new(
                format!("{session_id}:{}", asked.seq),
                question,
                doc_meta,
                embedding,
            )
            .expect("session ids are nonempty and keys are valid");
            questions
                .insert(doc)
                .map_err(PipelineError::QuestionIndex)?;
        }
        self.cache.put(
            &key,
            text.clone(),
            self.cache.default_ttl(),
            self.clock.now_ms(),
        );
        timer.lap(Stage::Persist);

        Ok(PipelineResponse {
            text,
            cached: false,
            retrieved,
            latency: timer.spans,
            prompt: Some(prompt),
        })
    }

    /// Appends the user question and the assistant answer in one atomic
    /// write, with `meta` on the assistant message.
    pub fn record_exchange(
        &self,
        session_id: &str,
        question: &str,
        answer: &str,
        meta: Metadata,
    ) -> Result<(Message, Message), PipelineError> {
        let mut pair = self
            .conversations
            .append_batch(
                session_id,
                vec![
                    NewMessage::new(Role::User, question),
                    NewMessage::new(Role::Assistant, answer).with_metadata(meta),
                ],
            )
            .map_err(PipelineError::Persist)?;
        let answer = pair.pop().expect("two messages appended");
        let question = pair.pop().expect("two messages appended");
        Ok((question, answer))
    }
}

//! An embedded multi-context store for retrieval-augmented generation.
//!
//! Three storage tiers feed one query pipeline:
//!
//! - [`conversation`]: append-only, session-scoped chat history.
//! - [`situational`]: user profiles and operational records.
//! - [`index`]: vector indexes (flat, HNSW, IVF) with metadata filtering.
//!
//! [`pipeline::Pipeline`] runs a question through all of them, builds an
//! engineered prompt, calls a pluggable [`pipeline::LlmClient`], persists the
//! exchange and caches the answer in a [`cache::ResponseCache`].
//!
//! Runnable walkthroughs live in the crate's `examples/` directory:
//!
//! ```bash
//! cargo run --example shoe_search
//! ```

pub mod bench;
pub mod cache;
pub mod cli;
pub mod clock;
pub mod conversation;
pub mod document;
pub mod embed;
pub mod filter;
pub mod fixture;
pub mod index;
pub mod jsonl;
pub mod pipeline;
pub mod situational;
pub mod vector;

pub use clock::{Clock, ManualClock, SystemClock};
pub use document::{Document, DocumentError, MetaValue, Metadata};
pub use embed::{
    fixture_embed, hash_embed, EmbedError, EmbeddingProvider, FixtureEmbedder, HashEmbedder,
};
pub use filter::{
    evaluate_filter, Clause, CompareOp, FilterError, FilterExpr, FilterParseError, Operand,
};
pub use index::{
    FlatIndex, HnswIndex, HnswParams, IndexError, IndexKind, IvfIndex, IvfParams, SearchHit,
    SharedIndex, VectorIndex,
};
pub use vector::{euclidean_distance, Vector, VectorError};

//! The semantic tier: exact and approximate k-nearest-neighbor indexes over
//! [`Document`]s, with hybrid metadata filtering and snapshot persistence.
//!
//! Three kinds share one contract:
//!
//! - [`FlatIndex`] scans every document and is exact.
//! - [`HnswIndex`] navigates a layered proximity graph.
//! - [`IvfIndex`] partitions documents around k-means centroids and scans the
//!   lists nearest to the query.
//!
//! Results are ordered by ascending distance, ties broken by ascending
//! `doc_id`, and carry 1-based consecutive ranks. Internally everything ranks
//! by squared distance; reported distances are true Euclidean distances.

mod flat;
mod hnsw;
mod ivf;
mod kmeans;
mod snapshot;
mod table;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::path::Path;

use parking_lot::{RwLock, RwLockReadGuard, RwLockWriteGuard};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::Document;
use crate::filter::{FilterError, FilterExpr};
use crate::vector::Vector;

pub use flat::FlatIndex;
pub use hnsw::{HnswIndex, HnswParams};
pub use ivf::{IvfIndex, IvfParams};
pub use kmeans::{kmeans, KMeans};
pub use snapshot::{FORMAT_VERSION, MAGIC};

pub(crate) use table::DocTable;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("dimension mismatch: index has dim {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("index is empty")]
    Empty,
    #[error("IVF index must be trained before use")]
    NotTrained,
    #[error("training needs at least {required} vectors, got {provided}")]
    InsufficientTrainingData { required: usize, provided: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("snapshot I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported snapshot format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Flat,
    Hnsw,
    Ivf,
}

impl IndexKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IndexKind::Flat => "flat",
            IndexKind::Hnsw => "hnsw",
            IndexKind::Ivf => "ivf",
        }
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl std::str::FromStr for IndexKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flat" => Ok(IndexKind::Flat),
            "hnsw" => Ok(IndexKind::Hnsw),
            "ivf" => Ok(IndexKind::Ivf),
            other => Err(format!(
                "unknown index kind {other:?} (expected flat, hnsw or ivf)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub doc_id: String,
    pub distance: f64,
    pub rank: usize,
}

/// A candidate under consideration: squared distance plus the document id
/// for tie-breaking.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Ranked<'a> {
    pub dist2: f64,
    pub id: &'a str,
    pub slot: usize,
}

impl Ranked<'_> {
    fn key(&self) -> (f64, &str) {
        (self.dist2, self.id)
    }
}

impl PartialEq for Ranked<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked<'_> {}

impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1))
    }
}

/// Keeps the `k` best candidates seen so far.
pub(crate) struct TopK<'a> {
    k: usize,
    heap: BinaryHeap<Ranked<'a>>,
}

impl<'a> TopK<'a> {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    pub fn push(&mut self, candidate: Ranked<'a>) {
        if self.heap.len() < self.k {
            self.heap.push(candidate);
        } else if let Some(worst) = self.heap.peek() {
            if candidate < *worst {
                self.heap.pop();
                self.heap.push(candidate);
            }
        }
    }

    pub fn into_sorted(self) -> Vec<Ranked<'a>> {
        self.heap.into_sorted_vec()
    }
}

pub(crate) fn to_hits(ranked: Vec<Ranked<'_>>) -> Vec<SearchHit> {
    ranked
        .into_iter()
        .enumerate()
        .map(|(i, r)| SearchHit {
            doc_id: r.id.to_owned(),
            distance: r.dist2.sqrt(),
            rank: i + 1,
        })
        .collect()
}

/// Exact top-k over the given slots, optionally restricted by `filter`.
pub(crate) fn exact_top_k<'a>(
    table: &'a DocTable,
    query: &[f64],
    slots: impl Iterator<Item = usize>,
    k: usize,
    filter: Option<&FilterExpr>,
) -> Result<Vec<Ranked<'a>>, IndexError> {
    let mut top = TopK::new(k);
    for slot in slots {
        let Some(doc) = table.get(slot) else { continue };
        if let Some(filter) = filter {
            if !filter.evaluate(doc.metadata())? {
                continue;
            }
        }
        top.push(Ranked {
            dist2: crate::vector::squared_l2(query, doc.embedding()),
            id: doc.id(),
            slot,
        });
    }
    Ok(top.into_sorted())
}

/// Number of candidates an approximate index fetches before post-filtering.
pub(crate) fn oversample(k: usize) -> usize {
    (4 * k).max(k + 32)
}

/// Maximum number of times the oversampling budget is doubled.
pub(crate) const OVERSAMPLE_RETRIES: usize = 3;

/// Post-filters approximate candidates. `fetch(n)` returns up to `n` live
/// candidates in ascending order; when fewer than `k` survive the filter the
/// budget doubles, at most [`OVERSAMPLE_RETRIES`] times.
pub(crate) fn post_filtered<'a>(
    table: &'a DocTable,
    k: usize,
    filter: Option<&FilterExpr>,
    mut fetch: impl FnMut(usize) -> Vec<Ranked<'a>>,
) -> Result<Vec<Ranked<'a>>, IndexError> {
    let mut budget = match filter {
        Some(f) if !f.is_empty() => oversample(k),
        _ => k,
    };
    for attempt in 0..=OVERSAMPLE_RETRIES {
        let candidates = fetch(budget);
        // Tombstones can starve a fetch, so a short answer alone does not
        // mean the index has nothing more to offer.
        let exhausted = candidates.len() >= table.len();
        let mut survivors = Vec::with_capacity(k);
        for c in candidates {
            let doc = table.get(c.slot).expect("candidates are live");
            let keep = match filter {
                Some(f) => f.evaluate(doc.metadata())?,
                None => true,
            };
            if keep {
                survivors.push(c);
            }
        }
        if survivors.len() >= k || exhausted || attempt == OVERSAMPLE_RETRIES {
            survivors.sort();
            survivors.truncate(k);
            return Ok(survivors);
        }
        budget *= 2;
    }
    unreachable!()
}

/// Any of the three index kinds behind one interface.
// An index is a long-lived singleton, so the size gap between variants costs
// nothing worth a box.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
pub enum VectorIndex {
    Flat(FlatIndex),
    Hnsw(HnswIndex),
    Ivf(IvfIndex),
}

impl VectorIndex {
    pub fn flat() -> Self {
        VectorIndex::Flat(FlatIndex::new())
    }

    pub fn hnsw(params: HnswParams) -> Result<Self, IndexError> {
        HnswIndex::new(params).map(VectorIndex::Hnsw)
    }

    /// An untrained IVF index; see [`VectorIndex::train_ivf`].
    pub fn ivf() -> Self {
        VectorIndex::Ivf(IvfIndex::new())
    }

    pub fn kind(&self) -> IndexKind {
        match self {
            VectorIndex::Flat(_) => IndexKind::Flat,
            VectorIndex::Hnsw(_) => IndexKind::Hnsw,
            VectorIndex::Ivf(_) => IndexKind::Ivf,
        }
    }

    pub(crate) fn table(&self) -> &DocTable {
        match self {
            VectorIndex::Flat(i) => i.table(),
            VectorIndex::Hnsw(i) => i.table(),
            VectorIndex::Ivf(i) => i.table(),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        self.table().dim()
    }

    /// Number of live documents.
    pub fn len(&self) -> usize {
        self.table().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.table().get_by_id(id)
    }

    /// Live documents in insertion order.
    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.table().live().map(|(_, d)| d)
    }

    /// Adds `doc`, replacing any document with the same id.
    pub fn insert(&mut self, doc: Document) -> Result<(), IndexError> {
        match self {
            VectorIndex::Flat(i) => i.insert(doc),
            VectorIndex::Hnsw(i) => i.insert(doc),
            VectorIndex::Ivf(i) => i.insert(doc),
        }
    }

    pub fn remove(&mut self, id: &str) -> bool {
        match self {
            VectorIndex::Flat(i) => i.remove(id),
            VectorIndex::Hnsw(i) => i.remove(id),
            VectorIndex::Ivf(i) => i.remove(id),
        }
    }

    pub fn search(&self, query: &Vector, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        self.search_inner(query, k, None)
    }

    pub fn search_filtered(
        &self,
        query: &Vector,
        k: usize,
        filter: &FilterExpr,
    ) -> Result<Vec<SearchHit>, IndexError> {
        self.search_inner(query, k, Some(filter))
    }

    fn search_inner(
        &self,
        query: &Vector,
        k: usize,
        filter: Option<&FilterExpr>,
    ) -> Result<Vec<SearchHit>, IndexError> {
        match self {
            VectorIndex::Flat(i) => i.search_inner(query, k, filter),
            VectorIndex::Hnsw(i) => i.search_inner(query, k, filter),
            VectorIndex::Ivf(i) => i.search_inner(query, k, filter),
        }
    }

    /// Trains the coarse quantizer of an IVF index. Other kinds reject this.
    pub fn train_ivf(&mut self, vectors: &[Vector], params: IvfParams) -> Result<(), IndexError> {
        match self {
            VectorIndex::Ivf(i) => i.train(vectors, params),
            other => Err(IndexError::InvalidParams(format!(
                "cannot train a {} index",
                other.kind()
            ))),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        snapshot::save(self, path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        snapshot::load(path.as_ref())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        snapshot::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        snapshot::decode(bytes)
    }
}

pub(crate) fn check_query(table: &DocTable, query: &Vector, k: usize) -> Result<(), IndexError> {
    if k == 0 {
        return Err(IndexError::InvalidK);
    }
    if let Some(expected) = table.dim() {
        if expected != query.dim() {
            return Err(IndexError::DimensionMismatch {
                expected,
                actual: query.dim(),
            });
        }
    }
    Ok(())
}

/// A [`VectorIndex`] shareable across threads: any number of concurrent
/// searches, or one mutation at a time. Each mutation is atomic with respect
/// to searches.
#[derive(Debug)]
pub struct SharedIndex {
    inner: RwLock<VectorIndex>,
}

impl SharedIndex {
    pub fn new(index: VectorIndex) -> Self {
        Self {
            inner: RwLock::new(index),
        }
    }

    pub fn read(&self) -> RwLockReadGuard<'_, VectorIndex> {
        self.inner.read()
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, VectorIndex> {
        self.inner.write()
    }

    pub fn into_inner(self) -> VectorIndex {
        self.inner.into_inner()
    }

    pub fn insert(&self, doc: Document) -> Result<(), IndexError> {
        self.inner.write().insert(doc)
    }

    pub fn remove(&self, id: &str) -> bool {
        self.inner.write().remove(id)
    }

    pub fn train_ivf(&self, vectors: &[Vector], params: IvfParams) -> Result<(), IndexError> {
        self.inner.write().train_ivf(vectors, params)
    }

    pub fn search(&self, query: &Vector, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        self.inner.read().search(query, k)
    }

    pub fn search_filtered(
        &self,
        query: &Vector,
        k: usize,
        filter: &FilterExpr,
    ) -> Result<Vec<SearchHit>, IndexError> {
        self.inner.read().search_filtered(query, k, filter)
    }

    /// Searches and returns each hit with a copy of its document, under one
    /// read lock.
    pub fn search_with_documents(
        &self,
        query: &Vector,
        k: usize,
        filter: Option<&FilterExpr>,
    ) -> Result<Vec<(SearchHit, Document)>, IndexError> {
        let index = self.inner.read();
        let hits = index.search_inner(query, k, filter)?;
        Ok(hits
            .into_iter()
            .map(|hit| {
                let doc = index
                    .get(&hit.doc_id)
                    .expect("hit refers to a live document")
                    .clone();
                (hit, doc)
            })
            .collect())
    }

    pub fn get(&self, id: &str) -> Option<Document> {
        self.inner.read().get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.inner.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        self.inner.read().save(path)
    }
}

impl From<VectorIndex> for SharedIndex {
    fn from(index: VectorIndex) -> Self {
        Self::new(index)
    }
}

//! Recall and latency measurement of an index against the exact flat scan.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::document::{Document, Metadata};
use crate::index::{
    FlatIndex, HnswParams, IndexError, IndexKind, IvfParams, SearchHit, VectorIndex,
};
use crate::vector::Vector;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub n: usize,
    pub dim: usize,
    pub k: usize,
    pub queries: usize,
    pub kind: IndexKind,
    pub hnsw: HnswParams,
    /// `None` trains with [`IvfParams::for_training_size`].
    pub ivf: Option<IvfParams>,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(kind: IndexKind, n: usize, dim: usize, k: usize, seed: u64) -> Self {
        Self {
            n,
            dim,
            k,
            queries: 100,
            kind,
            hnsw: HnswParams {
                seed,
                ..HnswParams::default()
            },
            ivf: None,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub kind: IndexKind,
    pub n: usize,
    pub dim: usize,
    pub k: usize,
    pub queries: usize,
    /// Mean recall@k over all queries.
    pub recall: f64,
    pub build_ms: f64,
    pub p50_us: f64,
    pub p95_us: f64,
}

/// `n` points drawn uniformly from the unit sphere in `dim` dimensions.
pub fn random_unit_vectors(n: usize, dim: usize, seed: u64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                break Vector::new(v.into_iter().map(|x| x / norm).collect()).expect("finite");
            }
        })
        .collect()
}

/// Wraps vectors as documents with ids `v000000`, `v000001`, ...
pub fn as_documents(vectors: Vec<Vector>) -> Vec<Document> {
    vectors
        .into_iter()
        .enumerate()
        .map(|(i, v)| Document::new(format!("v{i:06}"), "", Metadata::new(), v).expect("valid id"))
        .collect()
}

/// Fraction of `truth` ids present in `found`.
pub fn recall_at_k(truth: &[SearchHit], found: &[SearchHit]) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    let hits = truth
        .iter()
        .filter(|t| found.iter().any(|f| f.doc_id == t.doc_id))
        .count();
    hits as f64 / truth.len() as f64
}

pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank.min(sorted.len() - 1)]
}

/// Builds the configured index over `n` random unit vectors.
pub fn build_index(config: &BenchConfig, docs: &[Document]) -> Result<VectorIndex, IndexError> {
    let mut index = match config.kind {
        IndexKind::Flat => VectorIndex::flat(),
        IndexKind::Hnsw => VectorIndex::hnsw(config.hnsw)?,
        IndexKind::Ivf => {
            let mut index = VectorIndex::ivf();
            let params = config.ivf.unwrap_or_else(|| IvfParams {
                seed: config.seed,
                ..IvfParams::for_training_size(docs.len())
            });
            let vectors: Vec<Vector> = docs.iter().map(|d| d.embedding().clone()).collect();
            index.train_ivf(&vectors, params)?;
            index
        }
    };
    for doc in docs {
        index.insert(doc.clone())?;
    }
    Ok(index)
}

pub fn run(config: &BenchConfig) -> Result<BenchReport, IndexError> {
    if config.n < 100 {
        return Err(IndexError::InvalidParams(format!(
            "benchmark needs n >= 100, got {}",
            config.n
        )));
    }
    if config.k == 0 {
        return Err(IndexError::InvalidK);
    }
    if config.queries == 0 {
        return Err(IndexError::InvalidParams(
            "benchmark needs at least one query".into(),
        ));
    }
    let docs = as_documents(random_unit_vectors(config.n, config.dim, config.seed));
    let queries = random_unit_vectors(config.queries, config.dim, config.seed.wrapping_add(1));

    let mut oracle = FlatIndex::new();
    for doc in &docs {
        oracle.insert(doc.clone())?;
    }

    let started = Instant::now();
    let index = build_index(config, &docs)?;
    let build_ms = started.elapsed().as_secs_f64() * 1e3;

    let mut latencies = Vec::with_capacity(queries.len());
    let mut recall_sum = 0.0;
    for q in &queries {
        let t = Instant::now();
        let found = index.search(q, config.k)?;
        latencies.push(t.elapsed().as_secs_f64() * 1e6);
        recall_sum += recall_at_k(&oracle.search(q, config.k)?, &found);
    }
    latencies.sort_by(f64::total_cmp);
    Ok(BenchReport {
        kind: config.kind,
        n: config.n,
        dim: config.dim,
        k: config.k,
        queries: queries.len(),
        recall: recall_sum / queries.len() as f64,
        build_ms,
        p50_us: percentile(&latencies, 50.0),
        p95_us: percentile(&latencies, 95.0),
    })
}

//! Independent oracles and data generators shared by the integration tests.
//! Nothing here calls into the crate's search code.

#![allow(dead_code)]

use contextdb::{Document, Metadata, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Points uniform on the unit sphere (normalized Gaussians).
pub fn unit_vectors(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut r)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

pub fn docs(vectors: &[Vec<f64>], meta: impl Fn(usize) -> Metadata) -> Vec<Document> {
    vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            Document::new(
                format!("d{i:05}"),
                format!("doc {i}"),
                meta(i),
                Vector::new(v.clone()).unwrap(),
            )
            .unwrap()
        })
        .collect()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Full scan: every distance, sorted by (distance, id), first k.
pub fn brute_force(docs: &[(String, Vec<f64>)], query: &[f64], k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = docs
        .iter()
        .map(|(id, v)| (id.clone(), distance(v, query)))
        .collect();
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn id_vectors(docs: &[Document]) -> Vec<(String, Vec<f64>)> {
    docs.iter()
        .map(|d| (d.id().to_owned(), d.embedding().as_slice().to_vec()))
        .collect()
}

/// Fraction of `truth` ids present in `found`.
pub fn recall(truth: &[(String, f64)], found: &[String]) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    truth.iter().filter(|(id, _)| found.contains(id)).count() as f64 / truth.len() as f64
}

/// Wall-clock budget check used by the runtime-bounded suites.
pub fn within(started: std::time::Instant, limit_s: f64) -> Result<f64, String> {
    let s = started.elapsed().as_secs_f64();
    if s < limit_s {
        Ok(s)
    } else {
        Err(format!("took {s:.2} s, limit {limit_s} s"))
    }
}

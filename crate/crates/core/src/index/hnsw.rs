//! Hierarchical navigable small world graph.
//!
//! Every node lives on layer 0; a node's top layer is drawn from a geometric
//! distribution with multiplier `1/ln(m)`, so each layer up holds roughly
//! `1/m` of the one below. Queries descend greedily through the sparse upper
//! layers and finish with an `ef`-bounded beam search on layer 0.
//!
//! A new node links to as many neighbors as its layer allows (`2 * m` on
//! layer 0, `m` above), chosen by the diversity heuristic.
//!
//! Removal marks the node's document slot empty. The node stays in the graph
//! for navigation but is never returned.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::document::Document;
use crate::filter::FilterExpr;
use crate::index::{check_query, post_filtered, to_hits, DocTable, IndexError, Ranked, SearchHit};
use crate::vector::{squared_l2, Vector};

const MAX_LEVEL: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HnswParams {
    /// Neighbors kept per node on upper layers; layer 0 keeps `2 * m`.
    pub m: usize,
    pub ef_construction: usize,
    /// Beam width at query time. Raised to `k` when `k` is larger.
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 200,
            ef_search: 64,
            seed: 42,
        }
    }
}

impl HnswParams {
    pub fn validate(&self) -> Result<(), IndexError> {
        if self.m < 2 {
            return Err(IndexError::InvalidParams(format!(
                "m must be at least 2, got {}",
                self.m
            )));
        }
        if self.ef_construction == 0 || self.ef_search == 0 {
            return Err(IndexError::InvalidParams(
                "ef_construction and ef_search must be positive".into(),
            ));
        }
        Ok(())
    }

    fn max_links(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.m
        } else {
            self.m
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Near {
    dist2: f64,
    node: u32,
}

impl Eq for Near {}

impl PartialOrd for Near {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Near {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.node.cmp(&other.node))
    }
}

#[derive(Debug, Clone)]
pub struct HnswIndex {
    pub(crate) params: HnswParams,
    pub(crate) table: DocTable,
    /// Node embeddings, row-major. Kept for removed nodes too, since they
    /// still route searches.
    pub(crate) vectors: Vec<f64>,
    /// `links[node][layer]`; a node's top layer is `links[node].len() - 1`.
    pub(crate) links: Vec<Vec<Vec<u32>>>,
    pub(crate) entry: Option<u32>,
    pub(crate) rng: ChaCha8Rng,
}

impl HnswIndex {
    pub fn new(params: HnswParams) -> Result<Self, IndexError> {
        params.validate()?;
        Ok(Self {
            params,
            table: DocTable::default(),
            vectors: Vec::new(),
            links: Vec::new(),
            entry: None,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
        })
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn set_ef_search(&mut self, ef_search: usize) {
        self.params.ef_search = ef_search.max(1);
    }

    pub(crate) fn table(&self) -> &DocTable {
        &self.table
    }

    /// Number of live documents.
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.len() == 0
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.table.get_by_id(id)
    }

    /// Number of graph nodes, including removed ones.
    pub fn node_count(&self) -> usize {
        self.links.len()
    }

    fn top_layer(&self, node: u32) -> usize {
        self.links[node as usize].len() - 1
    }

    fn vector(&self, node: u32) -> &[f64] {
        let dim = self.table.dim().unwrap_or(0);
        let start = node as usize * dim;
        &self.vectors[start..start + dim]
    }

    fn dist(&self, node: u32, query: &[f64]) -> f64 {
        squared_l2(self.vector(node), query)
    }

    fn random_level(&mut self) -> usize {
        let ml = 1.0 / (self.params.m as f64).ln();
        let u: f64 = self.rng.random();
        ((-(1.0 - u).ln() * ml).floor() as usize).min(MAX_LEVEL)
    }

    pub fn insert(&mut self, doc: Document) -> Result<(), IndexError> {
        let query: Vec<f64> = doc.embedding().to_vec();
        let (slot, _) = self.table.insert(doc)?;
        debug_assert_eq!(slot, self.links.len());
        let node = slot as u32;
        self.vectors.extend_from_slice(&query);
        let level = self.random_level();
        self.links.push(vec![Vec::new(); level + 1]);

        let Some(entry) = self.entry else {
            self.entry = Some(node);
            return Ok(());
        };
        let top = self.top_layer(entry);
        let mut nearest = Near {
            dist2: self.dist(entry, &query),
            node: entry,
        };
        for layer in (level + 1..=top).rev() {
            nearest = self.greedy(&query, nearest, layer);
        }
        let mut entry_points = vec![nearest];
        for layer in (0..=level.min(top)).rev() {
            let found =
                self.search_layer(&query, &entry_points, self.params.ef_construction, layer);
            let chosen = self.select_neighbors(&found, self.params.max_links(layer));
            for &neighbor in &chosen {
                self.links[neighbor as usize][layer].push(node);
                if self.links[neighbor as usize][layer].len() > self.params.max_links(layer) {
                    self.shrink(neighbor, layer);
                }
            }
            self.links[slot][layer] = chosen;
            entry_points = found;
        }
        if level > top {
            self.entry = Some(node);
        }
        Ok(())
    }

    pub fn remove(&mut self, id: &str) -> bool {
        self.table.remove(id).is_some()
    }

    /// Re-selects the neighbor list of `node` on `layer` after it overflowed.
    fn shrink(&mut self, node: u32, layer: usize) {
        let base = self.vector(node).to_vec();
        let mut candidates: Vec<Near> = self.links[node as usize][layer]
            .iter()
            .map(|&n| Near {
                dist2: self.dist(n, &base),
                node: n,
            })
            .collect();
        candidates.sort();
        let kept = self.select_neighbors(&candidates, self.params.max_links(layer));
        self.links[node as usize][layer] = kept;
    }

    /// Diversity heuristic: walk candidates nearest first and keep one only
    /// if it is closer to the base point than to every neighbor kept so far.
    /// `candidates` must be sorted ascending.
    fn select_neighbors(&self, candidates: &[Near], limit: usize) -> Vec<u32> {
        let mut kept: Vec<u32> = Vec::with_capacity(limit);
        for c in candidates {
            if kept.len() >= limit {
                break;
            }
            let v = self.vector(c.node);
            if kept
                .iter()
                .all(|&k| squared_l2(self.vector(k), v) >= c.dist2)
            {
                kept.push(c.node);
            }
        }
        kept
    }

    fn greedy(&self, query: &[f64], mut current: Near, layer: usize) -> Near {
        loop {
            let mut improved = false;
            for &n in &self.links[current.node as usize][layer] {
                let cand = Near {
                    dist2: self.dist(n, query),
                    node: n,
                };
                if cand < current {
                    current = cand;
                    improved = true;
                }
            }
            if !improved {
                return current;
            }
        }
    }

    /// Beam search on one layer. Returns up to `ef` nodes, nearest first.
    fn search_layer(
        &self,
        query: &[f64],
        entry_points: &[Near],
        ef: usize,
        layer: usize,
    ) -> Vec<Near> {
        let mut visited = vec![false; self.links.len()];
        let mut candidates: BinaryHeap<Reverse<Near>> = BinaryHeap::new();
        let mut results: BinaryHeap<Near> = BinaryHeap::new();
        for &ep in entry_points {
            if !std::mem::replace(&mut visited[ep.node as usize], true) {
                candidates.push(Reverse(ep));
                results.push(ep);
            }
        }
        while results.len() > ef {
            results.pop();
        }
        while let Some(Reverse(current)) = candidates.pop() {
            if results.len() >= ef && current > *results.peek().expect("nonempty") {
                break;
            }
            for &n in &self.links[current.node as usize][layer] {
                if std::mem::replace(&mut visited[n as usize], true) {
                    continue;
                }
                let cand = Near {
                    dist2: self.dist(n, query),
                    node: n,
                };
                if results.len() < ef || cand < *results.peek().expect("nonempty") {
                    candidates.push(Reverse(cand));
                    results.push(cand);
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        results.into_sorted_vec()
    }

    /// Up to `n` live nodes near `query`, ascending.
    fn candidates(&self, query: &[f64], n: usize) -> Vec<Ranked<'_>> {
        let Some(entry) = self.entry else {
            return Vec::new();
        };
        let mut nearest = Near {
            dist2: self.dist(entry, query),
            node: entry,
        };
        for layer in (1..=self.top_layer(entry)).rev() {
            nearest = self.greedy(query, nearest, layer);
        }
        let ef = self.params.ef_search.max(n);
        let mut out: Vec<Ranked<'_>> = self
            .search_layer(query, &[nearest], ef, 0)
            .into_iter()
            .filter_map(|near| {
                self.table.get(near.node as usize).map(|doc| Ranked {
                    dist2: near.dist2,
                    id: doc.id(),
                    slot: near.node as usize,
                })
            })
            .collect();
        out.sort();
        out.truncate(n);
        out
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

    pub(crate) fn search_inner(
        &self,
        query: &Vector,
        k: usize,
        filter: Option<&FilterExpr>,
    ) -> Result<Vec<SearchHit>, IndexError> {
        check_query(&self.table, query, k)?;
        if self.table.len() == 0 {
            return Err(IndexError::Empty);
        }
        let ranked = post_filtered(&self.table, k, filter, |n| self.candidates(query, n))?;
        Ok(to_hits(ranked))
    }
}

//! Inverted-file index with flat (uncompressed) lists.
//!
//! Training fixes `nlist` k-means centroids; each document then lives in the
//! list of its nearest centroid. A query scans the `nprobe` lists whose
//! centroids are nearest to it. With `nprobe == nlist` every document is
//! scanned and the result is exact.

use serde::{Deserialize, Serialize};

use crate::document::Document;
use crate::filter::FilterExpr;
use crate::index::kmeans::{kmeans, nearest_centroid};
use crate::index::{check_query, exact_top_k, to_hits, DocTable, IndexError, SearchHit};
use crate::vector::{squared_l2, Vector};

const UNASSIGNED: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IvfParams {
    pub nlist: usize,
    pub nprobe: usize,
    pub kmeans_iters: usize,
    pub seed: u64,
}

impl IvfParams {
    /// Defaults for a training set of `n` vectors: `nlist = ceil(sqrt(n))`,
    /// `nprobe = 8` (capped at `nlist`), 20 k-means iterations.
    pub fn for_training_size(n: usize) -> Self {
        let nlist = ((n as f64).sqrt().ceil() as usize).max(1);
        Self {
            nlist,
            nprobe: 8.min(nlist),
            kmeans_iters: 20,
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<(), IndexError> {
        if self.nlist == 0 || self.kmeans_iters == 0 {
            return Err(IndexError::InvalidParams(
                "nlist and kmeans_iters must be positive".into(),
            ));
        }
        if self.nprobe == 0 || self.nprobe > self.nlist {
            return Err(IndexError::InvalidParams(format!(
                "nprobe must be within 1..={}, got {}",
                self.nlist, self.nprobe
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct IvfIndex {
    pub(crate) params: Option<IvfParams>,
    pub(crate) table: DocTable,
    pub(crate) centroids: Vec<Vec<f64>>,
    pub(crate) lists: Vec<Vec<usize>>,
    /// List id per slot, `UNASSIGNED` for empty slots.
    pub(crate) list_of: Vec<u32>,
}

impl IvfIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_trained(&self) -> bool {
        self.params.is_some()
    }

    pub fn params(&self) -> Option<&IvfParams> {
        self.params.as_ref()
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn list_sizes(&self) -> Vec<usize> {
        self.lists.iter().map(Vec::len).collect()
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

    pub fn set_nprobe(&mut self, nprobe: usize) -> Result<(), IndexError> {
        let params = self.params.as_mut().ok_or(IndexError::NotTrained)?;
        let mut updated = *params;
        updated.nprobe = nprobe;
        updated.validate()?;
        *params = updated;
        Ok(())
    }

    /// Fits the coarse quantizer and routes any documents already present.
    pub fn train(&mut self, vectors: &[Vector], params: IvfParams) -> Result<(), IndexError> {
        params.validate()?;
        if vectors.len() < params.nlist {
            return Err(IndexError::InsufficientTrainingData {
                required: params.nlist,
                provided: vectors.len(),
            });
        }
        let dim = vectors[0].dim();
        self.table.check_dim(dim)?;
        if let Some(bad) = vectors.iter().find(|v| v.dim() != dim) {
            return Err(IndexError::DimensionMismatch {
                expected: dim,
                actual: bad.dim(),
            });
        }
        let points: Vec<&[f64]> = vectors.iter().map(|v| v.as_slice()).collect();
        let fitted = kmeans(&points, params.nlist, params.kmeans_iters, params.seed);
        log::debug!(
            "ivf: k-means converged after {} iterations",
            fitted.iterations
        );

        self.table.set_dim(dim);
        self.centroids = fitted.centroids;
        self.params = Some(params);
        self.lists = vec![Vec::new(); params.nlist];
        self.list_of = vec![UNASSIGNED; self.table.slot_count()];
        let live: Vec<usize> = self.table.live().map(|(slot, _)| slot).collect();
        for slot in live {
            self.route(slot);
        }
        Ok(())
    }

    fn route(&mut self, slot: usize) {
        let doc = self.table.get(slot).expect("routing a live slot");
        let (list, _) = nearest_centroid(&self.centroids, doc.embedding());
        self.lists[list].push(slot);
        if self.list_of.len() <= slot {
            self.list_of.resize(slot + 1, UNASSIGNED);
        }
        self.list_of[slot] = list as u32;
    }

    fn unroute(&mut self, slot: usize) {
        let list = std::mem::replace(&mut self.list_of[slot], UNASSIGNED);
        if list != UNASSIGNED {
            let members = &mut self.lists[list as usize];
            if let Some(pos) = members.iter().position(|&s| s == slot) {
                members.swap_remove(pos);
            }
        }
    }

    pub fn insert(&mut self, doc: Document) -> Result<(), IndexError> {
        if !self.is_trained() {
            return Err(IndexError::NotTrained);
        }
        let (slot, replaced) = self.table.insert(doc)?;
        if let Some(old) = replaced {
            self.unroute(old);
        }
        self.route(slot);
        Ok(())
    }

    pub fn remove(&mut self, id: &str) -> bool {
        match self.table.remove(id) {
            Some(slot) => {
                if slot < self.list_of.len() {
                    self.unroute(slot);
                }
                true
            }
            None => false,
        }
    }

    /// The `nprobe` lists nearest to `query`, nearest first.
    fn probe_order(&self, query: &[f64], nprobe: usize) -> Vec<usize> {
        let mut order: Vec<(f64, usize)> = self
            .centroids
            .iter()
            .enumerate()
            .map(|(i, c)| (squared_l2(c, query), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        order.into_iter().take(nprobe).map(|(_, i)| i).collect()
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

    /// Probed lists are scanned in full, so the filter is applied inline
    /// rather than by oversampling.
    pub(crate) fn search_inner(
        &self,
        query: &Vector,
        k: usize,
        filter: Option<&FilterExpr>,
    ) -> Result<Vec<SearchHit>, IndexError> {
        let params = self.params.ok_or(IndexError::NotTrained)?;
        check_query(&self.table, query, k)?;
        let probed = self.probe_order(query, params.nprobe);
        let slots = probed
            .into_iter()
            .flat_map(|list| self.lists[list].iter().copied());
        Ok(to_hits(exact_top_k(&self.table, query, slots, k, filter)?))
    }
}

use crate::document::Document;
use crate::filter::FilterExpr;
use crate::index::{check_query, exact_top_k, to_hits, DocTable, IndexError, SearchHit};
use crate::vector::Vector;

/// Exhaustive scan. Exact, and the oracle the approximate kinds are measured
/// against.
#[derive(Debug, Clone, Default)]
pub struct FlatIndex {
    table: DocTable,
}

impl FlatIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn from_table(table: DocTable) -> Self {
        Self { table }
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

    pub fn insert(&mut self, doc: Document) -> Result<(), IndexError> {
        self.table.insert(doc).map(|_| ())
    }

    pub fn remove(&mut self, id: &str) -> bool {
        self.table.remove(id).is_some()
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
        let slots = self.table.live().map(|(slot, _)| slot);
        Ok(to_hits(exact_top_k(&self.table, query, slots, k, filter)?))
    }
}

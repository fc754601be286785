//! Slot-addressed document storage shared by every index kind.
//!
//! A slot number doubles as the node id for graph indexes, so slots are never
//! reused: removal leaves a hole.

use std::collections::HashMap;

use crate::document::Document;
use crate::index::IndexError;

#[derive(Debug, Clone, Default)]
pub(crate) struct DocTable {
    slots: Vec<Option<Document>>,
    by_id: HashMap<String, usize>,
    dim: Option<usize>,
}

impl DocTable {
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn set_dim(&mut self, dim: usize) {
        self.dim = Some(dim);
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn check_dim(&self, dim: usize) -> Result<(), IndexError> {
        match self.dim {
            Some(expected) if expected != dim => Err(IndexError::DimensionMismatch {
                expected,
                actual: dim,
            }),
            _ => Ok(()),
        }
    }

    /// Stores `doc` in a fresh slot. Returns the new slot and the slot of the
    /// document it replaced, if any.
    pub fn insert(&mut self, doc: Document) -> Result<(usize, Option<usize>), IndexError> {
        self.check_dim(doc.embedding().dim())?;
        self.dim.get_or_insert(doc.embedding().dim());
        let slot = self.slots.len();
        let replaced = self.by_id.insert(doc.id().to_owned(), slot);
        if let Some(old) = replaced {
            self.slots[old] = None;
        }
        self.slots.push(Some(doc));
        Ok((slot, replaced))
    }

    pub fn remove(&mut self, id: &str) -> Option<usize> {
        let slot = self.by_id.remove(id)?;
        self.slots[slot] = None;
        Some(slot)
    }

    pub fn get(&self, slot: usize) -> Option<&Document> {
        self.slots.get(slot).and_then(Option::as_ref)
    }

    pub fn get_by_id(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).and_then(|&slot| self.get(slot))
    }

    pub fn live(&self) -> impl Iterator<Item = (usize, &Document)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(slot, doc)| doc.as_ref().map(|d| (slot, d)))
    }

    pub fn slots(&self) -> &[Option<Document>] {
        &self.slots
    }

    /// Rebuilds a table from raw slots, as read from a snapshot.
    pub fn from_slots(
        dim: Option<usize>,
        slots: Vec<Option<Document>>,
    ) -> Result<Self, IndexError> {
        let mut by_id = HashMap::new();
        for (slot, doc) in slots.iter().enumerate() {
            if let Some(doc) = doc {
                if Some(doc.embedding().dim()) != dim {
                    return Err(IndexError::Corrupt(format!(
                        "slot {slot} has wrong dimension"
                    )));
                }
                if by_id.insert(doc.id().to_owned(), slot).is_some() {
                    return Err(IndexError::Corrupt(format!("duplicate id {:?}", doc.id())));
                }
            }
        }
        Ok(Self { slots, by_id, dim })
    }
}

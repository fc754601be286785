//! Response cache: a bounded map of final answers with per-entry TTL.
//!
//! Time is always supplied by the caller (`now` in milliseconds) or by an
//! injected [`Clock`], never read ambiently. When a new key arrives at
//! capacity the cache evicts an expired entry if there is one, otherwise the
//! least recently accessed live entry.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use parking_lot::Mutex;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clock::{Clock, SystemClock};

pub const DEFAULT_CAPACITY: usize = 1024;
pub const DEFAULT_TTL_MS: u64 = 5 * 60 * 1000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CacheError {
    #[error("cache capacity must be positive")]
    ZeroCapacity,
    #[error("cache ttl must be positive")]
    ZeroTtl,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub key: String,
    pub value: String,
    pub inserted_at: u64,
    pub ttl: u64,
    pub last_access: u64,
}

impl CacheEntry {
    pub fn is_live(&self, now: u64) -> bool {
        now < self.inserted_at.saturating_add(self.ttl)
    }
}

#[derive(Debug)]
struct Slot {
    entry: CacheEntry,
    // Logical access counter. Several accesses can share a millisecond, so
    // recency is ordered by this rather than by `last_access`.
    tick: u64,
}

#[derive(Debug, Default)]
struct Inner {
    slots: HashMap<String, Slot>,
    tick: u64,
}

impl Inner {
    fn next_tick(&mut self) -> u64 {
        self.tick += 1;
        self.tick
    }

    /// Expired entries first, then the least recently accessed.
    fn victim(&self, now: u64) -> Option<String> {
        self.slots
            .values()
            .min_by_key(|s| (s.entry.is_live(now), s.tick))
            .map(|s| s.entry.key.clone())
    }
}

pub struct ResponseCache {
    inner: Mutex<Inner>,
    capacity: usize,
    default_ttl: u64,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for ResponseCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResponseCache")
            .field("capacity", &self.capacity)
            .field("default_ttl", &self.default_ttl)
            .field("len", &self.len())
            .finish_non_exhaustive()
    }
}

impl Default for ResponseCache {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY, DEFAULT_TTL_MS).expect("defaults are valid")
    }
}

impl ResponseCache {
    pub fn new(capacity: usize, default_ttl: u64) -> Result<Self, CacheError> {
        Self::with_clock(capacity, default_ttl, Arc::new(SystemClock))
    }

    pub fn with_clock(
        capacity: usize,
        default_ttl: u64,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, CacheError> {
        if capacity == 0 {
            return Err(CacheError::ZeroCapacity);
        }
        if default_ttl == 0 {
            return Err(CacheError::ZeroTtl);
        }
        Ok(Self {
            inner: Mutex::new(Inner::default()),
            capacity,
            default_ttl,
            clock,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn default_ttl(&self) -> u64 {
        self.default_ttl
    }

    /// Number of stored entries, expired ones included until they are
    /// evicted or looked up.
    pub fn len(&self) -> usize {
        self.inner.lock().slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Returns the value for `key` if it is still live at `now`, refreshing
    /// its recency. An expired entry is dropped on lookup.
    pub fn get(&self, key: &str, now: u64) -> Option<String> {
        let mut inner = self.inner.lock();
        let live = inner.slots.get(key)?.entry.is_live(now);
        if !live {
            inner.slots.remove(key);
            return None;
        }
        let tick = inner.next_tick();
        let slot = inner.slots.get_mut(key).expect("checked above");
        slot.tick = tick;
        slot.entry.last_access = now;
        Some(slot.entry.value.clone())
    }

    /// Stores `value` under `key` for `ttl` milliseconds from `now`.
    /// Overwriting a key replaces its value and restarts its TTL. A zero
    /// `ttl` stores nothing, since such an entry could never be served.
    pub fn put(&self, key: &str, value: impl Into<String>, ttl: u64, now: u64) {
        if ttl == 0 {
            return;
        }
        let mut inner = self.inner.lock();
        if !inner.slots.contains_key(key) && inner.slots.len() >= self.capacity {
            if let Some(victim) = inner.victim(now) {
                inner.slots.remove(&victim);
            }
        }
        let tick = inner.next_tick();
        let entry = CacheEntry {
            key: key.to_owned(),
            value: value.into(),
            inserted_at: now,
            ttl,
            last_access: now,
        };
        inner.slots.insert(key.to_owned(), Slot { entry, tick });
    }

    /// [`get`](Self::get) at the injected clock's current time.
    pub fn get_now(&self, key: &str) -> Option<String> {
        self.get(key, self.clock.now_ms())
    }

    /// [`put`](Self::put) with the default TTL at the injected clock's time.
    pub fn put_now(&self, key: &str, value: impl Into<String>) {
        self.put(key, value, self.default_ttl, self.clock.now_ms());
    }

    /// A copy of the stored entry, live or not, without touching recency.
    pub fn peek(&self, key: &str) -> Option<CacheEntry> {
        self.inner.lock().slots.get(key).map(|s| s.entry.clone())
    }

    pub fn clear(&self) {
        self.inner.lock().slots.clear();
    }
}

/// Trims, lowercases and collapses internal whitespace to single spaces.
pub fn canonicalize_question(question: &str) -> String {
    question
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Hex SHA-256 over the user id and the canonical question. The user id is
/// length-prefixed so no pair of inputs can collide by concatenation.
pub fn cache_key(user_id: &str, question: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update((user_id.len() as u64).to_le_bytes());
    hasher.update(user_id.as_bytes());
    hasher.update(canonicalize_question(question).as_bytes());
    hasher
        .finalize()
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

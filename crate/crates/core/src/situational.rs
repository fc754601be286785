//! The situational tier: user profiles and operational records, read often
//! and updated occasionally.
//!
//! Profiles persist as a JSONL log of full snapshots; on replay the last
//! line per `user_id` wins. Equality lookups go through per-field indexes
//! that are built the first time a field is queried and maintained on every
//! write after that.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::document::{validate_key, MetaValue, Metadata};
use crate::jsonl::{self, LogError, LogSink, NullSink};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub user_id: String,
    pub fields: Metadata,
    /// Milliseconds since the Unix epoch; strictly increasing per profile.
    pub updated_at: u64,
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("user id must not be empty")]
    EmptyUserId,
    #[error("invalid field name {0:?}")]
    InvalidField(String),
    #[error("no profile for user {0:?}")]
    NotFound(String),
    #[error("profile log write failed: {0}")]
    Write(#[source] std::io::Error),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("cannot read seed profiles: {0}")]
    Seed(String),
}

/// Hashable form of a [`MetaValue`]; numbers compare by value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum IndexKey {
    Bool(bool),
    Number(u64),
    String(String),
}

impl From<&MetaValue> for IndexKey {
    fn from(v: &MetaValue) -> Self {
        match v {
            MetaValue::Bool(b) => IndexKey::Bool(*b),
            // -0.0 and 0.0 are equal values.
            MetaValue::Number(n) => IndexKey::Number(if *n == 0.0 { 0 } else { n.to_bits() }),
            MetaValue::String(s) => IndexKey::String(s.clone()),
        }
    }
}

type FieldIndex = HashMap<IndexKey, BTreeSet<String>>;

#[derive(Default)]
struct State {
    profiles: HashMap<String, Profile>,
    indexes: HashMap<String, FieldIndex>,
}

impl State {
    fn install(&mut self, profile: Profile) {
        let old = self.profiles.get(&profile.user_id);
        for (field, index) in self.indexes.iter_mut() {
            if let Some(v) = old.and_then(|p| p.fields.get(field)) {
                let key = IndexKey::from(v);
                if let Some(users) = index.get_mut(&key) {
                    users.remove(&profile.user_id);
                    if users.is_empty() {
                        index.remove(&key);
                    }
                }
            }
            if let Some(v) = profile.fields.get(field) {
                index
                    .entry(IndexKey::from(v))
                    .or_default()
                    .insert(profile.user_id.clone());
            }
        }
        self.profiles.insert(profile.user_id.clone(), profile);
    }

    fn build_index(&mut self, field: &str) {
        let mut index = FieldIndex::new();
        for p in self.profiles.values() {
            if let Some(v) = p.fields.get(field) {
                index
                    .entry(IndexKey::from(v))
                    .or_default()
                    .insert(p.user_id.clone());
            }
        }
        self.indexes.insert(field.to_owned(), index);
    }
}

pub struct ProfileStore {
    state: RwLock<State>,
    /// Per-user write locks: one profile's writes are serialized, different
    /// profiles proceed independently.
    user_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    sink: Mutex<Box<dyn LogSink>>,
    clock: Arc<dyn Clock>,
}

impl fmt::Debug for ProfileStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProfileStore")
            .field("profiles", &self.state.read().profiles.len())
            .finish_non_exhaustive()
    }
}

#[derive(Deserialize)]
struct SeedProfile {
    user_id: String,
    #[serde(default)]
    fields: Metadata,
}

impl ProfileStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ProfileError> {
        Self::open_with(path, Arc::new(SystemClock), false)
    }

    pub fn open_with(
        path: impl AsRef<Path>,
        clock: Arc<dyn Clock>,
        fsync: bool,
    ) -> Result<Self, ProfileError> {
        let (records, sink) = jsonl::open::<Profile>(path.as_ref(), fsync)?;
        let store = Self::with_sink(Box::new(sink), clock);
        {
            let mut state = store.state.write();
            for profile in records {
                state.install(profile);
            }
        }
        Ok(store)
    }

    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        Self::with_sink(Box::new(NullSink), clock)
    }

    pub fn with_sink(sink: Box<dyn LogSink>, clock: Arc<dyn Clock>) -> Self {
        Self {
            state: RwLock::new(State::default()),
            user_locks: Mutex::new(HashMap::new()),
            sink: Mutex::new(sink),
            clock,
        }
    }

    /// Puts every profile from a JSONL file of `{"user_id": .., "fields": {..}}`
    /// records. Returns how many were loaded.
    pub fn load_seed(&self, path: impl AsRef<Path>) -> Result<usize, ProfileError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| ProfileError::Seed(format!("{}: {e}", path.display())))?;
        let mut count = 0;
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let seed: SeedProfile = serde_json::from_str(line).map_err(|e| {
                ProfileError::Seed(format!("{} line {}: {e}", path.display(), i + 1))
            })?;
            self.put_profile(&seed.user_id, seed.fields)?;
            count += 1;
        }
        Ok(count)
    }

    fn user_lock(&self, user_id: &str) -> Arc<Mutex<()>> {
        Arc::clone(
            self.user_locks
                .lock()
                .entry(user_id.to_owned())
                .or_default(),
        )
    }

    /// Persists `profile`, then makes it visible.
    fn commit(&self, profile: Profile) -> Result<Profile, ProfileError> {
        self.sink
            .lock()
            .append(&jsonl::encode(std::slice::from_ref(&profile)))
            .map_err(ProfileError::Write)?;
        self.state.write().install(profile.clone());
        Ok(profile)
    }

    fn next_timestamp(&self, previous: Option<&Profile>) -> u64 {
        let now = self.clock.now_ms();
        match previous {
            Some(p) => now.max(p.updated_at + 1),
            None => now,
        }
    }

    fn warn_on_type_change(previous: Option<&Profile>, field: &str, value: &MetaValue) {
        if let Some(old) = previous.and_then(|p| p.fields.get(field)) {
            if !old.same_type(value) {
                log::warn!(
                    "profile {:?}: field {field:?} changes type from {} to {}",
                    previous.map(|p| p.user_id.as_str()).unwrap_or_default(),
                    old.type_name(),
                    value.type_name()
                );
            }
        }
    }

    /// Replaces the whole field map of a profile, creating it if needed.
    pub fn put_profile(&self, user_id: &str, fields: Metadata) -> Result<Profile, ProfileError> {
        if user_id.is_empty() {
            return Err(ProfileError::EmptyUserId);
        }
        for key in fields.keys() {
            validate_key(key).map_err(|_| ProfileError::InvalidField(key.clone()))?;
        }
        let lock = self.user_lock(user_id);
        let _serial = lock.lock();
        let previous = self.get_profile(user_id);
        for (field, value) in &fields {
            Self::warn_on_type_change(previous.as_ref(), field, value);
        }
        let profile = Profile {
            user_id: user_id.to_owned(),
            fields,
            updated_at: self.next_timestamp(previous.as_ref()),
        };
        self.commit(profile)
    }

    /// The latest profile, or `None` for an unknown user.
    pub fn get_profile(&self, user_id: &str) -> Option<Profile> {
        self.state.read().profiles.get(user_id).cloned()
    }

    /// Changes one field of an existing profile.
    pub fn update_field(
        &self,
        user_id: &str,
        field: &str,
        value: MetaValue,
    ) -> Result<Profile, ProfileError> {
        validate_key(field).map_err(|_| ProfileError::InvalidField(field.to_owned()))?;
        let lock = self.user_lock(user_id);
        let _serial = lock.lock();
        let previous = self
            .get_profile(user_id)
            .ok_or_else(|| ProfileError::NotFound(user_id.to_owned()))?;
        Self::warn_on_type_change(Some(&previous), field, &value);
        let updated_at = self.next_timestamp(Some(&previous));
        let mut profile = previous;
        profile.fields.insert(field.to_owned(), value);
        profile.updated_at = updated_at;
        self.commit(profile)
    }

    /// Profiles whose `field` equals `value` (same type and value), ordered by
    /// user id.
    pub fn query_by_field(&self, field: &str, value: &MetaValue) -> Vec<Profile> {
        let key = IndexKey::from(value);
        {
            let state = self.state.read();
            if let Some(index) = state.indexes.get(field) {
                return Self::collect(&state, index.get(&key));
            }
        }
        let mut state = self.state.write();
        if !state.indexes.contains_key(field) {
            state.build_index(field);
        }
        Self::collect(&state, state.indexes[field].get(&key))
    }

    fn collect(state: &State, users: Option<&BTreeSet<String>>) -> Vec<Profile> {
        users
            .into_iter()
            .flatten()
            .map(|u| state.profiles[u].clone())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.state.read().profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All profiles ordered by user id.
    pub fn all(&self) -> Vec<Profile> {
        let mut out: Vec<Profile> = self.state.read().profiles.values().cloned().collect();
        out.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        out
    }
}

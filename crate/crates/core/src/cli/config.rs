//! Defaults file and the embedder description stored beside an index.
//!
//! The defaults file is TOML with flat keys, for example:
//!
//! ```toml
//! embedder = "hash"
//! dim = 64
//! seed = 42
//! kind = "hnsw"
//! k = 4
//! history_window = 10
//! cache_capacity = 1024
//! cache_ttl_ms = 300000
//! template = "default"
//! ```
//!
//! Every key is optional. Command-line flags override the file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::embed::{EmbeddingProvider, FixtureEmbedder, HashEmbedder};
use crate::index::IndexKind;

pub const CONFIG_FILE: &str = "config.toml";
pub const EMBEDDER_FILE: &str = "embedder.toml";
pub const INDEX_FILE: &str = "index.ctx";
pub const DEFAULT_HOME: &str = ".contextdb";
pub const DEFAULT_HASH_DIM: usize = 64;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Hash,
    Fixture,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub embedder: Option<EmbedderKind>,
    pub dim: Option<usize>,
    pub seed: Option<u64>,
    pub kind: Option<IndexKind>,
    pub k: Option<usize>,
    pub history_window: Option<usize>,
    pub cache_capacity: Option<usize>,
    pub cache_ttl_ms: Option<u64>,
    pub template: Option<String>,
}

impl Config {
    /// Reads `explicit` if given, else `<home>/config.toml` if it exists, else
    /// returns empty defaults.
    pub fn load(explicit: Option<&Path>, home: &Path) -> Result<Self, CliError> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let p = home.join(CONFIG_FILE);
                if !p.exists() {
                    return Ok(Self::default());
                }
                p
            }
        };
        let text = fs::read_to_string(&path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// How the documents in an index were embedded, so that queries can be
/// embedded the same way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub dim: usize,
    pub seed: u64,
}

impl EmbedderConfig {
    pub fn provider(&self) -> Result<Box<dyn EmbeddingProvider>, CliError> {
        Ok(match self.kind {
            EmbedderKind::Fixture => Box::new(FixtureEmbedder),
            EmbedderKind::Hash => Box::new(
                HashEmbedder::new(self.dim, self.seed)
                    .map_err(|e| CliError::Usage(e.to_string()))?,
            ),
        })
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(EMBEDDER_FILE);
        let text = toml::to_string(self).expect("embedder config serializes");
        fs::write(&path, text).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(EMBEDDER_FILE);
        let text = fs::read_to_string(&path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

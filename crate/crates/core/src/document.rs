//! Documents stored in the semantic tier and their typed metadata.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vector::Vector;

/// A scalar metadata value. Numbers, strings and booleans never compare equal
/// to one another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetaValue {
    Bool(bool),
    Number(f64),
    String(String),
}

impl MetaValue {
    pub fn type_name(&self) -> &'static str {
        match self {
            MetaValue::Bool(_) => "boolean",
            MetaValue::Number(_) => "number",
            MetaValue::String(_) => "string",
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            MetaValue::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn same_type(&self, other: &MetaValue) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }
}

impl fmt::Display for MetaValue {
    /// Integral numbers print without a fractional part (`90`, not `90.0`).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetaValue::Bool(b) => write!(f, "{b}"),
            MetaValue::Number(n) if n.fract() == 0.0 && n.abs() < 1e15 => {
                write!(f, "{}", *n as i64)
            }
            MetaValue::Number(n) => write!(f, "{n}"),
            MetaValue::String(s) => f.write_str(s),
        }
    }
}

impl From<f64> for MetaValue {
    fn from(v: f64) -> Self {
        MetaValue::Number(v)
    }
}

impl From<i64> for MetaValue {
    fn from(v: i64) -> Self {
        MetaValue::Number(v as f64)
    }
}

impl From<i32> for MetaValue {
    fn from(v: i32) -> Self {
        MetaValue::Number(v as f64)
    }
}

impl From<bool> for MetaValue {
    fn from(v: bool) -> Self {
        MetaValue::Bool(v)
    }
}

impl From<&str> for MetaValue {
    fn from(v: &str) -> Self {
        MetaValue::String(v.to_owned())
    }
}

impl From<String> for MetaValue {
    fn from(v: String) -> Self {
        MetaValue::String(v)
    }
}

/// Field name to value. Ordered so that rendering and serialization are stable.
pub type Metadata = BTreeMap<String, MetaValue>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DocumentError {
    #[error("document id must not be empty")]
    EmptyId,
    #[error("invalid metadata key {0:?}: keys must be nonempty and contain no whitespace")]
    InvalidMetadataKey(String),
}

/// Checks a metadata key: nonempty, no whitespace.
pub fn validate_key(key: &str) -> Result<(), DocumentError> {
    if key.is_empty() || key.chars().any(char::is_whitespace) {
        return Err(DocumentError::InvalidMetadataKey(key.to_owned()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    id: String,
    text: String,
    metadata: Metadata,
    embedding: Vector,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        metadata: Metadata,
        embedding: Vector,
    ) -> Result<Self, DocumentError> {
        let id = id.into();
        if id.is_empty() {
            return Err(DocumentError::EmptyId);
        }
        for key in metadata.keys() {
            validate_key(key)?;
        }
        Ok(Self {
            id,
            text: text.into(),
            metadata,
            embedding,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    pub fn embedding(&self) -> &Vector {
        &self.embedding
    }
}

/// Builds a [`Metadata`] map from `key => value` pairs.
#[macro_export]
macro_rules! metadata {
    () => { $crate::document::Metadata::new() };
    ($($key:expr => $value:expr),+ $(,)?) => {{
        let mut map = $crate::document::Metadata::new();
        $( map.insert(::std::string::String::from($key), $crate::document::MetaValue::from($value)); )+
        map
    }};
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb() -> Vector {
        Vector::new(vec![0.0, 1.0]).unwrap()
    }

    #[test]
    fn rejects_bad_ids_and_keys() {
        assert_eq!(
            Document::new("", "t", Metadata::new(), emb()),
            Err(DocumentError::EmptyId)
        );
        for key in ["", "two words", "tab\tkey"] {
            let meta = metadata! { key => 1 };
            assert!(matches!(
                Document::new("a", "t", meta, emb()),
                Err(DocumentError::InvalidMetadataKey(_))
            ));
        }
    }

    #[test]
    fn meta_value_json_is_untagged() {
        let meta: Metadata =
            serde_json::from_str(r#"{"price":90,"brand":"Reebok","sale":true}"#).unwrap();
        assert_eq!(meta["price"], MetaValue::Number(90.0));
        assert_eq!(meta["brand"], MetaValue::from("Reebok"));
        assert_eq!(meta["sale"], MetaValue::Bool(true));
    }

    #[test]
    fn number_and_string_are_distinct() {
        assert_ne!(MetaValue::from(100), MetaValue::from("100"));
        assert!(!MetaValue::from(1).same_type(&MetaValue::from(true)));
    }

    #[test]
    fn display_drops_integral_fraction() {
        assert_eq!(MetaValue::from(90).to_string(), "90");
        assert_eq!(MetaValue::from(89.5).to_string(), "89.5");
        assert_eq!(MetaValue::from("x y").to_string(), "x y");
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Tagged value stored in a [`KnowledgeDatabase`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum KnowledgeValue {
    Scalar(f64),
    Vector(Vec<f64>),
    /// Formula text in the logic grammar.
    Formula(String),
    /// Structured task description (JSON text).
    Task(String),
    Text(String),
    Blob(Vec<u8>),
}

impl KnowledgeValue {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            KnowledgeValue::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            KnowledgeValue::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            KnowledgeValue::Formula(s) | KnowledgeValue::Task(s) | KnowledgeValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

/// Key-value store shared by an agent's components. `get` returns `None`
/// only for absent keys, so an empty vector or string stays distinguishable.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KnowledgeDatabase {
    entries: BTreeMap<String, KnowledgeValue>,
}

impl KnowledgeDatabase {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces; returns the previous value.
    pub fn insert(&mut self, key: impl Into<String>, value: KnowledgeValue) -> Option<KnowledgeValue> {
        self.entries.insert(key.into(), value)
    }

    pub fn get(&self, key: &str) -> Option<&KnowledgeValue> {
        self.entries.get(key)
    }

    pub fn remove(&mut self, key: &str) -> Option<KnowledgeValue> {
        self.entries.remove(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &KnowledgeValue)> {
        self.entries.iter()
    }

    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a String, &'a KnowledgeValue)> {
        self.entries.range(prefix.to_string()..).take_while(move |(k, _)| k.starts_with(prefix))
    }
}

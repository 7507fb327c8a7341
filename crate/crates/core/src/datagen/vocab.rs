use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Which generator pool a token was drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pool {
    InvariantPositive,
    InvariantNegative,
    Ambiguous,
    DomainMarker,
    Neutral,
    /// Tokens of externally supplied corpora.
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub token: String,
    pub id: u32,
    pub pool: Pool,
}

/// Bidirectional token table. Ids are dense and assigned in insertion order.
#[derive(Clone, Debug, Default)]
pub struct Vocabulary {
    entries: Vec<VocabEntry>,
    index: HashMap<String, u32>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Id of `token`, inserting it with `pool` if new.
    pub fn intern(&mut self, token: &str, pool: Pool) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.entries.len() as u32;
        self.entries.push(VocabEntry {
            token: token.to_string(),
            id,
            pool,
        });
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(|e| e.token.as_str())
    }

    pub fn pool(&self, id: u32) -> Option<Pool> {
        self.entries.get(id as usize).map(|e| e.pool)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    /// Rebuilds from serialized entries, which must carry ids `0..n` in order.
    pub fn from_entries(entries: Vec<VocabEntry>) -> Result<Self, String> {
        let mut vocab = Vocabulary::new();
        for (i, e) in entries.into_iter().enumerate() {
            if e.id as usize != i {
                return Err(format!("vocabulary entry {i} has id {}", e.id));
            }
            if vocab.index.contains_key(&e.token) {
                return Err(format!("token `{}` listed twice", e.token));
            }
            vocab.intern(&e.token, e.pool);
        }
        Ok(vocab)
    }
}

//! Question-local adjacency index over `(head, relation, tail)` triples.
//!
//! The index is built once per example and is read-only afterwards. Relation
//! inventories are sorted by code point and capped; tail expansion follows
//! input triple order with first-occurrence deduplication.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

/// One labeled, directed edge of a question graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triple {
    pub fn new(
        head: impl Into<String>,
        relation: impl Into<String>,
        tail: impl Into<String>,
    ) -> Self {
        Self {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }

    /// True when every field is non-empty after trimming.
    pub fn is_well_formed(&self) -> bool {
        [&self.head, &self.relation, &self.tail]
            .iter()
            .all(|s| !s.trim().is_empty())
    }
}

/// Outgoing edge stored under its head entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub relation: String,
    pub tail: String,
}

/// Adjacency index keyed by head entity.
#[derive(Debug, Clone, Default)]
pub struct GraphIndex {
    triple_count: usize,
    by_head: HashMap<String, Vec<Edge>>,
}

impl GraphIndex {
    /// Builds the index in one pass. Duplicate triples are kept.
    pub fn build<'a, I>(triples: I) -> Self
    where
        I: IntoIterator<Item = &'a Triple>,
    {
        let mut by_head: HashMap<String, Vec<Edge>> = HashMap::new();
        let mut triple_count = 0;
        for t in triples {
            by_head.entry(t.head.clone()).or_default().push(Edge {
                relation: t.relation.clone(),
                tail: t.tail.clone(),
            });
            triple_count += 1;
        }
        Self {
            triple_count,
            by_head,
        }
    }

    pub fn triple_count(&self) -> usize {
        self.triple_count
    }

    /// Outgoing edges of `entity` in input order; empty for unknown entities.
    pub fn outgoing(&self, entity: &str) -> &[Edge] {
        self.by_head.get(entity).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn heads(&self) -> impl Iterator<Item = &str> {
        self.by_head.keys().map(String::as_str)
    }

    /// Distinct outgoing relation names of `entity`, sorted by code point and
    /// truncated to `cap` entries.
    pub fn capped_relations(&self, entity: &str, cap: usize) -> Vec<String> {
        assert!(cap >= 1, "relation cap must be at least 1");
        let distinct: BTreeSet<&str> = self
            .outgoing(entity)
            .iter()
            .map(|e| e.relation.as_str())
            .collect();
        distinct.into_iter().take(cap).map(str::to_owned).collect()
    }

    /// Whether `capped_relations(entity, cap)` hides at least one relation.
    pub fn is_truncated(&self, entity: &str, cap: usize) -> bool {
        let distinct: HashSet<&str> = self
            .outgoing(entity)
            .iter()
            .map(|e| e.relation.as_str())
            .collect();
        distinct.len() > cap
    }

    /// Whether `entity` has at least one outgoing edge labeled `relation`.
    pub fn has_relation(&self, entity: &str, relation: &str) -> bool {
        self.outgoing(entity).iter().any(|e| e.relation == relation)
    }

    /// Distinct tails of `(entity, relation)` in input order, at most `limit`.
    pub fn tails(&self, entity: &str, relation: &str, limit: usize) -> Vec<String> {
        assert!(limit >= 1, "tail limit must be at least 1");
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for edge in self.outgoing(entity) {
            if out.len() == limit {
                break;
            }
            if edge.relation == relation && seen.insert(edge.tail.as_str()) {
                out.push(edge.tail.clone());
            }
        }
        out
    }
}

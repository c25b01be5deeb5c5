//! Triple store: integer-indexed knowledge graphs loaded from TSV.
//!
//! Entity and relation names are mapped to contiguous ids in first-seen order. An object
//! starting with `"` is a literal; literals live in their own dictionary and never receive
//! entity ids, so [`KnowledgeGraph::drop_literals`] can rebuild a literal-free id space.

mod crawl;
mod fingerprint;
mod stats;

pub use fingerprint::{emit_similarity_triples, parse_fingerprints, tanimoto, Fingerprint, SIMILARITY_RELATION};
pub use stats::{compute_stats, GraphStats};

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

pub type EntityId = u32;
pub type RelationId = u32;

#[derive(Debug, Error, PartialEq)]
pub enum KgError {
    #[error("line {line}: expected 3 tab-separated columns, found {found}")]
    Parse { line: usize, found: usize },
    #[error("line {line}: empty field")]
    EmptyField { line: usize },
    #[error("graph has no triples")]
    EmptyGraph,
    #[error("graph needs at least two entities, found {0}")]
    TooFewEntities(usize),
    #[error("graph contains literal-valued triples")]
    LiteralsPresent,
    #[error("unknown entity {0}")]
    UnknownEntity(String),
    #[error("fingerprint length mismatch: {0} vs {1} bits")]
    FingerprintLength(usize, usize),
    #[error("line {line}: invalid fingerprint: {reason}")]
    Fingerprint { line: usize, reason: String },
    #[error("threshold {0} outside [0, 1]")]
    Threshold(f64),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// Bijection between names and contiguous ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dictionary {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Dictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_insert(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Object {
    Entity(EntityId),
    /// Index into the graph's literal dictionary.
    Literal(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: EntityId,
    pub predicate: RelationId,
    pub object: Object,
}

/// Entity-only triple, the unit of embedding training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityTriple {
    pub subject: EntityId,
    pub predicate: RelationId,
    pub object: EntityId,
}

impl EntityTriple {
    pub fn new(subject: EntityId, predicate: RelationId, object: EntityId) -> Self {
        Self {
            subject,
            predicate,
            object,
        }
    }
}

/// A deduplicated triple set with its dictionaries. Triples keep insertion order.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    triples: Vec<Triple>,
    index: HashSet<Triple>,
    entities: Dictionary,
    relations: Dictionary,
    literals: Dictionary,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.triples == other.triples
            && self.entities == other.entities
            && self.relations == other.relations
            && self.literals == other.literals
    }
}

fn is_literal(term: &str) -> bool {
    term.starts_with('"')
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a named triple; returns `false` if it was already present.
    pub fn insert(&mut self, subject: &str, predicate: &str, object: &str) -> bool {
        let s = self.entities.get_or_insert(subject);
        let p = self.relations.get_or_insert(predicate);
        let o = if is_literal(object) {
            Object::Literal(self.literals.get_or_insert(object))
        } else {
            Object::Entity(self.entities.get_or_insert(object))
        };
        self.insert_ids(Triple {
            subject: s,
            predicate: p,
            object: o,
        })
    }

    fn insert_ids(&mut self, t: Triple) -> bool {
        if self.index.insert(t) {
            self.triples.push(t);
            true
        } else {
            false
        }
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entities(&self) -> &Dictionary {
        &self.entities
    }

    pub fn relations(&self) -> &Dictionary {
        &self.relations
    }

    pub fn literals(&self) -> &Dictionary {
        &self.literals
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn has_literals(&self) -> bool {
        self.triples.iter().any(|t| matches!(t.object, Object::Literal(_)))
    }

    pub fn contains(&self, t: &EntityTriple) -> bool {
        self.index.contains(&Triple {
            subject: t.subject,
            predicate: t.predicate,
            object: Object::Entity(t.object),
        })
    }

    /// Entity-only view of the triples, in insertion order.
    ///
    /// Fails if any literal-valued triple is present.
    pub fn entity_triples(&self) -> Result<Vec<EntityTriple>, KgError> {
        self.triples
            .iter()
            .map(|t| match t.object {
                Object::Entity(o) => Ok(EntityTriple::new(t.subject, t.predicate, o)),
                Object::Literal(_) => Err(KgError::LiteralsPresent),
            })
            .collect()
    }

    pub fn object_name(&self, o: Object) -> &str {
        match o {
            Object::Entity(id) => self.entities.name(id),
            Object::Literal(id) => self.literals.name(id),
        }
    }

    /// Names of a triple's three terms.
    pub fn names_of(&self, t: &Triple) -> (&str, &str, &str) {
        (
            self.entities.name(t.subject),
            self.relations.name(t.predicate),
            self.object_name(t.object),
        )
    }

    /// Rebuilds a graph (with fresh contiguous dictionaries) from a subset of triples.
    fn rebuild<'a>(&self, triples: impl IntoIterator<Item = &'a Triple>) -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        for t in triples {
            let (s, p, o) = self.names_of(t);
            g.insert(s, p, o);
        }
        g
    }

    /// Keeps exactly the triples whose object is an entity.
    pub fn drop_literals(&self) -> KnowledgeGraph {
        self.rebuild(self.triples.iter().filter(|t| matches!(t.object, Object::Entity(_))))
    }

    /// Merges another graph's triples by name.
    pub fn extend_from(&mut self, other: &KnowledgeGraph) {
        for t in other.triples() {
            let (s, p, o) = other.names_of(t);
            self.insert(s, p, o);
        }
    }

    /// Serialises to the TSV interchange format.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            let (s, p, o) = self.names_of(t);
            let _ = writeln!(out, "{s}\t{p}\t{o}");
        }
        out
    }
}

/// Parses triple TSV text: `subject<TAB>predicate<TAB>object` per line.
///
/// Blank lines are skipped and a trailing `\r` is tolerated.
pub fn parse_triples(text: &str) -> Result<KnowledgeGraph, KgError> {
    let mut g = KnowledgeGraph::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(KgError::Parse {
                line: i + 1,
                found: cols.len(),
            });
        }
        if cols.iter().any(|c| c.is_empty()) {
            return Err(KgError::EmptyField { line: i + 1 });
        }
        g.insert(cols[0], cols[1], cols[2]);
    }
    Ok(g)
}

pub fn load_triples(path: impl AsRef<Path>) -> Result<KnowledgeGraph, KgError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| KgError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_triples(&text)
}

pub use crawl::directed_crawl;

use std::collections::{HashMap, VecDeque};

use super::{EntityId, KgError, KnowledgeGraph, Object, Triple};

/// Subgraph of every triple reachable from `seeds` by following subject→object edges.
///
/// Literal-valued triples of visited subjects are kept but not traversed. The result keeps
/// the input's triple order and gets fresh contiguous dictionaries.
pub fn directed_crawl(g: &KnowledgeGraph, seeds: &[EntityId]) -> Result<KnowledgeGraph, KgError> {
    let n = g.num_entities();
    if let Some(bad) = seeds.iter().find(|&&s| s as usize >= n) {
        return Err(KgError::UnknownEntity(format!("#{bad}")));
    }
    let mut outgoing: HashMap<EntityId, Vec<usize>> = HashMap::new();
    for (i, t) in g.triples().iter().enumerate() {
        outgoing.entry(t.subject).or_default().push(i);
    }
    let mut visited = vec![false; n];
    let mut keep = vec![false; g.num_triples()];
    let mut queue: VecDeque<EntityId> = VecDeque::new();
    for &s in seeds {
        if !visited[s as usize] {
            visited[s as usize] = true;
            queue.push_back(s);
        }
    }
    while let Some(e) = queue.pop_front() {
        for &ti in outgoing.get(&e).map(Vec::as_slice).unwrap_or(&[]) {
            keep[ti] = true;
            if let Object::Entity(o) = g.triples()[ti].object {
                if !visited[o as usize] {
                    visited[o as usize] = true;
                    queue.push_back(o);
                }
            }
        }
    }
    let kept: Vec<&Triple> = g
        .triples()
        .iter()
        .zip(&keep)
        .filter_map(|(t, &k)| k.then_some(t))
        .collect();
    Ok(g.rebuild(kept))
}

impl KnowledgeGraph {
    /// Resolves entity names to ids, failing on the first unknown name.
    pub fn entity_ids<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<EntityId>, KgError> {
        names
            .iter()
            .map(|n| {
                self.entities()
                    .id(n.as_ref())
                    .ok_or_else(|| KgError::UnknownEntity(n.as_ref().to_owned()))
            })
            .collect()
    }
}

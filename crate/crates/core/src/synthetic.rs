//! Seeded synthetic datasets with known structure: hierarchy graphs, clustered effect
//! records and misspelt taxonomies.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::align::Mapping;
use crate::effects::Sample;
use crate::kg::KnowledgeGraph;
use crate::rng::{self, stream, Rng};

pub const SUBCLASS_OF: &str = "subclass_of";
pub const MEMBER_OF: &str = "member_of";

/// A rooted tree as a two-relation graph. Every non-root node points at its parent with
/// `subclass_of`; nodes below depth one also point at their depth-one ancestor (their
/// cluster) with `member_of`.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub graph: KnowledgeGraph,
    /// Cluster index of every node below the root.
    pub cluster: BTreeMap<String, usize>,
    pub leaves: Vec<String>,
    pub clusters: usize,
}

fn build_hierarchy(prefix: &str, entities: usize, branching: usize, rng: &mut Rng) -> Hierarchy {
    assert!(entities > branching && branching >= 1, "need more entities than clusters");
    let mut order: Vec<usize> = (0..entities).collect();
    order.shuffle(rng);
    let name = |i: usize| format!("{prefix}{}", order[i]);
    let parent = |i: usize| (i - 1) / branching;
    let mut graph = KnowledgeGraph::new();
    let mut cluster = BTreeMap::new();
    let mut top = vec![0; entities];
    for i in 1..entities {
        top[i] = if parent(i) == 0 { i - 1 } else { top[parent(i)] };
        graph.insert(&name(i), SUBCLASS_OF, &name(parent(i)));
        if parent(i) != 0 {
            graph.insert(&name(i), MEMBER_OF, &name(top[i] + 1));
        }
        cluster.insert(name(i), top[i]);
    }
    let leaves = (1..entities).filter(|&i| i * branching + 1 >= entities).map(name).collect();
    Hierarchy {
        graph,
        cluster,
        leaves,
        clusters: branching,
    }
}

/// `entities` nodes in a complete `branching`-ary tree with shuffled names `{prefix}{n}`.
pub fn hierarchy_kg(prefix: &str, entities: usize, branching: usize, seed: u64) -> Hierarchy {
    build_hierarchy(prefix, entities, branching, &mut rng::stream(seed, stream::SYNTHETIC))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectsSpec {
    pub chemical_entities: usize,
    pub species_entities: usize,
    pub branching: usize,
    pub samples: usize,
}

impl Default for EffectsSpec {
    fn default() -> Self {
        Self {
            chemical_entities: 200,
            species_entities: 120,
            branching: 4,
            samples: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticEffects {
    pub chemicals: Hierarchy,
    pub species: Hierarchy,
    pub samples: Vec<Sample>,
}

/// Whether the (chemical cluster, species cluster) combination inverts the concentration rule.
pub fn resistant(chemical_cluster: usize, species_cluster: usize) -> bool {
    (chemical_cluster + species_cluster) % 2 == 1
}

/// Effects over the leaves of two hierarchies. `κ ~ U(−1, 1)` and the label is `κ > 0`,
/// inverted for resistant cluster pairs, so κ alone carries no information and the
/// clusters alone carry none either.
pub fn clustered_effects(spec: &EffectsSpec, seed: u64) -> SyntheticEffects {
    let mut rng = rng::stream(seed, stream::SYNTHETIC);
    let chemicals = build_hierarchy("chem", spec.chemical_entities, spec.branching, &mut rng);
    let species = build_hierarchy("taxon", spec.species_entities, spec.branching, &mut rng);
    let samples = (0..spec.samples)
        .map(|_| {
            let c = chemicals.leaves.choose(&mut rng).expect("leaves").clone();
            let s = species.leaves.choose(&mut rng).expect("leaves").clone();
            let kappa: f64 = rng.gen_range(-1.0..1.0);
            let flip = resistant(chemicals.cluster[&c], species.cluster[&s]);
            Sample {
                chemical: c,
                species: s,
                concentration: kappa,
                label: u8::from((kappa > 0.0) != flip),
            }
        })
        .collect();
    SyntheticEffects {
        chemicals,
        species,
        samples,
    }
}

const SYLLABLES: &[&str] = &[
    "ba", "ce", "di", "fo", "gu", "ha", "ke", "li", "mo", "nu", "pa", "re", "si", "to", "vu", "xa", "ze", "lo",
    "mi", "ra", "te", "no", "pu", "ko",
];

fn word(rng: &mut Rng, syllables: usize) -> String {
    (0..syllables).map(|_| *SYLLABLES.choose(rng).expect("syllables")).collect()
}

fn typo(name: &str, rng: &mut Rng) -> String {
    let mut chars: Vec<char> = name.chars().collect();
    loop {
        let i = rng.gen_range(0..chars.len());
        if chars[i] == ' ' {
            continue;
        }
        let c = (b'a' + rng.gen_range(0..26u8)) as char;
        match rng.gen_range(0..3) {
            0 if chars[i] != c => chars[i] = c,
            1 => chars.insert(i, c),
            2 if chars.len() > 4 => {
                chars.remove(i);
            }
            _ => continue,
        }
        return chars.into_iter().collect();
    }
}

/// Two label maps over the same `n` binomial names, the target copy with one character
/// substituted, inserted or deleted per name, plus the true mapping.
#[derive(Debug, Clone)]
pub struct TypoTaxonomy {
    pub source: BTreeMap<String, Vec<String>>,
    pub target: BTreeMap<String, Vec<String>>,
    pub reference: Vec<Mapping>,
}

pub fn typo_taxonomy(n: usize, seed: u64) -> TypoTaxonomy {
    let mut rng = rng::stream(seed, stream::SYNTHETIC);
    let mut names = BTreeSet::new();
    let mut ordered = Vec::new();
    while ordered.len() < n {
        let mut genus = word(&mut rng, 3);
        genus[..1].make_ascii_uppercase();
        let epithet = word(&mut rng, 3) + if rng.gen() { "us" } else { "a" };
        let name = format!("{genus} {epithet}");
        if names.insert(name.clone()) {
            ordered.push(name);
        }
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut t = TypoTaxonomy {
        source: BTreeMap::new(),
        target: BTreeMap::new(),
        reference: Vec::new(),
    };
    for (i, name) in ordered.iter().enumerate() {
        let (s, g) = (format!("src:{i}"), format!("tgt:{}", perm[i]));
        t.source.insert(s.clone(), vec![name.clone()]);
        t.target.insert(g.clone(), vec![typo(name, &mut rng)]);
        t.reference.push(Mapping::new(s, g, 1.0));
    }
    t
}

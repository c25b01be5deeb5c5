//! Sparsity statistics: relational/entity density, entropies and absolute density.

use std::fmt;

use super::{KgError, KnowledgeGraph, Object};

#[derive(Debug, Clone, PartialEq)]
pub struct GraphStats {
    /// Triples per relation.
    pub rd: f64,
    /// Triple endpoints per entity.
    pub ed: f64,
    /// Relation entropy (nats).
    pub re: f64,
    /// Entity entropy (nats).
    pub ee: f64,
    /// Absolute density, triples over the edge count of a complete simple digraph.
    pub ad: f64,
    pub num_triples: usize,
    pub num_entities: usize,
    pub num_relations: usize,
}

pub fn compute_stats(g: &KnowledgeGraph) -> Result<GraphStats, KgError> {
    if g.is_empty() {
        return Err(KgError::EmptyGraph);
    }
    if g.has_literals() {
        return Err(KgError::LiteralsPresent);
    }
    let t = g.num_triples() as f64;
    let n_e = g.num_entities();
    let n_r = g.num_relations();
    if n_e < 2 {
        return Err(KgError::TooFewEntities(n_e));
    }
    let mut rel_counts = vec![0usize; n_r];
    let mut ent_counts = vec![0usize; n_e];
    for tr in g.triples() {
        rel_counts[tr.predicate as usize] += 1;
        ent_counts[tr.subject as usize] += 1;
        if let Object::Entity(o) = tr.object {
            ent_counts[o as usize] += 1;
        }
    }
    let entropy = |counts: &[usize]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / t;
                -p * p.ln()
            })
            .sum()
    };
    let e = n_e as f64;
    Ok(GraphStats {
        rd: t / n_r as f64,
        ed: 2.0 * t / e,
        re: entropy(&rel_counts),
        ee: entropy(&ent_counts),
        ad: t / (e * (e - 1.0)),
        num_triples: g.num_triples(),
        num_entities: n_e,
        num_relations: n_r,
    })
}

impl fmt::Display for GraphStats {
    /// Key-value report, one `name<TAB>value` per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "triples\t{}", self.num_triples)?;
        writeln!(f, "entities\t{}", self.num_entities)?;
        writeln!(f, "relations\t{}", self.num_relations)?;
        writeln!(f, "rd\t{}", self.rd)?;
        writeln!(f, "ed\t{}", self.ed)?;
        writeln!(f, "re\t{}", self.re)?;
        writeln!(f, "ee\t{}", self.ee)?;
        writeln!(f, "ad\t{}", self.ad)
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_triples;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn toy_graph_hand_values() {
        let g = parse_triples("a\tp\tb\nb\tp\tc\nb\tq\td\n").unwrap();
        let s = compute_stats(&g).unwrap();
        assert_eq!(s.rd, 1.5);
        assert_eq!(s.ed, 1.5);
        assert_eq!(s.ad, 0.25);
    }

    #[test]
    fn entropies() {
        let one = parse_triples("a\tp\tb\nb\tp\tc\n").unwrap();
        assert_eq!(compute_stats(&one).unwrap().re, 0.0);
        let two = parse_triples("a\tp\tb\nb\tq\tc\n").unwrap();
        assert!((compute_stats(&two).unwrap().re - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_graphs_error() {
        assert_eq!(compute_stats(&KnowledgeGraph::new()), Err(KgError::EmptyGraph));
        let selfloop = parse_triples("a\tp\ta\n").unwrap();
        assert_eq!(compute_stats(&selfloop), Err(KgError::TooFewEntities(1)));
    }

    proptest! {
        #[test]
        fn stat_bounds(edges in proptest::collection::vec((0u8..12, 0u8..3, 0u8..12), 1..60)) {
            let mut g = KnowledgeGraph::new();
            for (s, p, o) in &edges {
                g.insert(&format!("e{s}"), &format!("r{p}"), &format!("e{o}"));
            }
            prop_assume!(g.num_entities() >= 2);
            let st = compute_stats(&g).unwrap();
            prop_assert!(st.ad > 0.0 && st.ad <= 1.0 + 1e-12);
            prop_assert!(st.re >= 0.0 && st.re <= (g.num_relations() as f64).ln() + 1e-12);
            prop_assert!(st.ee >= -1e-12);
            // P(e) sums to 2, so EE is bounded by the entropy of the pair distribution.
            let t = g.num_triples() as f64;
            let mut pe = vec![0.0; g.num_entities()];
            for tr in g.triples() {
                pe[tr.subject as usize] += 1.0 / t;
                if let Object::Entity(o) = tr.object { pe[o as usize] += 1.0 / t; }
            }
            prop_assert!((pe.iter().sum::<f64>() - 2.0).abs() < 1e-9);
            // Maximum of -sum p ln p under sum p = 2 is the uniform 2/n.
            let n = g.num_entities() as f64;
            prop_assert!(st.ee <= 2.0 * (n / 2.0).ln() + 1e-9);
        }
    }
}

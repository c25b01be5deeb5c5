use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::kg::{EntityTriple, KnowledgeGraph};
use crate::rng::Rng;

/// Corruption scheme for negative triples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// Replace the object only.
    #[default]
    Lcwa,
    /// Replace the subject or the object, chosen uniformly.
    Slcwa,
}

fn corrupt(t: EntityTriple, subject_side: bool, e: u32) -> EntityTriple {
    if subject_side {
        EntityTriple::new(e, t.predicate, t.object)
    } else {
        EntityTriple::new(t.subject, t.predicate, e)
    }
}

/// Draws `eta` corruptions of every positive, in positive order, none of which is in `g`.
///
/// Each negative first tries `|ℰ|` uniform draws; if all of them hit true triples the
/// valid candidates are enumerated and one is picked uniformly, so sampling only fails
/// when no negative exists at all.
pub fn sample_negatives(
    g: &KnowledgeGraph,
    positives: &[EntityTriple],
    eta: usize,
    mode: Sampling,
    rng: &mut Rng,
) -> Result<Vec<EntityTriple>, TrainError> {
    let n = g.num_entities() as u32;
    if n == 0 {
        return Err(TrainError::NoNegative(format!("{:?}", positives.first())));
    }
    let mut out = Vec::with_capacity(positives.len() * eta);
    for &t in positives {
        'draw: for _ in 0..eta {
            for _ in 0..n {
                let side = mode == Sampling::Slcwa && rng.gen_bool(0.5);
                let c = corrupt(t, side, rng.gen_range(0..n));
                if !g.contains(&c) {
                    out.push(c);
                    continue 'draw;
                }
            }
            let sides: &[bool] = match mode {
                Sampling::Lcwa => &[false],
                Sampling::Slcwa => &[true, false],
            };
            let candidates: Vec<EntityTriple> = sides
                .iter()
                .flat_map(|&side| (0..n).map(move |e| corrupt(t, side, e)))
                .filter(|c| !g.contains(c))
                .collect();
            if candidates.is_empty() {
                let (s, p, o) = (
                    g.entities().name(t.subject),
                    g.relations().name(t.predicate),
                    g.entities().name(t.object),
                );
                return Err(TrainError::NoNegative(format!("({s}, {p}, {o})")));
            }
            out.push(candidates[rng.gen_range(0..candidates.len())]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::parse_triples;
    use crate::rng;

    #[test]
    fn lcwa_never_emits_the_positive() {
        let mut g = parse_triples("a\tp\tb\n").unwrap();
        g.insert("c", "q", "c");
        let t = g.entity_triples().unwrap()[0];
        let mut r = rng::seeded(1);
        let negs = sample_negatives(&g, &[t; 50], 1, Sampling::Lcwa, &mut r).unwrap();
        assert!(negs.iter().all(|n| n.subject == t.subject && n.object != t.object));
        let objects: std::collections::HashSet<_> = negs.iter().map(|n| n.object).collect();
        assert_eq!(objects.len(), 2);
    }

    #[test]
    fn complete_graph_has_no_negative() {
        let g = parse_triples("a\tp\ta\na\tp\tb\nb\tp\ta\nb\tp\tb\n").unwrap();
        let t = g.entity_triples().unwrap()[0];
        let err = sample_negatives(&g, &[t], 1, Sampling::Slcwa, &mut rng::seeded(0)).unwrap_err();
        assert!(matches!(err, TrainError::NoNegative(_)));
    }

    #[test]
    fn single_free_candidate_is_found() {
        // only (b, p, b) is free; sLCWA from (a,p,b) can reach it only by corrupting the subject
        let g = parse_triples("a\tp\ta\na\tp\tb\nb\tp\ta\n").unwrap();
        let t = g.entity_triples().unwrap()[1];
        let negs = sample_negatives(&g, &[t; 5], 2, Sampling::Slcwa, &mut rng::seeded(4)).unwrap();
        assert!(negs.iter().all(|n| g.entities().name(n.subject) == "b" && g.entities().name(n.object) == "b"));
        assert!(sample_negatives(&g, &[t], 1, Sampling::Lcwa, &mut rng::seeded(4)).is_err());
    }

    #[test]
    fn slcwa_changes_exactly_one_side() {
        let g = parse_triples("a\tp\tb\nb\tp\tc\nc\tp\td\n").unwrap();
        let ts = g.entity_triples().unwrap();
        let negs = sample_negatives(&g, &ts, 30, Sampling::Slcwa, &mut rng::seeded(2)).unwrap();
        assert_eq!(negs.len(), 90);
        for (i, n) in negs.iter().enumerate() {
            let t = ts[i / 30];
            assert!((n.subject != t.subject) ^ (n.object != t.object));
            assert!(!g.contains(n));
        }
    }
}

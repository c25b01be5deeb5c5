//! Chemical fingerprints and Tanimoto similarity triples.

use std::collections::BTreeMap;

use super::KgError;

/// Relation name used for emitted similarity triples.
pub const SIMILARITY_RELATION: &str = "similarTo";

/// Fixed-length bit set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    words: Vec<u64>,
    len: usize,
}

impl Fingerprint {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bits(len: usize, set: impl IntoIterator<Item = usize>) -> Self {
        let mut fp = Self::zeros(len);
        for b in set {
            fp.set(b);
        }
        fp
    }

    /// Parses a hex string; bit 0 is the most significant bit of the first digit.
    pub fn from_hex(hex: &str) -> Result<Self, String> {
        if hex.is_empty() {
            return Err("empty bit string".into());
        }
        let mut fp = Self::zeros(hex.len() * 4);
        for (i, ch) in hex.chars().enumerate() {
            let v = ch.to_digit(16).ok_or_else(|| format!("non-hex character {ch:?}"))?;
            for j in 0..4 {
                if v & (8 >> j) != 0 {
                    fp.set(i * 4 + j);
                }
            }
        }
        Ok(fp)
    }

    pub fn set(&mut self, bit: usize) {
        assert!(bit < self.len, "bit {bit} out of range");
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }
}

/// `|a ∩ b| / |a ∪ b|`; two all-zero fingerprints are defined to be identical (1.0).
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, KgError> {
    if a.len != b.len {
        return Err(KgError::FingerprintLength(a.len, b.len));
    }
    let (mut inter, mut union) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += (x & y).count_ones();
        union += (x | y).count_ones();
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(f64::from(inter) / f64::from(union))
}

/// One `similarTo` triple in each direction per unordered pair with Tanimoto ≥ `threshold`.
pub fn emit_similarity_triples(
    fps: &BTreeMap<String, Fingerprint>,
    threshold: f64,
) -> Result<Vec<(String, String, String)>, KgError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(KgError::Threshold(threshold));
    }
    let entries: Vec<(&String, &Fingerprint)> = fps.iter().collect();
    let mut out = Vec::new();
    for i in 0..entries.len() {
        for j in i + 1..entries.len() {
            let (a, fa) = entries[i];
            let (b, fb) = entries[j];
            if tanimoto(fa, fb)? >= threshold {
                out.push((a.clone(), SIMILARITY_RELATION.to_owned(), b.clone()));
                out.push((b.clone(), SIMILARITY_RELATION.to_owned(), a.clone()));
            }
        }
    }
    Ok(out)
}

/// Parses `entity<TAB>hex-bitstring` lines. All fingerprints must share one length.
pub fn parse_fingerprints(text: &str) -> Result<BTreeMap<String, Fingerprint>, KgError> {
    let mut out = BTreeMap::new();
    let mut len = None;
    for (i, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let (name, hex) = line.split_once('\t').ok_or_else(|| KgError::Fingerprint {
            line: i + 1,
            reason: "expected entity<TAB>hex".into(),
        })?;
        if name.is_empty() {
            return Err(KgError::EmptyField { line: i + 1 });
        }
        let fp = Fingerprint::from_hex(hex.trim()).map_err(|reason| KgError::Fingerprint { line: i + 1, reason })?;
        match len {
            None => len = Some(fp.len()),
            Some(l) if l != fp.len() => return Err(KgError::FingerprintLength(l, fp.len())),
            _ => {}
        }
        out.insert(name.to_owned(), fp);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tanimoto_examples() {
        let a = Fingerprint::from_bits(8, [1, 2, 3]);
        let b = Fingerprint::from_bits(8, [2, 3, 4]);
        assert_eq!(tanimoto(&a, &a).unwrap(), 1.0);
        assert_eq!(tanimoto(&a, &b).unwrap(), 0.5);
        let c = Fingerprint::from_bits(8, [5, 6]);
        assert_eq!(tanimoto(&a, &c).unwrap(), 0.0);
        assert_eq!(tanimoto(&Fingerprint::zeros(8), &Fingerprint::zeros(8)).unwrap(), 1.0);
        assert!(tanimoto(&a, &Fingerprint::zeros(16)).is_err());
    }

    #[test]
    fn hex_parsing() {
        let fp = Fingerprint::from_hex("a0").unwrap();
        assert_eq!(fp, Fingerprint::from_bits(8, [0, 2]));
        assert!(Fingerprint::from_hex("zz").is_err());
    }

    #[test]
    fn similarity_triples() {
        let mut fps = BTreeMap::new();
        fps.insert("x".to_string(), Fingerprint::from_bits(16, [1, 2, 3]));
        fps.insert("y".to_string(), Fingerprint::from_bits(16, [1, 2, 3]));
        assert_eq!(emit_similarity_triples(&fps, 0.9).unwrap().len(), 2);

        // 0.5 similarity is below threshold
        fps.insert("y".to_string(), Fingerprint::from_bits(16, [2, 3, 4]));
        assert!(emit_similarity_triples(&fps, 0.9).unwrap().is_empty());
    }

    #[test]
    fn three_fingerprints_one_pair() {
        let mut fps = BTreeMap::new();
        let base: Vec<usize> = (0..10).collect();
        fps.insert("a".to_string(), Fingerprint::from_bits(32, base.clone()));
        // 10/11 ≈ 0.909
        fps.insert("b".to_string(), Fingerprint::from_bits(32, base.iter().copied().chain([10])));
        fps.insert("c".to_string(), Fingerprint::from_bits(32, 20..30));
        // brute-force oracle over all ordered pairs
        let mut expected = 0;
        for (x, fx) in &fps {
            for (y, fy) in &fps {
                if x != y && tanimoto(fx, fy).unwrap() >= 0.9 {
                    expected += 1;
                }
            }
        }
        let got = emit_similarity_triples(&fps, 0.9).unwrap();
        assert_eq!(got.len(), expected);
        assert_eq!(got.len(), 2);
        assert!(got.contains(&("a".into(), SIMILARITY_RELATION.into(), "b".into())));
    }

    #[test]
    fn fingerprint_file() {
        let fps = parse_fingerprints("a\tff00\nb\t0f00\n").unwrap();
        assert_eq!(fps.len(), 2);
        assert!(parse_fingerprints("a\tff\nb\tff00\n").is_err());
        assert!(parse_fingerprints("a ff\n").is_err());
    }

    proptest! {
        #[test]
        fn tanimoto_symmetric_and_identity(a in proptest::collection::btree_set(0usize..64, 1..20),
                                           b in proptest::collection::btree_set(0usize..64, 1..20)) {
            let fa = Fingerprint::from_bits(64, a.iter().copied());
            let fb = Fingerprint::from_bits(64, b.iter().copied());
            let ab = tanimoto(&fa, &fb).unwrap();
            prop_assert_eq!(ab, tanimoto(&fb, &fa).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab == 1.0, a == b);
        }
    }
}

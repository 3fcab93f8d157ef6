//! Compound fingerprints and Jaccard similarity.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{CompoundId, Corpus, LabelId, LabelSource};
use crate::error::{Error, Result};

/// Label set of one compound under one source, as sorted interned ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    pub compound: CompoundId,
    bits: Vec<LabelId>,
}

impl Fingerprint {
    pub fn new(compound: CompoundId, mut bits: Vec<LabelId>) -> Self {
        bits.sort_unstable();
        bits.dedup();
        Fingerprint { compound, bits }
    }

    pub fn from_corpus(corpus: &Corpus, source: &LabelSource, compound: &str) -> Result<Self> {
        let index = corpus.source(source)?;
        let c = corpus
            .compound_idx(compound)
            .ok_or_else(|| Error::UnknownCompounds(vec![compound.to_string()]))?;
        Ok(Fingerprint {
            compound: corpus.compound(c).clone(),
            bits: index.labels_of(c).to_vec(),
        })
    }

    pub fn bits(&self) -> &[LabelId] {
        &self.bits
    }
}

fn intersection_len(a: &[LabelId], b: &[LabelId]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn jaccard_sorted(a: &[LabelId], b: &[LabelId]) -> f64 {
    let inter = intersection_len(a, b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// `|A ∩ B| / |A ∪ B|`, 0 when both sets are empty.
pub fn jaccard(a: &Fingerprint, b: &Fingerprint) -> f64 {
    jaccard_sorted(&a.bits, &b.bits)
}

/// Sparse symmetric compound-compound similarity with an empty diagonal.
///
/// Both directions of every pair are stored so `neighbors(i)` is a plain row
/// scan; `n_pairs` counts each pair once.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    compounds: Vec<CompoundId>,
    threshold: f64,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Build from (i, j, s) entries. Every entry is stored as given; use
    /// [`SimilarityMatrix::from_pairs`] to mirror upper-triangle pairs.
    pub fn from_entries(compounds: Vec<CompoundId>, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        let n = compounds.len();
        if let Some(&(i, j, _)) = entries.iter().find(|(i, j, _)| *i >= n || *j >= n) {
            return Err(Error::IndexOutOfRange(format!("similarity entry ({i}, {j}) for {n} compounds")));
        }
        entries.sort_by_key(|a| (a.0, a.1));
        entries.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
        let mut indptr = vec![0; n + 1];
        for &(i, _, _) in &entries {
            indptr[i + 1] += 1;
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Ok(SimilarityMatrix {
            compounds,
            threshold: 0.0,
            indptr,
            indices: entries.iter().map(|e| e.1).collect(),
            values: entries.iter().map(|e| e.2).collect(),
        })
    }

    /// Build from unordered pairs, storing both directions.
    pub fn from_pairs(compounds: Vec<CompoundId>, pairs: &[(usize, usize, f64)], threshold: f64) -> Result<Self> {
        let entries = pairs
            .iter()
            .flat_map(|&(i, j, s)| [(i, j, s), (j, i, s)])
            .collect();
        let mut m = Self::from_entries(compounds, entries)?;
        m.threshold = threshold;
        Ok(m)
    }

    /// Empty matrix over the given compounds.
    pub fn empty(compounds: Vec<CompoundId>) -> Self {
        let n = compounds.len();
        SimilarityMatrix {
            compounds,
            threshold: 0.0,
            indptr: vec![0; n + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn compounds(&self) -> &[CompoundId] {
        &self.compounds
    }

    pub fn len(&self) -> usize {
        self.compounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.compounds.is_empty()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// Row sums (the degree matrix diagonal).
    pub fn degrees(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.neighbors(i).map(|(_, s)| s).sum()).collect()
    }

    /// Stored entries counting both directions.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Upper-triangle pairs `(i, j, s)` with `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.len()).flat_map(move |i| self.neighbors(i).filter(move |&(j, _)| j > i).map(move |(j, s)| (i, j, s)))
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs().count()
    }

    /// Check symmetry, non-negativity, finiteness and the empty diagonal.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.len() {
            for (j, s) in self.neighbors(i) {
                if i == j {
                    return Err(Error::InvalidSimilarity(format!("diagonal entry at {i}")));
                }
                if !(s.is_finite() && s >= 0.0) {
                    return Err(Error::InvalidSimilarity(format!("entry ({i}, {j}) = {s}")));
                }
                if self.get(j, i) != s {
                    return Err(Error::AsymmetricSimilarity { row: i, col: j });
                }
            }
        }
        Ok(())
    }

    /// Dump as TSV `compound_i compound_j similarity`, one line per pair with
    /// the lexicographically smaller id first.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut rows: Vec<(&CompoundId, &CompoundId, f64)> = self
            .pairs()
            .map(|(i, j, s)| {
                let (a, b) = (&self.compounds[i], &self.compounds[j]);
                if a <= b { (a, b, s) } else { (b, a, s) }
            })
            .collect();
        rows.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        let mut out = String::from("compound_i\tcompound_j\tsimilarity\n");
        for (a, b, s) in rows {
            out.push_str(&format!("{a}\t{b}\t{s}\n"));
        }
        crate::corpus::write_string(path, &out)
    }
}

/// Jaccard similarity between all pairs of `compound_index` under `source`,
/// keeping pairs with similarity `>= threshold` and `> 0`.
pub fn build_similarity_matrix(
    corpus: &Corpus,
    source: &LabelSource,
    compound_index: &[CompoundId],
    threshold: f64,
) -> Result<SimilarityMatrix> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidConfig(format!("similarity threshold {threshold} outside [0, 1]")));
    }
    let index = corpus.source(source)?;
    let mut seen = HashSet::new();
    if let Some(dup) = compound_index.iter().find(|c| !seen.insert(*c)) {
        return Err(Error::InvalidConfig(format!("duplicate compound {dup} in similarity index")));
    }
    let unknown: Vec<String> = compound_index
        .iter()
        .filter(|c| corpus.compound_idx(c.as_str()).is_none())
        .map(|c| c.to_string())
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownCompounds(unknown));
    }

    let fingerprints: Vec<&[LabelId]> = compound_index
        .iter()
        .map(|c| index.labels_of(corpus.compound_idx(c.as_str()).unwrap()))
        .collect();
    // Postings over positions in `compound_index`, ascending.
    let mut postings: HashMap<LabelId, Vec<usize>> = HashMap::new();
    for (pos, bits) in fingerprints.iter().enumerate() {
        for &b in *bits {
            postings.entry(b).or_default().push(pos);
        }
    }

    let n = compound_index.len();
    let pairs: Vec<(usize, usize, f64)> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![0usize; n],
            |shared, i| {
                let mut touched = Vec::new();
                for b in fingerprints[i] {
                    for &j in &postings[b] {
                        if j > i {
                            if shared[j] == 0 {
                                touched.push(j);
                            }
                            shared[j] += 1;
                        }
                    }
                }
                touched.sort_unstable();
                let mut row = Vec::with_capacity(touched.len());
                for j in touched {
                    let inter = shared[j];
                    shared[j] = 0;
                    let union = fingerprints[i].len() + fingerprints[j].len() - inter;
                    let s = inter as f64 / union as f64;
                    if s >= threshold {
                        row.push((i, j, s));
                    }
                }
                row
            },
        )
        .flatten()
        .collect();

    SimilarityMatrix::from_pairs(compound_index.to_vec(), &pairs, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CompoundRecord, LabelRecord};
    use proptest::prelude::*;

    fn fp(bits: &[u32]) -> Fingerprint {
        Fingerprint::new(CompoundId::from("c"), bits.to_vec())
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard(&fp(&[1, 2]), &fp(&[2, 1])), 1.0);
        assert_eq!(jaccard(&fp(&[1, 2]), &fp(&[3])), 0.0);
        assert_eq!(jaccard(&fp(&[1, 2, 3]), &fp(&[2, 3, 4])), 0.5);
        assert_eq!(jaccard(&fp(&[]), &fp(&[])), 0.0);
    }

    fn corpus(rows: &[(&str, &str)], ids: &[&str]) -> Corpus {
        Corpus::from_records(
            ids.iter().map(|id| CompoundRecord { id: CompoundId::from(*id), smiles: None }).collect(),
            rows.iter()
                .map(|(c, l)| LabelRecord {
                    compound: CompoundId::from(*c),
                    source: LabelSource::Morgan,
                    label: l.to_string(),
                })
                .collect(),
            vec![],
        )
        .unwrap()
    }

    fn ids(v: &[&str]) -> Vec<CompoundId> {
        v.iter().map(|s| CompoundId::from(*s)).collect()
    }

    #[test]
    fn three_compound_fixture() {
        // a {1,2,3}, b {2,3,4}, c {3,5}: ab = 2/4, ac = 1/4, bc = 1/4
        let c = corpus(
            &[("a", "1"), ("a", "2"), ("a", "3"), ("b", "2"), ("b", "3"), ("b", "4"), ("c", "3"), ("c", "5")],
            &["a", "b", "c"],
        );
        let m = build_similarity_matrix(&c, &LabelSource::Morgan, &ids(&["a", "b", "c"]), 0.0).unwrap();
        assert_eq!(m.n_pairs(), 3);
        assert_eq!(m.get(0, 1), 0.5);
        assert_eq!(m.get(2, 0), 0.25);
        assert_eq!(m.get(1, 2), 0.25);
        assert_eq!(m.get(1, 1), 0.0);
        m.validate().unwrap();
        assert_eq!(m.degrees(), vec![0.75, 0.75, 0.5]);
    }

    #[test]
    fn threshold_is_inclusive() {
        // x {1,2}, y {1,2,3,4}: 2/4 = 0.5; z {3,4,5}: y-z 2/5 = 0.4; x-z 0
        let c = corpus(
            &[("x", "1"), ("x", "2"), ("y", "1"), ("y", "2"), ("y", "3"), ("y", "4"), ("z", "3"), ("z", "4"), ("z", "5")],
            &["x", "y", "z"],
        );
        let m = build_similarity_matrix(&c, &LabelSource::Morgan, &ids(&["x", "y", "z"]), 0.5).unwrap();
        assert_eq!(m.pairs().collect::<Vec<_>>(), vec![(0, 1, 0.5)]);
        let all = build_similarity_matrix(&c, &LabelSource::Morgan, &ids(&["x", "y", "z"]), 0.0).unwrap();
        assert_eq!(all.get(1, 2), 0.4);
        assert_eq!(all.n_pairs(), 2);
    }

    #[test]
    fn threshold_one_without_duplicates_is_empty() {
        let c = corpus(&[("x", "1"), ("y", "1"), ("y", "2")], &["x", "y"]);
        let m = build_similarity_matrix(&c, &LabelSource::Morgan, &ids(&["x", "y"]), 1.0).unwrap();
        assert_eq!(m.nnz(), 0);
    }

    #[test]
    fn errors() {
        let c = corpus(&[("x", "1")], &["x", "y"]);
        assert!(matches!(
            build_similarity_matrix(&c, &LabelSource::Morgan, &ids(&["x", "ghost"]), 0.0),
            Err(Error::UnknownCompounds(_))
        ));
        assert!(build_similarity_matrix(&c, &LabelSource::Morgan, &ids(&["x", "x"]), 0.0).is_err());
        assert!(build_similarity_matrix(&c, &LabelSource::Morgan, &ids(&["x"]), 1.5).is_err());
        let asym = SimilarityMatrix::from_entries(ids(&["x", "y"]), vec![(0, 1, 0.5)]).unwrap();
        assert!(matches!(asym.validate(), Err(Error::AsymmetricSimilarity { row: 0, col: 1 })));
    }

    #[test]
    fn tsv_dump_orders_ids() {
        let c = corpus(&[("b", "1"), ("a", "1")], &["b", "a"]);
        let m = build_similarity_matrix(&c, &LabelSource::Morgan, &ids(&["b", "a"]), 0.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.tsv");
        m.write_tsv(&p).unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap(), "compound_i\tcompound_j\tsimilarity\na\tb\t1\n");
    }

    fn bitset() -> impl Strategy<Value = Vec<u32>> {
        proptest::collection::vec(0u32..12, 0..8)
    }

    proptest! {
        #[test]
        fn jaccard_properties(a in bitset(), b in bitset(), extra in 100u32..200) {
            let (fa, fb) = (fp(&a), fp(&b));
            let s = jaccard(&fa, &fb);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s, jaccard(&fb, &fa));
            if !fa.bits().is_empty() {
                prop_assert_eq!(jaccard(&fa, &fa), 1.0);
            }
            let mut a2 = a.clone();
            a2.push(extra);
            let mut b2 = b.clone();
            b2.push(extra);
            prop_assert!(jaccard(&fp(&a2), &fp(&b2)) >= s);
        }

        #[test]
        fn matrix_matches_brute_force(
            sets in proptest::collection::vec(bitset(), 1..40),
            threshold in prop_oneof![Just(0.0), 0.0f64..=1.0],
        ) {
            let names: Vec<String> = (0..sets.len()).map(|i| format!("c{i:03}")).collect();
            let mut rows = vec![];
            for (name, bits) in names.iter().zip(&sets) {
                for b in bits {
                    rows.push((name.as_str(), b.to_string()));
                }
            }
            let refs: Vec<(&str, &str)> = rows.iter().map(|(c, l)| (*c, l.as_str())).collect();
            let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let c = corpus(&refs, &name_refs);
            let m = build_similarity_matrix(&c, &LabelSource::Morgan, &ids(&name_refs), threshold).unwrap();
            m.validate().unwrap();
            let fps: Vec<Fingerprint> = name_refs
                .iter()
                .map(|n| Fingerprint::from_corpus(&c, &LabelSource::Morgan, n).unwrap())
                .collect();
            for i in 0..fps.len() {
                for j in 0..fps.len() {
                    let s = jaccard(&fps[i], &fps[j]);
                    let expected = if i != j && s > 0.0 && s >= threshold { s } else { 0.0 };
                    prop_assert_eq!(m.get(i, j), expected);
                }
            }
        }
    }
}

//! Ontology-label information retrieval for a single target.
//!
//! Compounds are documents and their labels are terms. A reference label set is
//! built from the high-activity compounds of a target using a chi-square style
//! enrichment score per label,
//!
//! ```text
//! E = C * N_relevant / N_corpus
//! TermScore = (O - E)^2 / E
//! ```
//!
//! and every other compound is then scored as the sum of the term scores of its
//! reference labels divided by its total label count.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{tsv_rows, ActivityType, CompoundId, Corpus, LabelSource, TargetId};
use crate::error::{Error, Result};

pub const DEFAULT_ACTIVITY_THRESHOLD_NM: f64 = 30.0;
pub const DEFAULT_NOISE_CAP: usize = 200_000;
pub const DEFAULT_MIN_RELEVANT_COUNT: usize = 2;
pub const DEFAULT_SET_SIZE: usize = 20;
pub const DEFAULT_TOP_N: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermScore {
    pub expected: f64,
    pub score: f64,
}

/// Enrichment score of one term with observed count `observed` among
/// `n_relevant` relevant documents and `corpus_count` occurrences in a corpus of
/// `n_corpus` documents.
pub fn term_score(observed: usize, corpus_count: usize, n_relevant: usize, n_corpus: usize) -> Result<TermScore> {
    if n_corpus == 0 {
        return Err(Error::EmptyCorpus);
    }
    if corpus_count == 0 {
        return Err(Error::TermAbsent);
    }
    if n_relevant == 0 || n_relevant > n_corpus {
        return Err(Error::InvalidCounts(format!(
            "N_relevant = {n_relevant} must be in 1..={n_corpus}"
        )));
    }
    if observed > n_relevant {
        return Err(Error::InvalidCounts(format!(
            "observed count {observed} exceeds N_relevant = {n_relevant}"
        )));
    }
    let expected = corpus_count as f64 * n_relevant as f64 / n_corpus as f64;
    let diff = observed as f64 - expected;
    Ok(TermScore {
        expected,
        score: diff * diff / expected,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSetConfig {
    pub target: TargetId,
    pub source: LabelSource,
    pub activity_type: ActivityType,
    pub activity_threshold_nm: f64,
    /// Labels whose corpus count exceeds this are discarded as noise.
    pub noise_cap: usize,
    pub min_relevant_count: usize,
    pub set_size: usize,
}

impl ReferenceSetConfig {
    pub fn new(target: impl Into<String>, source: LabelSource) -> Self {
        ReferenceSetConfig {
            target: TargetId::new(target),
            source,
            activity_type: ActivityType::Ec50,
            activity_threshold_nm: DEFAULT_ACTIVITY_THRESHOLD_NM,
            noise_cap: DEFAULT_NOISE_CAP,
            min_relevant_count: DEFAULT_MIN_RELEVANT_COUNT,
            set_size: DEFAULT_SET_SIZE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.activity_threshold_nm.is_nan() || self.activity_threshold_nm <= 0.0 {
            return Err(Error::InvalidConfig("activity threshold must be positive".into()));
        }
        if self.noise_cap == 0 || self.set_size == 0 {
            return Err(Error::InvalidConfig("noise cap and set size must be positive".into()));
        }
        if self.min_relevant_count < 2 {
            return Err(Error::InvalidConfig("minimum relevant count must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredLabel {
    pub label: String,
    pub observed: usize,
    pub expected: f64,
    pub corpus_count: usize,
    pub score: f64,
}

/// Descending score, then higher observed count, then label.
fn label_order(a: &ScoredLabel, b: &ScoredLabel) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(b.observed.cmp(&a.observed))
        .then_with(|| a.label.cmp(&b.label))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceLabelSet {
    pub config: ReferenceSetConfig,
    pub relevant_set: BTreeSet<CompoundId>,
    pub n_corpus: usize,
    pub labels: Vec<ScoredLabel>,
    /// Set when no label survived the filters.
    pub empty_warning: bool,
}

impl ReferenceLabelSet {
    pub fn n_relevant(&self) -> usize {
        self.relevant_set.len()
    }

    pub fn scores(&self) -> HashMap<&str, f64> {
        self.labels.iter().map(|l| (l.label.as_str(), l.score)).collect()
    }
}

pub fn build_reference_set(corpus: &Corpus, config: &ReferenceSetConfig) -> Result<ReferenceLabelSet> {
    config.validate()?;
    let index = corpus.source(&config.source)?;
    let relevant = corpus.compound_indices_for_target(
        config.target.as_str(),
        &config.activity_type,
        config.activity_threshold_nm,
    )?;
    if relevant.is_empty() {
        return Err(Error::NoRelevantCompounds {
            target: config.target.to_string(),
            activity_type: config.activity_type.to_string(),
            threshold: config.activity_threshold_nm,
        });
    }

    let mut observed: HashMap<u32, usize> = HashMap::new();
    for &c in &relevant {
        for &l in index.labels_of(c) {
            *observed.entry(l).or_default() += 1;
        }
    }

    let n_corpus = corpus.n_compounds();
    let mut labels = Vec::new();
    for (&label, &o) in &observed {
        let c = index.corpus_count(label);
        if o < config.min_relevant_count || c > config.noise_cap {
            continue;
        }
        let ts = term_score(o, c, relevant.len(), n_corpus)?;
        labels.push(ScoredLabel {
            label: index.label_name(label).to_string(),
            observed: o,
            expected: ts.expected,
            corpus_count: c,
            score: ts.score,
        });
    }
    labels.sort_by(label_order);
    labels.truncate(config.set_size);
    if labels.is_empty() {
        log::warn!(
            "no {} label of target {} passed the count and noise filters",
            config.source,
            config.target
        );
    }

    Ok(ReferenceLabelSet {
        config: config.clone(),
        relevant_set: relevant.iter().map(|&c| corpus.compound(c).clone()).collect(),
        n_corpus,
        empty_warning: labels.is_empty(),
        labels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocScore {
    pub score: f64,
    /// Total number of labels the document carries under the source.
    pub n_labels: usize,
    pub matched: Vec<String>,
}

/// Score a document from its labels. Labels outside the reference set count
/// toward the length `L` but contribute nothing to the sum.
pub fn doc_score<S: AsRef<str>>(compound_labels: &[S], reference: &HashMap<&str, f64>) -> DocScore {
    let mut distinct: Vec<&str> = compound_labels.iter().map(AsRef::as_ref).collect();
    distinct.sort_unstable();
    distinct.dedup();
    let n_labels = distinct.len();
    if n_labels == 0 {
        return DocScore {
            score: 0.0,
            n_labels,
            matched: Vec::new(),
        };
    }
    let mut sum = 0.0;
    let mut matched = Vec::new();
    for label in distinct {
        if let Some(&s) = reference.get(label) {
            sum += s;
            matched.push(label.to_string());
        }
    }
    DocScore {
        score: sum / n_labels as f64,
        n_labels,
        matched,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalHit {
    pub compound: CompoundId,
    pub score: f64,
    pub n_labels: usize,
    pub matched: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RetrievalResult {
    pub hits: Vec<RetrievalHit>,
    /// Members of the exclusion set that were present in the corpus.
    pub excluded: BTreeSet<CompoundId>,
}

impl RetrievalResult {
    pub fn compound_set(&self) -> BTreeSet<CompoundId> {
        self.hits.iter().map(|h| h.compound.clone()).collect()
    }
}

/// Score every non-excluded corpus compound against the reference set and keep
/// the `top_n` best. Zero-score compounds are dropped.
pub fn retrieve(
    corpus: &Corpus,
    reference: &ReferenceLabelSet,
    exclude: &BTreeSet<CompoundId>,
    top_n: usize,
) -> Result<RetrievalResult> {
    if top_n == 0 {
        return Err(Error::InvalidConfig("top_n must be at least 1".into()));
    }
    let index = corpus.source(&reference.config.source)?;
    let excluded: BTreeSet<CompoundId> = exclude
        .iter()
        .filter(|c| corpus.compound_idx(c.as_str()).is_some())
        .cloned()
        .collect();
    if reference.labels.is_empty() {
        return Ok(RetrievalResult {
            hits: Vec::new(),
            excluded,
        });
    }

    // Reference scores keyed by this corpus' label ids; labels unknown to the
    // corpus (possible for hand-edited sets) can never match.
    let by_id: HashMap<u32, (f64, &str)> = reference
        .labels
        .iter()
        .filter_map(|l| index.label_id(&l.label).map(|id| (id, (l.score, l.label.as_str()))))
        .collect();

    let mut hits: Vec<RetrievalHit> = (0..corpus.n_compounds())
        .into_par_iter()
        .filter(|&c| !excluded.contains(corpus.compound(c)))
        .filter_map(|c| {
            let labels = index.labels_of(c);
            let mut sum = 0.0;
            let mut matched = Vec::new();
            for l in labels {
                if let Some(&(s, name)) = by_id.get(l) {
                    sum += s;
                    matched.push(name.to_string());
                }
            }
            if labels.is_empty() || sum <= 0.0 {
                return None;
            }
            matched.sort();
            Some(RetrievalHit {
                compound: corpus.compound(c).clone(),
                score: sum / labels.len() as f64,
                n_labels: labels.len(),
                matched,
            })
        })
        .collect();
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.compound.cmp(&b.compound)));
    hits.truncate(top_n);
    Ok(RetrievalResult { hits, excluded })
}

pub fn consensus(a: &RetrievalResult, b: &RetrievalResult) -> BTreeSet<CompoundId> {
    a.compound_set().intersection(&b.compound_set()).cloned().collect()
}

pub fn write_reference_set(path: &Path, set: &ReferenceLabelSet) -> Result<()> {
    let mut out = String::from("label\tsource\tO\tE\tC\tscore\n");
    for l in &set.labels {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            l.label, set.config.source, l.observed, l.expected, l.corpus_count, l.score
        ));
    }
    crate::corpus::write_string(path, &out)
}

/// Read a (possibly hand-edited) reference label list. Returns the labels in
/// file order together with the source named in the rows.
pub fn read_reference_labels(path: &Path) -> Result<(Option<LabelSource>, Vec<ScoredLabel>)> {
    let mut source: Option<LabelSource> = None;
    let mut labels = Vec::new();
    for (line, f) in tsv_rows(path, 6)? {
        let parse_err = |what: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("invalid {what}"),
        };
        let row_source: LabelSource = f[1].parse()?;
        match &source {
            Some(s) if *s != row_source => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("mixed label sources {s} and {row_source}"),
                })
            }
            _ => source = Some(row_source),
        }
        let score: f64 = f[5].parse().map_err(|_| parse_err("score"))?;
        if !(score.is_finite() && score >= 0.0) {
            return Err(parse_err("score"));
        }
        labels.push(ScoredLabel {
            label: f[0].clone(),
            observed: f[2].parse().map_err(|_| parse_err("observed count"))?,
            expected: f[3].parse().map_err(|_| parse_err("expected count"))?,
            corpus_count: f[4].parse().map_err(|_| parse_err("corpus count"))?,
            score,
        });
    }
    Ok((source, labels))
}

pub fn write_retrieval(path: &Path, result: &RetrievalResult) -> Result<()> {
    let mut out = String::from("rank\tcompound_id\tscore\tL\tmatched_labels\n");
    for (rank, h) in result.hits.iter().enumerate() {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            rank + 1,
            h.compound,
            h.score,
            h.n_labels,
            h.matched.join(";")
        ));
    }
    crate::corpus::write_string(path, &out)
}

/// Consensus compounds with their rank in each source's retrieval.
pub fn write_consensus(path: &Path, results: &[(LabelSource, &RetrievalResult)]) -> Result<()> {
    let mut common: Option<BTreeSet<CompoundId>> = None;
    for (_, r) in results {
        let set = r.compound_set();
        common = Some(match common {
            None => set,
            Some(c) => c.intersection(&set).cloned().collect(),
        });
    }
    let mut out = String::from("compound_id");
    for (s, _) in results {
        out.push_str(&format!("\trank_{s}"));
    }
    out.push('\n');
    let ranks: Vec<HashMap<&CompoundId, usize>> = results
        .iter()
        .map(|(_, r)| r.hits.iter().enumerate().map(|(i, h)| (&h.compound, i + 1)).collect())
        .collect();
    for c in common.unwrap_or_default() {
        out.push_str(c.as_str());
        for r in &ranks {
            out.push_str(&format!("\t{}", r[&c]));
        }
        out.push('\n');
    }
    crate::corpus::write_string(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ActivityRecord, CompoundRecord, LabelRecord};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn term_score_examples() {
        let t = term_score(5, 10, 50, 1000).unwrap();
        assert!(close(t.expected, 0.5) && close(t.score, 40.5));
        let t = term_score(1, 10, 100, 1000).unwrap();
        assert!(close(t.expected, 1.0) && t.score == 0.0);
        let t = term_score(2, 4, 5, 20).unwrap();
        assert!(close(t.expected, 1.0) && close(t.score, 1.0));
    }

    #[test]
    fn term_score_errors() {
        assert!(matches!(term_score(1, 0, 5, 20), Err(Error::TermAbsent)));
        assert!(matches!(term_score(0, 1, 0, 0), Err(Error::EmptyCorpus)));
        assert!(matches!(term_score(6, 1, 5, 20), Err(Error::InvalidCounts(_))));
    }

    #[test]
    fn doc_score_examples() {
        let reference: HashMap<&str, f64> = [("A", 10.0), ("B", 20.0)].into();
        let d = doc_score(&["A", "B"], &reference);
        assert_eq!((d.n_labels, d.score), (2, 15.0));
        let d = doc_score::<&str>(&[], &reference);
        assert_eq!((d.n_labels, d.score), (0, 0.0));
        let only_a: HashMap<&str, f64> = [("A", 10.0)].into();
        let d = doc_score(&["A", "C"], &only_a);
        assert_eq!((d.n_labels, d.score), (2, 5.0));
        assert_eq!(d.matched, vec!["A"]);
    }

    fn result(ids: &[&str]) -> RetrievalResult {
        RetrievalResult {
            hits: ids
                .iter()
                .map(|id| RetrievalHit {
                    compound: CompoundId::from(*id),
                    score: 1.0,
                    n_labels: 1,
                    matched: vec![],
                })
                .collect(),
            excluded: BTreeSet::new(),
        }
    }

    #[test]
    fn consensus_examples() {
        let a = result(&["c1", "c2", "c5"]);
        let b = result(&["c2", "c3", "c5"]);
        let ids = |s: BTreeSet<CompoundId>| s.into_iter().map(|c| c.to_string()).collect::<Vec<_>>();
        assert_eq!(ids(consensus(&a, &b)), vec!["c2", "c5"]);
        assert_eq!(consensus(&a, &a), a.compound_set());
        assert!(consensus(&a, &result(&["c9"])).is_empty());
        assert_eq!(consensus(&a, &b), consensus(&b, &a));
    }

    /// Ten compounds; r1..r4 are potent against T. Label counts over the corpus:
    ///   A: r1 r2 r3 x1        (O=3, C=4)
    ///   B: r1 r2 x2 x3 x4 x5  (O=2, C=6)
    ///   D: r3 r4 x1 x2        (O=2, C=4)
    ///   E: r4                 (O=1, filtered by min count)
    ///   F: x1..x6             (O=0)
    fn planted() -> Corpus {
        let ids = ["r1", "r2", "r3", "r4", "x1", "x2", "x3", "x4", "x5", "x6"];
        let compounds = ids
            .iter()
            .map(|id| CompoundRecord {
                id: CompoundId::from(*id),
                smiles: None,
            })
            .collect();
        let rows: &[(&str, &str)] = &[
            ("r1", "A"), ("r2", "A"), ("r3", "A"), ("x1", "A"),
            ("r1", "B"), ("r2", "B"), ("x2", "B"), ("x3", "B"), ("x4", "B"), ("x5", "B"),
            ("r3", "D"), ("r4", "D"), ("x1", "D"), ("x2", "D"),
            ("r4", "E"),
            ("x1", "F"), ("x2", "F"), ("x3", "F"), ("x4", "F"), ("x5", "F"), ("x6", "F"),
        ];
        let labels = rows
            .iter()
            .map(|(c, l)| LabelRecord {
                compound: CompoundId::from(*c),
                source: LabelSource::ClassyFire,
                label: l.to_string(),
            })
            .collect();
        let mut activities: Vec<ActivityRecord> = ["r1", "r2", "r3", "r4"]
            .iter()
            .map(|c| ActivityRecord {
                compound: CompoundId::from(*c),
                target: TargetId::from("T"),
                activity_type: ActivityType::Ec50,
                value_nm: 5.0,
            })
            .collect();
        activities.push(ActivityRecord {
            compound: CompoundId::from("x1"),
            target: TargetId::from("T"),
            activity_type: ActivityType::Ec50,
            value_nm: 500.0,
        });
        Corpus::from_records(compounds, labels, activities).unwrap()
    }

    #[test]
    fn reference_set_hand_scored() {
        let corpus = planted();
        let config = ReferenceSetConfig::new("T", LabelSource::ClassyFire);
        let set = build_reference_set(&corpus, &config).unwrap();
        assert_eq!(set.n_relevant(), 4);
        // E = C * 4 / 10
        // A: E=1.6, (3-1.6)^2/1.6 = 1.225
        // D: E=1.6, (2-1.6)^2/1.6 = 0.1
        // B: E=2.4, (2-2.4)^2/2.4 = 0.0666..
        let names: Vec<_> = set.labels.iter().map(|l| l.label.as_str()).collect();
        assert_eq!(names, vec!["A", "D", "B"]);
        assert!(close(set.labels[0].score, 1.225));
        assert!(close(set.labels[1].score, 0.1));
        assert!(close(set.labels[2].score, 0.16 / 2.4));
        assert_eq!(set.labels[2].corpus_count, 6);
        assert!(!set.empty_warning);
    }

    #[test]
    fn reference_set_noise_cap_filters_everything() {
        let corpus = planted();
        let mut config = ReferenceSetConfig::new("T", LabelSource::ClassyFire);
        config.noise_cap = 1;
        let set = build_reference_set(&corpus, &config).unwrap();
        assert!(set.labels.is_empty());
        assert!(set.empty_warning);
        let r = retrieve(&corpus, &set, &set.relevant_set, 10).unwrap();
        assert!(r.hits.is_empty());
    }

    #[test]
    fn reference_set_no_relevant() {
        let corpus = planted();
        let mut config = ReferenceSetConfig::new("T", LabelSource::ClassyFire);
        config.activity_threshold_nm = 1.0;
        assert!(matches!(
            build_reference_set(&corpus, &config),
            Err(Error::NoRelevantCompounds { .. })
        ));
        config.min_relevant_count = 1;
        assert!(matches!(build_reference_set(&corpus, &config), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn label_tie_broken_by_observed_count() {
        // Both labels score 0 with different O: P has O=2,C=4 (E=2); Q has O=1,C=2 (E=1).
        // With min count 2 Q would be dropped, so compare the ordering directly.
        let mut labels = [ScoredLabel { label: "Q".into(), observed: 1, expected: 1.0, corpus_count: 2, score: 0.0 },
            ScoredLabel { label: "P".into(), observed: 2, expected: 2.0, corpus_count: 4, score: 0.0 },
            ScoredLabel { label: "A".into(), observed: 1, expected: 1.0, corpus_count: 2, score: 0.0 }];
        labels.sort_by(label_order);
        let names: Vec<_> = labels.iter().map(|l| l.label.as_str()).collect();
        assert_eq!(names, vec!["P", "A", "Q"]);
    }

    #[test]
    fn label_tie_in_built_set() {
        // Relevant r1..r4 of 8 compounds. L1: O=2, C=2 -> E=1, score 1.
        // L2: O=4, C=6 -> E=3, score 1/3. L3: O=3, C=3 -> E=1.5, score 1.5.
        // L4: O=4, C=4 -> E=2, score 2. L5: O=2, C=6 -> E=3, score 1/3 (ties L2, lower O).
        let ids = ["r1", "r2", "r3", "r4", "x1", "x2", "x3", "x4"];
        let compounds = ids.iter().map(|id| CompoundRecord { id: CompoundId::from(*id), smiles: None }).collect();
        let mut rows = vec![];
        for (label, members) in [
            ("L1", &["r1", "r2"][..]),
            ("L2", &["r1", "r2", "r3", "r4", "x1", "x2"][..]),
            ("L3", &["r1", "r2", "r3"][..]),
            ("L4", &["r1", "r2", "r3", "r4"][..]),
            ("L5", &["r1", "r2", "x1", "x2", "x3", "x4"][..]),
        ] {
            for m in members {
                rows.push(LabelRecord {
                    compound: CompoundId::from(*m),
                    source: LabelSource::OntoChem,
                    label: label.into(),
                });
            }
        }
        let acts = ["r1", "r2", "r3", "r4"]
            .iter()
            .map(|c| ActivityRecord {
                compound: CompoundId::from(*c),
                target: TargetId::from("T"),
                activity_type: ActivityType::Ec50,
                value_nm: 1.0,
            })
            .collect();
        let corpus = Corpus::from_records(compounds, rows, acts).unwrap();
        let set = build_reference_set(&corpus, &ReferenceSetConfig::new("T", LabelSource::OntoChem)).unwrap();
        let names: Vec<_> = set.labels.iter().map(|l| l.label.as_str()).collect();
        assert_eq!(names, vec!["L4", "L3", "L1", "L2", "L5"]);
    }

    #[test]
    fn retrieval_hand_ranked() {
        let corpus = planted();
        let set = build_reference_set(&corpus, &ReferenceSetConfig::new("T", LabelSource::ClassyFire)).unwrap();
        let r = retrieve(&corpus, &set, &set.relevant_set, 100).unwrap();
        // Non-relevant compounds x1..x6 with scores:
        //   x1 {A,D,F}: (1.225+0.1)/3 = 0.441666..
        //   x2 {B,D,F}: (0.0666..+0.1)/3 = 0.0555..
        //   x3,x4,x5 {B,F}: 0.0666../2 = 0.0333..
        //   x6 {F}: 0 -> omitted
        let b = 0.16 / 2.4;
        let expected = [
            ("x1", (1.225 + 0.1) / 3.0),
            ("x2", (b + 0.1) / 3.0),
            ("x3", b / 2.0),
            ("x4", b / 2.0),
            ("x5", b / 2.0),
        ];
        assert_eq!(r.hits.len(), expected.len());
        for (hit, (id, score)) in r.hits.iter().zip(expected) {
            assert_eq!(hit.compound.as_str(), id);
            assert!(close(hit.score, score), "{id}: {} vs {score}", hit.score);
        }
        assert_eq!(r.hits[0].matched, vec!["A", "D"]);
        assert_eq!(r.hits[0].n_labels, 3);
        assert_eq!(r.excluded, set.relevant_set);
        for h in &r.hits {
            assert!(!set.relevant_set.contains(&h.compound));
        }
        let top2 = retrieve(&corpus, &set, &set.relevant_set, 2).unwrap();
        assert_eq!(top2.hits.len(), 2);
    }

    #[test]
    fn reference_tsv_round_trip() {
        let corpus = planted();
        let set = build_reference_set(&corpus, &ReferenceSetConfig::new("T", LabelSource::ClassyFire)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ref.tsv");
        write_reference_set(&path, &set).unwrap();
        let (source, labels) = read_reference_labels(&path).unwrap();
        assert_eq!(source, Some(LabelSource::ClassyFire));
        assert_eq!(labels, set.labels);
    }
}

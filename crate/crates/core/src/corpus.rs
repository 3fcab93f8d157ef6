//! Compound corpus: compounds, per-source ontological labels and activity records.
//!
//! The corpus is built once from three TSV files (or in-memory records) and is
//! immutable afterwards. Every label set is deduplicated per compound and source,
//! and duplicate activity rows for one `(compound, target, activity type)` are
//! collapsed to their minimum (most potent) value.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

pub type LabelId = u32;

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                $name(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }
    };
}

string_id!(CompoundId);
string_id!(TargetId);

/// Origin of a label: one of the two chemical ontologies, precomputed Morgan bits,
/// or any other named feature source.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LabelSource {
    ClassyFire,
    OntoChem,
    Morgan,
    Named(String),
}

impl LabelSource {
    pub const BUILTIN: [LabelSource; 3] =
        [LabelSource::ClassyFire, LabelSource::OntoChem, LabelSource::Morgan];

    pub fn code(&self) -> &str {
        match self {
            LabelSource::ClassyFire => "CF",
            LabelSource::OntoChem => "OC",
            LabelSource::Morgan => "MORGAN",
            LabelSource::Named(name) => name,
        }
    }
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for LabelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "CF" => Ok(LabelSource::ClassyFire),
            "OC" => Ok(LabelSource::OntoChem),
            "MORGAN" => Ok(LabelSource::Morgan),
            "" => Err(Error::UnknownSource(String::new())),
            other => Ok(LabelSource::Named(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActivityType {
    Ic50,
    Ec50,
    Ld50,
    Other(String),
}

impl fmt::Display for ActivityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivityType::Ic50 => f.write_str("IC50"),
            ActivityType::Ec50 => f.write_str("EC50"),
            ActivityType::Ld50 => f.write_str("LD50"),
            ActivityType::Other(name) => f.write_str(name),
        }
    }
}

impl FromStr for ActivityType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "IC50" => Ok(ActivityType::Ic50),
            "EC50" => Ok(ActivityType::Ec50),
            "LD50" => Ok(ActivityType::Ld50),
            "" => Err(Error::InvalidConfig("empty activity type".into())),
            _ => Ok(ActivityType::Other(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompoundRecord {
    pub id: CompoundId,
    pub smiles: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRecord {
    pub compound: CompoundId,
    pub source: LabelSource,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityRecord {
    pub compound: CompoundId,
    pub target: TargetId,
    pub activity_type: ActivityType,
    /// Nanomolar, strictly positive.
    pub value_nm: f64,
}

/// Label index for one source.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourceIndex {
    labels: Vec<String>,
    label_ids: HashMap<String, LabelId>,
    /// Sorted, deduplicated label ids per compound.
    compound_labels: Vec<Vec<LabelId>>,
    /// Sorted compound indices per label.
    label_compounds: Vec<Vec<usize>>,
}

impl SourceIndex {
    fn new(n_compounds: usize) -> Self {
        SourceIndex {
            compound_labels: vec![Vec::new(); n_compounds],
            ..Default::default()
        }
    }

    fn insert(&mut self, compound: usize, label: &str) {
        let id = match self.label_ids.get(label) {
            Some(&id) => id,
            None => {
                let id = self.labels.len() as LabelId;
                self.labels.push(label.to_string());
                self.label_ids.insert(label.to_string(), id);
                self.label_compounds.push(Vec::new());
                id
            }
        };
        self.compound_labels[compound].push(id);
    }

    fn finish(&mut self) {
        for (compound, labels) in self.compound_labels.iter_mut().enumerate() {
            labels.sort_unstable();
            labels.dedup();
            for &l in labels.iter() {
                self.label_compounds[l as usize].push(compound);
            }
        }
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn label_name(&self, id: LabelId) -> &str {
        &self.labels[id as usize]
    }

    pub fn label_id(&self, label: &str) -> Option<LabelId> {
        self.label_ids.get(label).copied()
    }

    pub fn labels_of(&self, compound: usize) -> &[LabelId] {
        &self.compound_labels[compound]
    }

    pub fn compounds_with(&self, label: LabelId) -> &[usize] {
        &self.label_compounds[label as usize]
    }

    /// Corpus count `C` of a label: distinct compounds carrying it.
    pub fn corpus_count(&self, label: LabelId) -> usize {
        self.label_compounds[label as usize].len()
    }

    pub fn n_assignments(&self) -> usize {
        self.compound_labels.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    compounds: Vec<CompoundId>,
    smiles: Vec<Option<String>>,
    compound_index: HashMap<CompoundId, usize>,
    targets: Vec<TargetId>,
    target_index: HashMap<TargetId, usize>,
    /// Aggregated records sorted by (compound, target, type).
    activities: Vec<ActivityRecord>,
    activities_by_target: Vec<Vec<usize>>,
    sources: BTreeMap<LabelSource, SourceIndex>,
}

impl Corpus {
    pub fn from_records(
        compounds: Vec<CompoundRecord>,
        labels: Vec<LabelRecord>,
        activities: Vec<ActivityRecord>,
    ) -> Result<Corpus> {
        let mut ids = Vec::new();
        let mut smiles = Vec::new();
        let mut compound_index = HashMap::new();
        for rec in compounds {
            if let Some(&i) = compound_index.get(&rec.id) {
                let slot: &mut Option<String> = &mut smiles[i];
                if slot.is_none() {
                    *slot = rec.smiles;
                }
                continue;
            }
            compound_index.insert(rec.id.clone(), ids.len());
            ids.push(rec.id);
            smiles.push(rec.smiles);
        }

        let unknown: BTreeSet<String> = labels
            .iter()
            .map(|r| &r.compound)
            .chain(activities.iter().map(|r| &r.compound))
            .filter(|c| !compound_index.contains_key(*c))
            .map(|c| c.to_string())
            .collect();
        if !unknown.is_empty() {
            return Err(Error::UnknownCompounds(unknown.into_iter().collect()));
        }

        let mut sources: BTreeMap<LabelSource, SourceIndex> = LabelSource::BUILTIN
            .iter()
            .map(|s| (s.clone(), SourceIndex::new(ids.len())))
            .collect();
        for rec in &labels {
            let idx = compound_index[&rec.compound];
            sources
                .entry(rec.source.clone())
                .or_insert_with(|| SourceIndex::new(ids.len()))
                .insert(idx, &rec.label);
        }
        for index in sources.values_mut() {
            index.finish();
        }

        let mut targets = Vec::new();
        let mut target_index = HashMap::new();
        let mut best: BTreeMap<(usize, usize, ActivityType), f64> = BTreeMap::new();
        for (i, rec) in activities.iter().enumerate() {
            if !(rec.value_nm.is_finite() && rec.value_nm > 0.0) {
                return Err(Error::NonPositiveActivity {
                    path: PathBuf::from("<records>"),
                    line: i + 1,
                    value: rec.value_nm,
                });
            }
            let t = *target_index.entry(rec.target.clone()).or_insert_with(|| {
                targets.push(rec.target.clone());
                targets.len() - 1
            });
            let key = (compound_index[&rec.compound], t, rec.activity_type.clone());
            best.entry(key)
                .and_modify(|v| *v = v.min(rec.value_nm))
                .or_insert(rec.value_nm);
        }
        let mut activities_by_target = vec![Vec::new(); targets.len()];
        let activities = best
            .into_iter()
            .enumerate()
            .map(|(k, ((c, t, activity_type), value_nm))| {
                activities_by_target[t].push(k);
                ActivityRecord {
                    compound: ids[c].clone(),
                    target: targets[t].clone(),
                    activity_type,
                    value_nm,
                }
            })
            .collect();

        Ok(Corpus {
            compounds: ids,
            smiles,
            compound_index,
            targets,
            target_index,
            activities,
            activities_by_target,
            sources,
        })
    }

    /// `N_corpus`: number of distinct compounds.
    pub fn n_compounds(&self) -> usize {
        self.compounds.len()
    }

    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn compounds(&self) -> &[CompoundId] {
        &self.compounds
    }

    pub fn targets(&self) -> &[TargetId] {
        &self.targets
    }

    pub fn compound(&self, idx: usize) -> &CompoundId {
        &self.compounds[idx]
    }

    pub fn smiles(&self, idx: usize) -> Option<&str> {
        self.smiles[idx].as_deref()
    }

    pub fn compound_idx(&self, id: &str) -> Option<usize> {
        self.compound_index.get(id).copied()
    }

    pub fn target_idx(&self, id: &str) -> Option<usize> {
        self.target_index.get(id).copied()
    }

    pub fn activities(&self) -> &[ActivityRecord] {
        &self.activities
    }

    pub fn activities_for_target(&self, target: &str) -> Result<impl Iterator<Item = &ActivityRecord>> {
        let t = self
            .target_idx(target)
            .ok_or_else(|| Error::UnknownTarget(target.to_string()))?;
        Ok(self.activities_by_target[t].iter().map(|&k| &self.activities[k]))
    }

    /// Sources present in the corpus. The builtin sources are always present,
    /// possibly empty.
    pub fn sources(&self) -> impl Iterator<Item = &LabelSource> {
        self.sources.keys()
    }

    pub fn source(&self, source: &LabelSource) -> Result<&SourceIndex> {
        self.sources
            .get(source)
            .ok_or_else(|| Error::UnknownSource(source.to_string()))
    }

    /// Labels of one compound under one source, as strings.
    pub fn labels_of(&self, source: &LabelSource, compound: &str) -> Result<Vec<&str>> {
        let index = self.source(source)?;
        let c = self
            .compound_idx(compound)
            .ok_or_else(|| Error::UnknownCompounds(vec![compound.to_string()]))?;
        Ok(index.labels_of(c).iter().map(|&l| index.label_name(l)).collect())
    }

    /// `C_i` for a label; 0 when the label never occurs.
    pub fn label_corpus_count(&self, source: &LabelSource, label: &str) -> Result<usize> {
        let index = self.source(source)?;
        Ok(index.label_id(label).map_or(0, |l| index.corpus_count(l)))
    }

    /// Sorted indices of compounds with a record for `target` of the given type
    /// whose value is strictly below `max_value_nm`.
    pub fn compound_indices_for_target(
        &self,
        target: &str,
        activity_type: &ActivityType,
        max_value_nm: f64,
    ) -> Result<Vec<usize>> {
        let mut out: Vec<usize> = self
            .activities_for_target(target)?
            .filter(|r| &r.activity_type == activity_type && r.value_nm < max_value_nm)
            .map(|r| self.compound_index[&r.compound])
            .collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn compounds_for_target(
        &self,
        target: &str,
        activity_type: &ActivityType,
        max_value_nm: f64,
    ) -> Result<BTreeSet<CompoundId>> {
        Ok(self
            .compound_indices_for_target(target, activity_type, max_value_nm)?
            .into_iter()
            .map(|i| self.compounds[i].clone())
            .collect())
    }

    /// Number of compounds in `compounds` carrying `label` under `source` (the
    /// observed count `O`).
    pub fn label_count_in_set(
        &self,
        source: &LabelSource,
        label: &str,
        compounds: &BTreeSet<CompoundId>,
    ) -> Result<usize> {
        let index = self.source(source)?;
        let unknown: Vec<String> = compounds
            .iter()
            .filter(|c| !self.compound_index.contains_key(c.as_str()))
            .map(|c| c.to_string())
            .collect();
        if !unknown.is_empty() {
            return Err(Error::UnknownCompounds(unknown));
        }
        let Some(l) = index.label_id(label) else {
            return Ok(0);
        };
        Ok(compounds
            .iter()
            .filter(|c| index.labels_of(self.compound_index[c.as_str()]).binary_search(&l).is_ok())
            .count())
    }

    pub fn summary(&self) -> CorpusSummary {
        CorpusSummary {
            compounds: self.n_compounds(),
            targets: self.n_targets(),
            activities: self.activities.len(),
            sources: self
                .sources
                .iter()
                .map(|(s, idx)| (s.clone(), idx.n_labels(), idx.n_assignments()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSummary {
    pub compounds: usize,
    pub targets: usize,
    pub activities: usize,
    /// (source, distinct labels, compound-label assignments)
    pub sources: Vec<(LabelSource, usize, usize)>,
}

impl CorpusSummary {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("item\tcount\n");
        out.push_str(&format!("compounds\t{}\n", self.compounds));
        out.push_str(&format!("targets\t{}\n", self.targets));
        out.push_str(&format!("activities\t{}\n", self.activities));
        for (source, labels, assignments) in &self.sources {
            out.push_str(&format!("labels:{source}\t{labels}\n"));
            out.push_str(&format!("assignments:{source}\t{assignments}\n"));
        }
        out
    }
}

pub const COMPOUNDS_FILE: &str = "compounds.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const ACTIVITIES_FILE: &str = "activities.tsv";

/// Load the three corpus files from a directory using the standard file names.
pub fn load_corpus_dir(dir: &Path) -> Result<Corpus> {
    load_corpus(
        &dir.join(COMPOUNDS_FILE),
        &dir.join(LABELS_FILE),
        &dir.join(ACTIVITIES_FILE),
    )
}

pub fn load_corpus(compounds_path: &Path, labels_path: &Path, activities_path: &Path) -> Result<Corpus> {
    let compounds = read_compounds(compounds_path)?;
    let labels = read_labels(labels_path)?;
    let activities = read_activities(activities_path)?;
    Corpus::from_records(compounds, labels, activities)
}

/// Data rows of a TSV file: `#` comments and blank lines skipped, first
/// remaining line treated as the header. Yields (1-based line number, fields).
pub(crate) fn tsv_rows(path: &Path, columns: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(str::to_string).collect();
        if fields.len() != columns {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected {columns} tab-separated columns, found {}", fields.len()),
            });
        }
        if !seen_header {
            seen_header = true;
            continue;
        }
        rows.push((i + 1, fields));
    }
    if !seen_header {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "missing header row".into(),
        });
    }
    Ok(rows)
}

fn non_empty(path: &Path, line: usize, field: &str, what: &str) -> Result<String> {
    if field.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("empty {what}"),
        });
    }
    Ok(field.to_string())
}

pub fn read_compounds(path: &Path) -> Result<Vec<CompoundRecord>> {
    tsv_rows(path, 2)?
        .into_iter()
        .map(|(line, f)| {
            Ok(CompoundRecord {
                id: CompoundId(non_empty(path, line, &f[0], "compound id")?),
                smiles: (!f[1].is_empty()).then(|| f[1].clone()),
            })
        })
        .collect()
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>> {
    tsv_rows(path, 3)?
        .into_iter()
        .map(|(line, f)| {
            Ok(LabelRecord {
                compound: CompoundId(non_empty(path, line, &f[0], "compound id")?),
                source: non_empty(path, line, &f[1], "label source")?.parse()?,
                label: non_empty(path, line, &f[2], "label")?,
            })
        })
        .collect()
}

pub fn read_activities(path: &Path) -> Result<Vec<ActivityRecord>> {
    tsv_rows(path, 4)?
        .into_iter()
        .map(|(line, f)| {
            let value: f64 = f[3].trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("activity value {:?} is not a number", f[3]),
            })?;
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::NonPositiveActivity {
                    path: path.to_path_buf(),
                    line,
                    value,
                });
            }
            Ok(ActivityRecord {
                compound: CompoundId(non_empty(path, line, &f[0], "compound id")?),
                target: TargetId(non_empty(path, line, &f[1], "target id")?),
                activity_type: non_empty(path, line, &f[2], "activity type")?.parse()?,
                value_nm: value,
            })
        })
        .collect()
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Write `contents` to `path` in one go, creating parent directories.
pub(crate) fn write_string(path: &Path, contents: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(contents.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_compounds(path: &Path, records: &[CompoundRecord]) -> Result<()> {
    let mut out = String::from("compound_id\tsmiles\n");
    for r in records {
        out.push_str(&format!("{}\t{}\n", r.id, r.smiles.as_deref().unwrap_or("")));
    }
    write_string(path, &out)
}

pub fn write_labels(path: &Path, records: &[LabelRecord]) -> Result<()> {
    let mut out = String::from("compound_id\tsource\tlabel\n");
    for r in records {
        out.push_str(&format!("{}\t{}\t{}\n", r.compound, r.source, r.label));
    }
    write_string(path, &out)
}

pub fn write_activities(path: &Path, records: &[ActivityRecord]) -> Result<()> {
    let mut out = String::from("compound_id\ttarget_id\tactivity_type\tvalue_nM\n");
    for r in records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.compound, r.target, r.activity_type, r.value_nm
        ));
    }
    write_string(path, &out)
}

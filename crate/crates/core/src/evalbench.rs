//! Cross-validated evaluation of factor models and a planted synthetic corpus.
//!
//! Metrics are RMSE over held-out known entries and recall-at-k: for each
//! sampled compound that has enough training and test targets, all targets are
//! ranked by predicted score (optionally skipping the compound's training
//! targets) and the fraction of its test targets in the top k is recorded.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{
    write_activities, write_compounds, write_labels, ActivityRecord, ActivityType, CompoundId, CompoundRecord,
    LabelRecord, LabelSource, TargetId, ACTIVITIES_FILE, COMPOUNDS_FILE, LABELS_FILE,
};
use crate::error::{Error, Result};
use crate::factor::{train_csnmf, train_nmf, FactorModel, InteractionMatrix, TrainConfig};
use crate::simkit::SimilarityMatrix;

pub type Triplet = (usize, usize, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct FoldSplit {
    pub n_folds: usize,
    pub seed: u64,
    pub folds: Vec<Vec<Triplet>>,
}

/// Shuffle the stored entries of `x` and deal them round-robin into `n_folds`
/// folds, so fold sizes differ by at most one.
pub fn split_folds(x: &InteractionMatrix, n_folds: usize, seed: u64) -> Result<FoldSplit> {
    if n_folds < 2 {
        return Err(Error::InvalidConfig("at least 2 folds are required".into()));
    }
    if x.nnz() < n_folds {
        return Err(Error::TooFewEntries {
            entries: x.nnz(),
            folds: n_folds,
        });
    }
    let mut entries = x.triplets();
    entries.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::with_capacity(entries.len() / n_folds + 1); n_folds];
    for (k, e) in entries.into_iter().enumerate() {
        folds[k % n_folds].push(e);
    }
    for f in &mut folds {
        f.sort_by_key(|a| (a.0, a.1));
    }
    Ok(FoldSplit { n_folds, seed, folds })
}

impl FoldSplit {
    /// `x` with fold `fold`'s entries zeroed.
    pub fn training_matrix(&self, x: &InteractionMatrix, fold: usize) -> Result<InteractionMatrix> {
        x.without(&self.folds[fold])
    }
}

pub fn rmse(model: &FactorModel, held_out: &[Triplet]) -> Result<f64> {
    if held_out.is_empty() {
        return Err(Error::EmptyHeldOut);
    }
    let mut sum = 0.0;
    for &(i, j, truth) in held_out {
        let d = model.predict(i, j)? - truth;
        sum += d * d;
    }
    Ok((sum / held_out.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecallConfig {
    pub ks: Vec<usize>,
    pub sample_size: usize,
    pub min_train_targets: usize,
    pub min_test_targets: usize,
    /// Skip each compound's training targets when ranking.
    pub exclude_train_targets: bool,
    pub seed: u64,
}

impl Default for RecallConfig {
    fn default() -> Self {
        RecallConfig {
            ks: vec![30, 50, 100],
            sample_size: 10_000,
            min_train_targets: 3,
            min_test_targets: 3,
            exclude_train_targets: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecallAtK {
    pub k: usize,
    pub mean: f64,
    /// Population standard deviation across sampled compounds.
    pub std: f64,
}

/// Zero-based ranks of each sampled compound's test targets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecallSamples {
    pub compounds: Vec<usize>,
    pub test_ranks: Vec<Vec<usize>>,
}

impl RecallSamples {
    pub fn len(&self) -> usize {
        self.compounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.compounds.is_empty()
    }

    pub fn recalls(&self, k: usize) -> Vec<f64> {
        self.test_ranks
            .iter()
            .map(|ranks| ranks.iter().filter(|&&r| r < k).count() as f64 / ranks.len() as f64)
            .collect()
    }

    pub fn at(&self, k: usize) -> RecallAtK {
        let (mean, std) = mean_std(&self.recalls(k));
        RecallAtK { k, mean, std }
    }

    pub fn extend(&mut self, other: RecallSamples) {
        self.compounds.extend(other.compounds);
        self.test_ranks.extend(other.test_ranks);
    }
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Sample eligible compounds and record where their test targets rank.
pub fn recall_samples(
    model: &FactorModel,
    train_x: &InteractionMatrix,
    test: &[Triplet],
    config: &RecallConfig,
) -> Result<RecallSamples> {
    if config.min_train_targets == 0 || config.min_test_targets == 0 {
        return Err(Error::InvalidConfig("recall thresholds must be at least 1".into()));
    }
    let mut test_targets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(i, j, _) in test {
        test_targets.entry(i).or_default().push(j);
    }
    let eligible: Vec<usize> = test_targets
        .iter()
        .filter(|(&i, t)| t.len() >= config.min_test_targets && train_x.row_len(i) >= config.min_train_targets)
        .map(|(&i, _)| i)
        .collect();
    if eligible.is_empty() {
        return Err(Error::NoEligibleCompounds {
            min_train: config.min_train_targets,
            min_test: config.min_test_targets,
        });
    }
    let mut chosen = if eligible.len() > config.sample_size {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rand::seq::index::sample(&mut rng, eligible.len(), config.sample_size)
            .into_iter()
            .map(|k| eligible[k])
            .collect()
    } else {
        eligible
    };
    chosen.sort_unstable();

    let test_ranks = chosen
        .par_iter()
        .map(|&i| {
            let ranked = model.ranked_targets(i, |j| config.exclude_train_targets && train_x.contains(i, j))?;
            let mut position = vec![usize::MAX; model.cols.len()];
            for (r, &(j, _)) in ranked.iter().enumerate() {
                position[j] = r;
            }
            Ok(test_targets[&i].iter().map(|&j| position[j]).collect())
        })
        .collect::<Result<Vec<Vec<usize>>>>()?;
    Ok(RecallSamples {
        compounds: chosen,
        test_ranks,
    })
}

/// Mean and standard deviation of recall for each `k` in `config.ks`.
pub fn recall_at_k(
    model: &FactorModel,
    train_x: &InteractionMatrix,
    test: &[Triplet],
    config: &RecallConfig,
) -> Result<Vec<RecallAtK>> {
    let samples = recall_samples(model, train_x, test, config)?;
    Ok(config.ks.iter().map(|&k| samples.at(k)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruePositiveCounts {
    pub per_compound: Vec<(CompoundId, usize)>,
    pub total: usize,
}

/// Count known associations among each probe compound's top `k` predicted
/// targets. Targets in `exclude` (e.g. the training matrix) are skipped when
/// ranking.
pub fn top_k_true_positives(
    model: &FactorModel,
    probes: &[CompoundId],
    known: &BTreeMap<CompoundId, BTreeSet<TargetId>>,
    k: usize,
    exclude: Option<&InteractionMatrix>,
) -> Result<TruePositiveCounts> {
    let unknown: Vec<String> = probes
        .iter()
        .filter(|p| model.row_index(p.as_str()).is_none())
        .map(|p| p.to_string())
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownCompounds(unknown));
    }
    let mut per_compound = Vec::with_capacity(probes.len());
    for p in probes {
        let i = model.row_index(p.as_str()).unwrap();
        let ranked = model.ranked_targets(i, |j| exclude.is_some_and(|x| x.contains(i, j)))?;
        let truth = known.get(p);
        let hits = ranked
            .iter()
            .take(k)
            .filter(|(j, _)| truth.is_some_and(|t| t.contains(&model.cols[*j])))
            .count();
        per_compound.push((p.clone(), hits));
    }
    let total = per_compound.iter().map(|(_, n)| n).sum();
    Ok(TruePositiveCounts { per_compound, total })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub n_folds: usize,
    pub seed: u64,
    pub recall: RecallConfig,
    /// Largest k of the rank-recall curve.
    pub curve_max_k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_folds: 5,
            seed: 0,
            recall: RecallConfig::default(),
            curve_max_k: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub rmse: f64,
    pub sampled: usize,
    pub recall: Vec<RecallAtK>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub folds: Vec<FoldReport>,
    pub mean_rmse: f64,
    /// Recall pooled over the compounds sampled in every fold.
    pub recall: Vec<RecallAtK>,
    pub sampled: usize,
    pub curve: Vec<RecallAtK>,
}

/// Run k-fold cross validation. Each fold trains NMF (when `similarity` is
/// `None`) or CS-NMF on the remaining entries and is scored on its own.
pub fn cross_validate(
    x: &InteractionMatrix,
    similarity: Option<&SimilarityMatrix>,
    train: &TrainConfig,
    config: &EvalConfig,
    method: &str,
) -> Result<EvalReport> {
    let split = split_folds(x, config.n_folds, config.seed)?;
    let results = (0..config.n_folds)
        .into_par_iter()
        .map(|f| {
            let train_x = split.training_matrix(x, f)?;
            let model = match similarity {
                Some(s) => train_csnmf(&train_x, s, train)?,
                None => train_nmf(&train_x, train)?,
            };
            let fold_rmse = rmse(&model, &split.folds[f])?;
            let recall_cfg = RecallConfig {
                seed: config.recall.seed.wrapping_add(f as u64),
                ..config.recall.clone()
            };
            let samples = recall_samples(&model, &train_x, &split.folds[f], &recall_cfg)?;
            Ok((fold_rmse, samples, model.iterations()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut pooled = RecallSamples::default();
    let mut folds = Vec::with_capacity(results.len());
    for (fold_rmse, samples, iterations) in results {
        folds.push(FoldReport {
            rmse: fold_rmse,
            sampled: samples.len(),
            recall: config.recall.ks.iter().map(|&k| samples.at(k)).collect(),
            iterations,
        });
        pooled.extend(samples);
    }
    let mean_rmse = folds.iter().map(|f| f.rmse).sum::<f64>() / folds.len() as f64;
    Ok(EvalReport {
        method: method.to_string(),
        mean_rmse,
        recall: config.recall.ks.iter().map(|&k| pooled.at(k)).collect(),
        sampled: pooled.len(),
        curve: (1..=config.curve_max_k).map(|k| pooled.at(k)).collect(),
        folds,
    })
}

impl EvalReport {
    pub fn recall_at(&self, k: usize) -> Option<RecallAtK> {
        self.recall.iter().chain(&self.curve).find(|r| r.k == k).copied()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("method\tmetric\tscope\tvalue\tstd\n");
        for (f, fold) in self.folds.iter().enumerate() {
            let _ = writeln!(out, "{}\trmse\tfold{}\t{}\t", self.method, f + 1, fold.rmse);
        }
        let (_, rmse_std) = mean_std(&self.folds.iter().map(|f| f.rmse).collect::<Vec<_>>());
        let _ = writeln!(out, "{}\trmse\tmean\t{}\t{}", self.method, self.mean_rmse, rmse_std);
        for (f, fold) in self.folds.iter().enumerate() {
            for r in &fold.recall {
                let _ = writeln!(out, "{}\trecall@{}\tfold{}\t{}\t{}", self.method, r.k, f + 1, r.mean, r.std);
            }
        }
        for r in &self.recall {
            let _ = writeln!(out, "{}\trecall@{}\tpooled\t{}\t{}", self.method, r.k, r.mean, r.std);
        }
        let _ = writeln!(out, "{}\tsampled\tpooled\t{}\t", self.method, self.sampled);
        out
    }

    pub fn curve_tsv(&self) -> String {
        let mut out = String::from("k\tmean_recall\tstd\n");
        for r in &self.curve {
            let _ = writeln!(out, "{}\t{}\t{}", r.k, r.mean, r.std);
        }
        out
    }
}

/// Side-by-side table with one column per method: RMSE then "Recall at k"
/// rows formatted as `mean (std)`.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut rows: Vec<Vec<String>> = vec![std::iter::once(String::new())
        .chain(reports.iter().map(|r| r.method.clone()))
        .collect()];
    rows.push(
        std::iter::once("RMSE".to_string())
            .chain(reports.iter().map(|r| format!("{:.2}", r.mean_rmse)))
            .collect(),
    );
    let ks: Vec<usize> = reports.first().map(|r| r.recall.iter().map(|x| x.k).collect()).unwrap_or_default();
    for k in ks {
        rows.push(
            std::iter::once(format!("Recall at {k}"))
                .chain(reports.iter().map(|r| match r.recall_at(k) {
                    Some(x) => format!("{:.2} ({:.2})", x.mean, x.std),
                    None => "-".into(),
                }))
                .collect(),
        );
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r.iter().zip(&widths).map(|(cell, w)| format!("{cell:<w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_compounds: usize,
    pub n_targets: usize,
    pub n_clusters: usize,
    pub labels_per_compound: usize,
    /// Cluster-specific labels per source and cluster (including the core label
    /// every member carries).
    pub cluster_pool_size: usize,
    /// Labels shared by all clusters, used by label noise.
    pub shared_pool_size: usize,
    /// Probability that a non-core label is drawn from the shared pool.
    pub label_noise: f64,
    /// Targets of its own cluster each compound interacts with.
    pub hits_per_compound: usize,
    /// Weak interactions with targets of other clusters per compound.
    pub off_target_hits: usize,
    pub activity_type: ActivityType,
    pub sources: Vec<LabelSource>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_compounds: 200,
            n_targets: 20,
            n_clusters: 4,
            labels_per_compound: 6,
            cluster_pool_size: 12,
            shared_pool_size: 20,
            label_noise: 0.0,
            hits_per_compound: 5,
            off_target_hits: 0,
            activity_type: ActivityType::Ic50,
            sources: vec![LabelSource::ClassyFire, LabelSource::OntoChem],
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_clusters == 0 || self.n_clusters > self.n_compounds {
            return bad("cluster count must be in 1..=compounds");
        }
        if self.n_clusters > self.n_targets {
            return bad("cluster count must not exceed the target count");
        }
        if self.labels_per_compound == 0 || self.labels_per_compound > self.cluster_pool_size {
            return bad("labels per compound must be in 1..=cluster pool size");
        }
        if self.label_noise > 0.0 && self.shared_pool_size == 0 {
            return bad("label noise needs a non-empty shared pool");
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return bad("label noise must be a probability");
        }
        let per_cluster = self.n_targets / self.n_clusters;
        if self.hits_per_compound == 0 || self.hits_per_compound > per_cluster {
            return bad("hits per compound must be in 1..=targets per cluster");
        }
        if self.n_clusters > 1 && self.off_target_hits > self.n_targets - (self.n_targets / self.n_clusters) {
            return bad("too many off-target hits");
        }
        if self.n_clusters == 1 && self.off_target_hits > 0 {
            return bad("off-target hits need at least two clusters");
        }
        if self.sources.is_empty() {
            return bad("at least one label source is required");
        }
        Ok(())
    }

    pub fn cluster_of_target(&self, t: usize) -> usize {
        (t * self.n_clusters / self.n_targets).min(self.n_clusters - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub spec: SyntheticSpec,
    pub compounds: Vec<CompoundRecord>,
    pub labels: Vec<LabelRecord>,
    pub activities: Vec<ActivityRecord>,
    /// Planted cluster of every compound, in compound order.
    pub compound_cluster: Vec<usize>,
    pub target_cluster: Vec<usize>,
}

pub const CLUSTERS_FILE: &str = "clusters.tsv";

fn label_name(source: &LabelSource, cluster: Option<usize>, n: usize, spec: &SyntheticSpec) -> String {
    match (source, cluster) {
        // Morgan bits are plain integer ids
        (LabelSource::Morgan, Some(c)) => (c * spec.cluster_pool_size + n).to_string(),
        (LabelSource::Morgan, None) => (spec.n_clusters * spec.cluster_pool_size + n).to_string(),
        (s, Some(c)) => format!("{s}-k{c}-{n}"),
        (s, None) => format!("{s}-shared-{n}"),
    }
}

/// Planted corpus: compounds are dealt round-robin into clusters; each cluster
/// owns a block of targets and, per source, its own label pool. Every member
/// carries its cluster's core label, so with zero label noise compounds of
/// different clusters share no labels.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let compound_id = |i: usize| CompoundId::new(format!("C{i:06}"));
    let target_id = |t: usize| TargetId::new(format!("T{t:05}"));

    let compound_cluster: Vec<usize> = (0..spec.n_compounds).map(|i| i % spec.n_clusters).collect();
    let target_cluster: Vec<usize> = (0..spec.n_targets).map(|t| spec.cluster_of_target(t)).collect();
    let compounds = (0..spec.n_compounds)
        .map(|i| CompoundRecord {
            id: compound_id(i),
            smiles: None,
        })
        .collect();

    let mut labels = Vec::new();
    for source in &spec.sources {
        for i in 0..spec.n_compounds {
            let c = compound_cluster[i];
            let mut chosen = vec![label_name(source, Some(c), 0, spec)];
            let mut pool: Vec<usize> = (1..spec.cluster_pool_size).collect();
            pool.shuffle(&mut rng);
            let mut pool = pool.into_iter();
            while chosen.len() < spec.labels_per_compound {
                let name = if spec.label_noise > 0.0 && rng.gen::<f64>() < spec.label_noise {
                    label_name(source, None, rng.gen_range(0..spec.shared_pool_size), spec)
                } else {
                    match pool.next() {
                        Some(n) => label_name(source, Some(c), n, spec),
                        None => break,
                    }
                };
                if !chosen.contains(&name) {
                    chosen.push(name);
                }
            }
            labels.extend(chosen.into_iter().map(|label| LabelRecord {
                compound: compound_id(i),
                source: source.clone(),
                label,
            }));
        }
    }

    let mut activities = Vec::new();
    for i in 0..spec.n_compounds {
        let c = compound_cluster[i];
        let mut own: Vec<usize> = (0..spec.n_targets).filter(|&t| target_cluster[t] == c).collect();
        let mut other: Vec<usize> = (0..spec.n_targets).filter(|&t| target_cluster[t] != c).collect();
        own.shuffle(&mut rng);
        other.shuffle(&mut rng);
        let mut hits: Vec<(usize, f64)> = own[..spec.hits_per_compound]
            .iter()
            // potent: log-uniform on [1, 3000] nM
            .map(|&t| (t, 3000f64.powf(rng.gen::<f64>())))
            .collect();
        hits.extend(
            other[..spec.off_target_hits]
                .iter()
                // weak: log-uniform on [5000, 50000] nM
                .map(|&t| (t, 5000.0 * 10f64.powf(rng.gen::<f64>()))),
        );
        hits.sort_by_key(|h| h.0);
        activities.extend(hits.into_iter().map(|(t, v)| ActivityRecord {
            compound: compound_id(i),
            target: target_id(t),
            activity_type: spec.activity_type.clone(),
            value_nm: v,
        }));
    }

    Ok(SyntheticCorpus {
        spec: spec.clone(),
        compounds,
        labels,
        activities,
        compound_cluster,
        target_cluster,
    })
}

impl SyntheticCorpus {
    /// Write the three corpus files plus `clusters.tsv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        write_compounds(&dir.join(COMPOUNDS_FILE), &self.compounds)?;
        write_labels(&dir.join(LABELS_FILE), &self.labels)?;
        write_activities(&dir.join(ACTIVITIES_FILE), &self.activities)?;
        let mut out = String::from("kind\tid\tcluster\n");
        for (rec, c) in self.compounds.iter().zip(&self.compound_cluster) {
            let _ = writeln!(out, "compound\t{}\t{c}", rec.id);
        }
        for (t, c) in self.target_cluster.iter().enumerate() {
            let _ = writeln!(out, "target\tT{t:05}\t{c}");
        }
        crate::corpus::write_string(&dir.join(CLUSTERS_FILE), &out)
    }

    pub fn to_corpus(&self) -> Result<crate::corpus::Corpus> {
        crate::corpus::Corpus::from_records(self.compounds.clone(), self.labels.clone(), self.activities.clone())
    }

    pub fn cluster_members(&self, cluster: usize) -> Vec<CompoundId> {
        self.compounds
            .iter()
            .zip(&self.compound_cluster)
            .filter(|(_, &c)| c == cluster)
            .map(|(r, _)| r.id.clone())
            .collect()
    }

    pub fn cluster_targets(&self, cluster: usize) -> Vec<TargetId> {
        (0..self.spec.n_targets)
            .filter(|&t| self.target_cluster[t] == cluster)
            .map(|t| TargetId::new(format!("T{t:05}")))
            .collect()
    }
}

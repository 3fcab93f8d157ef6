//! Command-line interface: argument definitions and command implementations.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::corpus::{load_corpus_dir, write_string, ActivityType, CompoundId, Corpus, LabelSource};
use crate::error::Error;
use crate::evalbench::{self, cross_validate, render_table, EvalConfig, RecallConfig, SyntheticSpec};
use crate::factor::{build_interaction_matrix, train_csnmf, train_nmf, FactorModel, InteractionMatrix, TrainConfig};
use crate::noir::{self, ReferenceLabelSet, ReferenceSetConfig};
use crate::simkit::{build_similarity_matrix, SimilarityMatrix};

pub const DATA_DIR_ENV: &str = "REPURPOSE_DATA_DIR";

/// Exit code for invalid settings; runtime failures exit with 1.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 1;

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_CONFIG;
    }
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_config() => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "repurpose", version, about = "Ontology-label retrieval and NMF recommenders for compound-target prediction")]
pub struct Cli {
    /// Directory holding compounds.tsv, labels.tsv and activities.tsv
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = ".")]
    pub data_dir: PathBuf,

    /// More log output (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Only log warnings and errors
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate the corpus files and print their counts
    Ingest(IngestArgs),
    /// Write a planted synthetic corpus
    GenerateSynthetic(SyntheticArgs),
    /// Build reference label sets for a target, retrieve compounds and intersect sources
    Noir(NoirArgs),
    /// Train an NMF or CS-NMF model on the full interaction matrix
    Train(TrainArgs),
    /// Cross-validate NMF / CS-NMF and report RMSE and recall-at-k
    Evaluate(EvaluateArgs),
    /// Rank targets for compounds with a trained model
    Recommend(RecommendArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Also write the summary TSV here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub compounds: usize,
    #[arg(long, default_value_t = 20)]
    pub targets: usize,
    #[arg(long, default_value_t = 4)]
    pub clusters: usize,
    #[arg(long, default_value_t = 6)]
    pub labels_per_compound: usize,
    #[arg(long, default_value_t = 12)]
    pub cluster_pool: usize,
    #[arg(long, default_value_t = 20)]
    pub shared_pool: usize,
    /// Probability that a non-core label comes from the shared pool
    #[arg(long, default_value_t = 0.0)]
    pub label_noise: f64,
    /// Own-cluster targets per compound
    #[arg(long, default_value_t = 5)]
    pub hits: usize,
    /// Weak off-cluster interactions per compound
    #[arg(long, default_value_t = 0)]
    pub off_target: usize,
    #[arg(long, default_value = "IC50")]
    pub activity_type: String,
    #[arg(long, value_delimiter = ',', default_value = "CF,OC")]
    pub sources: Vec<String>,
}

#[derive(Debug, Args)]
pub struct NoirArgs {
    #[arg(long)]
    pub target: String,
    /// Label sources to query; consensus needs at least two
    #[arg(long, value_delimiter = ',', default_value = "CF,OC")]
    pub sources: Vec<String>,
    #[arg(long, default_value = "EC50")]
    pub activity_type: String,
    /// High-activity cutoff in nM (strictly below)
    #[arg(long, default_value_t = noir::DEFAULT_ACTIVITY_THRESHOLD_NM)]
    pub threshold: f64,
    /// Discard labels whose corpus count exceeds this
    #[arg(long, default_value_t = noir::DEFAULT_NOISE_CAP)]
    pub noise_cap: usize,
    /// Minimum count of a label among the high-activity compounds
    #[arg(long, default_value_t = noir::DEFAULT_MIN_RELEVANT_COUNT)]
    pub min_count: usize,
    #[arg(long, default_value_t = noir::DEFAULT_SET_SIZE)]
    pub set_size: usize,
    #[arg(long, default_value_t = noir::DEFAULT_TOP_N)]
    pub top: usize,
    /// Hand-edited reference set TSV replacing the computed one for its source
    #[arg(long)]
    pub reference: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimilarityChoice {
    None,
    Jaccard(LabelSource),
}

impl FromStr for SimilarityChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "none" {
            return Ok(SimilarityChoice::None);
        }
        match s.strip_prefix("jaccard:") {
            Some(src) if !src.is_empty() => Ok(SimilarityChoice::Jaccard(src.parse().map_err(|e: Error| e.to_string())?)),
            _ => Err(format!("expected none or jaccard:<SOURCE>, got {s:?}")),
        }
    }
}

impl fmt::Display for SimilarityChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimilarityChoice::None => f.write_str("none"),
            SimilarityChoice::Jaccard(s) => write!(f, "jaccard:{s}"),
        }
    }
}

impl SimilarityChoice {
    pub fn method_name(&self) -> String {
        match self {
            SimilarityChoice::None => "NMF".into(),
            SimilarityChoice::Jaccard(s) => format!("CS-NMF ({s})"),
        }
    }

    fn slug(&self) -> String {
        match self {
            SimilarityChoice::None => "NMF".into(),
            SimilarityChoice::Jaccard(s) => format!("CS-NMF_{s}"),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, default_value = "IC50")]
    pub activity_type: String,
    #[arg(long, default_value_t = 50)]
    pub rank: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    /// Stop when the relative objective decrease falls below this
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Similarity threshold; pairs below it are dropped
    #[arg(long, default_value_t = 0.0)]
    pub sim_threshold: f64,
}

impl ModelArgs {
    fn train_config(&self) -> anyhow::Result<TrainConfig> {
        let config = TrainConfig {
            rank: self.rank,
            lambda: self.lambda,
            max_iters: self.max_iters,
            rel_tol: self.tol,
            seed: self.seed,
            ..TrainConfig::default()
        };
        config.validate().map_err(|e| usage(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.sim_threshold) {
            return Err(usage("--sim-threshold must be in [0, 1]"));
        }
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// none | jaccard:CF | jaccard:OC | jaccard:MORGAN
    #[arg(long, default_value = "none")]
    pub similarity: SimilarityChoice,
    /// Also dump the similarity matrix as TSV
    #[arg(long)]
    pub dump_similarity: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated methods: none | jaccard:CF | jaccard:OC | jaccard:MORGAN
    #[arg(long, value_delimiter = ',', default_value = "none")]
    pub similarity: Vec<SimilarityChoice>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(short, long = "k", value_delimiter = ',', default_value = "30,50,100")]
    pub ks: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    pub sample_size: usize,
    #[arg(long, default_value_t = 3)]
    pub min_train: usize,
    #[arg(long, default_value_t = 3)]
    pub min_test: usize,
    /// Rank training targets too instead of skipping them
    #[arg(long)]
    pub include_train_targets: bool,
    /// Largest k of the rank-recall curve
    #[arg(long, default_value_t = 100)]
    pub curve_max: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "compound", required = true)]
    pub compounds: Vec<String>,
    #[arg(short, long, default_value_t = 30)]
    pub k: usize,
    /// Keep targets the compound is already known to hit
    #[arg(long)]
    pub include_known: bool,
    /// Write here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_activity_type(s: &str) -> anyhow::Result<ActivityType> {
    s.parse().map_err(|e: Error| usage(e.to_string()))
}

fn parse_sources(sources: &[String]) -> anyhow::Result<Vec<LabelSource>> {
    let mut out: Vec<LabelSource> = Vec::new();
    for s in sources {
        let src: LabelSource = s.parse().map_err(|e: Error| usage(e.to_string()))?;
        if out.contains(&src) {
            return Err(usage(format!("source {src} given twice")));
        }
        out.push(src);
    }
    if out.is_empty() {
        return Err(usage("at least one source is required"));
    }
    Ok(out)
}

fn load(data_dir: &Path) -> anyhow::Result<Corpus> {
    let corpus = load_corpus_dir(data_dir).with_context(|| format!("loading corpus from {}", data_dir.display()))?;
    log::info!(
        "corpus: {} compounds, {} targets, {} activity records",
        corpus.n_compounds(),
        corpus.n_targets(),
        corpus.activities().len()
    );
    Ok(corpus)
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    log::info!("resolved configuration: {cli:?}");
    match &cli.command {
        Command::Ingest(args) => ingest(&cli.data_dir, args),
        Command::GenerateSynthetic(args) => generate(args),
        Command::Noir(args) => run_noir(&cli.data_dir, args),
        Command::Train(args) => train(&cli.data_dir, args),
        Command::Evaluate(args) => evaluate(&cli.data_dir, args),
        Command::Recommend(args) => recommend(&cli.data_dir, args),
    }
}

fn ingest(data_dir: &Path, args: &IngestArgs) -> anyhow::Result<()> {
    let summary = load(data_dir)?.summary().to_tsv();
    print!("{summary}");
    if let Some(out) = &args.out {
        write_string(out, &summary)?;
    }
    Ok(())
}

fn generate(args: &SyntheticArgs) -> anyhow::Result<()> {
    let spec = SyntheticSpec {
        n_compounds: args.compounds,
        n_targets: args.targets,
        n_clusters: args.clusters,
        labels_per_compound: args.labels_per_compound,
        cluster_pool_size: args.cluster_pool,
        shared_pool_size: args.shared_pool,
        label_noise: args.label_noise,
        hits_per_compound: args.hits,
        off_target_hits: args.off_target,
        activity_type: parse_activity_type(&args.activity_type)?,
        sources: parse_sources(&args.sources)?,
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let synthetic = evalbench::generate_synthetic(&spec, args.seed)?;
    synthetic.write_to(&args.out)?;
    log::info!("wrote synthetic corpus to {}", args.out.display());
    Ok(())
}

fn run_noir(data_dir: &Path, args: &NoirArgs) -> anyhow::Result<()> {
    let sources = parse_sources(&args.sources)?;
    let activity_type = parse_activity_type(&args.activity_type)?;
    if args.top == 0 {
        return Err(usage("--top must be at least 1"));
    }
    let mut imported = Vec::new();
    for path in &args.reference {
        let (source, labels) = noir::read_reference_labels(path)?;
        let Some(source) = source else {
            bail!("{}: reference set has no rows", path.display());
        };
        if !sources.contains(&source) {
            return Err(usage(format!("{}: source {source} is not among --sources", path.display())));
        }
        imported.push((source, labels));
    }

    let corpus = load(data_dir)?;
    let mut results = Vec::new();
    for source in &sources {
        let config = ReferenceSetConfig {
            activity_type: activity_type.clone(),
            activity_threshold_nm: args.threshold,
            noise_cap: args.noise_cap,
            min_relevant_count: args.min_count,
            set_size: args.set_size,
            ..ReferenceSetConfig::new(args.target.as_str(), source.clone())
        };
        config.validate().map_err(|e| usage(e.to_string()))?;
        let mut reference = noir::build_reference_set(&corpus, &config)?;
        if let Some((_, labels)) = imported.iter().find(|(s, _)| s == source) {
            log::info!("using hand-edited {source} reference set ({} labels)", labels.len());
            reference = ReferenceLabelSet {
                labels: labels.clone(),
                empty_warning: labels.is_empty(),
                ..reference
            };
        }
        if reference.empty_warning {
            log::warn!("{source}: reference label set is empty");
        }
        let retrieved = noir::retrieve(&corpus, &reference, &reference.relevant_set, args.top)?;
        log::info!(
            "{source}: {} relevant compounds, {} reference labels, {} retrieved",
            reference.n_relevant(),
            reference.labels.len(),
            retrieved.hits.len()
        );
        noir::write_reference_set(&args.out.join(format!("reference_{source}.tsv")), &reference)?;
        noir::write_retrieval(&args.out.join(format!("retrieval_{source}.tsv")), &retrieved)?;
        results.push((source.clone(), retrieved));
    }

    if results.len() < 2 {
        log::warn!("consensus needs at least two sources; no consensus file written");
        return Ok(());
    }
    let refs: Vec<(LabelSource, &noir::RetrievalResult)> = results.iter().map(|(s, r)| (s.clone(), r)).collect();
    noir::write_consensus(&args.out.join("consensus.tsv"), &refs)?;
    Ok(())
}

fn similarity_for(
    corpus: &Corpus,
    x: &InteractionMatrix,
    choice: &SimilarityChoice,
    threshold: f64,
) -> anyhow::Result<Option<SimilarityMatrix>> {
    match choice {
        SimilarityChoice::None => Ok(None),
        SimilarityChoice::Jaccard(source) => {
            let s = build_similarity_matrix(corpus, source, x.row_ids(), threshold)?;
            log::info!("{source} similarity: {} pairs at threshold {threshold}", s.n_pairs());
            Ok(Some(s))
        }
    }
}

fn train(data_dir: &Path, args: &TrainArgs) -> anyhow::Result<()> {
    let config = args.model.train_config()?;
    let activity_type = parse_activity_type(&args.model.activity_type)?;
    let corpus = load(data_dir)?;
    let x = build_interaction_matrix(&corpus, &activity_type)?;
    let s = similarity_for(&corpus, &x, &args.similarity, args.model.sim_threshold)?;
    if let (Some(s), Some(path)) = (&s, &args.dump_similarity) {
        s.write_tsv(path)?;
    }
    let mut model = match &s {
        Some(s) => train_csnmf(&x, s, &config)?,
        None => train_nmf(&x, &config)?,
    };
    log::info!(
        "{} iterations, converged = {}, final objective {:e}",
        model.iterations(),
        model.converged,
        model.trace.last().copied().unwrap_or(f64::NAN)
    );
    model.meta.insert("activity_type".into(), activity_type.to_string());
    model.meta.insert("similarity".into(), args.similarity.to_string());
    model.meta.insert("sim_threshold".into(), args.model.sim_threshold.to_string());
    model.save_tsv(&args.out)?;
    Ok(())
}

fn evaluate(data_dir: &Path, args: &EvaluateArgs) -> anyhow::Result<()> {
    let config = args.model.train_config()?;
    let activity_type = parse_activity_type(&args.model.activity_type)?;
    if args.ks.is_empty() || args.ks.contains(&0) {
        return Err(usage("every k must be at least 1"));
    }
    if args.min_train == 0 || args.min_test == 0 || args.folds < 2 {
        return Err(usage("--min-train/--min-test must be >= 1 and --folds >= 2"));
    }
    let eval = EvalConfig {
        n_folds: args.folds,
        seed: args.model.seed,
        recall: RecallConfig {
            ks: args.ks.clone(),
            sample_size: args.sample_size,
            min_train_targets: args.min_train,
            min_test_targets: args.min_test,
            exclude_train_targets: !args.include_train_targets,
            seed: args.model.seed,
        },
        curve_max_k: args.curve_max,
    };
    let corpus = load(data_dir)?;
    let x = build_interaction_matrix(&corpus, &activity_type)?;
    log::info!("interaction matrix {}x{} with {} entries", x.n_rows(), x.n_cols(), x.nnz());

    let mut reports = Vec::new();
    for choice in &args.similarity {
        let s = similarity_for(&corpus, &x, choice, args.model.sim_threshold)?;
        let report = cross_validate(&x, s.as_ref(), &config, &eval, &choice.method_name())?;
        log::info!(
            "{}: RMSE {:.4}, {} sampled compounds",
            report.method,
            report.mean_rmse,
            report.sampled
        );
        write_string(&args.out.join(format!("rank_recall_{}.tsv", choice.slug())), &report.curve_tsv())?;
        reports.push(report);
    }
    let mut tsv = String::new();
    for (n, r) in reports.iter().enumerate() {
        let body = r.to_tsv();
        // one header for the whole file
        tsv.push_str(if n == 0 { &body } else { body.split_once('\n').map_or("", |(_, rest)| rest) });
    }
    write_string(&args.out.join("eval.tsv"), &tsv)?;
    let table = render_table(&reports);
    write_string(&args.out.join("eval_table.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn recommend(data_dir: &Path, args: &RecommendArgs) -> anyhow::Result<()> {
    if args.k == 0 {
        return Err(usage("-k must be at least 1"));
    }
    let model = FactorModel::load_tsv(&args.model)?;
    let unknown: Vec<String> = args
        .compounds
        .iter()
        .filter(|c| model.row_index(c).is_none())
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownCompounds(unknown).into());
    }

    let known: Option<InteractionMatrix> = if args.include_known {
        None
    } else {
        let activity_type = match model.meta.get("activity_type") {
            Some(a) => parse_activity_type(a)?,
            None => ActivityType::Ic50,
        };
        let corpus = load(data_dir)?;
        Some(build_interaction_matrix(&corpus, &activity_type)?)
    };

    let mut out = String::from("compound_id\trank\ttarget_id\tscore\n");
    for compound in &args.compounds {
        let i = model.row_index(compound).unwrap();
        let known_cols: BTreeSet<usize> = match &known {
            Some(x) => match x.row_ids().iter().position(|c| c.as_str() == compound) {
                Some(r) => x
                    .row(r)
                    .filter_map(|(j, _)| model.cols.iter().position(|t| *t == x.col_ids()[j]))
                    .collect(),
                None => BTreeSet::new(),
            },
            None => BTreeSet::new(),
        };
        let ranked = model.ranked_targets(i, |j| known_cols.contains(&j))?;
        for (rank, (j, score)) in ranked.into_iter().take(args.k).enumerate() {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", CompoundId::new(compound.as_str()), rank + 1, model.cols[j], score));
        }
    }
    match &args.out {
        Some(path) => write_string(path, &out)?,
        None => print!("{out}"),
    }
    Ok(())
}

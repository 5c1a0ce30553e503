//! End-to-end run over a directory of corpus files.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::json;
use sha2::{Digest, Sha256};

use crate::analysis::{
    correlation_table, ols_quality_regression, standard_bins, temporal_change, write_correlations,
    write_regression, AnalysisError, TemporalEntry,
};
use crate::corpus::{apply_threshold, AuthorName, Corpus, IngestOptions, Medium, Schema};
use crate::disambig::{disambiguate, Disambiguation};
use crate::metrics::{
    build_profiles, write_profiles, Aggregation, CitationIndex, ContributorProfile, Proportions,
    QualityContext, QuestionIndex, RevisionIndex, SelfCitationMode, StabilityFilter, SECONDS_PER_DAY,
};
use crate::taxonomy::{co_contribution_similarity, topic_cosine_similarity, SimilarityMatrix, SimilaritySource};
use crate::topics::{
    author_topic_distribution, fit_lda, read_documents, DocTopicMatrix, Document, TokenCorpus, TopicModelConfig,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DOCUMENTS_FILE: &str = "documents.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Disambig,
    Similarity,
    Topics,
    Metrics,
    Analysis,
    Temporal,
    Output,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Disambig => "disambig",
            Stage::Similarity => "similarity",
            Stage::Topics => "topics",
            Stage::Metrics => "metrics",
            Stage::Analysis => "analysis",
            Stage::Temporal => "temporal",
            Stage::Output => "output",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Ingest,
    Validation,
    Analysis,
    Other,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::Other => 1,
            FailureKind::Ingest => 2,
            FailureKind::Validation => 3,
            FailureKind::Analysis => 4,
        }
    }
}

#[derive(Debug)]
pub struct PipelineError {
    pub stage: Stage,
    pub kind: FailureKind,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, kind: FailureKind, message: impl Into<String>) -> Self {
        PipelineError { stage, kind, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.message)
    }
}

impl std::error::Error for PipelineError {}

fn io_fail(stage: Stage) -> impl Fn(io::Error) -> PipelineError {
    move |e| PipelineError::new(stage, FailureKind::Other, e.to_string())
}

/// Every tunable of a run. Unset medium-dependent fields fall back to the medium defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub medium: Medium,
    pub level: usize,
    pub min_contributions: Option<usize>,
    pub ambiguity_cutoff: Option<f64>,
    pub stability_window_days: i64,
    pub stability_max_fraction: f64,
    /// Wiki dump time; defaults to the latest revision timestamp.
    pub dump_time: Option<i64>,
    pub similarity: SimilaritySource,
    pub symmetrize: bool,
    pub topics: usize,
    pub topic_iterations: usize,
    pub self_citation: SelfCitationMode,
    pub aggregation: Aggregation,
    pub standardize: bool,
    pub n_bins: usize,
    pub min_bin_count: usize,
    pub seed: u64,
    /// 0 means one worker per available core.
    pub workers: usize,
    pub lenient: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let filter = StabilityFilter::default();
        PipelineConfig {
            medium: Medium::Articles,
            level: 2,
            min_contributions: None,
            ambiguity_cutoff: None,
            stability_window_days: filter.window_secs / SECONDS_PER_DAY,
            stability_max_fraction: filter.max_fraction,
            dump_time: None,
            similarity: SimilaritySource::CoContributor,
            symmetrize: false,
            topics: 100,
            topic_iterations: 500,
            self_citation: SelfCitationMode::Keep,
            aggregation: Aggregation::MeanOfRatios,
            standardize: false,
            n_bins: 20,
            min_bin_count: 30,
            seed: 0,
            workers: 0,
            lenient: false,
        }
    }
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected a boolean, got {v:?}")),
    }
}

fn parse_num<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse().map_err(|e: T::Err| format!("{v:?}: {e}"))
}

fn parse_opt<T: FromStr>(v: &str) -> Result<Option<T>, String>
where
    T::Err: fmt::Display,
{
    if v == "auto" || v.is_empty() {
        Ok(None)
    } else {
        parse_num(v).map(Some)
    }
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key.trim() {
            "medium" => self.medium = v.parse().map_err(|e| format!("{e}"))?,
            "level" => self.level = parse_num(v)?,
            "min_contributions" => self.min_contributions = parse_opt(v)?,
            "ambiguity_cutoff" => self.ambiguity_cutoff = parse_opt(v)?,
            "stability_window_days" => self.stability_window_days = parse_num(v)?,
            "stability_max_fraction" => self.stability_max_fraction = parse_num(v)?,
            "dump_time" => self.dump_time = parse_opt(v)?,
            "similarity" => {
                self.similarity = match v {
                    "co_contributor" => SimilaritySource::CoContributor,
                    "topic_cosine" => SimilaritySource::TopicCosine,
                    _ => return Err(format!("unknown similarity source {v:?}")),
                }
            }
            "symmetrize" => self.symmetrize = parse_bool(v)?,
            "topics" => self.topics = parse_num(v)?,
            "topic_iterations" => self.topic_iterations = parse_num(v)?,
            "self_citation" => {
                self.self_citation = match v {
                    "keep" => SelfCitationMode::Keep,
                    "drop_same_last_name" => SelfCitationMode::DropSameLastName,
                    _ => return Err(format!("unknown self-citation mode {v:?}")),
                }
            }
            "aggregation" => {
                self.aggregation = match v {
                    "mean_of_ratios" => Aggregation::MeanOfRatios,
                    "ratio_of_means" => Aggregation::RatioOfMeans,
                    _ => return Err(format!("unknown aggregation {v:?}")),
                }
            }
            "standardize" => self.standardize = parse_bool(v)?,
            "n_bins" => self.n_bins = parse_num(v)?,
            "min_bin_count" => self.min_bin_count = parse_num(v)?,
            "seed" => self.seed = parse_num(v)?,
            "workers" => self.workers = parse_num(v)?,
            "lenient" => self.lenient = parse_bool(v)?,
            other => return Err(format!("unknown config key {other:?}")),
        }
        Ok(())
    }

    /// Parses flat `key = value` text; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut cfg = PipelineConfig::default();
        // medium first so later medium-dependent keys see the right defaults
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
            entries.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        entries.sort_by_key(|(_, k, _)| k != "medium");
        for (line, k, v) in entries {
            cfg.set(&k, &v).map_err(|e| format!("line {line}: {e}"))?;
        }
        Ok(cfg)
    }

    pub fn min_contributions(&self) -> usize {
        self.min_contributions.unwrap_or(self.medium.default_threshold())
    }

    pub fn ambiguity_cutoff(&self) -> Option<f64> {
        self.ambiguity_cutoff.or(self.medium.default_ambiguity_cutoff())
    }

    pub fn stability(&self) -> StabilityFilter {
        StabilityFilter {
            window_secs: self.stability_window_days * SECONDS_PER_DAY,
            max_fraction: self.stability_max_fraction,
        }
    }

    /// Canonical `key = value` rendering with every default resolved.
    pub fn render(&self) -> String {
        let similarity = match self.similarity {
            SimilaritySource::CoContributor => "co_contributor",
            SimilaritySource::TopicCosine => "topic_cosine",
        };
        let self_citation = match self.self_citation {
            SelfCitationMode::Keep => "keep",
            SelfCitationMode::DropSameLastName => "drop_same_last_name",
        };
        let aggregation = match self.aggregation {
            Aggregation::MeanOfRatios => "mean_of_ratios",
            Aggregation::RatioOfMeans => "ratio_of_means",
        };
        let opt = |v: Option<String>| v.unwrap_or_else(|| "auto".into());
        let rows = [
            ("medium", self.medium.to_string()),
            ("level", self.level.to_string()),
            ("min_contributions", self.min_contributions().to_string()),
            ("ambiguity_cutoff", opt(self.ambiguity_cutoff().map(|c| c.to_string()))),
            ("stability_window_days", self.stability_window_days.to_string()),
            ("stability_max_fraction", self.stability_max_fraction.to_string()),
            ("dump_time", opt(self.dump_time.map(|t| t.to_string()))),
            ("similarity", similarity.into()),
            ("symmetrize", self.symmetrize.to_string()),
            ("topics", self.topics.to_string()),
            ("topic_iterations", self.topic_iterations.to_string()),
            ("self_citation", self_citation.into()),
            ("aggregation", aggregation.into()),
            ("standardize", self.standardize.to_string()),
            ("n_bins", self.n_bins.to_string()),
            ("min_bin_count", self.min_bin_count.to_string()),
            ("seed", self.seed.to_string()),
            ("lenient", self.lenient.to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Hash of the rendered config; the worker count is excluded since outputs do not depend on it.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.render().as_bytes()))
    }

    fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::new(Stage::Config, FailureKind::Validation, m));
        if self.level == 0 {
            return bad("level must be at least 1".into());
        }
        if self.n_bins < 2 {
            return bad("n_bins must be at least 2".into());
        }
        if self.similarity == SimilaritySource::TopicCosine && self.topics == 0 {
            return bad("topics must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.stability_max_fraction) {
            return bad("stability_max_fraction must lie in [0, 1]".into());
        }
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut hasher = Sha256::new();
    io::copy(&mut BufReader::new(File::open(path)?), &mut hasher)?;
    Ok(hex(&hasher.finalize()))
}

/// In-memory results of a run.
#[derive(Debug)]
pub struct PipelineResult {
    pub contributors: BTreeSet<String>,
    pub similarity: SimilarityMatrix,
    pub profiles: Vec<ContributorProfile>,
    pub disambiguation: Option<Disambiguation>,
    /// Present when similarity came from topic vectors.
    pub doc_topics: Option<DocTopicMatrix>,
    pub temporal: Result<TemporalEntry, AnalysisError>,
    pub excluded_by_disambiguation: usize,
}

fn analysis_fail(stage: Stage) -> impl Fn(String) -> PipelineError {
    move |m| PipelineError::new(stage, FailureKind::Analysis, m)
}

/// Replaces article and patent contributor ids with their disambiguated identity
/// and drops records of excluded names.
fn resolve_authors(corpus: &mut Corpus, cutoff: f64) -> (Disambiguation, usize) {
    let mut names: BTreeSet<AuthorName> = corpus.items.iter().flat_map(|i| i.authors.iter().cloned()).collect();
    names.extend(corpus.contributions.iter().filter_map(|r| AuthorName::parse(&r.contributor_id)));
    let names: Vec<AuthorName> = names.into_iter().collect();
    let d = disambiguate(&names, cutoff);
    let before = corpus.contributions.len();
    corpus.contributions.retain_mut(|r| match AuthorName::parse(&r.contributor_id) {
        Some(name) => match d.resolve(&name) {
            Some(canonical) => {
                r.contributor_id = canonical.key();
                true
            }
            None => false,
        },
        None => true,
    });
    let dropped = before - corpus.contributions.len();
    (d, dropped)
}

/// Runs every stage on an already loaded corpus.
pub fn analyze_corpus(
    mut corpus: Corpus,
    documents: Option<&[Document]>,
    config: &PipelineConfig,
) -> Result<PipelineResult, PipelineError> {
    config.validate()?;
    let medium = config.medium;
    let validation = |m: &str| PipelineError::new(Stage::Metrics, FailureKind::Validation, m);
    match medium {
        Medium::Articles | Medium::Patents if corpus.citations.is_empty() || corpus.items.is_empty() => {
            return Err(validation("citation quality needs items.csv and citations.csv"));
        }
        Medium::Qa if corpus.answers.is_empty() => return Err(validation("gamma needs answers.jsonl")),
        Medium::Wiki if corpus.revisions.is_empty() => {
            return Err(validation("word survival needs revisions.jsonl"))
        }
        _ => {}
    }
    if corpus.contributions.iter().any(|r| r.medium != medium) {
        return Err(PipelineError::new(
            Stage::Ingest,
            FailureKind::Validation,
            format!("contributions mix media; config medium is {medium}"),
        ));
    }

    let (disambiguation, excluded) = match config.ambiguity_cutoff() {
        Some(cutoff) if medium.is_cited() => {
            let (d, n) = resolve_authors(&mut corpus, cutoff);
            (Some(d), n)
        }
        _ => (None, 0),
    };

    let contributors = apply_threshold(&corpus, config.min_contributions());
    if contributors.is_empty() {
        return Err(PipelineError::new(
            Stage::Metrics,
            FailureKind::Validation,
            format!("no contributor reaches {} contributions", config.min_contributions()),
        ));
    }
    let grouped = corpus.records_by_contributor();

    let topic_vectors;
    let mut doc_topics = None;
    let (similarity, proportions) = match config.similarity {
        SimilaritySource::CoContributor => {
            let s = co_contribution_similarity(&corpus, &contributors, config.level)
                .map_err(|e| analysis_fail(Stage::Similarity)(e.to_string()))?;
            (s, Proportions::Categories { level: config.level })
        }
        SimilaritySource::TopicCosine => {
            let docs = documents.ok_or_else(|| {
                PipelineError::new(Stage::Topics, FailureKind::Validation, "topic similarity needs documents.jsonl")
            })?;
            let topic_fail = analysis_fail(Stage::Topics);
            let tokens = TokenCorpus::from_texts(docs.iter().map(|d| (d.doc_id.as_str(), d.text.as_str())))
                .map_err(|e| topic_fail(e.to_string()))?;
            let lda_cfg = TopicModelConfig::new(config.topics)
                .with_iterations(config.topic_iterations)
                .with_seed(config.seed);
            let fit = fit_lda(&tokens, &lda_cfg).map_err(|e| topic_fail(e.to_string()))?;
            let doc_index: HashMap<&str, usize> =
                tokens.doc_ids.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
            let mut authorship: BTreeMap<String, Vec<usize>> = BTreeMap::new();
            for id in &contributors {
                let docs: BTreeSet<usize> = grouped
                    .get(id.as_str())
                    .into_iter()
                    .flatten()
                    .filter_map(|r| doc_index.get(r.item_id.as_str()).copied())
                    .collect();
                if !docs.is_empty() {
                    authorship.insert(id.clone(), docs.into_iter().collect());
                }
            }
            topic_vectors = author_topic_distribution(&fit.doc_topic, &authorship)
                .map_err(|e| topic_fail(e.to_string()))?;
            let s = topic_cosine_similarity(&fit.doc_topic.rows())
                .map_err(|e| analysis_fail(Stage::Similarity)(e.to_string()))?;
            doc_topics = Some(fit.doc_topic);
            (s, Proportions::Topics(&topic_vectors))
        }
    };
    let similarity = if config.symmetrize { similarity.symmetrized() } else { similarity };

    let quality = match medium {
        Medium::Articles | Medium::Patents => QualityContext::Citations {
            index: CitationIndex::build(&corpus.items, &corpus.citations, config.self_citation, config.level),
            aggregation: config.aggregation,
        },
        Medium::Qa => QualityContext::Answers {
            index: QuestionIndex::build(&corpus.answers),
        },
        Medium::Wiki => {
            let dump = config
                .dump_time
                .or_else(|| corpus.revisions.iter().filter_map(|r| r.timestamp).max())
                .ok_or_else(|| validation("no revision timestamps and no dump_time"))?;
            QualityContext::Revisions {
                index: RevisionIndex::build(&corpus.pages(), dump, &config.stability()),
            }
        }
    };

    let profiles = build_profiles(&grouped, &contributors, medium, proportions, &similarity, &quality)
        .map_err(|e| analysis_fail(Stage::Metrics)(e.to_string()))?;
    let proportion_fn = |id: &str, recs: &[&crate::corpus::ContributionRecord]| proportions.of(id, recs);
    let temporal = temporal_change(&grouped, &contributors, &proportion_fn, &similarity, Some(&quality));

    Ok(PipelineResult {
        contributors,
        similarity,
        profiles,
        disambiguation,
        doc_topics,
        temporal,
        excluded_by_disambiguation: excluded,
    })
}

/// Files a run reads from `input_dir` for `medium`, as (schema, required).
fn inputs_for(medium: Medium) -> Vec<(Schema, bool)> {
    let mut v = vec![(Schema::Contributions, true)];
    match medium {
        Medium::Articles | Medium::Patents => {
            v.push((Schema::Items, true));
            v.push((Schema::Citations, true));
        }
        Medium::Qa => v.push((Schema::Answers, true)),
        Medium::Wiki => v.push((Schema::Revisions, true)),
    }
    v
}

/// Loads the medium's files from `dir`. A missing required file is a validation failure
/// attributed to the stage that needs it.
pub fn load_inputs(
    dir: &Path,
    config: &PipelineConfig,
) -> Result<(Corpus, Option<Vec<Document>>, BTreeMap<String, String>), PipelineError> {
    let mut corpus = Corpus::default();
    let mut hashes = BTreeMap::new();
    let opts = IngestOptions { lenient: config.lenient };
    for (schema, _) in inputs_for(config.medium) {
        let path = dir.join(schema.file_name());
        if !path.exists() {
            let stage = if schema == Schema::Contributions { Stage::Ingest } else { Stage::Metrics };
            return Err(PipelineError::new(
                stage,
                FailureKind::Validation,
                format!("missing input {}", path.display()),
            ));
        }
        corpus
            .ingest(&path, schema, opts)
            .map_err(|e| PipelineError::new(Stage::Ingest, FailureKind::Ingest, e.to_string()))?;
        hashes.insert(schema.file_name().to_string(), sha256_file(&path).map_err(io_fail(Stage::Ingest))?);
    }
    let documents = if config.similarity == SimilaritySource::TopicCosine {
        let path = dir.join(DOCUMENTS_FILE);
        let file = File::open(&path).map_err(|e| {
            PipelineError::new(Stage::Topics, FailureKind::Validation, format!("{}: {e}", path.display()))
        })?;
        let docs = read_documents(BufReader::new(file))
            .map_err(|e| PipelineError::new(Stage::Ingest, FailureKind::Ingest, e.to_string()))?;
        hashes.insert(DOCUMENTS_FILE.to_string(), sha256_file(&path).map_err(io_fail(Stage::Ingest))?);
        Some(docs)
    } else {
        None
    };
    Ok((corpus, documents, hashes))
}

/// Names of the files `write_outputs` produces, in write order.
pub const OUTPUT_FILES: [&str; 10] = [
    "profiles.csv",
    "similarity.csv",
    "report.csv",
    "regression.csv",
    "bins_quality_vs_focus.csv",
    "bins_focus_vs_quality.csv",
    "bins_quality_vs_entropy.csv",
    "bins_entropy_vs_quality.csv",
    "temporal.csv",
    "manifest.json",
];

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, PipelineError> {
    File::create(dir.join(name))
        .map(BufWriter::new)
        .map_err(|e| PipelineError::new(Stage::Output, FailureKind::Other, format!("{name}: {e}")))
}

/// Full run: load, analyze and write every output plus `manifest.json`.
pub fn run_pipeline(config: &PipelineConfig, input_dir: &Path, out_dir: &Path) -> Result<PathBuf, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| PipelineError::new(Stage::Config, FailureKind::Other, e.to_string()))?;
    pool.install(|| run_inner(config, input_dir, out_dir))
}

fn run_inner(config: &PipelineConfig, input_dir: &Path, out_dir: &Path) -> Result<PathBuf, PipelineError> {
    config.validate()?;
    let (corpus, documents, input_hashes) = load_inputs(input_dir, config)?;
    let mut rows: BTreeMap<&str, usize> = BTreeMap::new();
    rows.insert("contributions", corpus.contributions.len());
    rows.insert("items", corpus.items.len());
    rows.insert("citations", corpus.citations.len());
    rows.insert("answers", corpus.answers.len());
    rows.insert("revisions", corpus.revisions.len());
    if let Some(d) = &documents {
        rows.insert("documents", d.len());
    }

    let result = analyze_corpus(corpus, documents.as_deref(), config)?;
    fs::create_dir_all(out_dir).map_err(io_fail(Stage::Output))?;
    let out = io_fail(Stage::Output);

    write_profiles(create(out_dir, "profiles.csv")?, &result.profiles).map_err(&out)?;
    result.similarity.write_csv(create(out_dir, "similarity.csv")?).map_err(&out)?;
    let table = correlation_table(&result.profiles);
    write_correlations(create(out_dir, "report.csv")?, &table).map_err(&out)?;
    let reg = ols_quality_regression(&result.profiles, config.standardize)
        .map_err(|e| analysis_fail(Stage::Analysis)(e.to_string()))?;
    write_regression(create(out_dir, "regression.csv")?, &reg).map_err(&out)?;
    let bins = standard_bins(&result.profiles, config.n_bins, config.min_bin_count)
        .map_err(|e| analysis_fail(Stage::Analysis)(e.to_string()))?;
    for (name, table) in &bins {
        table.write_csv(create(out_dir, &format!("bins_{name}.csv"))?).map_err(&out)?;
    }
    match &result.temporal {
        Ok(t) => t.write_csv(create(out_dir, "temporal.csv")?).map_err(&out)?,
        Err(e) => {
            let mut w = create(out_dir, "temporal.csv")?;
            writeln!(w, "metric,value,p_value,n,label").map_err(&out)?;
            writeln!(w, "undefined,,,0,{}", e.to_string().replace(',', ";")).map_err(&out)?;
            w.flush().map_err(&out)?;
        }
    }
    if let Some(t) = &result.doc_topics {
        t.write_csv(create(out_dir, "doc_topics.csv")?).map_err(&out)?;
    }
    if let Some(d) = &result.disambiguation {
        d.write_report(create(out_dir, "disambig_report.csv")?).map_err(&out)?;
        rows.insert("excluded_by_disambiguation", result.excluded_by_disambiguation);
    }
    rows.insert("contributors", result.contributors.len());
    rows.insert("profiles", result.profiles.len());
    rows.insert("profiles_with_quality", result.profiles.iter().filter(|p| p.quality.is_some()).count());
    rows.insert("similarity_categories", result.similarity.len());

    let mut outputs = BTreeMap::new();
    for name in OUTPUT_FILES.iter().filter(|n| **n != "manifest.json").copied().map(String::from).chain(
        result
            .disambiguation
            .as_ref()
            .map(|_| "disambig_report.csv".to_string())
            .into_iter()
            .chain(result.doc_topics.as_ref().map(|_| "doc_topics.csv".to_string())),
    ) {
        outputs.insert(name.clone(), sha256_file(&out_dir.join(&name)).map_err(&out)?);
    }
    let manifest = json!({
        "version": VERSION,
        "config": config.render(),
        "config_sha256": config.hash(),
        "inputs": input_hashes,
        "rows": rows,
        "outputs": outputs,
    });
    let path = out_dir.join("manifest.json");
    let mut w = create(out_dir, "manifest.json")?;
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| out(e.into()))?;
    writeln!(w).map_err(&out)?;
    w.flush().map_err(&out)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_medium() {
        let cfg = PipelineConfig::parse("medium = patents\n").unwrap();
        assert_eq!(cfg.min_contributions(), 10);
        assert_eq!(cfg.ambiguity_cutoff(), Some(150.0));
        let cfg = PipelineConfig::parse("# comment\nmedium = wiki").unwrap();
        assert_eq!(cfg.min_contributions(), 40);
        assert_eq!(cfg.ambiguity_cutoff(), None);
        assert_eq!(cfg.stability().window_secs, 30 * SECONDS_PER_DAY);
    }

    #[test]
    fn render_round_trips() {
        let mut cfg = PipelineConfig::parse("level = 1\nsimilarity = topic_cosine\nmedium = qa\n").unwrap();
        cfg.seed = 9;
        let again = PipelineConfig::parse(&cfg.render()).unwrap();
        assert_eq!(again.render(), cfg.render());
        assert_eq!(again.hash(), cfg.hash());
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(PipelineConfig::parse("bogus = 1").unwrap_err().contains("bogus"));
        assert!(PipelineConfig::parse("level").is_err());
    }
}

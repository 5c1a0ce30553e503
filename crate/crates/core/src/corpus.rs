//! Domain records and flat-file ingestion.
//!
//! Every metric in this crate is computed from five record kinds:
//! contribution events (contributor → item, with categories), citation edges,
//! item metadata (year, categories, author names), Q&A answer events and wiki
//! revision events. Each kind has one on-disk schema; see [`Schema`].

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Weight sums closer to 1 than this are left untouched so normalization is idempotent.
const NORMALIZE_EPS: f64 = 1e-12;

pub const CONTRIBUTIONS_HEADER: [&str; 6] = [
    "contributor_id",
    "item_id",
    "timestamp",
    "medium",
    "categories",
    "weights",
];
pub const CITATIONS_HEADER: [&str; 2] = ["citing_item", "cited_item"];
pub const ITEMS_HEADER: [&str; 4] = ["item_id", "year", "categories", "authors"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Schema {
        path: String,
        line: usize,
        message: String,
    },
    #[error("page {page_id}: duplicate revision_index {index}")]
    DuplicateRevision { page_id: String, index: u64 },
    #[error("page {page_id}: revision indices not dense, expected {expected} found {found}")]
    RevisionGap {
        page_id: String,
        expected: u64,
        found: u64,
    },
    #[error("question {0}: more than one best answer")]
    MultipleBest(String),
    #[error("unknown medium {0:?}")]
    UnknownMedium(String),
    #[error("unknown schema {0:?}")]
    UnknownSchema(String),
}

/// Knowledge-contribution medium. Decides quality metric and default activity threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Medium {
    Articles,
    Patents,
    Wiki,
    Qa,
}

impl Medium {
    pub const ALL: [Medium; 4] = [Medium::Articles, Medium::Patents, Medium::Wiki, Medium::Qa];

    /// Minimum contribution count for a contributor to enter the analysis.
    pub fn default_threshold(self) -> usize {
        match self {
            Medium::Articles | Medium::Patents => 10,
            Medium::Wiki | Medium::Qa => 40,
        }
    }

    /// Name-ambiguity exclusion cutoff for author-identified media.
    pub fn default_ambiguity_cutoff(self) -> Option<f64> {
        match self {
            Medium::Articles => Some(200.0),
            Medium::Patents => Some(150.0),
            Medium::Wiki | Medium::Qa => None,
        }
    }

    pub fn is_cited(self) -> bool {
        matches!(self, Medium::Articles | Medium::Patents)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Medium::Articles => "articles",
            Medium::Patents => "patents",
            Medium::Wiki => "wiki",
            Medium::Qa => "qa",
        }
    }
}

impl fmt::Display for Medium {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Medium {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "articles" => Ok(Medium::Articles),
            "patents" => Ok(Medium::Patents),
            "wiki" => Ok(Medium::Wiki),
            "qa" => Ok(Medium::Qa),
            other => Err(CorpusError::UnknownMedium(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryWeight {
    /// Dot-delimited category path, e.g. `42.50` or `science.physics.optics`.
    pub id: String,
    pub weight: f64,
}

/// One contributor → item event.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionRecord {
    pub contributor_id: String,
    pub item_id: String,
    pub timestamp: Option<i64>,
    pub medium: Medium,
    pub categories: Vec<CategoryWeight>,
}

impl ContributionRecord {
    /// Anonymous events are kept in the corpus but never form a contributor.
    pub fn is_anonymous(&self) -> bool {
        self.contributor_id.is_empty()
    }

    /// Category weights split uniformly across the listed categories.
    pub fn uniform(
        contributor_id: impl Into<String>,
        item_id: impl Into<String>,
        timestamp: Option<i64>,
        medium: Medium,
        categories: &[&str],
    ) -> Self {
        let w = 1.0 / categories.len() as f64;
        ContributionRecord {
            contributor_id: contributor_id.into(),
            item_id: item_id.into(),
            timestamp,
            medium,
            categories: categories
                .iter()
                .map(|c| CategoryWeight {
                    id: c.to_string(),
                    weight: w,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CitationEdge {
    pub citing_item: String,
    pub cited_item: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AuthorName {
    pub last: String,
    pub first: String,
}

impl AuthorName {
    pub fn new(last: impl Into<String>, first: impl Into<String>) -> Self {
        AuthorName {
            last: last.into(),
            first: first.into(),
        }
    }

    /// Parses the `Last:First` form used in `items.csv` and as contributor ids.
    pub fn parse(s: &str) -> Option<Self> {
        let (last, first) = s.split_once(':')?;
        let (last, first) = (last.trim(), first.trim());
        if last.is_empty() || first.is_empty() {
            return None;
        }
        Some(AuthorName::new(last, first))
    }

    pub fn key(&self) -> String {
        format!("{}:{}", self.last, self.first)
    }
}

impl fmt::Display for AuthorName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.last, self.first)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemMetadata {
    pub item_id: String,
    pub year: i32,
    pub categories: Vec<String>,
    pub authors: Vec<AuthorName>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerEvent {
    pub question_id: String,
    pub answerer_id: String,
    pub category_id: String,
    pub is_best: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionEvent {
    pub page_id: String,
    pub revision_index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<i64>,
    /// Empty for anonymous edits.
    #[serde(default)]
    pub user_id: String,
    pub text: String,
}

impl RevisionEvent {
    pub fn is_anonymous(&self) -> bool {
        self.user_id.is_empty()
    }
}

/// The on-disk record kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Contributions,
    Citations,
    Items,
    Answers,
    Revisions,
}

impl Schema {
    /// Conventional file name inside an input directory.
    pub fn file_name(self) -> &'static str {
        match self {
            Schema::Contributions => "contributions.csv",
            Schema::Citations => "citations.csv",
            Schema::Items => "items.csv",
            Schema::Answers => "answers.jsonl",
            Schema::Revisions => "revisions.jsonl",
        }
    }
}

impl FromStr for Schema {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "contributions" => Ok(Schema::Contributions),
            "citations" => Ok(Schema::Citations),
            "items" => Ok(Schema::Items),
            "answers" => Ok(Schema::Answers),
            "revisions" => Ok(Schema::Revisions),
            other => Err(CorpusError::UnknownSchema(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    /// Skip malformed lines (and count them) instead of failing on the first one.
    pub lenient: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub records: usize,
    /// `(line, message)` for every skipped line in lenient mode.
    pub malformed: Vec<(usize, String)>,
}

/// An immutable-after-load collection of every record kind.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub contributions: Vec<ContributionRecord>,
    pub citations: Vec<CitationEdge>,
    pub items: Vec<ItemMetadata>,
    pub answers: Vec<AnswerEvent>,
    pub revisions: Vec<RevisionEvent>,
}

/// Loads one file into a fresh corpus.
pub fn ingest(path: &Path, schema: Schema) -> Result<(Corpus, IngestReport), CorpusError> {
    let mut corpus = Corpus::default();
    let report = corpus.ingest(path, schema, IngestOptions::default())?;
    Ok((corpus, report))
}

impl Corpus {
    pub fn ingest(
        &mut self,
        path: &Path,
        schema: Schema,
        opts: IngestOptions,
    ) -> Result<IngestReport, CorpusError> {
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.ingest_reader(file, &path.display().to_string(), schema, opts)
    }

    /// Same as [`Corpus::ingest`] over any reader; `origin` names the source in errors.
    pub fn ingest_reader<R: Read>(
        &mut self,
        reader: R,
        origin: &str,
        schema: Schema,
        opts: IngestOptions,
    ) -> Result<IngestReport, CorpusError> {
        let mut report = IngestReport::default();
        match schema {
            Schema::Contributions => {
                let rows = read_csv(reader, origin, &CONTRIBUTIONS_HEADER)?;
                for (line, row) in rows {
                    match row.and_then(|row| parse_contribution(&row)) {
                        Ok(rec) => self.contributions.push(rec),
                        Err(msg) => reject(&mut report, opts, origin, line, msg)?,
                    }
                }
                report.records = self.contributions.len();
            }
            Schema::Citations => {
                let rows = read_csv(reader, origin, &CITATIONS_HEADER)?;
                let mut seen: HashSet<CitationEdge> = self.citations.iter().cloned().collect();
                let before = self.citations.len();
                for (line, row) in rows {
                    let row = match row {
                        Ok(row) => row,
                        Err(msg) => {
                            reject(&mut report, opts, origin, line, msg)?;
                            continue;
                        }
                    };
                    let edge = CitationEdge {
                        citing_item: row[0].trim().to_string(),
                        cited_item: row[1].trim().to_string(),
                    };
                    let msg = if edge.citing_item.is_empty() || edge.cited_item.is_empty() {
                        Some("empty item id".to_string())
                    } else if edge.citing_item == edge.cited_item {
                        Some(format!("item {} cites itself", edge.citing_item))
                    } else if seen.contains(&edge) {
                        Some(format!(
                            "duplicate edge {} -> {}",
                            edge.citing_item, edge.cited_item
                        ))
                    } else {
                        None
                    };
                    match msg {
                        Some(msg) => reject(&mut report, opts, origin, line, msg)?,
                        None => {
                            seen.insert(edge.clone());
                            self.citations.push(edge);
                        }
                    }
                }
                report.records = self.citations.len() - before;
            }
            Schema::Items => {
                let rows = read_csv(reader, origin, &ITEMS_HEADER)?;
                let before = self.items.len();
                for (line, row) in rows {
                    match row.and_then(|row| parse_item(&row)) {
                        Ok(item) => self.items.push(item),
                        Err(msg) => reject(&mut report, opts, origin, line, msg)?,
                    }
                }
                report.records = self.items.len() - before;
            }
            Schema::Answers => {
                let before = self.answers.len();
                for (line, text) in jsonl_lines(reader, origin)? {
                    match serde_json::from_str::<AnswerEvent>(&text) {
                        Ok(ev) if ev.question_id.is_empty() => {
                            reject(&mut report, opts, origin, line, "empty question_id".into())?
                        }
                        Ok(ev) => self.answers.push(ev),
                        Err(e) => reject(&mut report, opts, origin, line, e.to_string())?,
                    }
                }
                report.records = self.answers.len() - before;
                check_single_best(&self.answers)?;
            }
            Schema::Revisions => {
                let before = self.revisions.len();
                for (line, text) in jsonl_lines(reader, origin)? {
                    match serde_json::from_str::<RevisionEvent>(&text) {
                        Ok(ev) => self.revisions.push(ev),
                        Err(e) => reject(&mut report, opts, origin, line, e.to_string())?,
                    }
                }
                report.records = self.revisions.len() - before;
                check_revision_indices(&self.revisions)?;
            }
        }
        Ok(report)
    }

    /// Number of contribution records per non-anonymous contributor.
    pub fn contribution_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for rec in self.contributions.iter().filter(|r| !r.is_anonymous()) {
            *counts.entry(rec.contributor_id.as_str()).or_insert(0) += 1;
        }
        counts
    }

    /// Records grouped per contributor, ordered by `(timestamp, item_id)`.
    /// Untimestamped records sort first.
    pub fn records_by_contributor(&self) -> BTreeMap<&str, Vec<&ContributionRecord>> {
        let mut out: BTreeMap<&str, Vec<&ContributionRecord>> = BTreeMap::new();
        for rec in self.contributions.iter().filter(|r| !r.is_anonymous()) {
            out.entry(rec.contributor_id.as_str()).or_default().push(rec);
        }
        for recs in out.values_mut() {
            recs.sort_by(|a, b| {
                a.timestamp
                    .cmp(&b.timestamp)
                    .then_with(|| a.item_id.cmp(&b.item_id))
            });
        }
        out
    }

    pub fn item_index(&self) -> HashMap<&str, &ItemMetadata> {
        self.items.iter().map(|i| (i.item_id.as_str(), i)).collect()
    }

    /// Revisions grouped per page, ordered by revision index.
    pub fn pages(&self) -> BTreeMap<&str, Vec<&RevisionEvent>> {
        let mut out: BTreeMap<&str, Vec<&RevisionEvent>> = BTreeMap::new();
        for rev in &self.revisions {
            out.entry(rev.page_id.as_str()).or_default().push(rev);
        }
        for revs in out.values_mut() {
            revs.sort_by_key(|r| r.revision_index);
        }
        out
    }
}

/// Contributors (excluding anonymous) with at least `min_contributions` records.
pub fn apply_threshold(corpus: &Corpus, min_contributions: usize) -> BTreeSet<String> {
    let min = min_contributions.max(1);
    corpus
        .contribution_counts()
        .into_iter()
        .filter(|&(_, n)| n >= min)
        .map(|(id, _)| id.to_string())
        .collect()
}

fn reject(
    report: &mut IngestReport,
    opts: IngestOptions,
    origin: &str,
    line: usize,
    message: String,
) -> Result<(), CorpusError> {
    if opts.lenient {
        report.malformed.push((line, message));
        Ok(())
    } else {
        Err(CorpusError::Schema {
            path: origin.to_string(),
            line,
            message,
        })
    }
}

fn read_csv<R: Read>(
    reader: R,
    origin: &str,
    header: &[&str],
) -> Result<Vec<(usize, Result<Vec<String>, String>)>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let schema_err = |line: usize, message: String| CorpusError::Schema {
        path: origin.to_string(),
        line,
        message,
    };
    let found = rdr
        .headers()
        .map_err(|e| schema_err(1, e.to_string()))?
        .clone();
    let found: Vec<&str> = found.iter().map(str::trim).collect();
    if found != header {
        return Err(schema_err(
            1,
            format!("expected header {:?}, found {:?}", header.join(","), found.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            schema_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let row = if rec.len() == header.len() {
            Ok(rec.iter().map(str::to_string).collect())
        } else {
            Err(format!("expected {} fields, found {}", header.len(), rec.len()))
        };
        rows.push((line, row));
    }
    Ok(rows)
}

fn split_pipes(s: &str) -> Vec<&str> {
    let s = s.trim();
    if s.is_empty() {
        Vec::new()
    } else {
        s.split('|').map(str::trim).collect()
    }
}

fn parse_contribution(row: &[String]) -> Result<ContributionRecord, String> {
    let timestamp = match row[2].trim() {
        "" => None,
        t => Some(
            t.parse::<i64>()
                .map_err(|_| format!("bad timestamp {t:?}"))?,
        ),
    };
    let medium: Medium = row[3].parse().map_err(|e: CorpusError| e.to_string())?;
    let cats = split_pipes(&row[4]);
    if cats.is_empty() || cats.iter().any(|c| c.is_empty()) {
        return Err("empty category list".into());
    }
    let raw_weights = split_pipes(&row[5]);
    let weights: Vec<f64> = if raw_weights.is_empty() {
        vec![1.0; cats.len()]
    } else {
        if raw_weights.len() != cats.len() {
            return Err(format!(
                "{} categories but {} weights",
                cats.len(),
                raw_weights.len()
            ));
        }
        raw_weights
            .iter()
            .map(|w| {
                let v: f64 = w.parse().map_err(|_| format!("bad weight {w:?}"))?;
                if !v.is_finite() || v < 0.0 {
                    Err(format!("negative or non-finite weight {w}"))
                } else {
                    Ok(v)
                }
            })
            .collect::<Result<_, _>>()?
    };
    let categories = cats
        .iter()
        .zip(weights)
        .map(|(c, w)| CategoryWeight {
            id: c.to_string(),
            weight: w,
        })
        .collect();
    let mut rec = ContributionRecord {
        contributor_id: row[0].trim().to_string(),
        item_id: row[1].trim().to_string(),
        timestamp,
        medium,
        categories,
    };
    normalize_weights(&mut rec.categories)?;
    Ok(rec)
}

/// Scales weights to sum to 1. Idempotent: sums already within 1e-12 of 1 are left as is.
pub fn normalize_weights(cats: &mut [CategoryWeight]) -> Result<(), String> {
    let total: f64 = cats.iter().map(|c| c.weight).sum();
    if !(total > 0.0) {
        return Err("category weights sum to zero".into());
    }
    if (total - 1.0).abs() > NORMALIZE_EPS {
        for c in cats.iter_mut() {
            c.weight /= total;
        }
    }
    Ok(())
}

fn parse_item(row: &[String]) -> Result<ItemMetadata, String> {
    let item_id = row[0].trim().to_string();
    if item_id.is_empty() {
        return Err("empty item_id".into());
    }
    let year: i32 = row[1]
        .trim()
        .parse()
        .map_err(|_| format!("bad year {:?}", row[1]))?;
    let categories: Vec<String> = split_pipes(&row[2]).into_iter().map(String::from).collect();
    let authors = split_pipes(&row[3])
        .into_iter()
        .map(|a| AuthorName::parse(a).ok_or_else(|| format!("bad author {a:?}, want Last:First")))
        .collect::<Result<_, _>>()?;
    Ok(ItemMetadata {
        item_id,
        year,
        categories,
        authors,
    })
}

fn jsonl_lines<R: Read>(reader: R, origin: &str) -> Result<Vec<(usize, String)>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: origin.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((i + 1, line));
    }
    Ok(out)
}

fn check_single_best(answers: &[AnswerEvent]) -> Result<(), CorpusError> {
    let mut best = HashSet::new();
    for a in answers.iter().filter(|a| a.is_best) {
        if !best.insert(a.question_id.as_str()) {
            return Err(CorpusError::MultipleBest(a.question_id.clone()));
        }
    }
    Ok(())
}

fn check_revision_indices(revisions: &[RevisionEvent]) -> Result<(), CorpusError> {
    let mut per_page: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    for r in revisions {
        per_page.entry(&r.page_id).or_default().push(r.revision_index);
    }
    for (page, mut idx) in per_page {
        idx.sort_unstable();
        for (expected, &found) in idx.iter().enumerate() {
            let expected = expected as u64;
            if found != expected {
                return Err(if expected > 0 && found == expected - 1 {
                    CorpusError::DuplicateRevision {
                        page_id: page.to_string(),
                        index: found,
                    }
                } else {
                    CorpusError::RevisionGap {
                        page_id: page.to_string(),
                        expected,
                        found,
                    }
                });
            }
        }
    }
    Ok(())
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn csv_io(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

pub fn write_contributions<W: Write>(w: W, records: &[ContributionRecord]) -> io::Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(CONTRIBUTIONS_HEADER).map_err(csv_io)?;
    for r in records {
        let cats: Vec<&str> = r.categories.iter().map(|c| c.id.as_str()).collect();
        let weights: Vec<String> = r.categories.iter().map(|c| c.weight.to_string()).collect();
        let ts = r.timestamp.map(|t| t.to_string()).unwrap_or_default();
        wtr.write_record([
            r.contributor_id.as_str(),
            r.item_id.as_str(),
            ts.as_str(),
            r.medium.as_str(),
            cats.join("|").as_str(),
            weights.join("|").as_str(),
        ])
        .map_err(csv_io)?;
    }
    wtr.flush()
}

pub fn write_citations<W: Write>(w: W, edges: &[CitationEdge]) -> io::Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(CITATIONS_HEADER).map_err(csv_io)?;
    for e in edges {
        wtr.write_record([e.citing_item.as_str(), e.cited_item.as_str()])
            .map_err(csv_io)?;
    }
    wtr.flush()
}

pub fn write_items<W: Write>(w: W, items: &[ItemMetadata]) -> io::Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(ITEMS_HEADER).map_err(csv_io)?;
    for it in items {
        let authors: Vec<String> = it.authors.iter().map(AuthorName::key).collect();
        wtr.write_record([
            it.item_id.as_str(),
            it.year.to_string().as_str(),
            it.categories.join("|").as_str(),
            authors.join("|").as_str(),
        ])
        .map_err(csv_io)?;
    }
    wtr.flush()
}

pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, rows: &[T]) -> io::Result<()> {
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

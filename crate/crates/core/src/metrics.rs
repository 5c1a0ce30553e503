//! Per-contributor focus, entropy and medium-specific quality.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::corpus::{AnswerEvent, CitationEdge, ContributionRecord, ItemMetadata, Medium, RevisionEvent};
use crate::taxonomy::{truncate_path, SimilarityMatrix};

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("proportion vector has {found} entries, similarity matrix has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("category {0:?} is not in the similarity matrix")]
    UnknownCategory(String),
    #[error("contributor has no contributions")]
    NoContributions,
    #[error("quality undefined: {0}")]
    Undefined(String),
    #[error("question {0:?} has no recorded answerers")]
    UnknownQuestion(String),
    #[error("profiles.csv line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// `F = Σ_ij s_ij p_i p_j` over all ordered pairs, diagonal included.
pub fn stirling_focus(p: &[f64], s: &SimilarityMatrix) -> Result<f64, MetricError> {
    if p.len() != s.len() {
        return Err(MetricError::DimensionMismatch {
            expected: s.len(),
            found: p.len(),
        });
    }
    let nz: Vec<(usize, f64)> = p
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, v)| v != 0.0)
        .collect();
    Ok(focus_sparse(&nz, s))
}

/// Same sum over a sparse `(index, proportion)` list.
pub fn focus_sparse(p: &[(usize, f64)], s: &SimilarityMatrix) -> f64 {
    let mut total = 0.0;
    for &(i, pi) in p {
        let row = s.row(i);
        let mut acc = 0.0;
        for &(j, pj) in p {
            acc += row[j] * pj;
        }
        total += pi * acc;
    }
    total
}

/// Focus of a category-keyed proportion vector.
pub fn focus_of(p: &[(String, f64)], s: &SimilarityMatrix) -> Result<f64, MetricError> {
    let idx = p
        .iter()
        .map(|(c, v)| {
            s.index_of(c)
                .map(|i| (i, *v))
                .ok_or_else(|| MetricError::UnknownCategory(c.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(focus_sparse(&idx, s))
}

/// `H = -Σ p_i ln p_i` with `0 ln 0 = 0`.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    let h: f64 = p
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.ln())
        .sum();
    // a point mass gives -1·ln 1 = -0.0
    h.max(0.0)
}

/// Share of a contributor's records per category at `level`, sorted by category id.
/// Each record contributes its (already normalized) weights; the vector sums to 1.
pub fn category_proportions(records: &[&ContributionRecord], level: usize) -> Vec<(String, f64)> {
    let mut acc: BTreeMap<&str, f64> = BTreeMap::new();
    for rec in records {
        for c in &rec.categories {
            *acc.entry(truncate_path(&c.id, level)).or_insert(0.0) += c.weight;
        }
    }
    let total: f64 = acc.values().sum();
    acc.into_iter()
        .map(|(c, w)| (c.to_string(), w / total))
        .collect()
}

// ---------------------------------------------------------------------------
// citations

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelfCitationMode {
    #[default]
    Keep,
    /// Drop an edge when citing and cited items share an author last name.
    DropSameLastName,
}

/// How per-item normalized scores combine into one contributor score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    MeanOfRatios,
    /// `Σ citations / Σ expected citations`.
    RatioOfMeans,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ItemScore {
    Normalized { citations: f64, expected: f64 },
    /// Every cohort of the item has zero mean (or the item has no cohort).
    Flagged,
}

/// Within-dataset citation counts and `(category, year)` cohort means.
#[derive(Debug, Clone, Default)]
pub struct CitationIndex {
    counts: HashMap<String, u64>,
    expected: HashMap<String, Option<f64>>,
    dropped_self_citations: usize,
}

impl CitationIndex {
    /// Cohort categories are truncated to `level`; an item with several categories
    /// belongs to each cohort and is normalized by the mean of those cohort means.
    pub fn build(
        items: &[ItemMetadata],
        citations: &[CitationEdge],
        mode: SelfCitationMode,
        level: usize,
    ) -> Self {
        let by_id: HashMap<&str, &ItemMetadata> =
            items.iter().map(|i| (i.item_id.as_str(), i)).collect();
        let mut counts: HashMap<String, u64> =
            items.iter().map(|i| (i.item_id.clone(), 0)).collect();
        let mut dropped = 0;
        for e in citations {
            let Some(cited) = by_id.get(e.cited_item.as_str()) else {
                continue;
            };
            if mode == SelfCitationMode::DropSameLastName {
                if let Some(citing) = by_id.get(e.citing_item.as_str()) {
                    let shared = citing
                        .authors
                        .iter()
                        .any(|a| cited.authors.iter().any(|b| a.last == b.last));
                    if shared {
                        dropped += 1;
                        continue;
                    }
                }
            }
            *counts.get_mut(cited.item_id.as_str()).expect("cited item indexed") += 1;
        }

        let cohorts_of = |item: &ItemMetadata| -> BTreeSet<(String, i32)> {
            item.categories
                .iter()
                .map(|c| (truncate_path(c, level).to_string(), item.year))
                .collect()
        };
        let mut sums: HashMap<(String, i32), (u64, u64)> = HashMap::new();
        for item in items {
            let c = counts[&item.item_id];
            for key in cohorts_of(item) {
                let e = sums.entry(key).or_insert((0, 0));
                e.0 += c;
                e.1 += 1;
            }
        }
        let expected = items
            .iter()
            .map(|item| {
                let keys = cohorts_of(item);
                let exp = if keys.is_empty() {
                    None
                } else {
                    let m: f64 = keys
                        .iter()
                        .map(|k| {
                            let (s, n) = sums[k];
                            s as f64 / n as f64
                        })
                        .sum::<f64>()
                        / keys.len() as f64;
                    (m > 0.0).then_some(m)
                };
                (item.item_id.clone(), exp)
            })
            .collect();
        CitationIndex {
            counts,
            expected,
            dropped_self_citations: dropped,
        }
    }

    pub fn citations(&self, item: &str) -> Option<u64> {
        self.counts.get(item).copied()
    }

    pub fn dropped_self_citations(&self) -> usize {
        self.dropped_self_citations
    }

    pub fn item_score(&self, item: &str) -> ItemScore {
        match (self.counts.get(item), self.expected.get(item)) {
            (Some(&c), Some(&Some(expected))) => ItemScore::Normalized {
                citations: c as f64,
                expected,
            },
            _ => ItemScore::Flagged,
        }
    }
}

/// Normalized citation impact of one contributor's items. Flagged items are skipped.
pub fn citation_quality(
    items: &[&str],
    index: &CitationIndex,
    aggregation: Aggregation,
) -> Result<f64, MetricError> {
    if items.is_empty() {
        return Err(MetricError::NoContributions);
    }
    let scored: Vec<(f64, f64)> = items
        .iter()
        .filter_map(|i| match index.item_score(i) {
            ItemScore::Normalized { citations, expected } => Some((citations, expected)),
            ItemScore::Flagged => None,
        })
        .collect();
    if scored.is_empty() {
        return Err(MetricError::Undefined("every item has a zero-mean cohort".into()));
    }
    Ok(match aggregation {
        Aggregation::MeanOfRatios => {
            scored.iter().map(|(c, e)| c / e).sum::<f64>() / scored.len() as f64
        }
        Aggregation::RatioOfMeans => {
            scored.iter().map(|(c, _)| c).sum::<f64>() / scored.iter().map(|(_, e)| e).sum::<f64>()
        }
    })
}

// ---------------------------------------------------------------------------
// Q&A

/// Per-question answerer counts `a_k` and best-answer holders.
#[derive(Debug, Clone, Default)]
pub struct QuestionIndex {
    answerers: HashMap<String, usize>,
    best: HashMap<String, String>,
}

impl QuestionIndex {
    pub fn build(answers: &[AnswerEvent]) -> Self {
        let mut sets: HashMap<&str, HashSet<&str>> = HashMap::new();
        let mut best = HashMap::new();
        for a in answers {
            sets.entry(&a.question_id).or_default().insert(&a.answerer_id);
            if a.is_best {
                best.insert(a.question_id.clone(), a.answerer_id.clone());
            }
        }
        QuestionIndex {
            answerers: sets
                .into_iter()
                .map(|(q, s)| (q.to_string(), s.len()))
                .collect(),
            best,
        }
    }

    pub fn answerers(&self, question: &str) -> Option<usize> {
        self.answerers.get(question).copied()
    }

    pub fn best_answerer(&self, question: &str) -> Option<&str> {
        self.best.get(question).map(String::as_str)
    }
}

/// `(observed - b_e) / b_e` with `b_e = Σ_k 1 / a_k`.
pub fn gamma_from_counts(observed: usize, answerer_counts: &[usize]) -> Result<f64, MetricError> {
    if answerer_counts.is_empty() {
        return Err(MetricError::NoContributions);
    }
    if answerer_counts.contains(&0) {
        return Err(MetricError::Undefined("question with zero answerers".into()));
    }
    let expected: f64 = answerer_counts.iter().map(|&a| 1.0 / a as f64).sum();
    Ok((observed as f64 - expected) / expected)
}

/// γ for one user over the given questions (duplicates collapse to one).
pub fn gamma_score(user: &str, questions: &[&str], index: &QuestionIndex) -> Result<f64, MetricError> {
    let distinct: BTreeSet<&str> = questions.iter().copied().collect();
    let mut counts = Vec::with_capacity(distinct.len());
    let mut observed = 0;
    for q in distinct {
        counts.push(
            index
                .answerers(q)
                .ok_or_else(|| MetricError::UnknownQuestion(q.to_string()))?,
        );
        if index.best_answerer(q) == Some(user) {
            observed += 1;
        }
    }
    gamma_from_counts(observed, &counts)
}

// ---------------------------------------------------------------------------
// wiki

/// Lowercased alphanumeric runs, as a set of word types.
pub fn word_types(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityFilter {
    pub window_secs: i64,
    pub max_fraction: f64,
}

impl Default for StabilityFilter {
    fn default() -> Self {
        StabilityFilter {
            window_secs: 30 * SECONDS_PER_DAY,
            max_fraction: 0.05,
        }
    }
}

impl StabilityFilter {
    /// True iff the share of revisions in `[dump_time - window, dump_time]` is below `max_fraction`.
    pub fn is_stable(&self, timestamps: &[Option<i64>], dump_time: i64) -> bool {
        if timestamps.is_empty() {
            return false;
        }
        let lo = dump_time - self.window_secs;
        let recent = timestamps
            .iter()
            .flatten()
            .filter(|&&t| t >= lo && t <= dump_time)
            .count();
        (recent as f64) / (timestamps.len() as f64) < self.max_fraction
    }
}

pub fn stability_filter(revisions: &[&RevisionEvent], dump_time: i64, filter: &StabilityFilter) -> bool {
    let ts: Vec<Option<i64>> = revisions.iter().map(|r| r.timestamp).collect();
    filter.is_stable(&ts, dump_time)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SurvivalCounts {
    pub new: usize,
    pub survived: usize,
}

impl SurvivalCounts {
    pub fn ratio(self) -> Option<f64> {
        (self.new > 0).then(|| self.survived as f64 / self.new as f64)
    }
}

#[derive(Debug, Clone)]
struct PageTrace {
    /// per revision: (revision_index, user, word types absent from every earlier revision)
    revisions: Vec<(u64, String, Vec<u32>)>,
    last: HashSet<u32>,
}

/// Precomputed word-novelty trace of every stable page.
#[derive(Debug, Clone, Default)]
pub struct RevisionIndex {
    pages: BTreeMap<String, PageTrace>,
    by_user: HashMap<String, Vec<(String, usize)>>,
    dropped_unstable: usize,
}

impl RevisionIndex {
    /// Pages failing `filter` at `dump_time` are dropped. `pages` must be ordered by revision index.
    pub fn build(
        pages: &BTreeMap<&str, Vec<&RevisionEvent>>,
        dump_time: i64,
        filter: &StabilityFilter,
    ) -> Self {
        let mut vocab: HashMap<String, u32> = HashMap::new();
        let mut index = RevisionIndex::default();
        for (&page, revs) in pages {
            if !stability_filter(revs, dump_time, filter) {
                index.dropped_unstable += 1;
                continue;
            }
            let mut seen: HashSet<u32> = HashSet::new();
            let mut trace = PageTrace {
                revisions: Vec::with_capacity(revs.len()),
                last: HashSet::new(),
            };
            for (pos, rev) in revs.iter().enumerate() {
                let types: HashSet<u32> = word_types(&rev.text)
                    .into_iter()
                    .map(|w| {
                        let next = vocab.len() as u32;
                        *vocab.entry(w).or_insert(next)
                    })
                    .collect();
                let mut novel: Vec<u32> = types.difference(&seen).copied().collect();
                novel.sort_unstable();
                seen.extend(types.iter().copied());
                if !rev.is_anonymous() {
                    index
                        .by_user
                        .entry(rev.user_id.clone())
                        .or_default()
                        .push((page.to_string(), pos));
                }
                trace.revisions.push((rev.revision_index, rev.user_id.clone(), novel));
                if pos + 1 == revs.len() {
                    trace.last = types;
                }
            }
            index.pages.insert(page.to_string(), trace);
        }
        index
    }

    pub fn pages(&self) -> usize {
        self.pages.len()
    }

    pub fn dropped_unstable(&self) -> usize {
        self.dropped_unstable
    }

    /// Pooled `(w_new, w_surv)` for `user` over the revisions accepted by `include(page, revision_index)`.
    pub fn survival_counts<F>(&self, user: &str, include: F) -> SurvivalCounts
    where
        F: Fn(&str, u64) -> bool,
    {
        let mut per_page: BTreeMap<&str, HashSet<u32>> = BTreeMap::new();
        for (page, pos) in self.by_user.get(user).map(Vec::as_slice).unwrap_or_default() {
            let trace = &self.pages[page];
            let (rev_idx, _, novel) = &trace.revisions[*pos];
            if include(page, *rev_idx) {
                per_page.entry(page).or_default().extend(novel.iter().copied());
            }
        }
        let mut out = SurvivalCounts::default();
        for (page, introduced) in per_page {
            let last = &self.pages[page].last;
            out.new += introduced.len();
            out.survived += introduced.iter().filter(|w| last.contains(w)).count();
        }
        out
    }
}

pub fn word_survival_quality(index: &RevisionIndex, user: &str) -> Result<f64, MetricError> {
    index
        .survival_counts(user, |_, _| true)
        .ratio()
        .ok_or_else(|| MetricError::Undefined(format!("user {user:?} introduced no new words")))
}

/// Wiki contribution records name their revision as `page_id#revision_index`.
pub fn wiki_item_key(page: &str, revision_index: u64) -> String {
    format!("{page}#{revision_index}")
}

/// Splits a wiki item id; a bare page id stands for all of the user's revisions on it.
pub fn parse_wiki_item(item: &str) -> (&str, Option<u64>) {
    match item.rsplit_once('#') {
        Some((page, rev)) => match rev.parse() {
            Ok(r) => (page, Some(r)),
            Err(_) => (item, None),
        },
        None => (item, None),
    }
}

// ---------------------------------------------------------------------------
// profiles

/// Medium-specific raw data needed to score a set of contribution records.
#[derive(Debug, Clone)]
pub enum QualityContext {
    Citations {
        index: CitationIndex,
        aggregation: Aggregation,
    },
    Answers {
        index: QuestionIndex,
    },
    Revisions {
        index: RevisionIndex,
    },
}

impl QualityContext {
    /// Quality of `contributor` restricted to `records` (all records, or one temporal half).
    pub fn quality(&self, contributor: &str, records: &[&ContributionRecord]) -> Result<f64, MetricError> {
        if records.is_empty() {
            return Err(MetricError::NoContributions);
        }
        match self {
            QualityContext::Citations { index, aggregation } => {
                let mut seen = HashSet::new();
                let items: Vec<&str> = records
                    .iter()
                    .map(|r| r.item_id.as_str())
                    .filter(|i| seen.insert(*i))
                    .collect();
                citation_quality(&items, index, *aggregation)
            }
            QualityContext::Answers { index } => {
                let questions: Vec<&str> = records.iter().map(|r| r.item_id.as_str()).collect();
                gamma_score(contributor, &questions, index)
            }
            QualityContext::Revisions { index } => {
                let mut revs: HashSet<(&str, u64)> = HashSet::new();
                let mut whole: HashSet<&str> = HashSet::new();
                for r in records {
                    match parse_wiki_item(&r.item_id) {
                        (page, Some(rev)) => {
                            revs.insert((page, rev));
                        }
                        (page, None) => {
                            whole.insert(page);
                        }
                    }
                }
                index
                    .survival_counts(contributor, |page, rev| {
                        whole.contains(page) || revs.contains(&(page, rev))
                    })
                    .ratio()
                    .ok_or_else(|| {
                        MetricError::Undefined(format!("user {contributor:?} introduced no new words"))
                    })
            }
        }
    }
}

/// Where a contributor's proportion vector comes from.
#[derive(Debug, Clone, Copy)]
pub enum Proportions<'a> {
    /// Record categories truncated to a level.
    Categories { level: usize },
    /// Author topic vectors, keyed `topic_<k>` to match the topic similarity matrix.
    Topics(&'a BTreeMap<String, Vec<f64>>),
}

impl Proportions<'_> {
    pub fn of(&self, contributor: &str, records: &[&ContributionRecord]) -> Option<Vec<(String, f64)>> {
        match self {
            Proportions::Categories { level } => Some(category_proportions(records, *level)),
            Proportions::Topics(vectors) => vectors.get(contributor).map(|v| {
                v.iter()
                    .enumerate()
                    .filter(|(_, &x)| x > 0.0)
                    .map(|(k, &x)| (format!("topic_{k}"), x))
                    .collect()
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContributorProfile {
    pub contributor_id: String,
    pub medium: Medium,
    pub proportions: Vec<(String, f64)>,
    pub quantity: usize,
    pub focus: f64,
    pub entropy: f64,
    /// `None` when the medium's quality is undefined for this contributor.
    pub quality: Option<f64>,
}

/// Profiles for every contributor in `contributors` that has records (and a proportion vector).
/// Output is ordered by contributor id regardless of thread count.
pub fn build_profiles(
    grouped: &BTreeMap<&str, Vec<&ContributionRecord>>,
    contributors: &BTreeSet<String>,
    medium: Medium,
    proportions: Proportions<'_>,
    similarity: &SimilarityMatrix,
    quality: &QualityContext,
) -> Result<Vec<ContributorProfile>, MetricError> {
    use rayon::prelude::*;
    let ids: Vec<&String> = contributors.iter().collect();
    let built: Vec<Option<ContributorProfile>> = ids
        .par_iter()
        .map(|id| {
            let Some(records) = grouped.get(id.as_str()) else {
                return Ok(None);
            };
            let Some(p) = proportions.of(id, records) else {
                return Ok(None);
            };
            let focus = focus_of(&p, similarity)?;
            let weights: Vec<f64> = p.iter().map(|(_, w)| *w).collect();
            Ok(Some(ContributorProfile {
                contributor_id: id.to_string(),
                medium,
                quantity: records.len(),
                focus,
                entropy: shannon_entropy(&weights),
                quality: quality.quality(id, records).ok(),
                proportions: p,
            }))
        })
        .collect::<Result<_, MetricError>>()?;
    Ok(built.into_iter().flatten().collect())
}

pub const PROFILES_HEADER: &str = "contributor_id,medium,quantity,focus,entropy,quality";

pub fn write_profiles<W: Write>(mut w: W, profiles: &[ContributorProfile]) -> io::Result<()> {
    writeln!(w, "{PROFILES_HEADER}")?;
    for p in profiles {
        let q = p.quality.map(|q| q.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            p.contributor_id, p.medium, p.quantity, p.focus, p.entropy, q
        )?;
    }
    w.flush()
}

/// Reads `profiles.csv`; proportion vectors are not stored and come back empty.
pub fn read_profiles<R: BufRead>(r: R) -> Result<Vec<ContributorProfile>, MetricError> {
    let parse_err = |line: usize, message: String| MetricError::Parse { line, message };
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| parse_err(i + 1, e.to_string()))?;
        if i == 0 {
            if line.trim() != PROFILES_HEADER {
                return Err(parse_err(1, format!("unexpected header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        // contributor ids may contain commas only in quoted form; ids are parsed from the right
        let fields: Vec<&str> = line.rsplitn(6, ',').collect();
        if fields.len() != 6 {
            return Err(parse_err(i + 1, "expected 6 fields".into()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(i + 1, e.to_string()));
        out.push(ContributorProfile {
            contributor_id: fields[5].to_string(),
            medium: fields[4].parse().map_err(|e: crate::corpus::CorpusError| parse_err(i + 1, e.to_string()))?,
            proportions: Vec::new(),
            quantity: fields[3].parse().map_err(|_| parse_err(i + 1, "bad quantity".into()))?,
            focus: num(fields[2])?,
            entropy: num(fields[1])?,
            quality: if fields[0].is_empty() { None } else { Some(num(fields[0])?) },
        });
    }
    Ok(out)
}

//! Author-name ambiguity heuristics.
//!
//! A name is scored by `sqrt(F_L * L_F)` where `F_L` counts the distinct first
//! tokens seen with the last name and `L_F` the distinct last names seen with
//! the first token. Highly confusable names are excluded; lone initials are
//! folded into the single full first name they can stand for.
//!
//! Processing order is fixed: statistics over the raw list, then initial
//! collapse, then exclusion scored with the raw statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, Write};

use thiserror::Error;

use crate::corpus::AuthorName;

/// Last names seen with this many first names (or more) never absorb initials.
pub const COLLAPSE_MAX_FIRST_NAMES: usize = 50;

pub const REPORT_ORDER_NOTE: &str = "# order=stats,collapse,filter";

#[derive(Debug, Error, PartialEq)]
pub enum DisambigError {
    #[error("name {0} not present in name statistics")]
    UnknownName(String),
}

/// Case-folded comparison key for a first token; a trailing period is dropped.
pub fn first_key(first: &str) -> String {
    first.trim().trim_end_matches('.').to_lowercase()
}

pub fn last_key(last: &str) -> String {
    last.trim().to_lowercase()
}

/// A single letter, optionally followed by a period.
pub fn is_initial(first: &str) -> bool {
    let t = first.trim();
    let t = t.strip_suffix('.').unwrap_or(t);
    let mut chars = t.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if c.is_alphabetic())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NameCounts {
    pub f_l: usize,
    pub l_f: usize,
}

impl NameCounts {
    pub fn score(self) -> f64 {
        ((self.f_l * self.l_f) as f64).sqrt()
    }
}

#[derive(Debug, Clone, Default)]
pub struct NameStats {
    firsts_by_last: HashMap<String, BTreeSet<String>>,
    lasts_by_first: HashMap<String, BTreeSet<String>>,
}

impl NameStats {
    pub fn from_authors<'a>(authors: impl IntoIterator<Item = &'a AuthorName>) -> Self {
        let mut stats = NameStats::default();
        for a in authors {
            let (l, f) = (last_key(&a.last), first_key(&a.first));
            stats.firsts_by_last.entry(l.clone()).or_default().insert(f.clone());
            stats.lasts_by_first.entry(f).or_default().insert(l);
        }
        stats
    }

    /// `F_L`: distinct first names or initials seen with `last`.
    pub fn first_names_for(&self, last: &str) -> Option<usize> {
        self.firsts_by_last.get(&last_key(last)).map(BTreeSet::len)
    }

    /// `L_F`: distinct last names seen with `first`.
    pub fn last_names_for(&self, first: &str) -> Option<usize> {
        self.lasts_by_first.get(&first_key(first)).map(BTreeSet::len)
    }

    pub fn counts(&self, author: &AuthorName) -> Result<NameCounts, DisambigError> {
        match (
            self.first_names_for(&author.last),
            self.last_names_for(&author.first),
        ) {
            (Some(f_l), Some(l_f)) => Ok(NameCounts { f_l, l_f }),
            _ => Err(DisambigError::UnknownName(author.key())),
        }
    }

    /// Full (non-initial) first names recorded with `last` that start with `initial`.
    fn expansions(&self, last: &str, initial: &str) -> Vec<&str> {
        let letter = first_key(initial);
        self.firsts_by_last
            .get(&last_key(last))
            .map(|set| {
                set.iter()
                    .filter(|f| !is_initial(f) && f.starts_with(letter.as_str()))
                    .map(String::as_str)
                    .collect()
            })
            .unwrap_or_default()
    }
}

pub fn ambiguity_score(author: &AuthorName, stats: &NameStats) -> Result<f64, DisambigError> {
    Ok(stats.counts(author)?.score())
}

/// Authors whose score is at most `threshold`; names missing from `stats` are dropped.
pub fn filter_ambiguous<'a>(
    authors: impl IntoIterator<Item = &'a AuthorName>,
    stats: &NameStats,
    threshold: f64,
) -> BTreeSet<AuthorName> {
    authors
        .into_iter()
        .filter(|a| matches!(ambiguity_score(a, stats), Ok(s) if s <= threshold))
        .cloned()
        .collect()
}

fn identity_key(a: &AuthorName) -> (String, String) {
    (last_key(&a.last), first_key(&a.first))
}

/// Maps every distinct raw name to its canonical identity.
///
/// Spellings differing only in case or a trailing period share one identity.
/// An initial folds into a full first name iff that name is the only one
/// with the initial and the last name has fewer than 50 first names.
pub fn collapse_initials(
    authors: &[AuthorName],
    stats: &NameStats,
) -> BTreeMap<AuthorName, AuthorName> {
    // lexicographically smallest spelling represents each identity
    let mut spelling: BTreeMap<(String, String), &AuthorName> = BTreeMap::new();
    for a in authors {
        spelling
            .entry(identity_key(a))
            .and_modify(|cur| {
                if a < *cur {
                    *cur = a
                }
            })
            .or_insert(a);
    }

    let mut map = BTreeMap::new();
    for a in authors {
        let (l, f) = identity_key(a);
        let mut target = spelling[&(l.clone(), f.clone())];
        if is_initial(&a.first) {
            let f_l = stats.first_names_for(&a.last).unwrap_or(0);
            let candidates = stats.expansions(&a.last, &a.first);
            if f_l < COLLAPSE_MAX_FIRST_NAMES && candidates.len() == 1 {
                if let Some(full) = spelling.get(&(l, candidates[0].to_string())) {
                    target = full;
                }
            }
        }
        map.insert(a.clone(), target.clone());
    }
    map
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Kept,
    Excluded,
    MergedInto(AuthorName),
}

impl Action {
    pub fn label(&self) -> String {
        match self {
            Action::Kept => "kept".into(),
            Action::Excluded => "excluded".into(),
            Action::MergedInto(to) => format!("merged_into:{to}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub author: AuthorName,
    pub counts: NameCounts,
    pub score: f64,
    pub action: Action,
}

#[derive(Debug, Clone)]
pub struct Disambiguation {
    pub threshold: f64,
    pub rows: Vec<ReportRow>,
    /// Raw name → surviving canonical identity; `None` when excluded.
    pub resolved: BTreeMap<AuthorName, Option<AuthorName>>,
}

impl Disambiguation {
    pub fn resolve(&self, author: &AuthorName) -> Option<&AuthorName> {
        self.resolved.get(author).and_then(Option::as_ref)
    }

    pub fn write_report<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{REPORT_ORDER_NOTE} threshold={}", self.threshold)?;
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        let io_err = io::Error::other;
        wtr.write_record(["last", "first", "F_L", "L_F", "score", "action"])
            .map_err(io_err)?;
        for r in &self.rows {
            wtr.write_record([
                r.author.last.clone(),
                r.author.first.clone(),
                r.counts.f_l.to_string(),
                r.counts.l_f.to_string(),
                r.score.to_string(),
                r.action.label(),
            ])
            .map_err(io_err)?;
        }
        wtr.flush()
    }
}

/// Stats → collapse → filter over a raw author list.
pub fn disambiguate(authors: &[AuthorName], threshold: f64) -> Disambiguation {
    let stats = NameStats::from_authors(authors);
    let merged = collapse_initials(authors, &stats);
    let mut rows = Vec::with_capacity(merged.len());
    let mut resolved = BTreeMap::new();
    for (raw, canonical) in &merged {
        let counts = stats.counts(raw).expect("stats cover every raw name");
        let canonical_score = ambiguity_score(canonical, &stats).expect("canonical is a raw name");
        let survives = canonical_score <= threshold;
        let action = if raw != canonical {
            Action::MergedInto(canonical.clone())
        } else if survives {
            Action::Kept
        } else {
            Action::Excluded
        };
        rows.push(ReportRow {
            author: raw.clone(),
            counts,
            score: counts.score(),
            action,
        });
        resolved.insert(raw.clone(), survives.then(|| canonical.clone()));
    }
    Disambiguation {
        threshold,
        rows,
        resolved,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(list: &[(&str, &str)]) -> Vec<AuthorName> {
        list.iter().map(|(l, f)| AuthorName::new(*l, *f)).collect()
    }

    #[test]
    fn unique_name_scores_one() {
        let a = names(&[("Doe", "Jane")]);
        let stats = NameStats::from_authors(&a);
        assert_eq!(ambiguity_score(&a[0], &stats).unwrap(), 1.0);
    }

    #[test]
    fn score_is_geometric_mean_of_counts() {
        assert_eq!(NameCounts { f_l: 100, l_f: 400 }.score(), 200.0);
        let smith = NameCounts { f_l: 728, l_f: 100 }.score();
        assert!((smith - 269.81475126464083).abs() < 1e-9);
        assert!(smith > 200.0);
    }

    #[test]
    fn unknown_name_is_an_error() {
        let stats = NameStats::from_authors(&names(&[("Doe", "Jane")]));
        let err = ambiguity_score(&AuthorName::new("Roe", "Jane"), &stats).unwrap_err();
        assert_eq!(err, DisambigError::UnknownName("Roe:Jane".into()));
    }

    #[test]
    fn counts_fold_case_and_periods() {
        let a = names(&[("Doe", "J."), ("doe", "j"), ("DOE", "Jane"), ("Roe", "J")]);
        let stats = NameStats::from_authors(&a);
        assert_eq!(stats.first_names_for("Doe"), Some(2));
        assert_eq!(stats.last_names_for("J."), Some(2));
    }

    #[test]
    fn initial_detection() {
        assert!(is_initial("J"));
        assert!(is_initial("j."));
        assert!(!is_initial("Jo"));
        assert!(!is_initial("J.R."));
        assert!(!is_initial(""));
    }

    #[test]
    fn boundary_score_is_kept() {
        // 10 first names with "Lee", one of which ("Ann") appears with 10 last names: sqrt(100) = 10
        let mut list = Vec::new();
        for i in 0..10 {
            list.push(AuthorName::new("Lee", format!("First{i}")));
            list.push(AuthorName::new(format!("Last{i}"), "Ann"));
        }
        list.push(AuthorName::new("Lee", "Ann"));
        let stats = NameStats::from_authors(&list);
        let target = AuthorName::new("Lee", "Ann");
        assert_eq!(ambiguity_score(&target, &stats).unwrap(), (11.0f64 * 11.0).sqrt());
        assert!(filter_ambiguous([&target], &stats, 11.0).contains(&target));
        assert!(filter_ambiguous([&target], &stats, 10.999).is_empty());
    }

    #[test]
    fn unique_initial_merges() {
        let a = names(&[("Doe", "J."), ("Doe", "Jane")]);
        let stats = NameStats::from_authors(&a);
        let m = collapse_initials(&a, &stats);
        assert_eq!(m[&a[0]], a[1]);
        assert_eq!(m[&a[1]], a[1]);
    }

    #[test]
    fn ambiguous_initial_is_not_merged() {
        let a = names(&[("Doe", "J."), ("Doe", "Jane"), ("Doe", "John")]);
        let stats = NameStats::from_authors(&a);
        let m = collapse_initials(&a, &stats);
        assert_eq!(m[&a[0]], a[0]);
    }

    #[test]
    fn crowded_last_name_blocks_merge() {
        // "Doe" with exactly 50 first names: J., Jane and 48 others starting with other letters
        let mut a = names(&[("Doe", "J."), ("Doe", "Jane")]);
        for i in 0..48 {
            a.push(AuthorName::new("Doe", format!("Kx{i}")));
        }
        let stats = NameStats::from_authors(&a);
        assert_eq!(stats.first_names_for("Doe"), Some(50));
        let m = collapse_initials(&a, &stats);
        assert_eq!(m[&a[0]], a[0]);

        // 49 first names still merges
        a.pop();
        let stats = NameStats::from_authors(&a);
        let m = collapse_initials(&a, &stats);
        assert_eq!(m[&a[0]], a[1]);
    }

    #[test]
    fn disambiguate_reports_every_raw_name() {
        let a = names(&[("Doe", "J."), ("Doe", "Jane"), ("Roe", "Rick")]);
        let d = disambiguate(&a, 200.0);
        assert_eq!(d.rows.len(), 3);
        assert_eq!(d.resolve(&a[0]), Some(&a[1]));
        assert_eq!(d.resolve(&a[2]), Some(&a[2]));
        let mut out = Vec::new();
        d.write_report(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# order=stats,collapse,filter"));
        assert_eq!(lines.next().unwrap(), "last,first,F_L,L_F,score,action");
        assert!(text.contains("Doe,J.,2,1,1.4142135623730951,merged_into:Doe:Jane"));
    }
}

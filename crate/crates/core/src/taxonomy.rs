//! Hierarchical category spaces and category-to-category similarity.
//!
//! Category ids are dot-delimited paths (`42.50`, `science.physics`). A path
//! with `k` components sits at level `k`; the implicit root is level 0.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, BufRead, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{CategoryWeight, Corpus};

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("no contributions to build a similarity matrix from")]
    EmptyCorpus,
    #[error("analysis level must be at least 1")]
    BadLevel,
    #[error("similarity matrix needs {expected} values, got {found}")]
    Shape { expected: usize, found: usize },
    #[error("similarity entry ({row}, {col}) = {value} outside [0, 1]")]
    OutOfRange { row: usize, col: usize, value: f64 },
    #[error("similarity.csv line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryNode {
    pub parent: Option<String>,
    pub level: usize,
}

/// Forest of category paths; every prefix of a known path is a node.
#[derive(Debug, Clone, Default)]
pub struct CategoryTaxonomy {
    nodes: BTreeMap<String, CategoryNode>,
}

impl CategoryTaxonomy {
    pub fn from_paths<I, S>(paths: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut tax = CategoryTaxonomy::default();
        for p in paths {
            tax.insert(p.as_ref());
        }
        tax
    }

    pub fn from_corpus(corpus: &Corpus) -> Self {
        Self::from_paths(
            corpus
                .contributions
                .iter()
                .flat_map(|r| r.categories.iter().map(|c| c.id.as_str()))
                .chain(corpus.items.iter().flat_map(|i| i.categories.iter().map(String::as_str)))
                .chain(corpus.answers.iter().map(|a| a.category_id.as_str())),
        )
    }

    pub fn insert(&mut self, path: &str) {
        let parts: Vec<&str> = path.split('.').collect();
        let mut parent: Option<String> = None;
        for level in 1..=parts.len() {
            let id = parts[..level].join(".");
            self.nodes.entry(id.clone()).or_insert(CategoryNode {
                parent: parent.clone(),
                level,
            });
            parent = Some(id);
        }
    }

    pub fn node(&self, id: &str) -> Option<&CategoryNode> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.nodes.values().map(|n| n.level).max().unwrap_or(0)
    }

    pub fn at_level(&self, level: usize) -> impl Iterator<Item = &str> {
        self.nodes
            .iter()
            .filter(move |(_, n)| n.level == level)
            .map(|(id, _)| id.as_str())
    }

    /// Ancestor of `id` at `level`, or `id` itself when it is shallower.
    pub fn ancestor_at(&self, id: &str, level: usize) -> Option<&str> {
        let mut cur = self.nodes.get_key_value(id)?;
        while cur.1.level > level {
            let parent = cur.1.parent.as_deref()?;
            cur = self.nodes.get_key_value(parent)?;
        }
        Some(cur.0.as_str())
    }
}

/// Maps a path to its ancestor at `level` (or itself when shallower).
pub fn truncate_path(path: &str, level: usize) -> &str {
    match path.match_indices('.').nth(level.saturating_sub(1)) {
        Some((pos, _)) if level > 0 => &path[..pos],
        _ => path,
    }
}

/// Truncates every category to `level` and sums the weights of merged siblings.
/// Output is sorted by category id.
pub fn truncate(categories: &[CategoryWeight], level: usize) -> Vec<CategoryWeight> {
    let mut merged: BTreeMap<&str, f64> = BTreeMap::new();
    for c in categories {
        *merged.entry(truncate_path(&c.id, level)).or_insert(0.0) += c.weight;
    }
    merged
        .into_iter()
        .map(|(id, weight)| CategoryWeight {
            id: id.to_string(),
            weight,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilaritySource {
    CoContributor,
    TopicCosine,
}

/// Dense row-major category similarity `s`. Not necessarily symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    categories: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<f64>,
    source: SimilaritySource,
    /// Categories with no support (no contributors or an all-zero topic column).
    flagged: Vec<usize>,
}

impl SimilarityMatrix {
    pub fn new(
        categories: Vec<String>,
        values: Vec<f64>,
        source: SimilaritySource,
    ) -> Result<Self, TaxonomyError> {
        let n = categories.len();
        if values.len() != n * n {
            return Err(TaxonomyError::Shape {
                expected: n * n,
                found: values.len(),
            });
        }
        for (k, &v) in values.iter().enumerate() {
            if !(0.0..=1.0 + 1e-12).contains(&v) {
                return Err(TaxonomyError::OutOfRange {
                    row: k / n,
                    col: k % n,
                    value: v,
                });
            }
        }
        let index = categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        Ok(SimilarityMatrix {
            categories,
            index,
            values,
            source,
            flagged: Vec::new(),
        })
    }

    pub fn identity(categories: Vec<String>) -> Self {
        let n = categories.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        Self::new(categories, values, SimilaritySource::CoContributor).expect("valid identity")
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn index_of(&self, category: &str) -> Option<usize> {
        self.index.get(category).copied()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.categories.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.categories.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn source(&self) -> SimilaritySource {
        self.source
    }

    pub fn flagged(&self) -> &[usize] {
        &self.flagged
    }

    /// `(s + sᵀ) / 2`.
    pub fn symmetrized(&self) -> Self {
        let n = self.len();
        let mut values = self.values.clone();
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = 0.5 * (self.get(i, j) + self.get(j, i));
            }
        }
        SimilarityMatrix {
            values,
            ..self.clone()
        }
    }

    /// Writes the `similarity.csv` layout: a header row of ids, then one row per category.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "category")?;
        for c in &self.categories {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
        for (i, c) in self.categories.iter().enumerate() {
            write!(w, "{c}")?;
            for v in self.row(i) {
                write!(w, ",{}", format_sig(*v, 9))?;
            }
            writeln!(w)?;
        }
        w.flush()
    }

    pub fn read_csv<R: BufRead>(r: R, source: SimilaritySource) -> Result<Self, TaxonomyError> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(TaxonomyError::Parse {
            line: 1,
            message: "empty file".into(),
        })??;
        let categories: Vec<String> = header.split(',').skip(1).map(String::from).collect();
        let mut values = Vec::with_capacity(categories.len() * categories.len());
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let id = fields.next().unwrap_or_default();
            if categories.get(k).map(String::as_str) != Some(id) {
                return Err(TaxonomyError::Parse {
                    line: k + 2,
                    message: format!("row id {id:?} does not match header order"),
                });
            }
            for f in fields {
                values.push(f.parse::<f64>().map_err(|e| TaxonomyError::Parse {
                    line: k + 2,
                    message: e.to_string(),
                })?);
            }
        }
        Self::new(categories, values, source)
    }
}

/// `%.{digits}g`-style formatting.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        format!("{}e{}", trim_fraction(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `s_ij = n_ij / n_j` from per-contributor category memberships, where `n_j`
/// counts contributors active in `j` and `n_ij` those active in both.
pub fn similarity_from_memberships(
    memberships: &[BTreeSet<usize>],
    categories: Vec<String>,
) -> SimilarityMatrix {
    let n = categories.len();
    let (single, joint) = memberships
        .par_iter()
        .fold(
            || (vec![0u64; n], vec![0u64; n * n]),
            |(mut single, mut joint), cats| {
                for &i in cats {
                    single[i] += 1;
                    for &j in cats {
                        joint[i * n + j] += 1;
                    }
                }
                (single, joint)
            },
        )
        .reduce(
            || (vec![0u64; n], vec![0u64; n * n]),
            |(mut s1, mut j1), (s2, j2)| {
                s1.iter_mut().zip(s2).for_each(|(a, b)| *a += b);
                j1.iter_mut().zip(j2).for_each(|(a, b)| *a += b);
                (s1, j1)
            },
        );
    let values: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n, k % n);
            if single[j] == 0 {
                if i == j {
                    1.0
                } else {
                    0.0
                }
            } else {
                joint[k] as f64 / single[j] as f64
            }
        })
        .collect();
    let flagged = (0..n).filter(|&j| single[j] == 0).collect();
    let mut s = SimilarityMatrix::new(categories, values, SimilaritySource::CoContributor)
        .expect("ratios lie in [0, 1]");
    s.flagged = flagged;
    s
}

/// Co-contributor similarity over `contributors` with categories truncated to `level`.
pub fn co_contribution_similarity(
    corpus: &Corpus,
    contributors: &BTreeSet<String>,
    level: usize,
) -> Result<SimilarityMatrix, TaxonomyError> {
    if level == 0 {
        return Err(TaxonomyError::BadLevel);
    }
    let mut per_contributor: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for rec in &corpus.contributions {
        if !contributors.contains(&rec.contributor_id) {
            continue;
        }
        let set = per_contributor.entry(&rec.contributor_id).or_default();
        for c in rec.categories.iter().filter(|c| c.weight > 0.0) {
            set.insert(truncate_path(&c.id, level));
        }
    }
    if per_contributor.is_empty() {
        return Err(TaxonomyError::EmptyCorpus);
    }
    let categories: Vec<String> = per_contributor
        .values()
        .flatten()
        .copied()
        .collect::<BTreeSet<&str>>()
        .into_iter()
        .map(String::from)
        .collect();
    let index: HashMap<&str, usize> = categories
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let memberships: Vec<BTreeSet<usize>> = per_contributor
        .values()
        .map(|set| set.iter().map(|c| index[c]).collect())
        .collect();
    Ok(similarity_from_memberships(&memberships, categories))
}

/// Cosine similarity between topic columns of a document-topic matrix.
/// Topics never used (all-zero column) get zero similarity to every other topic and are flagged.
pub fn topic_cosine_similarity(rows: &[Vec<f64>]) -> Result<SimilarityMatrix, TaxonomyError> {
    let k = rows.first().map(Vec::len).ok_or(TaxonomyError::EmptyCorpus)?;
    let mut gram = vec![0.0; k * k];
    for row in rows {
        for i in 0..k {
            if row[i] == 0.0 {
                continue;
            }
            for j in i..k {
                gram[i * k + j] += row[i] * row[j];
            }
        }
    }
    let norms: Vec<f64> = (0..k).map(|i| gram[i * k + i].sqrt()).collect();
    let mut values = vec![0.0; k * k];
    for i in 0..k {
        values[i * k + i] = 1.0;
        for j in i + 1..k {
            let v = if norms[i] > 0.0 && norms[j] > 0.0 {
                (gram[i * k + j] / (norms[i] * norms[j])).clamp(0.0, 1.0)
            } else {
                0.0
            };
            values[i * k + j] = v;
            values[j * k + i] = v;
        }
    }
    let categories = (0..k).map(|t| format!("topic_{t}")).collect();
    let mut s = SimilarityMatrix::new(categories, values, SimilaritySource::TopicCosine)?;
    s.flagged = (0..k).filter(|&i| norms[i] == 0.0).collect();
    Ok(s)
}

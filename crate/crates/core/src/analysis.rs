//! Correlation tables, quality regression, binned curves and temporal change.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use thiserror::Error;

use crate::corpus::ContributionRecord;
use crate::metrics::{focus_of, ContributorProfile, MetricError, QualityContext};
use crate::special::student_t_two_sided;
use crate::taxonomy::SimilarityMatrix;

/// Significance level behind the `not. sig.` label.
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, have {found}")]
    TooFewObservations { needed: usize, found: usize },
    #[error("{0} has zero variance")]
    ZeroVariance(&'static str),
    #[error("design matrix is singular: column {0:?} is collinear with earlier columns")]
    Singular(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample Pearson correlation with a two-sided t-test p-value.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(AnalysisError::TooFewObservations { needed: 3, found: n });
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(AnalysisError::ZeroVariance("x"));
    }
    if syy == 0.0 {
        return Err(AnalysisError::ZeroVariance("y"));
    }
    let rho = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if rho.abs() == 1.0 {
        0.0
    } else {
        student_t_two_sided(rho * (df / (1.0 - rho * rho)).sqrt(), df)
    };
    Ok(Correlation { rho, p_value, n })
}

/// Average ranks (1-based), ties share their mean rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation, AnalysisError> {
    pearson(&ranks(x), &ranks(y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regression {
    pub terms: Vec<String>,
    pub coef: Vec<f64>,
    pub stderr: Vec<f64>,
    pub r2: f64,
    pub n: usize,
}

impl Regression {
    pub fn coefficient(&self, term: &str) -> Option<(f64, f64)> {
        let i = self.terms.iter().position(|t| t == term)?;
        Some((self.coef[i], self.stderr[i]))
    }
}

/// OLS of `y` on an intercept plus the named columns, via the normal equations.
pub fn ols(y: &[f64], columns: &[(&str, Vec<f64>)]) -> Result<Regression, AnalysisError> {
    let n = y.len();
    for (_, c) in columns {
        if c.len() != n {
            return Err(AnalysisError::LengthMismatch(n, c.len()));
        }
    }
    let k = columns.len() + 1;
    if n < k + 3 {
        return Err(AnalysisError::TooFewObservations { needed: k + 3, found: n });
    }
    let mut terms = vec!["intercept".to_string()];
    terms.extend(columns.iter().map(|(name, _)| name.to_string()));
    let x = |row: usize, col: usize| if col == 0 { 1.0 } else { columns[col - 1].1[row] };

    let mut xtx = vec![0.0; k * k];
    let mut xty = vec![0.0; k];
    for r in 0..n {
        for a in 0..k {
            let xa = x(r, a);
            xty[a] += xa * y[r];
            for b in a..k {
                xtx[a * k + b] += xa * x(r, b);
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            xtx[a * k + b] = xtx[b * k + a];
        }
    }

    let chol = cholesky(&xtx, k).map_err(|col| AnalysisError::Singular(terms[col].clone()))?;
    let coef = cholesky_solve(&chol, k, &xty);
    let inv = cholesky_inverse(&chol, k);

    let my = mean(y);
    let (mut ssr, mut sst) = (0.0, 0.0);
    for r in 0..n {
        let fit: f64 = (0..k).map(|c| coef[c] * x(r, c)).sum();
        ssr += (y[r] - fit).powi(2);
        sst += (y[r] - my).powi(2);
    }
    let sigma2 = ssr / (n - k) as f64;
    let stderr = (0..k).map(|c| (sigma2 * inv[c * k + c]).sqrt()).collect();
    let r2 = if sst > 0.0 { (1.0 - ssr / sst).clamp(0.0, 1.0) } else { 1.0 };
    Ok(Regression {
        terms,
        coef,
        stderr,
        r2,
        n,
    })
}

/// Lower-triangular `L` with `L Lᵀ = A`; `Err(col)` names the first dependent column.
fn cholesky(a: &[f64], k: usize) -> Result<Vec<f64>, usize> {
    let mut l = vec![0.0; k * k];
    for j in 0..k {
        let mut d = a[j * k + j];
        for p in 0..j {
            d -= l[j * k + p] * l[j * k + p];
        }
        if d <= 1e-10 * a[j * k + j].abs().max(f64::MIN_POSITIVE) {
            return Err(j);
        }
        let d = d.sqrt();
        l[j * k + j] = d;
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= l[i * k + p] * l[j * k + p];
            }
            l[i * k + j] = s / d;
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &[f64], k: usize, b: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; k];
    for i in 0..k {
        let s: f64 = (0..i).map(|p| l[i * k + p] * z[p]).sum();
        z[i] = (b[i] - s) / l[i * k + i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|p| l[p * k + i] * x[p]).sum();
        x[i] = (z[i] - s) / l[i * k + i];
    }
    x
}

fn cholesky_inverse(l: &[f64], k: usize) -> Vec<f64> {
    let mut inv = vec![0.0; k * k];
    for c in 0..k {
        let mut e = vec![0.0; k];
        e[c] = 1.0;
        for (r, v) in cholesky_solve(l, k, &e).into_iter().enumerate() {
            inv[r * k + c] = v;
        }
    }
    inv
}

fn standardize(x: &[f64]) -> Vec<f64> {
    let m = mean(x);
    let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt();
    if sd == 0.0 {
        return x.iter().map(|v| v - m).collect();
    }
    x.iter().map(|v| (v - m) / sd).collect()
}

/// `quality ~ 1 + focus + ln(quantity)` over profiles with a defined quality.
/// With `standardize`, response and predictors are z-scored first.
pub fn ols_quality_regression(
    profiles: &[ContributorProfile],
    standardize_vars: bool,
) -> Result<Regression, AnalysisError> {
    let rows: Vec<&ContributorProfile> = profiles.iter().filter(|p| p.quality.is_some()).collect();
    let mut q: Vec<f64> = rows.iter().map(|p| p.quality.unwrap_or_default()).collect();
    let mut f: Vec<f64> = rows.iter().map(|p| p.focus).collect();
    let mut lq: Vec<f64> = rows.iter().map(|p| (p.quantity as f64).ln()).collect();
    if standardize_vars {
        q = standardize(&q);
        f = standardize(&f);
        lq = standardize(&lq);
    }
    ols(&q, &[("focus", f), ("log_quantity", lq)])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bin {
    pub center: f64,
    pub mean: f64,
    /// Standard error of the mean; NaN for single-observation bins.
    pub stderr: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinTable {
    pub bins: Vec<Bin>,
    /// Observations in bins dropped for having fewer than `min_count` members.
    pub suppressed: usize,
}

impl BinTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "bin_center,mean,stderr,count")?;
        for b in &self.bins {
            writeln!(w, "{},{},{},{}", b.center, b.mean, b.stderr, b.count)?;
        }
        w.flush()
    }
}

/// Equal-width bins over the observed range of `x`; the top edge falls in the last bin.
pub fn binned_curve(x: &[f64], y: &[f64], n_bins: usize, min_count: usize) -> Result<BinTable, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    let n_bins = n_bins.max(2);
    if x.is_empty() {
        return Ok(BinTable { bins: Vec::new(), suppressed: 0 });
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n_bins as f64;
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for (&xi, &yi) in x.iter().zip(y) {
        let b = if width > 0.0 {
            (((xi - lo) / width) as usize).min(n_bins - 1)
        } else {
            0
        };
        members[b].push(yi);
    }
    let mut bins = Vec::new();
    let mut suppressed = 0;
    for (b, ys) in members.iter().enumerate() {
        if ys.is_empty() {
            continue;
        }
        if ys.len() < min_count {
            suppressed += ys.len();
            continue;
        }
        let m = mean(ys);
        let stderr = if ys.len() > 1 {
            let var = ys.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (ys.len() - 1) as f64;
            (var / ys.len() as f64).sqrt()
        } else {
            f64::NAN
        };
        let center = if width > 0.0 { lo + (b as f64 + 0.5) * width } else { lo };
        bins.push(Bin { center, mean: m, stderr, count: ys.len() });
    }
    Ok(BinTable { bins, suppressed })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanTest {
    pub mean: f64,
    pub p_value: f64,
    pub n: usize,
}

impl MeanTest {
    pub fn significant(&self) -> bool {
        self.p_value < SIGNIFICANCE
    }

    pub fn label(&self) -> &'static str {
        if self.significant() {
            "sig"
        } else {
            "not. sig."
        }
    }
}

/// One-sample t-test of `mean(d) = 0`, i.e. a paired test on differences.
pub fn paired_t_test(diffs: &[f64]) -> Result<MeanTest, AnalysisError> {
    let n = diffs.len();
    if n < 2 {
        return Err(AnalysisError::TooFewObservations { needed: 2, found: n });
    }
    let m = mean(diffs);
    let var = diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    let p_value = if var == 0.0 {
        if m == 0.0 { 1.0 } else { 0.0 }
    } else {
        student_t_two_sided(m / (var / n as f64).sqrt(), (n - 1) as f64)
    };
    Ok(MeanTest { mean: m, p_value, n })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalDelta {
    pub contributor_id: String,
    pub delta_focus: f64,
    pub delta_quality: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalEntry {
    pub deltas: Vec<TemporalDelta>,
    pub excluded_untimestamped: usize,
    pub pct_increased_focus: f64,
    pub delta_focus: MeanTest,
    pub delta_quality: Option<MeanTest>,
}

impl TemporalEntry {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "metric,value,p_value,n,label")?;
        let n = self.deltas.len();
        writeln!(w, "pct_increased_focus,{},,{},", self.pct_increased_focus, n)?;
        let t = &self.delta_focus;
        writeln!(w, "mean_delta_focus,{},{},{},{}", t.mean, t.p_value, t.n, t.label())?;
        match &self.delta_quality {
            Some(t) => writeln!(w, "mean_delta_quality,{},{},{},{}", t.mean, t.p_value, t.n, t.label())?,
            None => writeln!(w, "mean_delta_quality,,,0,undefined")?,
        }
        writeln!(w, "excluded_untimestamped,{},,,", self.excluded_untimestamped)?;
        w.flush()
    }
}

/// Per-contributor proportion vector for an arbitrary subset of records.
pub type ProportionFn<'a> = dyn Fn(&str, &[&ContributionRecord]) -> Option<Vec<(String, f64)>> + Sync + 'a;

/// Focus (and quality) change between the first `ceil(n/2)` and last `floor(n/2)` records
/// of each contributor, both halves scored against the same similarity matrix.
/// `grouped` must already be ordered by `(timestamp, item_id)`.
pub fn temporal_change(
    grouped: &BTreeMap<&str, Vec<&ContributionRecord>>,
    contributors: &BTreeSet<String>,
    proportions: &ProportionFn<'_>,
    similarity: &SimilarityMatrix,
    quality: Option<&QualityContext>,
) -> Result<TemporalEntry, AnalysisError> {
    let mut deltas = Vec::new();
    let mut excluded = 0;
    for id in contributors {
        let Some(records) = grouped.get(id.as_str()) else {
            continue;
        };
        if records.iter().any(|r| r.timestamp.is_none()) {
            excluded += 1;
            continue;
        }
        if records.len() < 2 {
            continue;
        }
        let split = records.len().div_ceil(2);
        let (first, second) = records.split_at(split);
        let (Some(p1), Some(p2)) = (proportions(id, first), proportions(id, second)) else {
            continue;
        };
        let delta_focus = focus_of(&p2, similarity)? - focus_of(&p1, similarity)?;
        let delta_quality = quality.and_then(|q| {
            let q1 = q.quality(id, first).ok()?;
            let q2 = q.quality(id, second).ok()?;
            Some(q2 - q1)
        });
        deltas.push(TemporalDelta {
            contributor_id: id.clone(),
            delta_focus,
            delta_quality,
        });
    }
    let df: Vec<f64> = deltas.iter().map(|d| d.delta_focus).collect();
    let delta_focus = paired_t_test(&df)?;
    let increased = df.iter().filter(|&&d| d > 0.0).count();
    let dq: Vec<f64> = deltas.iter().filter_map(|d| d.delta_quality).collect();
    Ok(TemporalEntry {
        pct_increased_focus: 100.0 * increased as f64 / df.len() as f64,
        delta_focus,
        delta_quality: paired_t_test(&dq).ok(),
        excluded_untimestamped: excluded,
        deltas,
    })
}

/// The correlation pairs reported for every medium.
pub const CORRELATION_PAIRS: [(&str, &str); 6] = [
    ("log_quantity", "focus"),
    ("log_quantity", "quality"),
    ("focus", "quality"),
    ("entropy", "focus"),
    ("log_quantity", "entropy"),
    ("entropy", "quality"),
];

fn column(profiles: &[&ContributorProfile], name: &str) -> Vec<f64> {
    profiles
        .iter()
        .map(|p| match name {
            "log_quantity" => (p.quantity as f64).ln(),
            "focus" => p.focus,
            "entropy" => p.entropy,
            "quality" => p.quality.unwrap_or(f64::NAN),
            other => unreachable!("unknown column {other}"),
        })
        .collect()
}

/// Pairwise Pearson correlations; pairs involving quality use only profiles with a defined quality.
pub fn correlation_table(profiles: &[ContributorProfile]) -> Vec<(String, Result<Correlation, AnalysisError>)> {
    let all: Vec<&ContributorProfile> = profiles.iter().collect();
    let with_q: Vec<&ContributorProfile> = profiles.iter().filter(|p| p.quality.is_some()).collect();
    CORRELATION_PAIRS
        .iter()
        .map(|&(a, b)| {
            let rows = if a == "quality" || b == "quality" { &with_q } else { &all };
            (format!("{a}~{b}"), pearson(&column(rows, a), &column(rows, b)))
        })
        .collect()
}

pub fn write_correlations<W: Write>(
    mut w: W,
    table: &[(String, Result<Correlation, AnalysisError>)],
) -> io::Result<()> {
    writeln!(w, "pair,rho,p,n")?;
    for (pair, c) in table {
        match c {
            Ok(c) => writeln!(w, "{pair},{},{},{}", c.rho, c.p_value, c.n)?,
            Err(_) => writeln!(w, "{pair},undefined,undefined,0")?,
        }
    }
    w.flush()
}

pub fn write_regression<W: Write>(mut w: W, reg: &Regression) -> io::Result<()> {
    writeln!(w, "term,coef,stderr")?;
    for ((t, c), s) in reg.terms.iter().zip(&reg.coef).zip(&reg.stderr) {
        writeln!(w, "{t},{c},{s}")?;
    }
    writeln!(w, "R2,{},", reg.r2)?;
    writeln!(w, "N,{},", reg.n)?;
    w.flush()
}

/// The four plot tables: quality vs focus, focus vs quality, quality vs entropy, entropy vs quality.
pub fn standard_bins(
    profiles: &[ContributorProfile],
    n_bins: usize,
    min_count: usize,
) -> Result<Vec<(&'static str, BinTable)>, AnalysisError> {
    let rows: Vec<&ContributorProfile> = profiles.iter().filter(|p| p.quality.is_some()).collect();
    let (f, e, q) = (column(&rows, "focus"), column(&rows, "entropy"), column(&rows, "quality"));
    Ok(vec![
        ("quality_vs_focus", binned_curve(&f, &q, n_bins, min_count)?),
        ("focus_vs_quality", binned_curve(&q, &f, n_bins, min_count)?),
        ("quality_vs_entropy", binned_curve(&e, &q, n_bins, min_count)?),
        ("entropy_vs_quality", binned_curve(&q, &e, n_bins, min_count)?),
    ])
}

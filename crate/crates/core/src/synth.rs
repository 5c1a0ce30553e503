//! Synthetic corpora with planted focus, quality and quantity correlations.
//!
//! Each contributor draws latent `(z_focus, z_ability, z_quantity)` from a Gaussian
//! copula. Focus propensity sets the share of work in a home category, ability drives
//! the medium's raw quality signal and productivity sets the contribution count.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use thiserror::Error;

use crate::corpus::{
    write_citations, write_contributions, write_items, write_jsonl, AnswerEvent, AuthorName,
    CategoryWeight, CitationEdge, ContributionRecord, Corpus, ItemMetadata, Medium, RevisionEvent,
};
use crate::metrics::wiki_item_key;
use crate::topics::Document;

/// 2000-01-01T00:00:00Z.
pub const EPOCH_2000: i64 = 946_684_800;
pub const SECONDS_PER_YEAR: i64 = 31_557_600;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("target correlation matrix is not positive definite")]
    NotPositiveDefinite,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QualityModel {
    Citations,
    Qa,
    Wiki,
}

impl QualityModel {
    pub fn medium(self) -> Medium {
        match self {
            QualityModel::Citations => Medium::Articles,
            QualityModel::Qa => Medium::Qa,
            QualityModel::Wiki => Medium::Wiki,
        }
    }
}

impl std::str::FromStr for QualityModel {
    type Err = SynthError;
    fn from_str(s: &str) -> Result<Self, SynthError> {
        match s {
            "citations" => Ok(QualityModel::Citations),
            "qa" => Ok(QualityModel::Qa),
            "wiki" => Ok(QualityModel::Wiki),
            other => Err(SynthError::InvalidConfig(format!("unknown quality model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_contributors: usize,
    /// Top-level categories.
    pub n_categories: usize,
    /// Children per non-leaf category.
    pub branching: usize,
    /// Leaf depth; contributions are tagged with leaf categories.
    pub depth: usize,
    pub rho_fq: f64,
    pub rho_nq: f64,
    pub rho_nf: f64,
    pub quality_model: QualityModel,
    /// Change in home-category share from the first to the second half of each timeline.
    pub drift: f64,
    /// Multiplies the ability effect on raw outcomes; 0 makes quality pure noise.
    pub ability_scale: f64,
    /// Minimum contributions per contributor; defaults to the medium threshold.
    pub min_quantity: usize,
    /// Standard deviation of log quantity.
    pub quantity_spread: f64,
    /// Also emit `documents.jsonl` with category-specific vocabularies.
    pub documents: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_contributors: 1000,
            n_categories: 12,
            branching: 4,
            depth: 2,
            rho_fq: 0.3,
            rho_nq: 0.1,
            rho_nf: 0.0,
            quality_model: QualityModel::Citations,
            drift: 0.0,
            ability_scale: 1.0,
            min_quantity: Medium::Articles.default_threshold(),
            quantity_spread: 0.25,
            documents: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn new(model: QualityModel) -> Self {
        SynthConfig {
            quality_model: model,
            min_quantity: model.medium().default_threshold(),
            ..SynthConfig::default()
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.n_contributors < 10 {
            return bad("n_contributors must be at least 10");
        }
        if self.n_categories < 1 || self.depth < 1 {
            return bad("need at least one category and depth 1");
        }
        if self.depth > 1 && self.branching < 1 {
            return bad("branching must be at least 1");
        }
        if self.leaf_count() < 4 {
            return bad("need at least 4 leaf categories");
        }
        for (name, r) in [("rho_fq", self.rho_fq), ("rho_nq", self.rho_nq), ("rho_nf", self.rho_nf)] {
            if !(r.abs() < 1.0) {
                return bad(&format!("{name} must lie strictly inside (-1, 1)"));
            }
        }
        if !(self.drift.abs() < 1.0) || !self.quantity_spread.is_finite() || self.quantity_spread < 0.0 {
            return bad("drift must lie in (-1, 1) and quantity_spread must be non-negative");
        }
        if self.min_quantity < 2 {
            return bad("min_quantity must be at least 2");
        }
        Ok(())
    }

    fn leaf_count(&self) -> usize {
        self.n_categories * self.branching.pow(self.depth as u32 - 1)
    }
}

/// Planted latents for one contributor.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub contributor_id: String,
    pub z_focus: f64,
    pub z_ability: f64,
    pub z_quantity: f64,
    pub home_category: String,
    pub home_share: f64,
    pub quantity: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    pub documents: Vec<Document>,
    pub ground_truth: Vec<GroundTruth>,
}

impl SynthCorpus {
    /// Writes every non-empty record kind under its standard file name.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let create = |name: &str| File::create(dir.join(name)).map(BufWriter::new);
        let c = &self.corpus;
        write_contributions(create("contributions.csv")?, &c.contributions)?;
        if !c.items.is_empty() {
            write_items(create("items.csv")?, &c.items)?;
            write_citations(create("citations.csv")?, &c.citations)?;
        }
        if !c.answers.is_empty() {
            write_jsonl(create("answers.jsonl")?, &c.answers)?;
        }
        if !c.revisions.is_empty() {
            write_jsonl(create("revisions.jsonl")?, &c.revisions)?;
        }
        if !self.documents.is_empty() {
            write_jsonl(create("documents.jsonl")?, &self.documents)?;
        }
        write_ground_truth(create("ground_truth.csv")?, &self.ground_truth)
    }
}

pub fn write_ground_truth<W: Write>(mut w: W, rows: &[GroundTruth]) -> io::Result<()> {
    writeln!(w, "contributor_id,z_focus,z_ability,z_quantity,home_category,home_share,quantity")?;
    for g in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            g.contributor_id, g.z_focus, g.z_ability, g.z_quantity, g.home_category, g.home_share, g.quantity
        )?;
    }
    w.flush()
}

/// Lower Cholesky factor of the 3x3 latent correlation matrix (focus, ability, quantity).
pub fn latent_factor(rho_fq: f64, rho_nq: f64, rho_nf: f64) -> Result<[[f64; 3]; 3], SynthError> {
    let r = [[1.0, rho_fq, rho_nf], [rho_fq, 1.0, rho_nq], [rho_nf, rho_nq, 1.0]];
    let mut l = [[0.0; 3]; 3];
    for j in 0..3 {
        let d = r[j][j] - (0..j).map(|p| l[j][p] * l[j][p]).sum::<f64>();
        if d <= 1e-12 {
            return Err(SynthError::NotPositiveDefinite);
        }
        l[j][j] = d.sqrt();
        for i in j + 1..3 {
            l[i][j] = (r[i][j] - (0..j).map(|p| l[i][p] * l[j][p]).sum::<f64>()) / l[j][j];
        }
    }
    Ok(l)
}

/// Standardized coefficients of ability on (focus, quantity) implied by the targets.
pub fn planted_coefficients(rho_fq: f64, rho_nq: f64, rho_nf: f64) -> (f64, f64) {
    let det = 1.0 - rho_nf * rho_nf;
    ((rho_fq - rho_nf * rho_nq) / det, (rho_nq - rho_nf * rho_fq) / det)
}

fn leaves(cfg: &SynthConfig) -> Vec<String> {
    let mut level: Vec<String> = (0..cfg.n_categories).map(|c| c.to_string()).collect();
    for _ in 1..cfg.depth {
        level = level
            .iter()
            .flat_map(|p| (0..cfg.branching).map(move |b| format!("{p}.{b}")))
            .collect();
    }
    level
}

const SYLLABLES: [&str; 20] = [
    "ba", "ke", "lo", "mi", "nu", "ra", "si", "to", "ve", "zo", "da", "fe", "gi", "ho", "ju", "ka",
    "le", "mo", "ni", "pa",
];
const FIRST_NAMES: [&str; 24] = [
    "Ada", "Ben", "Cleo", "Dmitri", "Eva", "Farid", "Grace", "Hugo", "Ines", "Jonas", "Kiri",
    "Luis", "Maya", "Nils", "Olga", "Pavel", "Qiu", "Rosa", "Sami", "Tara", "Uma", "Viktor",
    "Wen", "Yara",
];

/// Distinct capitalized surnames for indices below `20^4`.
fn surname(mut i: usize) -> String {
    let mut s = String::new();
    for _ in 0..4 {
        s.push_str(SYLLABLES[i % SYLLABLES.len()]);
        i /= SYLLABLES.len();
    }
    let mut c = s.chars();
    c.next().map(|f| f.to_ascii_uppercase().to_string() + c.as_str()).unwrap_or_default()
}

/// Splits `m` units over `shares` (summing to 1) by randomized systematic rounding:
/// every count is the floor or ceiling of `m * share` and the total is exactly `m`.
pub fn apportion<R: Rng>(m: usize, shares: &[f64], rng: &mut R) -> Vec<usize> {
    let u: f64 = rng.random();
    let mut out = Vec::with_capacity(shares.len());
    let mut cum = 0.0;
    let mut prev = 0usize;
    for (k, s) in shares.iter().enumerate() {
        cum += s * m as f64;
        let next = if k + 1 == shares.len() { m } else { ((cum + u).floor() as usize).min(m) };
        out.push(next.saturating_sub(prev));
        prev = next.max(prev);
    }
    out
}

struct Contributor {
    id: String,
    z: [f64; 3],
    home: usize,
    others: [usize; 3],
    other_shares: [f64; 3],
    share: f64,
    n: usize,
    start: i64,
}

struct Slot {
    contributor: usize,
    category: usize,
    timestamp: i64,
}

/// Concentration of the Dirichlet spreading the non-home share over three categories.
const SECONDARY_CONCENTRATION: f64 = 20.0;

/// Home share `w` whose focus with an even three-way remainder,
/// `w² + (1 - w)² / 3`, is linear in the focus propensity.
fn home_share(z_focus: f64) -> f64 {
    let target = (0.6 + 0.11 * z_focus).clamp(0.26, 0.99);
    (1.0 + (12.0 * target - 3.0).sqrt()) / 4.0
}

/// Deterministic corpus generation for `cfg.seed`.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    cfg.validate()?;
    let l = latent_factor(cfg.rho_fq, cfg.rho_nq, cfg.rho_nf)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let leaves = leaves(cfg);
    let medium = cfg.quality_model.medium();

    let mut contributors = Vec::with_capacity(cfg.n_contributors);
    for i in 0..cfg.n_contributors {
        let e: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let z: [f64; 3] = std::array::from_fn(|r| (0..=r).map(|c| l[r][c] * e[c]).sum());
        let home = rng.random_range(0..leaves.len());
        let mut others = [usize::MAX; 3];
        for k in 0..3 {
            loop {
                let pick = rng.random_range(0..leaves.len());
                if pick != home && !others.contains(&pick) {
                    others[k] = pick;
                    break;
                }
            }
        }
        let gamma = Gamma::new(SECONDARY_CONCENTRATION, 1.0).expect("positive shape");
        let g: [f64; 3] = std::array::from_fn(|_| gamma.sample(&mut rng));
        let gs: f64 = g.iter().sum();
        let n_raw = cfg.min_quantity as f64 * (cfg.quantity_spread * (z[2] + 4.0)).exp();
        let id = match cfg.quality_model {
            QualityModel::Citations => {
                let first = FIRST_NAMES[rng.random_range(0..FIRST_NAMES.len())];
                AuthorName::new(surname(i), first).key()
            }
            _ => format!("u{i:05}"),
        };
        contributors.push(Contributor {
            id,
            z,
            home,
            others,
            other_shares: std::array::from_fn(|k| g[k] / gs),
            share: home_share(z[0]),
            n: (n_raw.round() as usize).max(cfg.min_quantity),
            start: EPOCH_2000 + rng.random_range(0..5 * SECONDS_PER_YEAR),
        });
    }

    // Category-level contribution slots, first half then second half of each timeline.
    let mut slots = Vec::new();
    for (ci, c) in contributors.iter().enumerate() {
        let n1 = c.n.div_ceil(2);
        let span = 5 * SECONDS_PER_YEAR;
        let mut times: Vec<i64> = (0..c.n).map(|_| c.start + rng.random_range(0..span)).collect();
        times.sort_unstable();
        // strictly increasing so the temporal split is unambiguous
        for k in 1..times.len() {
            if times[k] <= times[k - 1] {
                times[k] = times[k - 1] + 1;
            }
        }
        let mut t = times.into_iter();
        for (half, m) in [(0, n1), (1, c.n - n1)] {
            let w = (c.share + if half == 0 { -cfg.drift / 2.0 } else { cfg.drift / 2.0 }).clamp(0.0, 1.0);
            let mut shares = vec![w];
            shares.extend(c.other_shares.iter().map(|s| (1.0 - w) * s));
            let counts = apportion(m, &shares, &mut rng);
            let mut cats: Vec<usize> = Vec::with_capacity(m);
            for (k, &cnt) in counts.iter().enumerate() {
                let cat = if k == 0 { c.home } else { c.others[k - 1] };
                cats.extend(std::iter::repeat_n(cat, cnt));
            }
            cats.shuffle(&mut rng);
            for cat in cats {
                slots.push(Slot {
                    contributor: ci,
                    category: cat,
                    timestamp: t.next().expect("one timestamp per contribution"),
                });
            }
        }
    }

    let mut out = SynthCorpus {
        ground_truth: contributors
            .iter()
            .map(|c| GroundTruth {
                contributor_id: c.id.clone(),
                z_focus: c.z[0],
                z_ability: c.z[1],
                z_quantity: c.z[2],
                home_category: leaves[c.home].clone(),
                home_share: c.share,
                quantity: c.n,
            })
            .collect(),
        ..SynthCorpus::default()
    };
    match cfg.quality_model {
        QualityModel::Citations => citations(cfg, &contributors, &slots, &leaves, medium, &mut rng, &mut out),
        QualityModel::Qa => answers(cfg, &contributors, &slots, &leaves, &mut rng, &mut out),
        QualityModel::Wiki => revisions(cfg, &contributors, &slots, &leaves, &mut rng, &mut out),
    }
    Ok(out)
}

fn record(c: &Contributor, item: String, slot: &Slot, medium: Medium, leaves: &[String]) -> ContributionRecord {
    ContributionRecord {
        contributor_id: c.id.clone(),
        item_id: item,
        timestamp: Some(slot.timestamp),
        medium,
        categories: vec![CategoryWeight {
            id: leaves[slot.category].clone(),
            weight: 1.0,
        }],
    }
}

fn year_of(ts: i64) -> i32 {
    2000 + ((ts - EPOCH_2000) / SECONDS_PER_YEAR) as i32
}

const BASE_CITATION_RATE: f64 = 10.0;
const CITATION_ABILITY_EFFECT: f64 = 0.35;

fn citations(
    cfg: &SynthConfig,
    contributors: &[Contributor],
    slots: &[Slot],
    leaves: &[String],
    medium: Medium,
    rng: &mut ChaCha8Rng,
    out: &mut SynthCorpus,
) {
    let years = 11;
    let cohort_rate: Vec<f64> = (0..leaves.len() * years)
        .map(|_| BASE_CITATION_RATE * (0.5 * rng.sample::<f64, _>(StandardNormal)).exp())
        .collect();
    let mut rates = Vec::with_capacity(slots.len());
    for (k, slot) in slots.iter().enumerate() {
        let c = &contributors[slot.contributor];
        let item_id = format!("i{k:07}");
        let year = year_of(slot.timestamp);
        out.corpus.items.push(ItemMetadata {
            item_id: item_id.clone(),
            year,
            categories: vec![leaves[slot.category].clone()],
            authors: vec![AuthorName::parse(&c.id).expect("generated ids are Last:First")],
        });
        out.corpus.contributions.push(record(c, item_id, slot, medium, leaves));
        let y = (year - 2000).clamp(0, years as i32 - 1) as usize;
        let factor = (1.0 + cfg.ability_scale * CITATION_ABILITY_EFFECT * c.z[1]).max(0.05);
        rates.push(cohort_rate[slot.category * years + y] * factor);
        if cfg.documents {
            out.documents.push(Document {
                doc_id: out.corpus.items[k].item_id.clone(),
                text: document_text(slot.category, leaves.len(), rng),
            });
        }
    }
    let n_items = slots.len();
    for (k, &rate) in rates.iter().enumerate() {
        let cites = Poisson::new(rate).map(|p| p.sample(rng) as usize).unwrap_or(0);
        let cites = cites.min(n_items - 1);
        let mut citing: HashSet<usize> = HashSet::with_capacity(cites);
        let mut order = Vec::with_capacity(cites);
        while order.len() < cites {
            let j = rng.random_range(0..n_items);
            if j != k && citing.insert(j) {
                order.push(j);
            }
        }
        for j in order {
            out.corpus.citations.push(CitationEdge {
                citing_item: out.corpus.items[j].item_id.clone(),
                cited_item: out.corpus.items[k].item_id.clone(),
            });
        }
    }
}

const DOC_WORDS: usize = 60;
const CATEGORY_VOCAB: usize = 40;

fn document_text(category: usize, n_categories: usize, rng: &mut ChaCha8Rng) -> String {
    let words: Vec<String> = (0..DOC_WORDS)
        .map(|_| {
            let cat = if rng.random::<f64>() < 0.85 { category } else { rng.random_range(0..n_categories) };
            format!("c{cat}w{}", rng.random_range(0..CATEGORY_VOCAB))
        })
        .collect();
    words.join(" ")
}

const ANSWER_ABILITY_EFFECT: f64 = 0.8;

fn answers(
    cfg: &SynthConfig,
    contributors: &[Contributor],
    slots: &[Slot],
    leaves: &[String],
    rng: &mut ChaCha8Rng,
    out: &mut SynthCorpus,
) {
    for (k, slot) in slots.iter().enumerate() {
        let c = &contributors[slot.contributor];
        let question = format!("q{k:07}");
        let others = rng.random_range(0..5usize);
        let w_self = (cfg.ability_scale * ANSWER_ABILITY_EFFECT * c.z[1]).exp();
        let pick = rng.random::<f64>() * (w_self + others as f64);
        let best = if pick < w_self { 0 } else { 1 + ((pick - w_self) as usize).min(others - 1) };
        let category = leaves[slot.category].clone();
        out.corpus.answers.push(AnswerEvent {
            question_id: question.clone(),
            answerer_id: c.id.clone(),
            category_id: category.clone(),
            is_best: best == 0,
            timestamp: Some(slot.timestamp),
        });
        let mut background: Vec<u32> = Vec::with_capacity(others);
        while background.len() < others {
            let id = rng.random_range(0..100_000);
            if !background.contains(&id) {
                background.push(id);
            }
        }
        for (b, id) in (1..=others).zip(background) {
            out.corpus.answers.push(AnswerEvent {
                question_id: question.clone(),
                answerer_id: format!("bg{id}"),
                category_id: category.clone(),
                is_best: best == b,
                timestamp: Some(slot.timestamp + b as i64),
            });
        }
        out.corpus
            .contributions
            .push(record(c, question, slot, Medium::Qa, leaves));
    }
}

const PAGE_SIZE: usize = 10;
const WORDS_PER_EDIT: usize = 6;
const ANON_RATE: f64 = 0.1;

/// Per-revision removal hazard for a word whose author has ability `z`.
fn removal_hazard(z: f64, scale: f64) -> f64 {
    0.25 / (1.0 + (scale * z).exp())
}

fn revisions(
    cfg: &SynthConfig,
    contributors: &[Contributor],
    slots: &[Slot],
    leaves: &[String],
    rng: &mut ChaCha8Rng,
    out: &mut SynthCorpus,
) {
    let mut by_category: Vec<Vec<usize>> = vec![Vec::new(); leaves.len()];
    for (k, s) in slots.iter().enumerate() {
        by_category[s.category].push(k);
    }
    let mut page_no = 0usize;
    let mut records: Vec<(usize, ContributionRecord)> = Vec::new();
    for members in &mut by_category {
        members.shuffle(rng);
        for chunk in members.chunks(PAGE_SIZE) {
            // (slot or anonymous, timestamp)
            let mut edits: Vec<(Option<usize>, i64)> = chunk.iter().map(|&k| (Some(k), slots[k].timestamp)).collect();
            let anon = (0..chunk.len()).filter(|_| rng.random::<f64>() < ANON_RATE).count();
            let (lo, hi) = edits.iter().fold((i64::MAX, i64::MIN), |(a, b), e| (a.min(e.1), b.max(e.1)));
            for _ in 0..anon {
                edits.push((None, rng.random_range(lo..=hi)));
            }
            edits.sort_by_key(|e| (e.1, e.0));
            let page = format!("p{page_no:06}");
            page_no += 1;
            let mut words: Vec<(String, usize)> = Vec::new(); // (word, removal revision)
            let n_rev = edits.len();
            for (r, (slot, ts)) in edits.into_iter().enumerate() {
                words.retain(|(_, gone)| *gone > r);
                let z = slot.map_or(0.0, |k| contributors[slots[k].contributor].z[1]);
                let h = removal_hazard(z, cfg.ability_scale);
                for w in 0..WORDS_PER_EDIT {
                    let life = 1 + geometric(h, rng);
                    words.push((format!("{page}r{r}w{w}"), (r + life).min(n_rev + 1)));
                }
                let text: Vec<&str> = words.iter().map(|(w, _)| w.as_str()).collect();
                let user = slot.map_or(String::new(), |k| contributors[slots[k].contributor].id.clone());
                out.corpus.revisions.push(RevisionEvent {
                    page_id: page.clone(),
                    revision_index: r as u64,
                    timestamp: Some(ts),
                    user_id: user,
                    text: text.join(" "),
                });
                if let Some(k) = slot {
                    let c = &contributors[slots[k].contributor];
                    records.push((k, record(c, wiki_item_key(&page, r as u64), &slots[k], Medium::Wiki, leaves)));
                }
            }
        }
    }
    records.sort_by_key(|(k, _)| *k);
    out.corpus.contributions = records.into_iter().map(|(_, r)| r).collect();
}

/// Failures before the first success, success probability `p`.
fn geometric(p: f64, rng: &mut ChaCha8Rng) -> usize {
    if p <= 0.0 {
        return usize::MAX / 4;
    }
    let u: f64 = rng.random();
    ((1.0 - u).ln() / (1.0 - p).ln()).floor().min(1e9) as usize
}

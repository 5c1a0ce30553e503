//! Brute-force metric oracles shared by the oracle and acceptance targets.

use std::collections::{BTreeMap, BTreeSet};

use focusq_core::corpus::{AnswerEvent, AuthorName, CitationEdge, ItemMetadata, RevisionEvent};
use focusq_core::metrics::{
    citation_quality, focus_of, gamma_score, shannon_entropy, stirling_focus, word_survival_quality, Aggregation,
    CitationIndex, QuestionIndex, RevisionIndex, SelfCitationMode, StabilityFilter,
};
use focusq_core::taxonomy::{SimilarityMatrix, SimilaritySource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Randomized fixtures per metric.
pub const FIXTURES: u64 = 150;

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300) || a == b
}

fn random_shares(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
    let t: f64 = raw.iter().sum();
    raw.iter().map(|x| x / t).collect()
}

pub fn focus_matches_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..FIXTURES {
        let k = rng.random_range(1..9);
        let p = random_shares(&mut rng, k);
        let mut s = vec![vec![0.0; k]; k];
        for (i, row) in s.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if i == j { 1.0 } else { rng.random::<f64>() };
            }
        }
        let mut oracle = 0.0;
        for i in 0..k {
            for j in 0..k {
                oracle += s[i][j] * p[i] * p[j];
            }
        }
        let names: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
        let m = SimilarityMatrix::new(names.clone(), s.concat(), SimilaritySource::CoContributor).unwrap();
        assert!(close(stirling_focus(&p, &m).unwrap(), oracle, 1e-9));
        // named, sparse and shuffled input gives the same number
        let mut named: Vec<(String, f64)> = names.into_iter().zip(p.iter().copied()).collect();
        named.reverse();
        assert!(close(focus_of(&named, &m).unwrap(), oracle, 1e-9));
    }
}

pub fn entropy_matches_log2_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..FIXTURES {
        let k = rng.random_range(1..12);
        let mut p = random_shares(&mut rng, k);
        if k > 2 {
            p[0] = 0.0;
            let t: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= t);
        }
        let oracle: f64 = p
            .iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| -x * x.log2())
            .sum::<f64>()
            * std::f64::consts::LN_2;
        assert!(close(shannon_entropy(&p), oracle, 1e-9));
    }
}

pub fn gamma_matches_answer_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..FIXTURES {
        let users: Vec<String> = (0..6).map(|u| format!("u{u}")).collect();
        let mut answers = Vec::new();
        for q in 0..rng.random_range(1..25) {
            let mut who: Vec<&String> = users.iter().filter(|_| rng.random::<f64>() < 0.5).collect();
            if who.is_empty() {
                who.push(&users[0]);
            }
            let best = rng.random_range(0..who.len());
            for (i, u) in who.iter().enumerate() {
                answers.push(AnswerEvent {
                    question_id: format!("q{q}"),
                    answerer_id: u.to_string(),
                    category_id: "c".into(),
                    is_best: i == best,
                    timestamp: None,
                });
            }
        }
        let index = QuestionIndex::build(&answers);
        for u in &users {
            let mine: Vec<&str> = answers
                .iter()
                .filter(|a| &a.answerer_id == u)
                .map(|a| a.question_id.as_str())
                .collect();
            if mine.is_empty() {
                continue;
            }
            let (mut observed, mut expected) = (0.0, 0.0);
            for q in &mine {
                let a_k = answers.iter().filter(|a| a.question_id == *q).count() as f64;
                expected += 1.0 / a_k;
                if answers.iter().any(|a| a.question_id == *q && &a.answerer_id == u && a.is_best) {
                    observed += 1.0;
                }
            }
            let oracle = (observed - expected) / expected;
            assert!(close(gamma_score(u, &mine, &index).unwrap(), oracle, 1e-9));
        }
    }
}

fn citation_oracle(
    items: &[ItemMetadata],
    edges: &[CitationEdge],
    drop_self: bool,
    mine: &[&str],
    aggregation: Aggregation,
) -> Option<f64> {
    let find = |id: &str| items.iter().find(|i| i.item_id == id);
    let count = |item: &ItemMetadata| {
        edges
            .iter()
            .filter(|e| e.cited_item == item.item_id)
            .filter(|e| {
                !drop_self
                    || find(&e.citing_item).is_none_or(|c| {
                        !c.authors.iter().any(|a| item.authors.iter().any(|b| a.last == b.last))
                    })
            })
            .count() as f64
    };
    let cohort_mean = |cat: &str, year: i32| {
        let members: Vec<&ItemMetadata> = items
            .iter()
            .filter(|i| i.year == year && i.categories.iter().any(|c| c == cat))
            .collect();
        members.iter().map(|i| count(i)).sum::<f64>() / members.len() as f64
    };
    let mut scored = Vec::new();
    for id in mine {
        let item = find(id)?;
        let cats: BTreeSet<&String> = item.categories.iter().collect();
        if cats.is_empty() {
            continue;
        }
        let expected = cats.iter().map(|c| cohort_mean(c, item.year)).sum::<f64>() / cats.len() as f64;
        if expected > 0.0 {
            scored.push((count(item), expected));
        }
    }
    if scored.is_empty() {
        return None;
    }
    Some(match aggregation {
        Aggregation::MeanOfRatios => scored.iter().map(|(c, e)| c / e).sum::<f64>() / scored.len() as f64,
        Aggregation::RatioOfMeans => {
            scored.iter().map(|s| s.0).sum::<f64>() / scored.iter().map(|s| s.1).sum::<f64>()
        }
    })
}

pub fn citation_quality_matches_cohort_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let lasts = ["Ng", "Ortiz", "Park", "Quinn"];
    for f in 0..FIXTURES {
        let n = rng.random_range(2..16);
        let items: Vec<ItemMetadata> = (0..n)
            .map(|i| {
                let mut cats: Vec<String> = vec![format!("c{}", rng.random_range(0..3))];
                if rng.random::<f64>() < 0.3 {
                    cats.push(format!("c{}", rng.random_range(0..3)));
                }
                ItemMetadata {
                    item_id: format!("i{i}"),
                    year: 2000 + rng.random_range(0..2),
                    categories: cats,
                    authors: vec![AuthorName::new(lasts[rng.random_range(0..lasts.len())], "A")],
                }
            })
            .collect();
        let mut edges = BTreeSet::new();
        for _ in 0..rng.random_range(0..3 * n) {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n + 2));
            if a != b {
                edges.insert(CitationEdge {
                    citing_item: format!("i{a}"),
                    cited_item: format!("i{b}"),
                });
            }
        }
        let edges: Vec<CitationEdge> = edges.into_iter().collect();
        let drop = f % 2 == 1;
        let mode = if drop { SelfCitationMode::DropSameLastName } else { SelfCitationMode::Keep };
        let index = CitationIndex::build(&items, &edges, mode, 1);
        let mine: Vec<String> = (0..rng.random_range(1..n + 1)).map(|i| format!("i{i}")).collect();
        let mine: Vec<&str> = mine.iter().map(String::as_str).collect();
        for agg in [Aggregation::MeanOfRatios, Aggregation::RatioOfMeans] {
            let got = citation_quality(&mine, &index, agg).ok();
            let want = citation_oracle(&items, &edges, drop, &mine, agg);
            match (got, want) {
                (Some(g), Some(w)) => assert!(close(g, w, 1e-9), "fixture {f}: {g} vs {w}"),
                (g, w) => assert_eq!(g, w, "fixture {f}"),
            }
        }
    }
}

fn page_fixture(rng: &mut ChaCha8Rng, page: &str, users: &[&str]) -> Vec<RevisionEvent> {
    let n = rng.random_range(1..9);
    let vocab: Vec<String> = (0..14).map(|w| format!("w{w}")).collect();
    (0..n)
        .map(|r| {
            let words: Vec<&str> = vocab
                .iter()
                .filter(|_| rng.random::<f64>() < 0.4)
                .map(String::as_str)
                .collect();
            let user = if rng.random::<f64>() < 0.2 { "" } else { users[rng.random_range(0..users.len())] };
            RevisionEvent {
                page_id: page.to_string(),
                revision_index: r as u64,
                timestamp: Some(1000 * r as i64),
                user_id: user.to_string(),
                text: format!("{} {}", words.join(" ").to_uppercase(), if r % 2 == 0 { "W1" } else { "" }),
            }
        })
        .collect()
}

pub fn word_survival_matches_type_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let users = ["ann", "bo", "cy"];
    for _ in 0..FIXTURES {
        let pages: Vec<Vec<RevisionEvent>> = (0..rng.random_range(1..4))
            .map(|p| page_fixture(&mut rng, &format!("p{p}"), &users))
            .collect();
        let grouped: BTreeMap<&str, Vec<&RevisionEvent>> =
            pages.iter().map(|revs| (revs[0].page_id.as_str(), revs.iter().collect())).collect();
        // dump far in the future so every page is stable
        let index = RevisionIndex::build(&grouped, 10_000_000, &StabilityFilter::default());
        let types = |t: &str| -> BTreeSet<String> {
            t.split(|c: char| !c.is_alphanumeric())
                .filter(|w| !w.is_empty())
                .map(str::to_lowercase)
                .collect()
        };
        for u in users {
            let (mut new, mut kept) = (0usize, 0usize);
            for revs in &pages {
                let last = types(&revs[revs.len() - 1].text);
                let mut introduced = BTreeSet::new();
                for (r, rev) in revs.iter().enumerate() {
                    if rev.user_id != u {
                        continue;
                    }
                    for w in types(&rev.text) {
                        if revs[..r].iter().all(|e| !types(&e.text).contains(&w)) {
                            introduced.insert(w);
                        }
                    }
                }
                new += introduced.len();
                kept += introduced.iter().filter(|w| last.contains(*w)).count();
            }
            match word_survival_quality(&index, u) {
                Ok(q) => assert!(close(q, kept as f64 / new as f64, 1e-9)),
                Err(_) => assert_eq!(new, 0),
            }
        }
    }
}

//! Library results against independent brute-force implementations.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use common::close;
use focusq_core::analysis::{binned_curve, ols, ols_quality_regression, pearson, temporal_change};
use focusq_core::corpus::{ContributionRecord, Medium};
use focusq_core::metrics::{ContributorProfile, Proportions};
use focusq_core::taxonomy::{SimilarityMatrix, SimilaritySource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn focus_matches_double_sum() {
    common::focus_matches_double_sum();
}

#[test]
fn entropy_matches_log2_form() {
    common::entropy_matches_log2_form();
}

#[test]
fn gamma_matches_answer_scan() {
    common::gamma_matches_answer_scan();
}

#[test]
fn citation_quality_matches_cohort_scan() {
    common::citation_quality_matches_cohort_scan();
}

#[test]
fn word_survival_matches_type_scan() {
    common::word_survival_matches_type_scan();
}

fn t_two_sided_oracle(t: f64, df: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let d = StudentsT::new(0.0, 1.0, df).unwrap();
    2.0 * d.cdf(-t.abs())
}

#[test]
fn pearson_fixed_ten_points() {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
    let y = [2.3, 1.9, 3.8, 4.1, 3.9, 6.2, 5.8, 7.7, 8.1, 9.4];
    let (mx, my) = (5.5, y.iter().sum::<f64>() / 10.0);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let rho = sxy / (sxx * syy).sqrt();
    let t = rho * (8.0 / (1.0 - rho * rho)).sqrt();
    let c = pearson(&x, &y).unwrap();
    assert!(close(c.rho, rho, 1e-12));
    assert!(close(c.p_value, t_two_sided_oracle(t, 8.0), 1e-9));
    // frozen from an independent scientific-stack run on the same vectors
    assert!(close(c.rho, 0.972_742_697_790_229_6, 1e-12), "{}", c.rho);
    assert!(close(c.p_value, 2.336_861_073_327_965e-6, 1e-8), "{}", c.p_value);
}

#[test]
fn ols_noiseless_plant() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let f: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
    let n: Vec<usize> = (0..200).map(|_| rng.random_range(10..500)).collect();
    let profiles: Vec<ContributorProfile> = f
        .iter()
        .zip(&n)
        .enumerate()
        .map(|(i, (&f, &n))| ContributorProfile {
            contributor_id: format!("c{i}"),
            medium: Medium::Articles,
            proportions: Vec::new(),
            quantity: n,
            focus: f,
            entropy: 0.0,
            quality: Some(0.5 * f + 0.1 * (n as f64).ln() + 2.0),
        })
        .collect();
    let reg = ols_quality_regression(&profiles, false).unwrap();
    let (bf, _) = reg.coefficient("focus").unwrap();
    let (bn, _) = reg.coefficient("log_quantity").unwrap();
    assert!((bf - 0.5).abs() < 1e-9 && (bn - 0.1).abs() < 1e-9);
    assert!((reg.coefficient("intercept").unwrap().0 - 2.0).abs() < 1e-9);
    assert!((reg.r2 - 1.0).abs() < 1e-12);
}

#[test]
fn ols_noisy_plant_within_three_se() {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let rows = 2000;
    let x1: Vec<f64> = (0..rows).map(|_| rng.random::<f64>()).collect();
    let x2: Vec<f64> = (0..rows).map(|_| rng.random_range(2.0..6.0)).collect();
    let y: Vec<f64> = x1
        .iter()
        .zip(&x2)
        .map(|(a, b)| {
            let e: f64 = StandardNormal.sample(&mut rng);
            0.5 * a + 0.1 * b + 2.0 + e
        })
        .collect();
    let reg = ols(&y, &[("focus", x1), ("log_quantity", x2)]).unwrap();
    for (term, plant) in [("intercept", 2.0), ("focus", 0.5), ("log_quantity", 0.1)] {
        let (b, se) = reg.coefficient(term).unwrap();
        assert!((b - plant).abs() < 3.0 * se, "{term}: {b} ± {se}");
    }
}

#[test]
fn bins_match_hand_binning() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let x: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..3.0)).collect();
    let y: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
    let n_bins = 7;
    let t = binned_curve(&x, &y, n_bins, 5).unwrap();
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w = (hi - lo) / n_bins as f64;
    let mut expected = Vec::new();
    let mut suppressed = 0;
    for b in 0..n_bins {
        let left = lo + b as f64 * w;
        let right = if b + 1 == n_bins { f64::INFINITY } else { left + w };
        let ys: Vec<f64> = x.iter().zip(&y).filter(|(xi, _)| **xi >= left && **xi < right).map(|(_, yi)| *yi).collect();
        if ys.is_empty() {
            continue;
        }
        if ys.len() < 5 {
            suppressed += ys.len();
            continue;
        }
        let m = ys.iter().sum::<f64>() / ys.len() as f64;
        let sd = (ys.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (ys.len() - 1) as f64).sqrt();
        expected.push((left + w / 2.0, m, sd / (ys.len() as f64).sqrt(), ys.len()));
    }
    assert_eq!(t.bins.len(), expected.len());
    assert_eq!(t.suppressed, suppressed);
    for (b, e) in t.bins.iter().zip(&expected) {
        assert!(close(b.center, e.0, 1e-12) && close(b.mean, e.1, 1e-12) && close(b.stderr, e.2, 1e-12));
        assert_eq!(b.count, e.3);
    }
}

fn timeline(id: &str, cats: &[&str]) -> Vec<ContributionRecord> {
    cats.iter()
        .enumerate()
        .map(|(t, c)| ContributionRecord::uniform(id, format!("{id}-{t}"), Some(t as i64), Medium::Articles, &[c]))
        .collect()
}

#[test]
fn temporal_identical_halves_and_single_category() {
    let a = timeline("a", &["x", "y", "x", "y"]);
    let b = timeline("b", &["x", "x", "x", "x", "x"]);
    let c = timeline("c", &["x", "y", "y", "x", "x", "x"]);
    let grouped: BTreeMap<&str, Vec<&ContributionRecord>> =
        [("a", a.iter().collect()), ("b", b.iter().collect()), ("c", c.iter().collect())].into();
    let ids: BTreeSet<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let sim = SimilarityMatrix::new(vec!["x".into(), "y".into()], vec![1.0, 0.3, 0.6, 1.0], SimilaritySource::CoContributor).unwrap();
    let props = Proportions::Categories { level: 1 };
    let f = |id: &str, r: &[&ContributionRecord]| props.of(id, r);
    let t = temporal_change(&grouped, &ids, &f, &sim, None).unwrap();
    let by: HashMap<&str, f64> = t.deltas.iter().map(|d| (d.contributor_id.as_str(), d.delta_focus)).collect();
    assert_eq!(by["a"], 0.0);
    assert_eq!(by["b"], 0.0);
    assert!(by["c"] != 0.0);
}

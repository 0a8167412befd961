// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;

use super::*;

fn scores(s: &[f64], l: &[u8]) -> LabeledScores {
    LabeledScores::new(s.to_vec(), l.to_vec(), "c").unwrap()
}

/// Quadratic pair-counting oracle.
fn auroc_pairs(s: &[f64], l: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if l[i] == 1 && l[j] == 0 {
                den += 1.0;
                if s[i] > s[j] {
                    num += 1.0;
                } else if s[i] == s[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

#[test]
fn auroc_reference_values() {
    assert_eq!(auroc(&scores(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1])).unwrap(), 0.75);
    assert_eq!(auroc(&scores(&[0.5, 0.5, 0.5, 0.5], &[0, 1, 0, 1])).unwrap(), 0.5);
    assert_eq!(auroc(&scores(&[0.9, 0.8, 0.1], &[0, 0, 1])).unwrap(), 0.0);
    assert!(matches!(
        auroc(&scores(&[0.1, 0.2], &[1, 1])),
        Err(Error::UndefinedMetric(_))
    ));
}

#[test]
fn labeled_scores_validation() {
    assert!(LabeledScores::new(vec![0.1], vec![0, 1], "x").is_err());
    assert!(LabeledScores::new(vec![0.1], vec![2], "x").is_err());
    assert!(LabeledScores::new(vec![f64::NAN], vec![1], "x").is_err());
}

#[test]
fn bootstrap_is_deterministic_and_brackets_point() {
    let s: Vec<f64> = (0..60).map(|i| ((i * 37) % 60) as f64 / 60.0).collect();
    let l: Vec<u8> = (0..60).map(|i| ((i * 37) % 60 > 25) as u8).collect();
    let mut l = l;
    l[0] ^= 1;
    l[59] ^= 1;
    let d = scores(&s, &l);
    let a = bootstrap_ci(&d, 300, 7).unwrap();
    let b = bootstrap_ci(&d, 300, 7).unwrap();
    assert_eq!(a, b);
    let p = auroc(&d).unwrap();
    assert!(a.0 <= p && p <= a.1, "{a:?} vs {p}");
    assert_ne!(a, bootstrap_ci(&d, 300, 8).unwrap());
    assert!(bootstrap_ci(&d, 0, 7).is_err());
}

#[test]
fn format_ci_layout() {
    assert_eq!(format_ci(0.9, 0.871, 0.925), "0.90 [0.87 - 0.93]");
}

#[test]
fn ks_reference_example() {
    // ECDF gap 1/3 at x = 2; sample sizes 3 and 3.
    let r = ks_two_sample(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
    assert!((r.statistic - 1.0 / 3.0).abs() < 1e-12);
    assert!(r.p_value > 0.9);
    let same = ks_two_sample(&[0.1, 0.2, 0.2], &[0.2, 0.1, 0.2]).unwrap();
    assert_eq!(same.statistic, 0.0);
    assert_eq!(same.p_value, 1.0);
    let apart = ks_two_sample(&[0.0; 200], &[1.0; 200]).unwrap();
    assert_eq!(apart.statistic, 1.0);
    assert!(apart.p_value < 1e-10);
}

#[test]
fn kolmogorov_q_known_points() {
    // Tabulated values of the Kolmogorov distribution.
    assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-4);
    assert!((kolmogorov_q(1.2238) - 0.10).abs() < 1e-4);
    assert!((kolmogorov_q(0.8276) - 0.50).abs() < 1e-4);
    // Both series agree near the switch point.
    let below = kolmogorov_q(1.18 - 1e-9);
    let above = kolmogorov_q(1.18);
    assert!((below - above).abs() < 1e-9);
}

#[test]
fn rounding_is_half_away_from_zero() {
    assert_eq!(round_half_away(0.005, 2), 0.01);
    assert_eq!(round_half_away(-0.005, 2), -0.01);
    assert_eq!(round_half_away(0.125, 2), 0.13);
    assert_eq!(round_half_away(0.994, 2), 0.99);
    assert_eq!(round_half_away(0.995, 2), 1.0);
    assert_eq!(round_half_away(2.5, 0), 3.0);
    assert_eq!(round_half_away(0.3, 2), 0.3);
    assert_eq!(round_outputs(&[0.1234, 0.5678], 2), vec![0.12, 0.57]);
}

#[test]
fn brier_reference_values() {
    assert_eq!(brier(&[1.0, 0.0], &[1, 0]).unwrap(), 0.0);
    assert_eq!(brier(&[0.5, 0.5], &[1, 0]).unwrap(), 0.25);
    assert!((brier(&[0.9, 0.2, 0.6], &[1, 0, 0]).unwrap() - (0.01 + 0.04 + 0.36) / 3.0).abs() < 1e-15);
    assert!(brier(&[1.5], &[1]).is_err());
    assert!(brier(&[], &[]).is_err());
}

fn synthetic(n: usize, shift: f64) -> (Vec<Vec<f64>>, Vec<Vec<u8>>) {
    let labels: Vec<Vec<u8>> = (0..n).map(|i| vec![(i % 3 == 0) as u8, (i % 2) as u8]).collect();
    let probs = (0..n)
        .map(|i| {
            let base = ((i * 7919) % 1000) as f64 / 1000.0;
            vec![
                (0.6 * base + 0.4 * labels[i][0] as f64 + shift).clamp(0.0, 1.0),
                (0.5 * base + 0.3 * labels[i][1] as f64 + shift).clamp(0.0, 1.0),
            ]
        })
        .collect();
    (probs, labels)
}

#[test]
fn compare_identical_runs_accepts() {
    let (p, l) = synthetic(300, 0.0);
    let names = vec!["a".to_string(), "b".to_string()];
    let opts = CompareOptions { n_boot: 200, seed: 1 };
    let r = compare_runs(&p, &p, &l, &names, None, opts).unwrap();
    assert!(r.all_accepted());
    assert_eq!(r.max_delta_auroc(), 0.0);
    assert_eq!(r.mean_abs_diff, 0.0);
    for c in &r.classes {
        assert_eq!(c.ks_statistic, 0.0);
        assert_eq!(c.auroc_insecure, c.auroc_secure);
    }
    let table = r.to_table();
    assert!(table.contains("Test Statistic (K-S)"));
    assert!(table.contains("Accepted"));
}

#[test]
fn compare_shifted_runs_rejects() {
    let (p, l) = synthetic(300, 0.0);
    let (q, _) = synthetic(300, 0.3);
    let names = vec!["a".to_string(), "b".to_string()];
    let cost = CostSummary::new(300, 30.0, 0.3, 3_000_000, 9000);
    let r = compare_runs(&p, &q, &l, &names, Some(cost), CompareOptions { n_boot: 100, seed: 2 }).unwrap();
    assert!(!r.all_accepted());
    assert!(r.classes.iter().all(|c| c.verdict == Verdict::Rejected));
    assert!(r.to_table().contains("100.0x"));
}

#[test]
fn compare_rejects_misaligned_inputs() {
    let (p, l) = synthetic(10, 0.0);
    let names = vec!["a".to_string(), "b".to_string()];
    let opts = CompareOptions::default();
    assert!(matches!(
        compare_runs(&p, &p[..9], &l, &names, None, opts),
        Err(Error::Misaligned(_))
    ));
    assert!(matches!(
        compare_runs(&p, &p, &l, &names[..1], None, opts),
        Err(Error::Misaligned(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn auroc_matches_pair_oracle(
        data in proptest::collection::vec((0u8..20, 0u8..2), 2..60)
    ) {
        let s: Vec<f64> = data.iter().map(|d| d.0 as f64 / 20.0).collect();
        let l: Vec<u8> = data.iter().map(|d| d.1).collect();
        prop_assume!(l.contains(&0) && l.contains(&1));
        let got = auroc(&scores(&s, &l)).unwrap();
        prop_assert!((got - auroc_pairs(&s, &l)).abs() < 1e-12);
    }

    #[test]
    fn ks_statistic_matches_brute_force(
        a in proptest::collection::vec(0u8..10, 1..40),
        b in proptest::collection::vec(0u8..10, 1..40),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        // largest ECDF gap over every observed value, in exact integers
        let below = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as i64;
        let (na, nb) = (a.len() as i64, b.len() as i64);
        let gap = a.iter().chain(&b).map(|&x| (below(&a, x) * nb - below(&b, x) * na).abs()).max().unwrap();
        let r = ks_two_sample(&a, &b).unwrap();
        prop_assert_eq!(r.statistic, gap as f64 / (na * nb) as f64);
        prop_assert!((0.0..=1.0).contains(&r.p_value));
    }

    #[test]
    fn kolmogorov_q_is_monotone(a in 0.01f64..3.0, b in 0.01f64..3.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(kolmogorov_q(lo) >= kolmogorov_q(hi) - 1e-12);
    }

    #[test]
    fn rounding_agrees_with_decimal_reference(cents in -100_000i64..100_000, tail in 0u32..10) {
        // v = cents/100 + tail/1000; rounding to 2 places moves by tail >= 5.
        let v: f64 = format!("{}{}.{:02}{}", if cents < 0 { "-" } else { "" }, cents.abs() / 100, cents.abs() % 100, tail).parse().unwrap();
        let up = tail >= 5;
        let mag = cents.abs() + up as i64;
        let want: f64 = format!("{}{}.{:02}", if cents < 0 { "-" } else { "" }, mag / 100, mag % 100).parse().unwrap();
        prop_assert_eq!(round_half_away(v, 2), want);
    }
}

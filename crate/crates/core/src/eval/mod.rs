// SPDX-License-Identifier: Apache-2.0

//! Statistics for comparing secure and plaintext inference runs.
//!
//! * [`auroc`]: normalized Mann-Whitney concordance, ties count one half.
//! * [`bootstrap_ci`]: percentile interval over resampled (score, label)
//!   pairs; resample `i` draws from its own ChaCha stream of the seed.
//! * [`ks_two_sample`]: exact ECDF gap with the asymptotic Kolmogorov
//!   p-value and the small-sample correction on `lambda`.
//! * [`round_outputs`]: half-away-from-zero decimal rounding.
//! * [`brier`] and [`compare_runs`], which assembles an
//!   [`EquivalenceReport`].

mod report;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub use report::{
    compare_runs, ClassReport, CompareOptions, CostSummary, EquivalenceReport, IntervalEstimate,
    ReferenceFigures, Verdict,
};

/// Significance level for the K-S decision.
pub const KS_ALPHA: f64 = 0.05;
pub const DEFAULT_N_BOOT: usize = 1000;
/// Redraws allowed for a single-class bootstrap resample before skipping it.
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScores {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub class_name: String,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>, class_name: impl Into<String>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::InvalidInput("labels must be 0 or 1".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("scores must be finite".into()));
        }
        Ok(LabeledScores {
            scores,
            labels,
            class_name: class_name.into(),
        })
    }
}

/// AUROC from indices into `scores`/`labels` (with repetition).
fn auroc_indexed(scores: &[f64], labels: &[u8], idx: &[usize]) -> Option<f64> {
    let mut pairs: Vec<(f64, u8)> = idx.iter().map(|&i| (scores[i], labels[i])).collect();
    let n_pos = pairs.iter().filter(|p| p.1 == 1).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // For each positive: negatives strictly below plus half the tied ones.
    let mut concordant = 0.0f64;
    let mut neg_below = 0usize;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        let (mut pos_tied, mut neg_tied) = (0usize, 0usize);
        while j < pairs.len() && pairs[j].0 == pairs[i].0 {
            if pairs[j].1 == 1 {
                pos_tied += 1;
            } else {
                neg_tied += 1;
            }
            j += 1;
        }
        concordant += pos_tied as f64 * (neg_below as f64 + 0.5 * neg_tied as f64);
        neg_below += neg_tied;
        i = j;
    }
    Some(concordant / (n_pos as f64 * n_neg as f64))
}

/// `P(score+ > score-) + 0.5 P(tie)`.
pub fn auroc(data: &LabeledScores) -> Result<f64> {
    let idx: Vec<usize> = (0..data.scores.len()).collect();
    auroc_indexed(&data.scores, &data.labels, &idx).ok_or_else(|| {
        Error::UndefinedMetric(format!(
            "AUROC of `{}` needs both positive and negative labels",
            data.class_name
        ))
    })
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// 95% percentile bootstrap interval of the AUROC.
pub fn bootstrap_ci(data: &LabeledScores, n_boot: usize, seed: u64) -> Result<(f64, f64)> {
    auroc(data)?;
    if n_boot == 0 {
        return Err(Error::InvalidInput("n_boot must be at least 1".into()));
    }
    let n = data.scores.len();
    let stats: Vec<Option<f64>> = (0..n_boot)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            for _ in 0..MAX_REDRAWS {
                let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                if let Some(a) = auroc_indexed(&data.scores, &data.labels, &idx) {
                    return Some(a);
                }
            }
            None
        })
        .collect();
    let skipped = stats.iter().filter(|s| s.is_none()).count();
    if skipped > 0 {
        log::warn!(
            "bootstrap for `{}`: skipped {skipped} of {n_boot} resamples with a single class",
            data.class_name
        );
    }
    let mut vals: Vec<f64> = stats.into_iter().flatten().collect();
    if vals.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "every bootstrap resample of `{}` had a single class",
            data.class_name
        )));
    }
    vals.sort_by(f64::total_cmp);
    Ok((percentile(&vals, 0.025), percentile(&vals, 0.975)))
}

/// `"0.90 [0.87 - 0.93]"`.
pub fn format_ci(point: f64, lo: f64, hi: f64) -> String {
    let r = |v: f64| round_half_away(v, 2);
    format!("{:.2} [{:.2} - {:.2}]", r(point), r(lo), r(hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function `Q(lambda) = 2 sum (-1)^(j-1) exp(-2 j^2 lambda^2)`.
/// Below `lambda = 1.18` the equivalent theta-function series is used; it
/// converges fast where the alternating one does not.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let q = if lambda < 1.18 {
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let s: f64 = [1.0f64, 3.0, 5.0, 7.0, 9.0]
            .iter()
            .map(|&j| y.powf(j * j))
            .sum();
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for j in 1..=100 {
            let j = j as f64;
            let term = (-2.0 * j * j * lambda * lambda).exp();
            sum += sign * term;
            if term < 1e-17 {
                break;
            }
            sign = -sign;
        }
        2.0 * sum
    };
    q.clamp(0.0, 1.0)
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("K-S test needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("K-S samples must not contain NaN".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    // The gap |i/na - j/nb| is tracked as the integer |i*nb - j*na| and
    // divided once, so equal rational gaps give bit-identical statistics.
    let mut gap = 0u128;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        gap = gap.max((i as u128 * nb as u128).abs_diff(j as u128 * na as u128));
    }
    let d = gap as f64 / (na as u128 * nb as u128) as f64;
    let ne = (na as f64 * nb as f64) / (na + nb) as f64;
    let sq = ne.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q(lambda),
    })
}

/// Half-away-from-zero rounding of the shortest decimal representation of
/// `v`, so `0.005` rounds to `0.01` although its binary value is below it.
pub fn round_half_away(v: f64, decimals: u32) -> f64 {
    if !v.is_finite() {
        return v;
    }
    let text = format!("{}", v.abs());
    let (int_part, frac_part) = match text.split_once('.') {
        Some((i, f)) => (i.to_string(), f.to_string()),
        None => (text.clone(), String::new()),
    };
    let d = decimals as usize;
    if frac_part.len() <= d {
        return v;
    }
    let mut digits: Vec<u8> = int_part.bytes().chain(frac_part[..d].bytes()).map(|c| c - b'0').collect();
    if frac_part.as_bytes()[d] >= b'5' {
        let mut k = digits.len();
        loop {
            if k == 0 {
                digits.insert(0, 1);
                break;
            }
            k -= 1;
            if digits[k] == 9 {
                digits[k] = 0;
            } else {
                digits[k] += 1;
                break;
            }
        }
    }
    let split = digits.len() - d;
    let s: String = digits.iter().map(|&c| (c + b'0') as char).collect();
    let out = format!("{}.{}0", &s[..split], &s[split..]);
    let r: f64 = out.parse().expect("digits form a number");
    if v.is_sign_negative() {
        -r
    } else {
        r
    }
}

pub fn round_outputs(values: &[f64], decimals: u32) -> Vec<f64> {
    values.iter().map(|&v| round_half_away(v, decimals)).collect()
}

/// Mean squared difference between probabilities and binary outcomes.
pub fn brier(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} probabilities but {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::UndefinedMetric("Brier score of an empty sample".into()));
    }
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || labels.iter().any(|&l| l > 1) {
        return Err(Error::InvalidInput(
            "probabilities must lie in [0, 1] and labels in {0, 1}".into(),
        ));
    }
    Ok(probs
        .iter()
        .zip(labels)
        .map(|(&p, &l)| (p - l as f64).powi(2))
        .sum::<f64>()
        / probs.len() as f64)
}

#[cfg(test)]
mod tests;

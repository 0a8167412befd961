// SPDX-License-Identifier: Apache-2.0

//! Secure-versus-plaintext equivalence reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{auroc, bootstrap_ci, brier, format_ci, ks_two_sample, round_half_away, round_outputs, LabeledScores, DEFAULT_N_BOOT, KS_ALPHA};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accepted,
    Rejected,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Accepted => "Accepted",
            Verdict::Rejected => "Rejected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

impl IntervalEstimate {
    pub fn formatted(&self) -> String {
        format_ci(self.point, self.lo, self.hi)
    }

    pub fn overlaps(&self, other: &IntervalEstimate) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_name: String,
    pub auroc_insecure: IntervalEstimate,
    pub auroc_secure: IntervalEstimate,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub verdict: Verdict,
    /// Rounded to three decimals.
    pub brier_insecure: f64,
    pub brier_secure: f64,
}

impl ClassReport {
    pub fn delta_auroc(&self) -> f64 {
        (self.auroc_secure.point - self.auroc_insecure.point).abs()
    }
}

/// Published costs of secure inference with a much larger network and an
/// OT-based protocol stack. Reported for context; nothing here aims to
/// reproduce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFigures {
    pub seconds_per_image: f64,
    pub gigabytes_per_image: f64,
    pub slowdown_vs_insecure: f64,
    pub note: String,
}

impl Default for ReferenceFigures {
    fn default() -> Self {
        ReferenceFigures {
            seconds_per_image: 900.0,
            gigabytes_per_image: 60.0,
            slowdown_vs_insecure: 3000.0,
            note: "published per-image figures for a far larger network; context only, not targets".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub inferences: usize,
    pub secure_wall_time: f64,
    pub insecure_wall_time: f64,
    /// `secure_wall_time / insecure_wall_time`.
    pub wall_time_ratio: f64,
    pub bytes_total: u64,
    pub bytes_per_inference: f64,
    pub rounds_per_inference: f64,
    pub reference: ReferenceFigures,
}

impl CostSummary {
    pub fn new(
        inferences: usize,
        secure_wall_time: f64,
        insecure_wall_time: f64,
        bytes_total: u64,
        rounds_total: u64,
    ) -> Self {
        let per = |v: f64| if inferences == 0 { 0.0 } else { v / inferences as f64 };
        CostSummary {
            inferences,
            secure_wall_time,
            insecure_wall_time,
            wall_time_ratio: if insecure_wall_time > 0.0 {
                secure_wall_time / insecure_wall_time
            } else {
                f64::INFINITY
            },
            bytes_total,
            bytes_per_inference: per(bytes_total as f64),
            rounds_per_inference: per(rounds_total as f64),
            reference: ReferenceFigures::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub classes: Vec<ClassReport>,
    /// Mean absolute difference of raw outputs over all images and classes.
    pub mean_abs_diff: f64,
    pub max_abs_diff: f64,
    pub n_boot: usize,
    pub seed: u64,
    pub cost: Option<CostSummary>,
}

impl EquivalenceReport {
    pub fn all_accepted(&self) -> bool {
        self.classes.iter().all(|c| c.verdict == Verdict::Accepted)
    }

    pub fn max_delta_auroc(&self) -> f64 {
        self.classes.iter().map(ClassReport::delta_auroc).fold(0.0, f64::max)
    }

    /// Plain-text tables: AUROC with intervals and the K-S decision, then
    /// Brier scores, then costs.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let name_w = self
            .classes
            .iter()
            .map(|c| c.class_name.len())
            .max()
            .unwrap_or(0)
            .max("Class".len());
        let _ = writeln!(
            out,
            "{:<name_w$} | {:<20} | {:<20} | {:<20} | {:<19} | Null hypothesis",
            "Class", "Insecure inference", "Secure inference", "Test Statistic (K-S)", "p-Value (K-S test)"
        );
        let _ = writeln!(out, "{}", "-".repeat(name_w + 110));
        for c in &self.classes {
            let _ = writeln!(
                out,
                "{:<name_w$} | {:<20} | {:<20} | {:<20.4} | {:<19.4} | {}",
                c.class_name,
                c.auroc_insecure.formatted(),
                c.auroc_secure.formatted(),
                c.ks_statistic,
                c.ks_p_value,
                c.verdict.as_str()
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<name_w$} | {:<20} | {:<20}",
            "Brier score", "Insecure inference", "Secure inference"
        );
        let _ = writeln!(out, "{}", "-".repeat(name_w + 46));
        for c in &self.classes {
            let _ = writeln!(
                out,
                "{:<name_w$} | {:<20.3} | {:<20.3}",
                c.class_name, c.brier_insecure, c.brier_secure
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "mean |secure - insecure| = {:.3e}, max = {:.3e}",
            self.mean_abs_diff, self.max_abs_diff
        );
        if let Some(cost) = &self.cost {
            let _ = writeln!(
                out,
                "cost: {} inferences, secure {:.3} s, insecure {:.6} s, ratio {:.1}x, {:.0} bytes and {:.0} rounds per inference",
                cost.inferences,
                cost.secure_wall_time,
                cost.insecure_wall_time,
                cost.wall_time_ratio,
                cost.bytes_per_inference,
                cost.rounds_per_inference
            );
            let r = &cost.reference;
            let _ = writeln!(
                out,
                "reference (not a target): {} s and {} GB per image, {}x slower than insecure; {}",
                r.seconds_per_image, r.gigabytes_per_image, r.slowdown_vs_insecure, r.note
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompareOptions {
    pub n_boot: usize,
    pub seed: u64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            n_boot: DEFAULT_N_BOOT,
            seed: 0,
        }
    }
}

fn column(rows: &[Vec<f64>], c: usize) -> Vec<f64> {
    rows.iter().map(|r| r[c]).collect()
}

/// Builds the per-class comparison. `insecure[i][c]` and `secure[i][c]` are
/// probabilities for image `i` and class `c`; `labels[i][c]` the truth.
pub fn compare_runs(
    insecure: &[Vec<f64>],
    secure: &[Vec<f64>],
    labels: &[Vec<u8>],
    class_names: &[String],
    cost: Option<CostSummary>,
    opts: CompareOptions,
) -> Result<EquivalenceReport> {
    let n = insecure.len();
    if secure.len() != n || labels.len() != n {
        return Err(Error::Misaligned(format!(
            "{} insecure rows, {} secure rows, {} label rows",
            n,
            secure.len(),
            labels.len()
        )));
    }
    if n == 0 {
        return Err(Error::Misaligned("no images to compare".into()));
    }
    let width = class_names.len();
    for (i, ((a, b), l)) in insecure.iter().zip(secure).zip(labels).enumerate() {
        if a.len() != width || b.len() != width || l.len() != width {
            return Err(Error::Misaligned(format!(
                "image {i}: {} insecure, {} secure, {} labels for {width} classes",
                a.len(),
                b.len(),
                l.len()
            )));
        }
    }
    let mut classes = Vec::with_capacity(width);
    for (c, name) in class_names.iter().enumerate() {
        let lab: Vec<u8> = labels.iter().map(|r| r[c]).collect();
        let ins = column(insecure, c);
        let sec = column(secure, c);
        let estimate = |scores: Vec<f64>| -> Result<IntervalEstimate> {
            let data = LabeledScores::new(scores, lab.clone(), name.clone())?;
            let point = auroc(&data)?;
            let (lo, hi) = bootstrap_ci(&data, opts.n_boot, opts.seed)?;
            Ok(IntervalEstimate { point, lo, hi })
        };
        let auroc_insecure = estimate(ins.clone())?;
        let auroc_secure = estimate(sec.clone())?;
        let ks = ks_two_sample(&round_outputs(&ins, 2), &round_outputs(&sec, 2))?;
        classes.push(ClassReport {
            class_name: name.clone(),
            auroc_insecure,
            auroc_secure,
            ks_statistic: ks.statistic,
            ks_p_value: ks.p_value,
            verdict: if ks.p_value >= KS_ALPHA {
                Verdict::Accepted
            } else {
                Verdict::Rejected
            },
            brier_insecure: round_half_away(brier(&ins, &lab)?, 3),
            brier_secure: round_half_away(brier(&sec, &lab)?, 3),
        });
    }
    let diffs: Vec<f64> = insecure
        .iter()
        .flatten()
        .zip(secure.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .collect();
    Ok(EquivalenceReport {
        classes,
        mean_abs_diff: diffs.iter().sum::<f64>() / diffs.len() as f64,
        max_abs_diff: diffs.iter().copied().fold(0.0, f64::max),
        n_boot: opts.n_boot,
        seed: opts.seed,
        cost,
    })
}

//! Seed-level summaries and the paired signed-rank test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest number of non-zero pairs handled by exact enumeration.
pub const EXACT_LIMIT: usize = 12;

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("mean of an empty set".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedRank {
    pub p_value: f64,
    /// Sum of ranks of positive differences `a - b`.
    pub w_plus: f64,
    /// Pairs left after dropping zero differences.
    pub n_effective: usize,
    pub method: PValueMethod,
    /// All differences were zero.
    pub degenerate: bool,
}

fn average_ranks(abs: &[f64]) -> Vec<f64> {
    let n = abs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| abs[i].total_cmp(&abs[j]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
///
/// Zero differences are dropped and tied magnitudes share their average
/// rank. Up to [`EXACT_LIMIT`] remaining pairs the null distribution is
/// enumerated exactly; beyond that a tie-corrected normal approximation with
/// continuity correction is used.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<SignedRank> {
    wilcoxon_with(a, b, None)
}

/// As [`wilcoxon_signed_rank`] with the p-value path forced.
pub fn wilcoxon_with(a: &[f64], b: &[f64], force: Option<PValueMethod>) -> Result<SignedRank> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            op: "wilcoxon_signed_rank",
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "signed-rank test needs at least 5 pairs, got {}",
            a.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("signed-rank test on non-finite values".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(SignedRank {
            p_value: 1.0,
            w_plus: 0.0,
            n_effective: 0,
            method: PValueMethod::Exact,
            degenerate: true,
        });
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let method = force.unwrap_or(if n <= EXACT_LIMIT { PValueMethod::Exact } else { PValueMethod::Normal });
    let p_value = match method {
        PValueMethod::Exact => exact_p(&ranks, w_plus),
        PValueMethod::Normal => normal_p(&ranks, w_plus),
    };
    Ok(SignedRank {
        p_value,
        w_plus,
        n_effective: n,
        method,
        degenerate: false,
    })
}

fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    // doubled ranks are integers even with half-rank ties
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0_f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let observed = (2.0 * w_plus).round() as i64;
    let dev = (2 * observed - total as i64).abs();
    let extreme: f64 = counts
        .iter()
        .enumerate()
        .filter(|(s, _)| (2 * *s as i64 - total as i64).abs() >= dev)
        .map(|(_, c)| c)
        .sum();
    (extreme / 2f64.powi(ranks.len() as i32)).min(1.0)
}

fn normal_p(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie += t * t * t - t;
        i = j + 1;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let dev = ((w_plus - mean).abs() - 0.5).max(0.0);
    let z = dev / var.sqrt();
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    (2.0 * std.sf(z)).min(1.0)
}

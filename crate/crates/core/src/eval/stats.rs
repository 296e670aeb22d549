//! Summary statistics of angular errors.
//!
//! All statistics are computed on the ascending-sorted list. Sums run in
//! sorted order. A mean over a block of sorted values is clamped to the
//! block's first and last value, and the overall mean to
//! `[best25, worst25]`; both hold exactly in real arithmetic, so the clamp
//! only removes rounding excursions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub trimean: f64,
    pub best25: f64,
    pub worst25: f64,
}

/// Published results of the reference method on the Gehler-Shi benchmark,
/// in degrees: mean, median, trimean, best 25%, worst 25%.
pub const PUBLISHED_GEHLER_SHI: [f64; 5] = [2.16, 1.47, 1.61, 0.37, 5.12];

/// Median of a sorted non-empty slice; mean of the two middle values for
/// even length.
pub fn sorted_median(s: &[f64]) -> f64 {
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Lower and upper Tukey hinges of a sorted non-empty slice. For odd length
/// the median belongs to both halves.
pub fn tukey_hinges(s: &[f64]) -> (f64, f64) {
    let n = s.len();
    (sorted_median(&s[..n.div_ceil(2)]), sorted_median(&s[n / 2..]))
}

fn block_mean(block: &[f64]) -> f64 {
    let sum: f64 = block.iter().sum();
    (sum / block.len() as f64).clamp(block[0], block[block.len() - 1])
}

/// `(q1 + 2 q2 + q3) / 4` written around `q2`, so equal quartiles give
/// `q2` exactly.
pub fn trimean_of(q1: f64, q2: f64, q3: f64) -> f64 {
    (q2 + ((q1 - q2) + (q3 - q2)) / 4.0).clamp(q1, q3)
}

pub fn statistics(errors: &[f64]) -> Result<ErrorStats> {
    if errors.is_empty() {
        return Err(Error::Empty("error list"));
    }
    if let Some(bad) = errors.iter().find(|e| !e.is_finite() || **e < 0.0) {
        return Err(Error::Config(format!("invalid angular error {bad}")));
    }
    let mut s = errors.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let m = n.div_ceil(4);
    let best25 = block_mean(&s[..m]);
    let worst25 = block_mean(&s[n - m..]);
    let mean = block_mean(&s).clamp(best25, worst25);
    let median = sorted_median(&s);
    let (q1, q3) = tukey_hinges(&s);
    Ok(ErrorStats {
        count: n,
        mean,
        median,
        trimean: trimean_of(q1, median, q3),
        best25,
        worst25,
    })
}

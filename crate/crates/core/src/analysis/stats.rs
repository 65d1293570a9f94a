//! Mann–Whitney U rank-sum test.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest `n_a * n_b` for which the null distribution is enumerated exactly.
pub const EXACT_LIMIT: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// `U` of the first sample: pairs `(a, b)` with `a > b`, ties counting half.
    pub u: f64,
    /// Continuity-corrected normal score of `u`; positive when the first
    /// sample tends to be larger.
    pub z: f64,
    /// `P(U <= u)` under the null.
    pub p_less: f64,
    /// `P(U >= u)` under the null.
    pub p_greater: f64,
    pub p_two_sided: f64,
    pub exact: bool,
}

/// Midranks (1-based) of the pooled sample.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Exact null distribution of twice the rank sum of `n_a` draws without
/// replacement from `doubled` (integer doubled midranks).
fn doubled_rank_sum_counts(doubled: &[usize], n_a: usize) -> Vec<f64> {
    let max_sum: usize = doubled.iter().sum();
    // counts[j][s]: subsets of size j with sum s
    let mut counts = vec![vec![0.0f64; max_sum + 1]; n_a + 1];
    counts[0][0] = 1.0;
    for &r in doubled {
        for j in (1..=n_a).rev() {
            for s in (r..=max_sum).rev() {
                let prev = counts[j - 1][s - r];
                if prev != 0.0 {
                    counts[j][s] += prev;
                }
            }
        }
    }
    counts.swap_remove(n_a)
}

/// Two-sample rank-sum test with midranks for ties. The null distribution is
/// enumerated exactly when `n_a * n_b <= EXACT_LIMIT`; otherwise a normal
/// approximation with tie-corrected variance and continuity correction is
/// used. If every value is identical the test is uninformative: `p = 1`.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty(
            "mann_whitney_u needs two non-empty samples".into(),
        ));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mann_whitney_u input".into()));
    }
    let (n_a, n_b) = (a.len(), b.len());
    let n = n_a + n_b;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let r_a: f64 = ranks[..n_a].iter().sum();
    let u = r_a - (n_a * (n_a + 1)) as f64 / 2.0;

    let mean = (n_a * n_b) as f64 / 2.0;
    let mut tie_sum = 0.0;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    for group in sorted.chunk_by(|x, y| x == y) {
        let t = group.len() as f64;
        tie_sum += t * t * t - t;
    }
    let var = (n_a * n_b) as f64 / 12.0 * ((n + 1) as f64 - tie_sum / (n * (n - 1)).max(1) as f64);
    if var <= 0.0 {
        return Ok(MannWhitney {
            u,
            z: 0.0,
            p_less: 1.0,
            p_greater: 1.0,
            p_two_sided: 1.0,
            exact: n_a * n_b <= EXACT_LIMIT,
        });
    }
    let sd = var.sqrt();
    let dev = u - mean;
    let z = dev.signum() * (dev.abs() - 0.5).max(0.0) / sd;

    if n_a * n_b <= EXACT_LIMIT {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let counts = doubled_rank_sum_counts(&doubled, n_a);
        let total: f64 = counts.iter().sum();
        let obs = (2.0 * r_a).round() as usize;
        let le: f64 = counts[..=obs].iter().sum();
        let ge: f64 = counts[obs..].iter().sum();
        let (p_less, p_greater) = (le / total, ge / total);
        return Ok(MannWhitney {
            u,
            z,
            p_less,
            p_greater,
            p_two_sided: (2.0 * p_less.min(p_greater)).min(1.0),
            exact: true,
        });
    }

    let phi = |x: f64| 0.5 * erfc(-x / std::f64::consts::SQRT_2);
    let p_less = phi((dev + 0.5) / sd).min(1.0);
    let p_greater = phi(-(dev - 0.5) / sd).min(1.0);
    Ok(MannWhitney {
        u,
        z,
        p_less,
        p_greater,
        p_two_sided: erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0),
        exact: false,
    })
}

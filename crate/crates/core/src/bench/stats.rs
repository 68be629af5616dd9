//! Gap metrics and the one-sided Wilcoxon signed-rank test (exact by sign
//! enumeration for small N, tie-corrected normal approximation with
//! continuity correction above).

use super::BenchError;
use statrs::distribution::{ContinuousCDF, Normal};

/// Relative gap `(obj_a - obj_b) / obj_b * 100`; negative means method A is
/// better.
pub fn gap(obj_a: f64, obj_b: f64) -> Result<f64, BenchError> {
    if !(obj_b > 0.0) {
        return Err(BenchError::NonpositiveReference(obj_b));
    }
    Ok((obj_a - obj_b) / obj_b * 100.0)
}

/// `t_a / t_b`; above 1 means method A is more expensive.
pub fn time_ratio(t_a: f64, t_b: f64) -> Result<f64, BenchError> {
    if !(t_b > 0.0) {
        return Err(BenchError::NonpositiveReference(t_b));
    }
    Ok(t_a / t_b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PValueMethod {
    /// Exact for N <= 20, normal approximation above.
    Auto,
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of negative differences (method A better).
    pub w_statistic: f64,
    /// One-sided p-value for the alternative "A is better than B".
    pub p_value: f64,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// Differences remaining after dropping zeros.
    pub n_used: usize,
    pub exact: bool,
}

/// One-sided Wilcoxon signed-rank test over paired differences `A - B`.
/// Zeros are dropped (counted as ties); the remaining absolute differences
/// are ranked with midranks; the statistic is the rank sum of the negative
/// differences, and the p-value is `P(W >= w)` under the null.
pub fn wilcoxon_one_sided(diffs: &[f64]) -> Result<WilcoxonResult, BenchError> {
    wilcoxon_one_sided_with(diffs, PValueMethod::Auto)
}

pub fn wilcoxon_one_sided_with(
    diffs: &[f64],
    method: PValueMethod,
) -> Result<WilcoxonResult, BenchError> {
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let ties = diffs.len() - nonzero.len();
    if nonzero.is_empty() {
        return Err(BenchError::AllZeroDifferences { ties });
    }
    let n = nonzero.len();
    let wins = nonzero.iter().filter(|&&d| d < 0.0).count();
    let losses = n - wins;

    // midranks of |d|
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| nonzero[i].abs().partial_cmp(&nonzero[j].abs()).unwrap());
    let mut ranks = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nonzero[order[j + 1]].abs() == nonzero[order[i]].abs() {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = midrank;
        }
        i = j + 1;
    }

    let w_neg: f64 = (0..n).filter(|&i| nonzero[i] < 0.0).map(|i| ranks[i]).sum();

    let use_exact = match method {
        PValueMethod::Exact => true,
        PValueMethod::NormalApprox => false,
        PValueMethod::Auto => n <= 20,
    };
    let p_value = if use_exact {
        exact_upper_tail(&ranks, w_neg)
    } else {
        normal_upper_tail(&ranks, w_neg)
    };

    Ok(WilcoxonResult {
        w_statistic: w_neg,
        p_value,
        wins,
        losses,
        ties,
        n_used: n,
        exact: use_exact,
    })
}

/// `P(W >= w_obs)` by counting sign assignments with a subset-sum table
/// over doubled ranks (midranks are multiples of one half).
fn exact_upper_tail(ranks: &[f64], w_obs: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|&r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    for &r in &doubled {
        for v in (r..=total).rev() {
            counts[v] += counts[v - r];
        }
    }
    let threshold = (2.0 * w_obs).round() as usize;
    let favorable: u64 = counts[threshold.min(total)..].iter().sum();
    favorable as f64 / (1u64 << ranks.len()) as f64
}

/// Tie-corrected normal approximation with continuity correction.
fn normal_upper_tail(ranks: &[f64], w_obs: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    // tie groups share equal midranks
    let mut sorted = ranks.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let variance = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let sigma = variance.sqrt();
    if sigma == 0.0 {
        return if w_obs <= mean { 1.0 } else { 0.0 };
    }
    let z = (w_obs - 0.5 - mean) / sigma;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    1.0 - normal.cdf(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gap_identities() {
        assert_relative_eq!(gap(100.0, 100.0).unwrap(), 0.0);
        assert_relative_eq!(gap(99.0, 100.0).unwrap(), -1.0);
        assert!(matches!(
            gap(1.0, 0.0),
            Err(BenchError::NonpositiveReference(_))
        ));
    }

    #[test]
    fn gap_antisymmetry() {
        let (a, b) = (87.3, 92.1);
        let g_ab = gap(a, b).unwrap();
        let g_ba = gap(b, a).unwrap();
        assert_relative_eq!(
            (1.0 + g_ab / 100.0) * (1.0 + g_ba / 100.0),
            1.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn time_ratio_identities() {
        assert_relative_eq!(time_ratio(5.0, 5.0).unwrap(), 1.0);
        assert_relative_eq!(time_ratio(10.0, 5.0).unwrap(), 2.0);
        assert!(matches!(
            time_ratio(1.0, 0.0),
            Err(BenchError::NonpositiveReference(_))
        ));
    }

    #[test]
    fn all_negative_six_gives_the_closed_form() {
        let diffs = vec![-3.0, -1.0, -4.0, -1.5, -5.0, -9.0];
        let r = wilcoxon_one_sided(&diffs).unwrap();
        assert_eq!(r.wins, 6);
        assert_eq!(r.losses, 0);
        assert_eq!(r.ties, 0);
        assert_relative_eq!(r.w_statistic, 21.0);
        assert_relative_eq!(r.p_value, 0.015625, epsilon = 1e-12);
        assert!(r.exact);
    }

    #[test]
    fn all_negative_eight_gives_the_closed_form() {
        let diffs: Vec<f64> = (1..=8).map(|i| -(i as f64)).collect();
        let r = wilcoxon_one_sided(&diffs).unwrap();
        assert_relative_eq!(r.p_value, 1.0 / 256.0, epsilon = 1e-12);
        assert_relative_eq!(r.p_value, 0.00390625, epsilon = 1e-12);
    }

    #[test]
    fn all_zero_differences_error_counts_ties() {
        let diffs = vec![0.0; 5];
        match wilcoxon_one_sided(&diffs).unwrap_err() {
            BenchError::AllZeroDifferences { ties } => assert_eq!(ties, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zeros_are_dropped_and_counted() {
        let diffs = vec![-1.0, 0.0, -2.0, 0.0, 3.0];
        let r = wilcoxon_one_sided(&diffs).unwrap();
        assert_eq!(r.ties, 2);
        assert_eq!(r.n_used, 3);
        assert_eq!(r.wins, 2);
        assert_eq!(r.losses, 1);
    }

    /// Brute-force enumeration over sign masks, independent of the DP path.
    fn brute_force_p(diffs: &[f64]) -> f64 {
        let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
        let n = nonzero.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| nonzero[i].abs().partial_cmp(&nonzero[j].abs()).unwrap());
        let mut ranks = vec![0.0f64; n];
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && nonzero[order[j + 1]].abs() == nonzero[order[i]].abs() {
                j += 1;
            }
            for &idx in &order[i..=j] {
                ranks[idx] = (i + j) as f64 / 2.0 + 1.0;
            }
            i = j + 1;
        }
        let w_obs: f64 = (0..n).filter(|&i| nonzero[i] < 0.0).map(|i| ranks[i]).sum();
        let mut favorable = 0u64;
        for mask in 0u64..(1 << n) {
            let w: f64 = (0..n)
                .filter(|&i| mask & (1 << i) != 0)
                .map(|i| ranks[i])
                .sum();
            if w >= w_obs - 1e-12 {
                favorable += 1;
            }
        }
        favorable as f64 / (1u64 << n) as f64
    }

    #[test]
    fn exact_p_matches_mask_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let diffs: Vec<f64> = (0..10).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let r = wilcoxon_one_sided(&diffs).unwrap();
            assert_relative_eq!(r.p_value, brute_force_p(&diffs), epsilon = 1e-12);
        }
    }

    #[test]
    fn exact_handles_midrank_ties() {
        let diffs = vec![-2.0, 2.0, -2.0, -1.0, 3.0, -3.0];
        let r = wilcoxon_one_sided(&diffs).unwrap();
        assert_relative_eq!(r.p_value, brute_force_p(&diffs), epsilon = 1e-12);
    }

    #[test]
    fn normal_approximation_tracks_exact_at_n15() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let diffs: Vec<f64> = (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let exact = wilcoxon_one_sided_with(&diffs, PValueMethod::Exact).unwrap();
            let approx = wilcoxon_one_sided_with(&diffs, PValueMethod::NormalApprox).unwrap();
            assert!(
                (exact.p_value - approx.p_value).abs() < 0.01,
                "exact {} vs approx {}",
                exact.p_value,
                approx.p_value
            );
        }
    }

    #[test]
    fn large_n_uses_the_normal_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let diffs: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0) - 0.3).collect();
        let r = wilcoxon_one_sided(&diffs).unwrap();
        assert!(!r.exact);
        assert!(r.p_value > 0.0 && r.p_value < 1.0);
    }
}

//! Conditional prior probabilities and prior simulation for the CRP/DP and
//! IBP building blocks.
//!
//! Conventions used throughout the samplers:
//!
//! * Per-element feature probabilities use the leave-one-out count: `r_k`
//!   excludes the row currently being resampled, with `N` the total row
//!   count. This is the standard uncollapsed convention whose stationary
//!   distribution is the IBP.
//! * Binary-likelihood runs pin the feature columns to the data dimensions;
//!   those use the finite beta-Bernoulli form of the same probabilities
//!   (`pinned_*` functions) since the column count is fixed.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::matrix::SparseBinaryMatrix;
use crate::model::CategoryMode;

/// N-th harmonic number, H_0 = 0.
pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|i| 1.0 / i as f64).sum()
}

/// Cluster occupancy counts for a CRP conditional, excluding the row being
/// resampled. Every listed cluster must be occupied.
#[derive(Debug, Clone)]
pub struct CrpCounts {
    sizes: Vec<usize>,
}

impl CrpCounts {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidParameter(
                "crp cluster sizes must be at least one".into(),
            ));
        }
        Ok(CrpCounts { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }
}

/// CRP seating probabilities for one observation: entry j is proportional to
/// the j-th cluster's size, the final entry proportional to `alpha` for a new
/// cluster. Sums to one.
pub fn crp_conditional(counts: &CrpCounts, alpha: f64) -> Result<Vec<f64>> {
    if alpha <= 0.0 {
        return Err(Error::InvalidParameter(
            "crp concentration must be positive".into(),
        ));
    }
    let denom = counts.total() as f64 + alpha;
    let mut probs: Vec<f64> = counts.sizes.iter().map(|&s| s as f64 / denom).collect();
    probs.push(alpha / denom);
    Ok(probs)
}

/// Probability that a row contains an already-active feature column:
/// r_k / N, with r_k counted over the other rows.
pub fn ibp_existing_prob(r_k: usize, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "ibp needs at least one observation".into(),
        ));
    }
    if r_k > n {
        return Err(Error::InvalidParameter(format!(
            "feature usage {r_k} exceeds row count {n}"
        )));
    }
    Ok(r_k as f64 / n as f64)
}

/// Number of brand-new columns activated by the current row:
/// a Poisson(alpha / N) draw.
pub fn ibp_new_column_count<R: Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> Result<usize> {
    if alpha <= 0.0 {
        return Err(Error::InvalidParameter(
            "ibp concentration must be positive".into(),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidParameter(
            "ibp needs at least one observation".into(),
        ));
    }
    let rate = alpha / n as f64;
    let draw: f64 = Poisson::new(rate)
        .map_err(|e| Error::InvalidParameter(format!("poisson rate: {e}")))?
        .sample(rng);
    Ok(draw as usize)
}

/// Log of the exchangeable (left-ordered-class) IBP probability of a binary
/// matrix with no empty columns:
///
/// ```text
/// P([Z]) = alpha^K / (prod_h K_h!) * exp(-alpha H_N)
///          * prod_k (N - r_k)! (r_k - 1)! / N!
/// ```
///
/// where K_h counts identical columns. Invariant under row permutations.
pub fn ibp_log_prior(matrix: &SparseBinaryMatrix, alpha: f64) -> Result<f64> {
    if alpha <= 0.0 {
        return Err(Error::InvalidParameter(
            "ibp concentration must be positive".into(),
        ));
    }
    let n = matrix.n_rows();
    let k = matrix.n_cols();
    if matrix.empty_cols().first().is_some() {
        return Err(Error::InvalidModel(
            "ibp log prior requires a compacted matrix (no empty columns)".into(),
        ));
    }
    let mut log_p = k as f64 * alpha.ln() - alpha * harmonic(n);
    let ln_n_fact = ln_gamma(n as f64 + 1.0);
    for col in 0..k {
        let r = matrix.col_sum(col);
        log_p += ln_gamma((n - r) as f64 + 1.0) + ln_gamma(r as f64) - ln_n_fact;
    }
    // Multiplicities of identical columns.
    let mut cols: Vec<&[usize]> = (0..k).map(|c| matrix.col(c)).collect();
    cols.sort();
    let mut run = 1usize;
    for i in 1..=cols.len() {
        if i < cols.len() && cols[i] == cols[i - 1] {
            run += 1;
        } else {
            log_p -= ln_gamma(run as f64 + 1.0);
            run = 1;
        }
    }
    Ok(log_p)
}

/// Log CRP probability of a specific partition with the given block sizes:
/// alpha^L * Gamma(alpha) / Gamma(alpha + N) * prod_l (n_l - 1)!.
pub fn crp_log_prob(sizes: &[usize], alpha: f64) -> f64 {
    let n: usize = sizes.iter().sum();
    let l = sizes.len();
    l as f64 * alpha.ln() + ln_gamma(alpha) - ln_gamma(alpha + n as f64)
        + sizes.iter().map(|&s| ln_gamma(s as f64)).sum::<f64>()
}

/// Expected number of active categories after N observations. The ibp mode
/// is alpha * H_N exactly; the dp mode uses the exact expected-cluster sum
/// sum_{i=1..N} alpha / (alpha + i - 1) rather than the O(alpha log N)
/// asymptotic, because tests need exact values.
pub fn expected_category_count(alpha: f64, n: usize, mode: CategoryMode) -> f64 {
    match mode {
        CategoryMode::Ibp => alpha * harmonic(n),
        CategoryMode::Dp => (1..=n).map(|i| alpha / (alpha + (i - 1) as f64)).sum(),
    }
}

/// Simulates an IBP matrix over `n` rows via the sequential buffet process.
pub fn simulate_ibp<R: Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> SparseBinaryMatrix {
    let mut m = SparseBinaryMatrix::zeros(n, 0);
    for row in 0..n {
        for col in 0..m.n_cols() {
            let r = m.col_sum(col);
            if rng.random::<f64>() < r as f64 / (row + 1) as f64 {
                m.set(row, col, true);
            }
        }
        let fresh = Poisson::new(alpha / (row + 1) as f64)
            .expect("positive rate")
            .sample(rng) as usize;
        for _ in 0..fresh {
            let col = m.push_col();
            m.set(row, col, true);
        }
    }
    m
}

/// Simulates CRP cluster assignments for `n` observations.
pub fn simulate_crp<R: Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> Vec<usize> {
    let mut assignments = Vec::with_capacity(n);
    let mut sizes: Vec<usize> = Vec::new();
    for _ in 0..n {
        let total: usize = sizes.iter().sum();
        let denom = total as f64 + alpha;
        let u: f64 = rng.random::<f64>() * denom;
        let mut acc = 0.0;
        let mut chosen = sizes.len();
        for (j, &s) in sizes.iter().enumerate() {
            acc += s as f64;
            if u < acc {
                chosen = j;
                break;
            }
        }
        if chosen == sizes.len() {
            sizes.push(1);
        } else {
            sizes[chosen] += 1;
        }
        assignments.push(chosen);
    }
    assignments
}

/// Predictive draw of one additional IBP row given `matrix`'s existing rows:
/// existing column k is included with probability r_k / (rows + 1), plus a
/// Poisson(alpha / (rows + 1)) count of brand-new columns.
pub fn ibp_row_predictive<R: Rng + ?Sized>(
    matrix: &SparseBinaryMatrix,
    alpha: f64,
    rng: &mut R,
) -> (Vec<usize>, usize) {
    let rows = matrix.n_rows();
    let denom = (rows + 1) as f64;
    let existing: Vec<usize> = (0..matrix.n_cols())
        .filter(|&c| rng.random::<f64>() < matrix.col_sum(c) as f64 / denom)
        .collect();
    let fresh = Poisson::new(alpha / denom)
        .expect("positive rate")
        .sample(rng) as usize;
    (existing, fresh)
}

/// Finite beta-Bernoulli inclusion probability for pinned columns:
/// (a + r) / (a + 1 + n_other) with a = alpha / K. Used when the feature
/// columns are tied to the data dimensions and cannot grow.
pub fn pinned_existing_prob(r_other: usize, n_other: usize, alpha_per_col: f64) -> f64 {
    (alpha_per_col + r_other as f64) / (alpha_per_col + 1.0 + n_other as f64)
}

/// Log marginal probability of a pinned binary matrix under the finite
/// beta-Bernoulli model with per-column mass alpha / K.
pub fn pinned_log_marginal(matrix: &SparseBinaryMatrix, alpha: f64) -> f64 {
    let rows = matrix.n_rows() as f64;
    let k = matrix.n_cols();
    if k == 0 {
        return 0.0;
    }
    let a = alpha / k as f64;
    let ln_beta = |p: f64, q: f64| ln_gamma(p) + ln_gamma(q) - ln_gamma(p + q);
    (0..k)
        .map(|col| {
            let r = matrix.col_sum(col) as f64;
            ln_beta(a + r, rows - r + 1.0) - ln_beta(a, 1.0)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::SmallRng;
    use rand::SeedableRng;
    use statrs::function::gamma::digamma;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    #[test]
    fn crp_conditional_basic_values() {
        let counts = CrpCounts::new(vec![2, 1]).unwrap();
        let probs = crp_conditional(&counts, 1.0).unwrap();
        // Normalize (2, 1, 1) / 4.
        assert_eq!(probs, vec![0.5, 0.25, 0.25]);

        let empty = CrpCounts::new(vec![]).unwrap();
        assert_eq!(crp_conditional(&empty, 3.0).unwrap(), vec![1.0]);

        let single = CrpCounts::new(vec![5]).unwrap();
        let probs = crp_conditional(&single, 1e-4).unwrap();
        assert!((probs[0] - 0.99998).abs() < 1e-5);
        assert!((probs[1] - 2e-5).abs() < 1e-6);

        assert!(crp_conditional(&single, 0.0).is_err());
        assert!(CrpCounts::new(vec![1, 0]).is_err());
    }

    /// Enumerate all set partitions of {0..n-1}.
    fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
        let mut out: Vec<Vec<Vec<usize>>> = vec![vec![]];
        for item in 0..n {
            let mut next = Vec::new();
            for partition in &out {
                for b in 0..partition.len() {
                    let mut p = partition.clone();
                    p[b].push(item);
                    next.push(p);
                }
                let mut p = partition.clone();
                p.push(vec![item]);
                next.push(p);
            }
            out = next;
        }
        out
    }

    #[test]
    fn crp_partition_probabilities_sum_to_one_and_match_conditionals() {
        let alpha = 1.3;
        let partitions = set_partitions(4);
        assert_eq!(partitions.len(), 15);
        let total: f64 = partitions
            .iter()
            .map(|p| {
                let sizes: Vec<usize> = p.iter().map(Vec::len).collect();
                crp_log_prob(&sizes, alpha).exp()
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-12, "sum was {total}");

        // Cross-check the conditional against a ratio of partition
        // probabilities: observation 3 joining block j of {{0,1},{2}}.
        let counts = CrpCounts::new(vec![2, 1]).unwrap();
        let cond = crp_conditional(&counts, alpha).unwrap();
        let base: f64 = [vec![3usize, 1], vec![2, 2], vec![2, 1, 1]]
            .iter()
            .map(|sizes| crp_log_prob(sizes, alpha).exp())
            .sum();
        let joined_first = crp_log_prob(&[3, 1], alpha).exp() / base;
        let joined_second = crp_log_prob(&[2, 2], alpha).exp() / base;
        let new_block = crp_log_prob(&[2, 1, 1], alpha).exp() / base;
        assert!((cond[0] - joined_first).abs() < 1e-12);
        assert!((cond[1] - joined_second).abs() < 1e-12);
        assert!((cond[2] - new_block).abs() < 1e-12);
    }

    #[test]
    fn ibp_existing_prob_values() {
        assert_eq!(ibp_existing_prob(3, 10).unwrap(), 0.3);
        assert_eq!(ibp_existing_prob(0, 10).unwrap(), 0.0);
        assert_eq!(ibp_existing_prob(7, 7).unwrap(), 1.0);
        assert!(ibp_existing_prob(1, 0).is_err());
        assert!(ibp_existing_prob(8, 7).is_err());
    }

    #[test]
    fn ibp_new_column_count_monte_carlo() {
        let mut rng = SmallRng::seed_from_u64(7);
        let draws = 100_000usize;
        // alpha=2, N=1: mean should be 2 within 3 standard errors.
        let total: usize = (0..draws)
            .map(|_| ibp_new_column_count(2.0, 1, &mut rng).unwrap())
            .sum();
        let mean = total as f64 / draws as f64;
        let se = (2.0 / draws as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * se, "mean {mean}");

        // alpha=3, N=3: Poisson(1), variance near 1.
        let samples: Vec<f64> = (0..draws)
            .map(|_| ibp_new_column_count(3.0, 3, &mut rng).unwrap() as f64)
            .collect();
        let m = samples.iter().sum::<f64>() / draws as f64;
        let var = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws - 1) as f64;
        assert!((var - 1.0).abs() < 0.05, "variance {var}");

        // Degenerate rate: essentially always zero.
        assert_eq!(ibp_new_column_count(1e-12, 1, &mut rng).unwrap(), 0);
        assert!(ibp_new_column_count(0.0, 1, &mut rng).is_err());
    }

    #[test]
    fn ibp_log_prior_single_cell() {
        let m = SparseBinaryMatrix::from_entries(1, 1, &[(0, 0)]);
        let lp = ibp_log_prior(&m, 1.0).unwrap();
        assert!((lp - (-1.0)).abs() < 1e-12, "got {lp}");
    }

    #[test]
    fn ibp_log_prior_empty_matrix_is_poisson_zero() {
        for n in [1usize, 3, 10] {
            let m = SparseBinaryMatrix::zeros(n, 0);
            let alpha = 1.7;
            let lp = ibp_log_prior(&m, alpha).unwrap();
            assert!((lp + alpha * harmonic(n)).abs() < 1e-12);
        }
    }

    #[test]
    fn ibp_log_prior_one_row_matches_poisson_enumeration() {
        // With a single row, the number of dishes is Poisson(alpha) and the
        // matrix is determined by the count.
        let alpha = 0.8;
        for k in 0..6 {
            let ones: Vec<(usize, usize)> = (0..k).map(|c| (0, c)).collect();
            let m = SparseBinaryMatrix::from_entries(1, k, &ones);
            let lp = ibp_log_prior(&m, alpha).unwrap();
            let oracle = -alpha + k as f64 * alpha.ln() - ln_gamma(k as f64 + 1.0);
            assert!((lp - oracle).abs() < 1e-12, "k={k}: {lp} vs {oracle}");
        }
    }

    #[test]
    fn ibp_log_prior_invariant_under_row_permutation() {
        let mut rng = SmallRng::seed_from_u64(21);
        for _ in 0..50 {
            let m = simulate_ibp(1.5, 6, &mut rng);
            if m.n_cols() == 0 {
                continue;
            }
            let lp = ibp_log_prior(&m, 1.5).unwrap();
            // Reverse the row order.
            let n = m.n_rows();
            let permuted_entries: Vec<(usize, usize)> =
                m.entries().map(|(r, c)| (n - 1 - r, c)).collect();
            let permuted = SparseBinaryMatrix::from_entries(n, m.n_cols(), &permuted_entries);
            let lp2 = ibp_log_prior(&permuted, 1.5).unwrap();
            assert!((lp - lp2).abs() < 1e-10);
        }
    }

    #[test]
    fn ibp_log_prior_rejects_empty_columns() {
        let mut m = SparseBinaryMatrix::zeros(2, 1);
        m.set(0, 0, true);
        m.push_col();
        assert!(ibp_log_prior(&m, 1.0).is_err());
    }

    #[test]
    fn expected_category_count_values() {
        let ibp = expected_category_count(1.0, 3, CategoryMode::Ibp);
        assert!((ibp - (1.0 + 0.5 + 1.0 / 3.0)).abs() < 1e-12);
        assert_eq!(expected_category_count(1.0, 1, CategoryMode::Dp), 1.0);
    }

    #[test]
    fn expected_dp_cluster_count_matches_crp_simulation() {
        let mut rng = SmallRng::seed_from_u64(5);
        let (alpha, n, draws) = (2.0, 100usize, 10_000usize);
        let counts: Vec<f64> = (0..draws)
            .map(|_| {
                let assignments = simulate_crp(alpha, n, &mut rng);
                (*assignments.iter().max().unwrap() + 1) as f64
            })
            .collect();
        let mean = counts.iter().sum::<f64>() / draws as f64;
        let var =
            counts.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        let expected = expected_category_count(alpha, n, CategoryMode::Dp);
        assert!(
            (mean - expected).abs() < 3.0 * se,
            "mean {mean}, expected {expected}, se {se}"
        );
    }

    #[test]
    fn simulated_ibp_row_sums_are_poisson() {
        // Each row sum of an IBP draw is marginally Poisson(alpha); rows of
        // one matrix are correlated, so take a single row per draw and run a
        // chi-square goodness-of-fit over pooled bins. The last row is the
        // interesting one (it exercises exchangeability).
        let mut rng = SmallRng::seed_from_u64(13);
        let (alpha, n, draws) = (1.0, 8usize, 10_000usize);
        let mut histogram = vec![0usize; 12];
        let mut total_cols = Vec::with_capacity(draws);
        for _ in 0..draws {
            let m = simulate_ibp(alpha, n, &mut rng);
            let s = m.row_sum(n - 1).min(histogram.len() - 1);
            histogram[s] += 1;
            total_cols.push(m.n_cols() as f64);
        }
        let samples = draws as f64;
        let mut chi2 = 0.0;
        let mut pmf_tail = 1.0;
        for (s, &count) in histogram.iter().enumerate() {
            let pmf = if s + 1 == histogram.len() {
                pmf_tail
            } else {
                let p = (-alpha).exp() * alpha.powi(s as i32) / ln_gamma(s as f64 + 1.0).exp();
                pmf_tail -= p;
                p
            };
            let expected = samples * pmf;
            if expected > 5.0 {
                chi2 += (count as f64 - expected).powi(2) / expected;
            }
        }
        // ~5 effective bins; chi-square(5) stays below 25 except with
        // probability ~1e-4.
        assert!(chi2 < 25.0, "chi2 {chi2}");

        // Total column count is Poisson(alpha * H_N): check the mean.
        let mean_cols = total_cols.iter().sum::<f64>() / draws as f64;
        let expect_cols = alpha * harmonic(n);
        let se = (expect_cols / draws as f64).sqrt();
        assert!((mean_cols - expect_cols).abs() < 3.0 * se);
    }

    #[test]
    fn composed_prior_feature_count_matches_conditional_mean() {
        // Draw C from an IBP, then M from an IBP on the active categories;
        // N_f - alpha_m * H_{N_c} should average to zero, and the
        // unconditional mean must respect the Jensen bound
        // E[N_f] <= alpha_m * H(E[N_c]).
        let mut rng = SmallRng::seed_from_u64(99);
        let (alpha_c, alpha_m, n, draws) = (1.5, 1.0, 12usize, 10_000usize);
        let mut diffs = Vec::with_capacity(draws);
        let mut n_feats = Vec::with_capacity(draws);
        let mut n_cats = Vec::with_capacity(draws);
        for _ in 0..draws {
            let c = simulate_ibp(alpha_c, n, &mut rng);
            let l = c.n_cols();
            let m = simulate_ibp(alpha_m, l, &mut rng);
            let k = m.n_cols() as f64;
            diffs.push(k - alpha_m * harmonic(l));
            n_feats.push(k);
            n_cats.push(l as f64);
        }
        let mean_diff = diffs.iter().sum::<f64>() / draws as f64;
        let var = diffs.iter().map(|x| (x - mean_diff).powi(2)).sum::<f64>()
            / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        assert!(mean_diff.abs() < 3.0 * se, "diff {mean_diff}, se {se}");

        let mean_k = n_feats.iter().sum::<f64>() / draws as f64;
        let mean_l = n_cats.iter().sum::<f64>() / draws as f64;
        // H extended to the reals: H(x) = digamma(x + 1) + gamma. H is
        // concave, so Jensen gives E[H_{N_c}] <= H(E[N_c]).
        let bound = alpha_m * (digamma(mean_l + 1.0) + EULER_GAMMA);
        let se_k = {
            let var_k =
                n_feats.iter().map(|x| (x - mean_k).powi(2)).sum::<f64>() / (draws - 1) as f64;
            (var_k / draws as f64).sqrt()
        };
        assert!(mean_k <= bound + 3.0 * se_k, "mean {mean_k} > bound {bound}");
    }

    #[test]
    fn pinned_predictive_matches_beta_bernoulli() {
        // Beta(a, 1) prior with r ones in n_other rows: predictive is
        // (a + r) / (a + 1 + n_other).
        let p = pinned_existing_prob(3, 9, 0.5);
        assert!((p - 3.5 / 10.5).abs() < 1e-12);
        // The marginal of a single-column all-ones matrix is
        // prod_i (a + i - 1) / (a + i).
        let ones: Vec<(usize, usize)> = (0..4).map(|r| (r, 0)).collect();
        let m = SparseBinaryMatrix::from_entries(4, 1, &ones);
        let alpha = 2.0;
        let direct: f64 = (1..=4)
            .map(|i| ((alpha + i as f64 - 1.0) / (alpha + i as f64)).ln())
            .sum();
        assert!((pinned_log_marginal(&m, alpha) - direct).abs() < 1e-10);
    }
}

//! Observation models P(X | Z, params) and their conditional parameter
//! updates.
//!
//! Continuous data: X = Z * weights + noise, the weights carrying an
//! Exponential prior so every conditional is a truncated Gaussian. Binary
//! data: noisy tag detections with per-dimension false- and missed-detection
//! rates under Beta(1, 1) priors.
//!
//! Held-out and missing cells are excluded from every sum here; that is the
//! whole holdout mechanism.

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp, Gamma};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::matrix::SparseBinaryMatrix;
use crate::model::{DataKind, Dataset, FeatureState};

pub const LN_2PI: f64 = 1.837_877_066_409_345_4;

#[inline]
pub fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * LN_2PI
}

/// Log probability of one binary observation cell given its feature bit.
#[inline]
pub fn bernoulli_obs_logprob(x: bool, z: bool, false_detect: f64, miss_detect: f64) -> f64 {
    let p_one = if z { 1.0 - miss_detect } else { false_detect };
    if x {
        p_one.ln()
    } else {
        (1.0 - p_one).ln()
    }
}

/// Row means under the linear model: mean[n][d] = sum of weights over the
/// active features of row n.
pub fn linear_means(z: &SparseBinaryMatrix, weights: &[Vec<f64>], d: usize) -> Vec<Vec<f64>> {
    (0..z.n_rows())
        .map(|n| {
            let mut mean = vec![0.0; d];
            for &k in z.row(n) {
                for (m, w) in mean.iter_mut().zip(&weights[k]) {
                    *m += w;
                }
            }
            mean
        })
        .collect()
}

/// Log likelihood of the observed cells under the linear-Gaussian model.
pub fn loglik_continuous(
    data: &Dataset,
    z: &FeatureState,
    weights: &[Vec<f64>],
    noise_sd: f64,
) -> Result<f64> {
    if data.kind != DataKind::Continuous {
        return Err(Error::InvalidModel(
            "continuous likelihood on non-continuous data".into(),
        ));
    }
    if noise_sd <= 0.0 {
        return Err(Error::InvalidParameter("noise_sd must be positive".into()));
    }
    if weights.len() != z.entries.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "{} weight rows for {} features",
            weights.len(),
            z.entries.n_cols()
        )));
    }
    let d = data.d();
    let means = linear_means(&z.entries, weights, d);
    let mut total = 0.0;
    for n in 0..data.n() {
        for j in 0..d {
            if data.observed[(n, j)] {
                total += normal_logpdf(data.x[(n, j)], means[n][j], noise_sd);
            }
        }
    }
    Ok(total)
}

/// Log likelihood of the observed cells under the noisy-tag model. Features
/// coincide with data dimensions, so the feature count must equal D.
pub fn loglik_binary(
    data: &Dataset,
    z: &FeatureState,
    false_detect: &[f64],
    miss_detect: &[f64],
) -> Result<f64> {
    if data.kind != DataKind::Binary {
        return Err(Error::InvalidModel("binary likelihood on non-binary data".into()));
    }
    let d = data.d();
    if z.entries.n_cols() != d || false_detect.len() != d || miss_detect.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "binary likelihood needs K = D = {d}, got K = {}",
            z.entries.n_cols()
        )));
    }
    let mut total = 0.0;
    for n in 0..data.n() {
        for j in 0..d {
            if data.observed[(n, j)] {
                total += bernoulli_obs_logprob(
                    data.x[(n, j)] != 0.0,
                    z.entries.get(n, j),
                    false_detect[j],
                    miss_detect[j],
                );
            }
        }
    }
    Ok(total)
}

/// Draws from a Normal(mean, sd^2) conditioned on being nonnegative.
///
/// Inverse-CDF in the body; when the truncation point sits more than four
/// standard deviations above the mean, switch to Robert's exponential
/// rejection sampler, which stays accurate where the inverse CDF runs out of
/// floating-point room.
pub fn truncated_normal_nonneg<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    let a = -mean / sd; // standardised lower bound
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let z = if a < 4.0 {
        let lo = std_normal.cdf(a);
        let u = (lo + rng.random::<f64>() * (1.0 - lo)).min(1.0 - 1e-16);
        std_normal.inverse_cdf(u)
    } else {
        // Robert (1995): propose a + Exp(rate) with the optimal rate.
        let rate = (a + (a * a + 4.0).sqrt()) / 2.0;
        loop {
            let x = a + Exp::new(rate).unwrap().sample(rng);
            let accept = (-(x - rate) * (x - rate) / 2.0).exp();
            if rng.random::<f64>() < accept {
                break x;
            }
        }
    };
    (mean + sd * z).max(0.0)
}

/// One full Gibbs sweep over every weight entry. Each entry's conditional is
/// a nonnegative-truncated Gaussian; entries whose feature has no active
/// usage on observed cells are redrawn from the Exponential prior.
pub fn sample_a_conditional<R: Rng + ?Sized>(
    data: &Dataset,
    z: &FeatureState,
    weights: &mut [Vec<f64>],
    weight_rate: f64,
    noise_sd: f64,
    rng: &mut R,
) -> Result<()> {
    if data.kind != DataKind::Continuous {
        return Err(Error::InvalidModel(
            "weight updates only apply to continuous data".into(),
        ));
    }
    let d = data.d();
    let mut means = linear_means(&z.entries, weights, d);
    let prior = Exp::new(weight_rate)
        .map_err(|e| Error::InvalidParameter(format!("weight_rate: {e}")))?;
    let var = noise_sd * noise_sd;
    for k in 0..weights.len() {
        let users: Vec<usize> = z.entries.col(k).to_vec();
        for j in 0..d {
            let old = weights[k][j];
            let mut count = 0usize;
            let mut resid_sum = 0.0;
            for &n in &users {
                if data.observed[(n, j)] {
                    count += 1;
                    resid_sum += data.x[(n, j)] - means[n][j] + old;
                }
            }
            let new = if count == 0 {
                prior.sample(rng)
            } else {
                let c = count as f64;
                let post_mean = resid_sum / c - weight_rate * var / c;
                let post_sd = noise_sd / c.sqrt();
                truncated_normal_nonneg(post_mean, post_sd, rng)
            };
            weights[k][j] = new;
            for &n in &users {
                means[n][j] += new - old;
            }
        }
    }
    Ok(())
}

/// Conjugate Beta(1, 1) updates of the per-dimension detection rates,
/// counting observed cells only. Returns (false_detect, miss_detect).
pub fn sample_detection_rates<R: Rng + ?Sized>(
    data: &Dataset,
    z: &FeatureState,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if data.kind != DataKind::Binary {
        return Err(Error::InvalidModel(
            "detection rates only apply to binary data".into(),
        ));
    }
    let d = data.d();
    if z.entries.n_cols() != d {
        return Err(Error::DimensionMismatch(format!(
            "binary likelihood needs K = D = {d}, got K = {}",
            z.entries.n_cols()
        )));
    }
    let mut false_detect = Vec::with_capacity(d);
    let mut miss_detect = Vec::with_capacity(d);
    for j in 0..d {
        let mut on_hit = 0.0; // z=1, x=1
        let mut on_miss = 0.0; // z=1, x=0
        let mut off_hit = 0.0; // z=0, x=1
        let mut off_quiet = 0.0; // z=0, x=0
        for n in 0..data.n() {
            if !data.observed[(n, j)] {
                continue;
            }
            let x = data.x[(n, j)] != 0.0;
            match (z.entries.get(n, j), x) {
                (true, true) => on_hit += 1.0,
                (true, false) => on_miss += 1.0,
                (false, true) => off_hit += 1.0,
                (false, false) => off_quiet += 1.0,
            }
        }
        let miss = Beta::new(1.0 + on_miss, 1.0 + on_hit).unwrap().sample(rng);
        let fd = Beta::new(1.0 + off_hit, 1.0 + off_quiet).unwrap().sample(rng);
        miss_detect.push(miss);
        false_detect.push(fd);
    }
    Ok((false_detect, miss_detect))
}

/// Draws a fresh noise standard deviation: the precision gets a conjugate
/// Gamma update under a Gamma(1, 1) hyperprior, using observed-cell
/// residuals.
pub fn sample_noise_variance<R: Rng + ?Sized>(
    data: &Dataset,
    z: &FeatureState,
    weights: &[Vec<f64>],
    rng: &mut R,
) -> Result<f64> {
    if data.kind != DataKind::Continuous {
        return Err(Error::InvalidModel(
            "noise variance only applies to continuous data".into(),
        ));
    }
    let d = data.d();
    let means = linear_means(&z.entries, weights, d);
    let mut n_obs = 0usize;
    let mut rss = 0.0;
    for n in 0..data.n() {
        for j in 0..d {
            if data.observed[(n, j)] {
                n_obs += 1;
                let r = data.x[(n, j)] - means[n][j];
                rss += r * r;
            }
        }
    }
    let shape = 1.0 + n_obs as f64 / 2.0;
    let rate = 1.0 + rss / 2.0;
    let precision = Gamma::new(shape, 1.0 / rate).unwrap().sample(rng);
    Ok(1.0 / precision.sqrt())
}

/// Conjugate Gamma update of the weights' Exponential rate.
pub fn sample_weight_rate<R: Rng + ?Sized>(
    weights: &[Vec<f64>],
    gamma_shape: f64,
    gamma_rate: f64,
    rng: &mut R,
) -> f64 {
    let count = weights.iter().map(Vec::len).sum::<usize>() as f64;
    let total: f64 = weights.iter().flatten().sum();
    Gamma::new(gamma_shape + count, 1.0 / (gamma_rate + total))
        .unwrap()
        .sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeatureStorage;
    use ndarray::Array2;
    use rand::rngs::SmallRng;
    use rand::SeedableRng;

    fn feature_state(n: usize, k: usize, ones: &[(usize, usize)]) -> FeatureState {
        FeatureState {
            entries: SparseBinaryMatrix::from_entries(n, k, ones),
            storage: FeatureStorage::Derived,
        }
    }

    fn continuous_data(x: Array2<f64>) -> Dataset {
        Dataset::fully_observed(x, DataKind::Continuous).unwrap()
    }

    #[test]
    fn standard_normal_peak() {
        let data = continuous_data(Array2::zeros((1, 1)));
        let z = feature_state(1, 1, &[]);
        let weights = vec![vec![3.0]];
        let ll = loglik_continuous(&data, &z, &weights, 1.0).unwrap();
        assert!((ll - (-0.9189385332046727)).abs() < 1e-12);
    }

    #[test]
    fn zero_residual_at_half_sd() {
        let data = continuous_data(Array2::from_elem((1, 1), 2.0));
        let z = feature_state(1, 1, &[(0, 0)]);
        let weights = vec![vec![2.0]];
        let ll = loglik_continuous(&data, &z, &weights, 0.5).unwrap();
        assert!((ll - (-0.22579135264472741)).abs() < 1e-10);
    }

    #[test]
    fn continuous_loglik_matches_double_loop_oracle() {
        let mut rng = SmallRng::seed_from_u64(17);
        for _ in 0..20 {
            let (n, d, k) = (4, 3, 2);
            let x = Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 4.0 - 2.0);
            let mut observed = Array2::from_elem((n, d), true);
            observed[(1, 2)] = false;
            let data = Dataset::new(x.clone(), observed.clone(), DataKind::Continuous).unwrap();
            let mut ones = Vec::new();
            for i in 0..n {
                for j in 0..k {
                    if rng.random_bool(0.5) {
                        ones.push((i, j));
                    }
                }
            }
            let z = feature_state(n, k, &ones);
            let weights: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
                .collect();
            let sd = 0.7;
            let ll = loglik_continuous(&data, &z, &weights, sd).unwrap();

            // Naive per-cell oracle over a dense copy.
            let mut oracle = 0.0;
            for i in 0..n {
                for j in 0..d {
                    if !observed[(i, j)] {
                        continue;
                    }
                    let mut mean = 0.0;
                    for f in 0..k {
                        if z.entries.get(i, f) {
                            mean += weights[f][j];
                        }
                    }
                    let resid: f64 = x[(i, j)] - mean;
                    oracle += -(resid * resid) / (2.0 * sd * sd)
                        - (sd * (2.0 * std::f64::consts::PI).sqrt()).ln();
                }
            }
            assert!((ll - oracle).abs() < 1e-10);
        }
    }

    #[test]
    fn loglik_is_additive_over_cells() {
        let mut rng = SmallRng::seed_from_u64(23);
        let (n, d, k) = (3, 3, 2);
        let x = Array2::from_shape_fn((n, d), |_| rng.random::<f64>());
        let data = continuous_data(x.clone());
        let z = feature_state(n, k, &[(0, 0), (2, 1)]);
        let weights = vec![vec![0.5, 0.2, 0.1], vec![0.3, 0.9, 0.4]];
        let full = loglik_continuous(&data, &z, &weights, 1.0).unwrap();

        let mut observed = Array2::from_elem((n, d), true);
        observed[(2, 1)] = false;
        let masked = Dataset::new(x.clone(), observed, DataKind::Continuous).unwrap();
        let partial = loglik_continuous(&masked, &z, &weights, 1.0).unwrap();
        let cell = normal_logpdf(x[(2, 1)], 0.9, 1.0);
        assert!((full - partial - cell).abs() < 1e-12);
    }

    #[test]
    fn loglik_unchanged_by_unused_feature() {
        let data = continuous_data(Array2::from_elem((2, 2), 1.0));
        let z = feature_state(2, 1, &[(0, 0)]);
        let weights = vec![vec![1.0, 0.5]];
        let base = loglik_continuous(&data, &z, &weights, 1.0).unwrap();

        let mut z2 = z.clone();
        z2.entries.push_col();
        let mut weights2 = weights.clone();
        weights2.push(vec![9.0, 9.0]);
        let with_unused = loglik_continuous(&data, &z2, &weights2, 1.0).unwrap();
        assert_eq!(base, with_unused);
    }

    #[test]
    fn loglik_rejects_bad_sigma() {
        let data = continuous_data(Array2::zeros((1, 1)));
        let z = feature_state(1, 0, &[]);
        assert!(loglik_continuous(&data, &z, &[], 0.0).is_err());
    }

    #[test]
    fn binary_loglik_cell_values() {
        // x=1, z=1 contributes ln(1 - miss); x=1, z=0 contributes ln(false).
        assert!((bernoulli_obs_logprob(true, true, 0.05, 0.1) - 0.9f64.ln()).abs() < 1e-12);
        assert!((bernoulli_obs_logprob(true, false, 0.05, 0.1) - 0.05f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn binary_loglik_matches_oracle() {
        let mut rng = SmallRng::seed_from_u64(31);
        let (n, d) = (3, 3);
        let x = Array2::from_shape_fn((n, d), |_| f64::from(rng.random_bool(0.5)));
        let data = Dataset::fully_observed(x.clone(), DataKind::Binary).unwrap();
        let mut ones = Vec::new();
        for i in 0..n {
            for j in 0..d {
                if rng.random_bool(0.5) {
                    ones.push((i, j));
                }
            }
        }
        let z = feature_state(n, d, &ones);
        let fd = vec![0.05, 0.1, 0.2];
        let md = vec![0.1, 0.3, 0.15];
        let ll = loglik_binary(&data, &z, &fd, &md).unwrap();
        let mut oracle = 0.0;
        for i in 0..n {
            for j in 0..d {
                let p1 = if z.entries.get(i, j) { 1.0 - md[j] } else { fd[j] };
                oracle += if x[(i, j)] != 0.0 { p1.ln() } else { (1.0 - p1).ln() };
            }
        }
        assert!((ll - oracle).abs() < 1e-12);
    }

    #[test]
    fn binary_loglik_rejects_k_not_equal_d() {
        let data =
            Dataset::fully_observed(Array2::zeros((2, 3)), DataKind::Binary).unwrap();
        let z = feature_state(2, 2, &[]);
        assert!(loglik_binary(&data, &z, &[0.1; 3], &[0.1; 3]).is_err());
    }

    #[test]
    fn unused_feature_weight_redrawn_from_prior() {
        let mut rng = SmallRng::seed_from_u64(41);
        let data = continuous_data(Array2::zeros((1, 1)));
        let z = feature_state(1, 1, &[]);
        let rate = 2.0;
        let draws = 20_000;
        let mut total = 0.0;
        let mut weights = vec![vec![0.0]];
        for _ in 0..draws {
            sample_a_conditional(&data, &z, &mut weights, rate, 1.0, &mut rng).unwrap();
            total += weights[0][0];
        }
        let mean = total / draws as f64;
        let se = (1.0 / rate) / (draws as f64).sqrt();
        assert!((mean - 1.0 / rate).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn single_cell_weight_centres_on_observation() {
        let mut rng = SmallRng::seed_from_u64(43);
        let data = continuous_data(Array2::from_elem((1, 1), 5.0));
        let z = feature_state(1, 1, &[(0, 0)]);
        let draws = 20_000;
        let mut total = 0.0;
        let mut weights = vec![vec![0.0]];
        for _ in 0..draws {
            sample_a_conditional(&data, &z, &mut weights, 1e-9, 1.0, &mut rng).unwrap();
            total += weights[0][0];
        }
        let mean = total / draws as f64;
        let se = 1.0 / (draws as f64).sqrt();
        assert!((mean - 5.0).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn huge_rate_pins_weights_to_zero() {
        let mut rng = SmallRng::seed_from_u64(47);
        let data = continuous_data(Array2::from_elem((1, 1), 5.0));
        let z = feature_state(1, 1, &[(0, 0)]);
        let mut weights = vec![vec![2.0]];
        let mut max = 0.0f64;
        for _ in 0..1000 {
            sample_a_conditional(&data, &z, &mut weights, 1e7, 1.0, &mut rng).unwrap();
            max = max.max(weights[0][0]);
        }
        assert!(max < 1e-4, "max draw {max}");
    }

    /// Kolmogorov-Smirnov distance between draws and a grid-evaluated
    /// density proportional to `log_density`.
    fn ks_against_grid(
        mut samples: Vec<f64>,
        lo: f64,
        hi: f64,
        points: usize,
        log_density: impl Fn(f64) -> f64,
    ) -> f64 {
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let step = (hi - lo) / (points - 1) as f64;
        let dens: Vec<f64> = (0..points).map(|i| log_density(lo + i as f64 * step).exp()).collect();
        let mut cum = vec![0.0; points];
        for i in 1..points {
            cum[i] = cum[i - 1] + 0.5 * (dens[i] + dens[i - 1]) * step;
        }
        let total = cum[points - 1];
        let n = samples.len() as f64;
        let mut ks = 0.0f64;
        for i in 0..points {
            let t = lo + i as f64 * step;
            let emp = samples.partition_point(|&s| s <= t) as f64 / n;
            ks = ks.max((emp - cum[i] / total).abs());
        }
        ks
    }

    #[test]
    fn single_cell_weight_posterior_matches_grid() {
        // Exactness check on the 1-cell, 1-feature instance: the draws must
        // match the normalised Exponential * Normal density.
        let mut rng = SmallRng::seed_from_u64(53);
        let (x, sd, rate) = (2.0, 0.8, 1.5);
        let data = continuous_data(Array2::from_elem((1, 1), x));
        let z = feature_state(1, 1, &[(0, 0)]);
        let draws = 30_000;
        let mut samples = Vec::with_capacity(draws);
        let mut weights = vec![vec![0.0]];
        for _ in 0..draws {
            sample_a_conditional(&data, &z, &mut weights, rate, sd, &mut rng).unwrap();
            samples.push(weights[0][0]);
        }
        let ks = ks_against_grid(samples, 0.0, x + 8.0 * sd, 4001, |a| {
            -rate * a + normal_logpdf(x, a, sd)
        });
        assert!(ks < 0.03, "ks {ks}");
    }

    #[test]
    fn truncated_normal_far_tail_mean() {
        // mean = -10, sd = 1 puts the truncation ten sigmas out; the
        // rejection path must give E[X] = phi(10) / (1 - Phi(10)) - 10.
        let mut rng = SmallRng::seed_from_u64(59);
        let draws = 100_000;
        let mut total = 0.0;
        for _ in 0..draws {
            let v = truncated_normal_nonneg(-10.0, 1.0, &mut rng);
            assert!(v >= 0.0);
            total += v;
        }
        let mean = total / draws as f64;
        let std_normal = Normal::new(0.0, 1.0).unwrap();
        let a = 10.0;
        let hazard = (-0.5 * a * a - 0.5 * LN_2PI).exp() / (1.0 - std_normal.cdf(a));
        let expected = hazard - a;
        assert!(
            (mean - expected).abs() < 5e-4,
            "mean {mean}, expected {expected}"
        );
    }

    #[test]
    fn detection_rate_posterior_means() {
        let mut rng = SmallRng::seed_from_u64(61);
        // Dimension 0: 10 cells with z=1, 8 of them x=1 -> miss ~ Beta(3, 9).
        // Dimension 1: 20 cells with z=0, all x=0 -> false ~ Beta(1, 21).
        let n = 20;
        let mut x = Array2::zeros((n, 2));
        let mut ones = Vec::new();
        for i in 0..10 {
            ones.push((i, 0usize));
            if i < 8 {
                x[(i, 0)] = 1.0;
            }
        }
        // Dimension 0 rows 10..20 are z=0, x=0; dimension 1 all z=0, x=0.
        let data = Dataset::fully_observed(x, DataKind::Binary).unwrap();
        let z = feature_state(n, 2, &ones);
        let draws = 20_000;
        let (mut sum_m0, mut sum_f1) = (0.0, 0.0);
        for _ in 0..draws {
            let (fd, md) = sample_detection_rates(&data, &z, &mut rng).unwrap();
            sum_m0 += md[0];
            sum_f1 += fd[1];
        }
        let mean_m0 = sum_m0 / draws as f64;
        let mean_f1 = sum_f1 / draws as f64;
        // Beta(3, 9) mean 0.25; Beta(1, 21) mean 1/22.
        assert!((mean_m0 - 0.25).abs() < 0.005, "miss mean {mean_m0}");
        assert!((mean_f1 - 1.0 / 22.0).abs() < 0.003, "false mean {mean_f1}");
    }

    #[test]
    fn uniform_detection_rate_when_no_usage() {
        let mut rng = SmallRng::seed_from_u64(67);
        let data = Dataset::fully_observed(Array2::zeros((5, 1)), DataKind::Binary).unwrap();
        let z = feature_state(5, 1, &[]);
        let draws = 20_000;
        let mut total = 0.0;
        for _ in 0..draws {
            let (_, md) = sample_detection_rates(&data, &z, &mut rng).unwrap();
            total += md[0];
        }
        let mean = total / draws as f64;
        // Beta(1, 1) is uniform.
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn noise_precision_gamma_mean() {
        let mut rng = SmallRng::seed_from_u64(71);
        let (n, d) = (4, 3);
        let x = Array2::from_shape_fn((n, d), |(i, j)| (i + j) as f64 * 0.3);
        let data = continuous_data(x.clone());
        let z = feature_state(n, 1, &[]);
        let weights = vec![vec![0.0; d]];
        let rss: f64 = x.iter().map(|v| v * v).sum();
        let n_obs = (n * d) as f64;
        let expected_precision = (1.0 + n_obs / 2.0) / (1.0 + rss / 2.0);
        let draws = 20_000;
        let mut total = 0.0;
        for _ in 0..draws {
            let sd = sample_noise_variance(&data, &z, &weights, &mut rng).unwrap();
            total += 1.0 / (sd * sd);
        }
        let mean = total / draws as f64;
        let var = expected_precision * expected_precision / (1.0 + n_obs / 2.0);
        let se = (var / draws as f64).sqrt();
        assert!(
            (mean - expected_precision).abs() < 4.0 * se,
            "mean {mean}, expected {expected_precision}"
        );
    }
}

//! Concentration and likelihood-hyperparameter updates.
//!
//! All hyperparameters carry vague Gamma(shape, rate) priors and are
//! resampled every iteration. The IBP concentration is conjugate given the
//! active column count; the DP concentration uses the auxiliary-variable
//! update of Escobar & West. Pinned (finite beta-Bernoulli) layers have no
//! conjugate form, so those take a random-walk Metropolis step on the log
//! scale against the exact finite marginal.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal};

use crate::likelihood::{sample_detection_rates, sample_noise_variance, sample_weight_rate};
use crate::matrix::SparseBinaryMatrix;
use crate::model::{CategoryMode, LikelihoodParams};
use crate::priors::{harmonic, pinned_log_marginal};
use crate::sampler::ctx::SamplerCtx;

/// Conjugate update of an IBP concentration: alpha | K ~ Gamma(shape + K,
/// rate + H_rows).
fn ibp_alpha_update<R: Rng + ?Sized>(
    active_cols: usize,
    rows: usize,
    shape: f64,
    rate: f64,
    rng: &mut R,
) -> f64 {
    let post_shape = shape + active_cols as f64;
    let post_rate = rate + harmonic(rows);
    Gamma::new(post_shape, 1.0 / post_rate).unwrap().sample(rng)
}

/// Escobar-West auxiliary-variable update of a DP concentration given the
/// number of occupied clusters.
fn dp_alpha_update<R: Rng + ?Sized>(
    alpha: f64,
    clusters: usize,
    n: usize,
    shape: f64,
    rate: f64,
    rng: &mut R,
) -> f64 {
    let eta: f64 = Beta::new(alpha + 1.0, n as f64).unwrap().sample(rng);
    let post_rate = rate - eta.ln();
    let odds = (shape + clusters as f64 - 1.0) / (n as f64 * post_rate);
    let shape_hi = shape + clusters as f64;
    let post_shape = if rng.random::<f64>() < odds / (1.0 + odds) {
        shape_hi
    } else {
        shape_hi - 1.0
    };
    Gamma::new(post_shape, 1.0 / post_rate).unwrap().sample(rng)
}

/// Log-scale random-walk Metropolis update of a pinned layer's mass against
/// the finite beta-Bernoulli marginal.
fn pinned_alpha_update<R: Rng + ?Sized>(
    alpha: f64,
    matrix: &SparseBinaryMatrix,
    shape: f64,
    rate: f64,
    rng: &mut R,
) -> f64 {
    let step: f64 = Normal::new(0.0, 0.5).unwrap().sample(rng);
    let proposal = alpha * step.exp();
    // Gamma log density plus the log-scale Jacobian.
    let log_target = |a: f64| {
        pinned_log_marginal(matrix, a) + (shape - 1.0) * a.ln() - rate * a + a.ln()
    };
    let log_accept = log_target(proposal) - log_target(alpha);
    if log_accept >= 0.0 || rng.random::<f64>() < log_accept.exp() {
        proposal
    } else {
        alpha
    }
}

/// Resamples every hyperparameter in place: the two concentrations, plus
/// the likelihood hyperparameters (weight rate and noise scale) for
/// continuous data.
pub(crate) fn sample_hyperparams_ctx<R: Rng + ?Sized>(ctx: &mut SamplerCtx, rng: &mut R) {
    let shape = ctx.state.hypers.gamma_shape;
    let rate = ctx.state.hypers.gamma_rate;
    let n = ctx.n();

    ctx.state.hypers.alpha_c = match ctx.state.c.mode {
        CategoryMode::Dp => dp_alpha_update(
            ctx.state.hypers.alpha_c,
            ctx.state.l(),
            n,
            shape,
            rate,
            rng,
        ),
        CategoryMode::Ibp => {
            if ctx.state.categories_pinned() {
                pinned_alpha_update(
                    ctx.state.hypers.alpha_c,
                    &ctx.state.c.entries,
                    shape,
                    rate,
                    rng,
                )
            } else {
                ibp_alpha_update(ctx.state.l(), n, shape, rate, rng)
            }
        }
    };

    if ctx.state.spec.variant.has_connection_layer() {
        ctx.state.hypers.alpha_m = if ctx.state.features_pinned() {
            pinned_alpha_update(
                ctx.state.hypers.alpha_m,
                &ctx.state.m.entries,
                shape,
                rate,
                rng,
            )
        } else {
            ibp_alpha_update(ctx.state.k(), ctx.state.l(), shape, rate, rng)
        };
    }

    if let LikelihoodParams::Continuous {
        weights,
        noise_sd,
        weight_rate,
    } = &mut ctx.state.params
    {
        *weight_rate = sample_weight_rate(weights, shape, rate, rng);
        *noise_sd = sample_noise_variance(ctx.data, &ctx.state.z, weights, rng)
            .expect("continuous data");
    }
}

/// Resamples the likelihood parameters: the weight matrix under the
/// continuous model, the detection rates under the binary one.
pub(crate) fn sample_likelihood_params_ctx<R: Rng + ?Sized>(ctx: &mut SamplerCtx, rng: &mut R) {
    let continuous = match &mut ctx.state.params {
        LikelihoodParams::Continuous {
            weights,
            noise_sd,
            weight_rate,
        } => {
            crate::likelihood::sample_a_conditional(
                ctx.data,
                &ctx.state.z,
                weights,
                *weight_rate,
                *noise_sd,
                rng,
            )
            .expect("continuous data");
            true
        }
        LikelihoodParams::Binary {
            false_detect,
            miss_detect,
        } => {
            let (fd, md) = sample_detection_rates(ctx.data, &ctx.state.z, rng)
                .expect("binary data");
            *false_detect = fd;
            *miss_detect = md;
            false
        }
    };
    if continuous {
        ctx.refresh_means();
    }
}

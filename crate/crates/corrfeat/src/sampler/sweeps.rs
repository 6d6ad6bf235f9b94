//! The Gibbs sweeps over C, M and Z.
//!
//! Element updates use leave-one-out prior probabilities and are plain Gibbs
//! steps. Births and deaths of categories and features go through
//! replacement moves: the block of structure owned by one row (its
//! singletons, plus whatever those exclusively parent) is redrawn from its
//! conditional prior and accepted by a Metropolis step on the data
//! likelihood alone, the prior and proposal densities cancelling exactly.
//!
//! Under the noisy-or link, category elements are updated jointly with the
//! feature bits they parent (exact Gibbs on the small block, enumerated).
//! A naive single-element flip would freeze whenever the flip orphans an
//! active child; the block move walks through those states.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::links::noisy_or_on_prob;
use crate::model::{CategoryMode, FeatureStorage, LinkKind};
use crate::priors::pinned_existing_prob;
use crate::sampler::ctx::SamplerCtx;
use crate::sampler::{ChainConfig, Corruption};

/// Children count above which the noisy-or joint block falls back to a
/// plain element update; the fallback predicate depends only on the
/// connection row, which the move holds fixed.
const JOINT_BLOCK_CAP: usize = 10;

pub(crate) fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Samples an index proportional to exp(log_weights).
pub(crate) fn sample_log_weights<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    debug_assert!(max.is_finite(), "all candidate weights vanished");
    let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u < 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

fn draw_weight_row<R: Rng + ?Sized>(rate: f64, d: usize, rng: &mut R) -> Vec<f64> {
    let prior = Exp::new(rate).expect("positive rate");
    (0..d).map(|_| prior.sample(rng)).collect()
}

/// Draws one new connection row given `rows_so_far` conditioning rows with
/// column usage `usage` (existing plus provisional columns). Brand-new
/// columns get prior weight rows appended to `provisional`; their column
/// indices continue past the current feature count.
fn draw_connection_row<R: Rng + ?Sized>(
    ctx: &SamplerCtx,
    usage: &mut Vec<u32>,
    rows_so_far: &mut usize,
    provisional: &mut Vec<Vec<f64>>,
    alpha_m: f64,
    rng: &mut R,
) -> Vec<usize> {
    let denom = (*rows_so_far + 1) as f64;
    let mut cols = Vec::new();
    if ctx.state.features_pinned() {
        // Finite beta-Bernoulli predictive over the pinned columns.
        let k_total = ctx.state.k();
        let a = alpha_m / k_total as f64;
        for (k, r) in usage.iter_mut().enumerate() {
            if rng.random::<f64>() < pinned_existing_prob(*r as usize, *rows_so_far, a) {
                cols.push(k);
                *r += 1;
            }
        }
    } else {
        for (k, r) in usage.iter_mut().enumerate() {
            if *r > 0 && rng.random::<f64>() < *r as f64 / denom {
                cols.push(k);
                *r += 1;
            }
        }
        let fresh = Poisson::new(alpha_m / denom).expect("positive rate").sample(rng) as usize;
        for _ in 0..fresh {
            let idx = usage.len();
            usage.push(1);
            provisional.push(draw_weight_row(ctx.weight_rate(), ctx.d(), rng));
            cols.push(idx);
        }
    }
    *rows_so_far += 1;
    cols
}

/// Mean row of a candidate category (continuous likelihood): the sum of
/// weight rows over its connection columns, resolving provisional indices.
fn candidate_mean(ctx: &SamplerCtx, cols: &[usize], provisional: &[Vec<f64>]) -> Vec<f64> {
    let k = ctx.state.k();
    let mut mean = vec![0.0; ctx.d()];
    for &c in cols {
        let row = if c < k {
            &ctx.weights()[c]
        } else {
            &provisional[c - k]
        };
        for (m, w) in mean.iter_mut().zip(row) {
            *m += w;
        }
    }
    mean
}

/// Materialises a candidate category. Provisional column indices were
/// assigned against `base_k` (the feature count when the drawing started);
/// columns below `base_k + realised` already exist (earlier candidates in
/// the same move materialised them at exactly their provisional index),
/// the rest become fresh features parented by the new category.
fn materialise_category(
    ctx: &mut SamplerCtx,
    cols: &[usize],
    provisional: &[Vec<f64>],
    base_k: usize,
    realised: usize,
) -> usize {
    let boundary = base_k + realised;
    debug_assert_eq!(ctx.state.k(), boundary);
    let existing: Vec<usize> = cols.iter().copied().filter(|&c| c < boundary).collect();
    let fresh: Vec<Vec<f64>> = cols
        .iter()
        .copied()
        .filter(|&c| c >= boundary)
        .map(|c| provisional[c - base_k].clone())
        .collect();
    ctx.add_category(&existing, fresh)
}

// ---------------------------------------------------------------------
// DP category sweep (partial Gibbs with auxiliary categories)
// ---------------------------------------------------------------------

/// One reassignment pass over all rows of a dp-mode category matrix.
///
/// Each row is reassigned among the existing categories and
/// `cfg.aux_categories` auxiliary candidates whose connection rows are drawn
/// from the row predictive (a singleton's own row is recycled as the first
/// auxiliary). Probabilities are occupancy (or alpha / m for auxiliaries)
/// times the row likelihood; Z is deterministic here, so the data speak
/// directly.
pub(crate) fn sweep_c_dp<R: Rng + ?Sized>(ctx: &mut SamplerCtx, cfg: &ChainConfig, rng: &mut R) {
    debug_assert_eq!(ctx.state.c.mode, CategoryMode::Dp);
    let n_rows = ctx.n();
    let m_aux = cfg.aux_categories.max(1);
    let alpha_c = ctx.state.hypers.alpha_c;
    let continuous = ctx.is_continuous();

    // Per-category mean rows (continuous); maintained across births/deaths.
    let mut cat_means: Vec<Vec<f64>> = if continuous {
        (0..ctx.state.l())
            .map(|l| candidate_mean(ctx, ctx.state.m.entries.row(l).to_vec().as_slice(), &[]))
            .collect()
    } else {
        Vec::new()
    };

    for n in 0..n_rows {
        let l_old = ctx.state.c.assignment(n);
        let singleton = ctx.state.c.entries.col_sum(l_old) == 1;
        let l_count = ctx.state.l();

        let mut log_weights = Vec::with_capacity(l_count + m_aux);
        let mut choices: Vec<Choice> = Vec::with_capacity(l_count + m_aux);

        for l in 0..l_count {
            let size_excl = ctx.state.c.entries.col_sum(l) - usize::from(l == l_old);
            if size_excl == 0 {
                continue; // the detached singleton joins the auxiliary pool
            }
            let lik = if continuous {
                ctx.row_loglik_mean(n, &cat_means[l])
            } else {
                ctx.row_loglik_active(n, ctx.state.m.entries.row(l))
            };
            log_weights.push((size_excl as f64).ln() + lik);
            choices.push(Choice::Existing(l));
        }

        let aux_weight = (alpha_c / m_aux as f64).ln();
        let mut provisional: Vec<Vec<f64>> = Vec::new();
        let mut usage: Vec<u32> = (0..ctx.state.k())
            .map(|k| ctx.state.m.entries.col_sum(k) as u32)
            .collect();
        let mut rows_so_far = ctx.state.m.entries.n_rows();
        let mut aux_rows: Vec<Vec<usize>> = Vec::new();

        if singleton {
            // Recycle the detached row as the first auxiliary.
            let lik = if continuous {
                ctx.row_loglik_mean(n, &cat_means[l_old])
            } else {
                ctx.row_loglik_active(n, ctx.state.m.entries.row(l_old))
            };
            log_weights.push(aux_weight + lik);
            choices.push(Choice::Existing(l_old));
        }
        let fresh_aux = m_aux - usize::from(singleton);
        for _ in 0..fresh_aux {
            let row = if ctx.state.spec.variant.has_connection_layer() {
                draw_connection_row(
                    ctx,
                    &mut usage,
                    &mut rows_so_far,
                    &mut provisional,
                    ctx.state.hypers.alpha_m,
                    rng,
                )
            } else {
                // Baseline: a new category is a new identity column.
                let idx = ctx.state.k() + provisional.len();
                provisional.push(draw_weight_row(ctx.weight_rate(), ctx.d(), rng));
                vec![idx]
            };
            let lik = if continuous {
                ctx.row_loglik_mean(n, &candidate_mean(ctx, &row, &provisional))
            } else {
                ctx.row_loglik_active(n, &row)
            };
            log_weights.push(aux_weight + lik);
            choices.push(Choice::Fresh(aux_rows.len()));
            aux_rows.push(row);
        }

        match choices[sample_log_weights(&log_weights, rng)] {
            Choice::Existing(l_new) => {
                if l_new != l_old {
                    ctx.set_c(n, l_old, false);
                    ctx.set_c(n, l_new, true);
                    if ctx.state.c.entries.col_sum(l_old) == 0 {
                        ctx.remove_category(l_old);
                        if continuous {
                            cat_means.remove(l_old);
                        }
                    }
                }
            }
            Choice::Fresh(aux_idx) => {
                let row = &aux_rows[aux_idx];
                let mean = if continuous {
                    candidate_mean(ctx, row, &provisional)
                } else {
                    Vec::new()
                };
                ctx.set_c(n, l_old, false);
                let base_k = ctx.state.k();
                let l_new = materialise_category(ctx, row, &provisional, base_k, 0);
                ctx.set_c(n, l_new, true);
                if continuous {
                    cat_means.push(mean);
                }
                if ctx.state.c.entries.col_sum(l_old) == 0 {
                    ctx.remove_category(l_old);
                    if continuous {
                        cat_means.remove(l_old);
                    }
                }
            }
        }
    }
}

enum Choice {
    Existing(usize),
    Fresh(usize),
}

// ---------------------------------------------------------------------
// IBP category sweep
// ---------------------------------------------------------------------

/// One pass over all category elements for an ibp-mode C, plus the
/// per-row singleton replacement move.
pub(crate) fn sweep_c_ibp<R: Rng + ?Sized>(ctx: &mut SamplerCtx, cfg: &ChainConfig, rng: &mut R) {
    debug_assert_eq!(ctx.state.c.mode, CategoryMode::Ibp);
    let n_rows = ctx.n();
    let pinned = ctx.state.categories_pinned();
    for n in 0..n_rows {
        let l_count = ctx.state.l();
        for l in 0..l_count {
            let cur = ctx.state.c.entries.get(n, l);
            let r_excl = ctx.state.c.entries.col_sum(l) - usize::from(cur);
            if pinned {
                let a = ctx.state.hypers.alpha_c / l_count as f64;
                let p_on = pinned_existing_prob(r_excl, n_rows - 1, a);
                category_element_update(ctx, n, l, p_on, rng);
            } else {
                if r_excl == 0 {
                    continue; // singleton: handled by the replacement move
                }
                let p_on = r_excl as f64 / n_rows as f64;
                category_element_update(ctx, n, l, p_on, rng);
            }
        }
        if !pinned {
            replace_category_singletons(ctx, n, cfg, rng);
        }
    }
}

fn category_element_update<R: Rng + ?Sized>(
    ctx: &mut SamplerCtx,
    n: usize,
    l: usize,
    p_on: f64,
    rng: &mut R,
) {
    match ctx.state.spec.link() {
        LinkKind::NoisyOr => joint_parent_child_update(ctx, n, l, p_on.ln(), (1.0 - p_on).ln(), rng),
        _ => {
            let cur = ctx.state.c.entries.get(n, l);
            let flipped = !cur;
            let delta = deterministic_c_flip_delta(ctx, n, l, flipped);
            let (lw_cur, lw_flip) = if cur {
                (p_on.ln(), (1.0 - p_on).ln() + delta)
            } else {
                ((1.0 - p_on).ln(), p_on.ln() + delta)
            };
            let pick = sample_log_weights(&[lw_cur, lw_flip], rng);
            if pick == 1 {
                ctx.set_c(n, l, flipped);
            }
        }
    }
}

/// Log-likelihood change of row `n` if c_{nl} flips to `value`, under a
/// deterministic link (the implied feature bits flip with it).
fn deterministic_c_flip_delta(ctx: &SamplerCtx, n: usize, l: usize, value: bool) -> f64 {
    let children = ctx.state.m.entries.row(l);
    let sign: i64 = if value { 1 } else { -1 };
    if ctx.is_continuous() {
        let mut delta = vec![0.0; ctx.d()];
        let mut any = false;
        for &k in children {
            let count = ctx.count(n, k) as i64 + sign;
            let new_bit = count > 0;
            if new_bit != ctx.state.z.entries.get(n, k) {
                any = true;
                let s = if new_bit { 1.0 } else { -1.0 };
                for (d, w) in ctx.weights()[k].iter().enumerate() {
                    delta[d] += s * w;
                }
            }
        }
        if !any {
            return 0.0;
        }
        ctx.row_loglik_shifted(n, &delta) - ctx.row_loglik_current(n)
    } else {
        let mut delta = 0.0;
        for &k in children {
            let count = ctx.count(n, k) as i64 + sign;
            let new_bit = count > 0;
            delta += ctx.z_flip_delta(n, k, new_bit);
        }
        delta
    }
}

/// Exact Gibbs on the block (c_{nl}, feature bits of row n parented by l)
/// for the noisy-or link. `lp_on` / `lp_off` are the log prior masses of
/// the two category values. Children beyond the enumeration cap fall back
/// to a plain element update with the feature bits held fixed.
fn joint_parent_child_update<R: Rng + ?Sized>(
    ctx: &mut SamplerCtx,
    n: usize,
    l: usize,
    lp_on: f64,
    lp_off: f64,
    rng: &mut R,
) {
    let children = ctx.state.m.entries.row(l).to_vec();
    let cur_c = ctx.state.c.entries.get(n, l);
    let q = ctx.state.hypers.q;

    if children.len() > JOINT_BLOCK_CAP {
        // Plain Gibbs on c_{nl} with Z fixed: P(Z | C, M) only.
        let mut lw = [lp_off, lp_on];
        for &k in &children {
            let base = ctx.count(n, k) as usize - usize::from(cur_c);
            let z = ctx.state.z.entries.get(n, k);
            for (v, w) in lw.iter_mut().enumerate() {
                let p1 = noisy_or_on_prob(q, base + v);
                *w += if z { p1.ln() } else { (1.0 - p1).ln() };
            }
        }
        let pick = sample_log_weights(&lw, rng);
        ctx.set_c(n, l, pick == 1);
        return;
    }

    // Enumerate every (c value, children bit pattern).
    let n_ch = children.len();
    let base_counts: Vec<usize> = children
        .iter()
        .map(|&k| ctx.count(n, k) as usize - usize::from(cur_c))
        .collect();
    let cur_bits: Vec<bool> = children
        .iter()
        .map(|&k| ctx.state.z.entries.get(n, k))
        .collect();
    let continuous = ctx.is_continuous();
    // Mean shift that switches every child off; combos build on top of it.
    let off_delta = if continuous {
        let mut delta = vec![0.0; ctx.d()];
        for (i, &k) in children.iter().enumerate() {
            if cur_bits[i] {
                for (d, w) in ctx.weights()[k].iter().enumerate() {
                    delta[d] -= w;
                }
            }
        }
        delta
    } else {
        Vec::new()
    };

    let combos = 1usize << n_ch;
    let mut log_weights = Vec::with_capacity(2 * combos);
    let mut labels = Vec::with_capacity(2 * combos);
    for v in 0..2usize {
        let lp_c = if v == 1 { lp_on } else { lp_off };
        if !lp_c.is_finite() {
            continue;
        }
        for mask in 0..combos {
            let mut lw = lp_c;
            for i in 0..n_ch {
                let bit = mask >> i & 1 == 1;
                let p1 = noisy_or_on_prob(q, base_counts[i] + v);
                let lp_bit = if bit { p1.ln() } else { (1.0 - p1).ln() };
                if !lp_bit.is_finite() {
                    lw = f64::NEG_INFINITY;
                    break;
                }
                lw += lp_bit;
            }
            if !lw.is_finite() {
                continue;
            }
            // Data likelihood of row n under this bit pattern.
            lw += if continuous {
                let mut delta = off_delta.clone();
                for (i, &k) in children.iter().enumerate() {
                    if mask >> i & 1 == 1 {
                        for (d, w) in ctx.weights()[k].iter().enumerate() {
                            delta[d] += w;
                        }
                    }
                }
                ctx.row_loglik_shifted(n, &delta)
            } else {
                let mut ll = 0.0;
                for (i, &k) in children.iter().enumerate() {
                    ll += ctx.z_flip_delta(n, k, mask >> i & 1 == 1);
                }
                ll
            };
            log_weights.push(lw);
            labels.push((v == 1, mask));
        }
    }
    let (v_new, mask) = labels[sample_log_weights(&log_weights, rng)];

    // Apply: clear bits first, flip the parent, then raise bits (the raised
    // ones need their parent counts in place).
    for (i, &k) in children.iter().enumerate() {
        if mask >> i & 1 == 0 && cur_bits[i] {
            ctx.set_z(n, k, false);
        }
    }
    ctx.set_c(n, l, v_new);
    for (i, &k) in children.iter().enumerate() {
        if mask >> i & 1 == 1 && !cur_bits[i] {
            ctx.set_z(n, k, true);
        }
    }
}

/// Public-facing joint move, including the singleton case (where the prior
/// odds come from the Poisson singleton count of row n and turning the
/// category off removes it outright).
pub(crate) fn joint_parent_child_move<R: Rng + ?Sized>(
    ctx: &mut SamplerCtx,
    n: usize,
    l: usize,
    rng: &mut R,
) {
    let cur = ctx.state.c.entries.get(n, l);
    let r_excl = ctx.state.c.entries.col_sum(l) - usize::from(cur);
    let n_rows = ctx.n();
    if r_excl > 0 {
        let p_on = r_excl as f64 / n_rows as f64;
        joint_parent_child_update(ctx, n, l, p_on.ln(), (1.0 - p_on).ln(), rng);
        return;
    }
    // Singleton (or unused) category: the prior odds of keeping it are the
    // ratio of Poisson(alpha / N) masses for the row's singleton count.
    let singles = (0..ctx.state.l())
        .filter(|&j| ctx.state.c.entries.col_sum(j) == 1 && ctx.state.c.entries.get(n, j))
        .count()
        .max(1);
    let rate = ctx.state.hypers.alpha_c / n_rows as f64;
    let lp_on = rate.ln() - (singles as f64).ln();
    joint_parent_child_update(ctx, n, l, lp_on, 0.0, rng);
    if ctx.state.c.entries.col_sum(l) == 0 {
        ctx.remove_category(l);
    }
}

/// Replaces row n's singleton categories with a fresh Poisson(alpha_C / N)
/// draw of new ones, rows taken from the connection predictive and affected
/// feature bits redrawn from their conditional prior; accepted on the data
/// likelihood ratio of row n alone.
fn replace_category_singletons<R: Rng + ?Sized>(
    ctx: &mut SamplerCtx,
    n: usize,
    _cfg: &ChainConfig,
    rng: &mut R,
) {
    let n_rows = ctx.n();
    let singles: Vec<usize> = (0..ctx.state.l())
        .filter(|&l| ctx.state.c.entries.col_sum(l) == 1 && ctx.state.c.entries.get(n, l))
        .collect();
    let born = Poisson::new(ctx.state.hypers.alpha_c / n_rows as f64)
        .expect("positive rate")
        .sample(rng) as usize;
    if singles.is_empty() && born == 0 {
        return;
    }

    let sampled = ctx.state.z.storage == FeatureStorage::Sampled;
    let q = ctx.state.hypers.q;
    let k_now = ctx.state.k();

    // Conditioning usage excludes the dying rows.
    let mut usage: Vec<u32> = (0..k_now)
        .map(|k| {
            let total = ctx.state.m.entries.col_sum(k);
            let dying = singles
                .iter()
                .filter(|&&l| ctx.state.m.entries.get(l, k))
                .count();
            (total - dying) as u32
        })
        .collect();
    let mut rows_so_far = ctx.state.l() - singles.len();
    let mut provisional: Vec<Vec<f64>> = Vec::new();
    let mut new_rows: Vec<Vec<usize>> = Vec::new();
    let mut prov_start: Vec<usize> = Vec::new(); // provisionals existing before each draw
    for _ in 0..born {
        prov_start.push(provisional.len());
        let row = if ctx.state.spec.variant.has_connection_layer() {
            draw_connection_row(
                ctx,
                &mut usage,
                &mut rows_so_far,
                &mut provisional,
                ctx.state.hypers.alpha_m,
                rng,
            )
        } else {
            let idx = k_now + provisional.len();
            provisional.push(draw_weight_row(ctx.weight_rate(), ctx.d(), rng));
            rows_so_far += 1;
            vec![idx]
        };
        new_rows.push(row);
    }

    // Parent-count changes for row n: existing features lose the dying
    // parents and gain the new ones; a provisional column's count is the
    // number of new rows carrying it (they all contain n).
    let mut delta_count: std::collections::BTreeMap<usize, i64> = std::collections::BTreeMap::new();
    for &l in &singles {
        for &k in ctx.state.m.entries.row(l) {
            *delta_count.entry(k).or_insert(0) -= 1;
        }
    }
    let mut prov_count = vec![0usize; provisional.len()];
    for row in &new_rows {
        for &c in row {
            if c < k_now {
                *delta_count.entry(c).or_insert(0) += 1;
            } else {
                prov_count[c - k_now] += 1;
            }
        }
    }

    // Proposed feature bits for row n, drawn from their conditional prior
    // under the proposed structure.
    let mut proposed: Vec<(usize, bool)> = Vec::new(); // existing feature -> bit
    for (&k, &dc) in &delta_count {
        let new_count = (ctx.count(n, k) as i64 + dc).max(0) as usize;
        let bit = if sampled {
            rng.random::<f64>() < noisy_or_on_prob(q, new_count)
        } else {
            new_count > 0
        };
        proposed.push((k, bit));
    }
    let prov_bits: Vec<bool> = prov_count
        .iter()
        .map(|&count| {
            if sampled {
                rng.random::<f64>() < noisy_or_on_prob(q, count)
            } else {
                count > 0
            }
        })
        .collect();

    // Likelihood ratio over row n.
    let log_ratio = if ctx.is_continuous() {
        let mut delta = vec![0.0; ctx.d()];
        for &(k, bit) in &proposed {
            let cur = ctx.state.z.entries.get(n, k);
            if cur != bit {
                let s = if bit { 1.0 } else { -1.0 };
                for (d, w) in ctx.weights()[k].iter().enumerate() {
                    delta[d] += s * w;
                }
            }
        }
        for (w_row, &bit) in provisional.iter().zip(&prov_bits) {
            if bit {
                for (d, w) in w_row.iter().enumerate() {
                    delta[d] += w;
                }
            }
        }
        ctx.row_loglik_shifted(n, &delta) - ctx.row_loglik_current(n)
    } else {
        // Binary data pins features, so there are no fresh columns.
        proposed
            .iter()
            .map(|&(k, bit)| ctx.z_flip_delta(n, k, bit))
            .sum()
    };
    if log_ratio < 0.0 && rng.random::<f64>() >= log_ratio.exp() {
        return;
    }

    // Apply. Clear bits and memberships first, then births (categories and
    // fresh features append at the end, so the dying indices stay valid),
    // then the raised bits, then the deaths with their feature cascade.
    // Each provisional column lands at feature index k_now + its registry
    // position, because candidates materialise in draw order.
    if sampled {
        for &(k, bit) in &proposed {
            if !bit {
                ctx.set_z(n, k, false);
            }
        }
    }
    for &l in &singles {
        ctx.set_c(n, l, false);
    }
    for (row, &realised) in new_rows.iter().zip(&prov_start) {
        let l_new = materialise_category(ctx, row, &provisional, k_now, realised);
        ctx.set_c(n, l_new, true);
    }
    if sampled {
        for &(k, bit) in &proposed {
            if bit {
                ctx.set_z(n, k, true);
            }
        }
        for (p, &bit) in prov_bits.iter().enumerate() {
            if bit {
                ctx.set_z(n, k_now + p, true);
            }
        }
    }
    for &l in singles.iter().rev() {
        debug_assert_eq!(ctx.state.c.entries.col_sum(l), 0);
        ctx.remove_category(l);
    }
}

// ---------------------------------------------------------------------
// Connection sweep
// ---------------------------------------------------------------------

/// One pass over all connection elements, plus the per-row singleton
/// feature replacement move (skipped when the feature columns are pinned).
///
/// Deterministic links score flips by the data likelihood with Z recomputed;
/// the noisy-or link updates each element jointly with the feature bits of
/// the category's members, which is what lets a connection retract after its
/// children switch off.
pub(crate) fn sweep_m<R: Rng + ?Sized>(ctx: &mut SamplerCtx, cfg: &ChainConfig, rng: &mut R) {
    debug_assert!(ctx.state.spec.variant.has_connection_layer());
    let pinned = ctx.state.features_pinned();
    let l_count = ctx.state.l();
    for l in 0..l_count {
        let k_count = ctx.state.k();
        for k in 0..k_count {
            let cur = ctx.state.m.entries.get(l, k);
            let r_excl = ctx.state.m.entries.col_sum(k) - usize::from(cur);
            let p_on = if pinned {
                let a = ctx.state.hypers.alpha_m / k_count as f64;
                pinned_existing_prob(r_excl, l_count - 1, a)
            } else {
                if r_excl == 0 {
                    continue;
                }
                r_excl as f64 / l_count as f64
            };
            let p_on = match cfg.corruption {
                Corruption::FlatConnectionPrior => 0.5,
                Corruption::None => p_on,
            };
            connection_element_update(ctx, l, k, p_on, rng);
        }
        if !pinned {
            replace_feature_singletons(ctx, l, rng);
        }
    }
}

fn connection_element_update<R: Rng + ?Sized>(
    ctx: &mut SamplerCtx,
    l: usize,
    k: usize,
    p_on: f64,
    rng: &mut R,
) {
    let cur = ctx.state.m.entries.get(l, k);
    match ctx.state.spec.link() {
        LinkKind::NoisyOr => {
            joint_connection_child_update(ctx, l, k, p_on, rng);
        }
        _ => {
            // Flip implies feature-bit changes for the category's members.
            let flipped = !cur;
            let mut delta = 0.0;
            let sign: i64 = if flipped { 1 } else { -1 };
            for &n in ctx.state.c.entries.col(l) {
                let count = ctx.count(n, k) as i64 + sign;
                let new_bit = count > 0;
                delta += ctx.z_flip_delta(n, k, new_bit);
            }
            let (lw_cur, lw_flip) = if cur {
                (p_on.ln(), (1.0 - p_on).ln() + delta)
            } else {
                ((1.0 - p_on).ln(), p_on.ln() + delta)
            };
            if sample_log_weights(&[lw_cur, lw_flip], rng) == 1 {
                ctx.set_m(l, k, flipped);
            }
        }
    }
}

/// Exact Gibbs on the block (m_{lk}, feature bits z_{nk} of the category's
/// members): conditional on the connection value, the member bits are
/// independent, so the marginal over each bit is tractable.
fn joint_connection_child_update<R: Rng + ?Sized>(
    ctx: &mut SamplerCtx,
    l: usize,
    k: usize,
    p_on: f64,
    rng: &mut R,
) {
    let cur = ctx.state.m.entries.get(l, k);
    let q = ctx.state.hypers.q;
    let members = ctx.state.c.entries.col(l).to_vec();
    let mut lw = [(1.0 - p_on).ln(), p_on.ln()];
    // Per member and connection value: logsumexp over its two bit values.
    let mut flip_deltas = Vec::with_capacity(members.len());
    for &n in &members {
        let base = ctx.count(n, k) as usize - usize::from(cur);
        let z = ctx.state.z.entries.get(n, k);
        let ll0 = if z { ctx.z_flip_delta(n, k, false) } else { 0.0 };
        let ll1 = if z { 0.0 } else { ctx.z_flip_delta(n, k, true) };
        flip_deltas.push((ll0, ll1));
        for (v, w) in lw.iter_mut().enumerate() {
            if !w.is_finite() {
                continue;
            }
            let p1 = noisy_or_on_prob(q, base + v);
            *w += logsumexp(&[(1.0 - p1).ln() + ll0, p1.ln() + ll1]);
        }
    }
    let v_new = sample_log_weights(&lw, rng) == 1;

    // Resample each member bit under the chosen connection value.
    let mut raise: Vec<usize> = Vec::new();
    for (i, &n) in members.iter().enumerate() {
        let base = ctx.count(n, k) as usize - usize::from(cur);
        let p1 = noisy_or_on_prob(q, base + usize::from(v_new));
        let (ll0, ll1) = flip_deltas[i];
        let lw0 = (1.0 - p1).ln() + ll0;
        let lw1 = p1.ln() + ll1;
        let bit = sample_log_weights(&[lw0, lw1], rng) == 1;
        let z = ctx.state.z.entries.get(n, k);
        if z && !bit {
            ctx.set_z(n, k, false);
        } else if !z && bit {
            raise.push(n);
        }
    }
    ctx.set_m(l, k, v_new);
    for n in raise {
        ctx.set_z(n, k, true);
    }
}

/// Replaces row l's singleton feature columns with a Poisson(alpha_M / L)
/// draw of fresh ones carrying prior weight rows; accepted on the data
/// likelihood over the category's members.
fn replace_feature_singletons<R: Rng + ?Sized>(ctx: &mut SamplerCtx, l: usize, rng: &mut R) {
    let l_count = ctx.state.l();
    let singles: Vec<usize> = (0..ctx.state.k())
        .filter(|&k| ctx.state.m.entries.col_sum(k) == 1 && ctx.state.m.entries.get(l, k))
        .collect();
    let born = Poisson::new(ctx.state.hypers.alpha_m / l_count as f64)
        .expect("positive rate")
        .sample(rng) as usize;
    if singles.is_empty() && born == 0 {
        return;
    }
    let members = ctx.state.c.entries.col(l).to_vec();
    let sampled = ctx.state.z.storage == FeatureStorage::Sampled;
    let q = ctx.state.hypers.q;

    let fresh_weights: Vec<Vec<f64>> = (0..born)
        .map(|_| draw_weight_row(ctx.weight_rate(), ctx.d(), rng))
        .collect();
    // Proposed bits: members get prior-drawn bits on fresh columns; dying
    // columns lose whatever they had.
    let fresh_bits: Vec<Vec<bool>> = (0..born)
        .map(|_| {
            members
                .iter()
                .map(|_| {
                    if sampled {
                        rng.random::<f64>() < noisy_or_on_prob(q, 1)
                    } else {
                        true
                    }
                })
                .collect()
        })
        .collect();

    // Likelihood ratio over the members, all dimensions.
    let mut log_ratio = 0.0;
    if ctx.is_continuous() {
        for (mi, &n) in members.iter().enumerate() {
            let mut delta = vec![0.0; ctx.d()];
            for &k in &singles {
                if ctx.state.z.entries.get(n, k) {
                    for (d, w) in ctx.weights()[k].iter().enumerate() {
                        delta[d] -= w;
                    }
                }
            }
            for (b, w_row) in fresh_bits.iter().zip(&fresh_weights) {
                if b[mi] {
                    for (d, w) in w_row.iter().enumerate() {
                        delta[d] += w;
                    }
                }
            }
            log_ratio += ctx.row_loglik_shifted(n, &delta) - ctx.row_loglik_current(n);
        }
    } else {
        unreachable!("feature replacement never runs with pinned columns");
    }
    if log_ratio < 0.0 && rng.random::<f64>() >= log_ratio.exp() {
        return;
    }

    // Apply: clear dying columns, add the fresh ones, then deaths.
    for &k in &singles {
        if sampled {
            for &n in &members {
                if ctx.state.z.entries.get(n, k) {
                    ctx.set_z(n, k, false);
                }
            }
        }
    }
    for (w_row, bits) in fresh_weights.into_iter().zip(fresh_bits) {
        let k_new = ctx.add_feature_with_parent(l, w_row);
        if sampled {
            for (mi, &n) in members.iter().enumerate() {
                if bits[mi] {
                    ctx.set_z(n, k_new, true);
                }
            }
        }
    }
    for &k in singles.iter().rev() {
        ctx.set_m(l, k, false);
        debug_assert!(ctx.state.m.entries.col(k).is_empty());
        ctx.remove_feature(k);
    }
}

// ---------------------------------------------------------------------
// Noisy-or feature sweep
// ---------------------------------------------------------------------

/// Two-point Gibbs over every sampled feature bit with at least one active
/// parent; zero-parent bits are pinned off by the link.
pub(crate) fn sweep_z_noisyor<R: Rng + ?Sized>(ctx: &mut SamplerCtx, rng: &mut R) {
    debug_assert_eq!(ctx.state.z.storage, FeatureStorage::Sampled);
    let q = ctx.state.hypers.q;
    for n in 0..ctx.n() {
        for k in 0..ctx.state.k() {
            let count = ctx.count(n, k) as usize;
            if count == 0 {
                debug_assert!(!ctx.state.z.entries.get(n, k));
                continue;
            }
            let p1 = noisy_or_on_prob(q, count);
            let z = ctx.state.z.entries.get(n, k);
            let ll0 = if z { ctx.z_flip_delta(n, k, false) } else { 0.0 };
            let ll1 = if z { 0.0 } else { ctx.z_flip_delta(n, k, true) };
            let bit = sample_log_weights(&[(1.0 - p1).ln() + ll0, p1.ln() + ll1], rng) == 1;
            if bit != z {
                ctx.set_z(n, k, bit);
            }
        }
    }
}

//! Working state for the Gibbs sweeps: the chain state plus incrementally
//! maintained parent counts and linear means.
//!
//! Every structural edit goes through the primitives here so the scratch
//! matrices, the derived feature state and the weight rows stay consistent.
//! Categories and features are removed eagerly the moment they empty, so the
//! state is structurally clean at every move boundary.

use crate::error::{Error, Result};
use crate::likelihood::{bernoulli_obs_logprob, normal_logpdf};
use crate::model::{ChainState, DataKind, Dataset, FeatureStorage, LikelihoodParams};

pub(crate) struct SamplerCtx<'d> {
    pub data: &'d Dataset,
    pub state: ChainState,
    /// Parent counts per feature column: counts[k][n] = c_n . m_k.
    counts: Vec<Vec<u32>>,
    /// Current linear means per row (continuous likelihood only).
    mu: Vec<Vec<f64>>,
}

impl<'d> SamplerCtx<'d> {
    pub fn new(data: &'d Dataset, state: ChainState) -> Result<Self> {
        if state.n() != data.n() {
            return Err(Error::DimensionMismatch(format!(
                "state has {} rows but data has {}",
                state.n(),
                data.n()
            )));
        }
        match &state.params {
            LikelihoodParams::Continuous { weights, .. } => {
                if data.kind != DataKind::Continuous {
                    return Err(Error::InvalidModel(
                        "continuous parameters with non-continuous data".into(),
                    ));
                }
                if weights.iter().any(|row| row.len() != data.d()) {
                    return Err(Error::DimensionMismatch(
                        "weight rows must match the data dimension".into(),
                    ));
                }
            }
            LikelihoodParams::Binary { .. } => {
                if data.kind != DataKind::Binary {
                    return Err(Error::InvalidModel(
                        "binary parameters with non-binary data".into(),
                    ));
                }
                if state.k() != data.d() {
                    return Err(Error::DimensionMismatch(format!(
                        "binary models need K = D = {}, got K = {}",
                        data.d(),
                        state.k()
                    )));
                }
            }
        }
        let mut ctx = SamplerCtx {
            data,
            state,
            counts: Vec::new(),
            mu: Vec::new(),
        };
        ctx.rebuild_scratch();
        Ok(ctx)
    }

    pub fn n(&self) -> usize {
        self.state.n()
    }

    pub fn d(&self) -> usize {
        self.data.d()
    }

    pub fn count(&self, n: usize, k: usize) -> u32 {
        self.counts[k][n]
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        match &self.state.params {
            LikelihoodParams::Continuous { weights, .. } => weights,
            LikelihoodParams::Binary { .. } => panic!("no weights under the binary likelihood"),
        }
    }

    pub fn noise_sd(&self) -> f64 {
        match &self.state.params {
            LikelihoodParams::Continuous { noise_sd, .. } => *noise_sd,
            LikelihoodParams::Binary { .. } => panic!("no noise sd under the binary likelihood"),
        }
    }

    pub fn weight_rate(&self) -> f64 {
        match &self.state.params {
            LikelihoodParams::Continuous { weight_rate, .. } => *weight_rate,
            LikelihoodParams::Binary { .. } => panic!("no weight rate under the binary likelihood"),
        }
    }

    pub fn is_continuous(&self) -> bool {
        self.data.kind == DataKind::Continuous
    }

    pub fn rebuild_scratch(&mut self) {
        let n = self.n();
        let k = self.state.k();
        self.counts = vec![vec![0u32; n]; k];
        for feat in 0..k {
            for &l in self.state.m.entries.col(feat) {
                for &row in self.state.c.entries.col(l) {
                    self.counts[feat][row] += 1;
                }
            }
        }
        if self.is_continuous() {
            self.mu = crate::likelihood::linear_means(
                &self.state.z.entries,
                self.weights(),
                self.d(),
            );
        } else {
            self.mu = Vec::new();
        }
    }

    // ------------------------------------------------------------------
    // Likelihood helpers (observed cells only)
    // ------------------------------------------------------------------

    /// Log likelihood of row `n` at its current state.
    pub fn row_loglik_current(&self, n: usize) -> f64 {
        match &self.state.params {
            LikelihoodParams::Continuous { noise_sd, .. } => {
                let mut total = 0.0;
                for d in 0..self.d() {
                    if self.data.observed[(n, d)] {
                        total += normal_logpdf(self.data.x[(n, d)], self.mu[n][d], *noise_sd);
                    }
                }
                total
            }
            LikelihoodParams::Binary {
                false_detect,
                miss_detect,
            } => {
                let mut total = 0.0;
                for d in 0..self.d() {
                    if self.data.observed[(n, d)] {
                        total += bernoulli_obs_logprob(
                            self.data.x[(n, d)] != 0.0,
                            self.state.z.entries.get(n, d),
                            false_detect[d],
                            miss_detect[d],
                        );
                    }
                }
                total
            }
        }
    }

    /// Continuous: log likelihood of row `n` with the given mean row.
    pub fn row_loglik_mean(&self, n: usize, mean: &[f64]) -> f64 {
        let noise_sd = self.noise_sd();
        let mut total = 0.0;
        for d in 0..self.d() {
            if self.data.observed[(n, d)] {
                total += normal_logpdf(self.data.x[(n, d)], mean[d], noise_sd);
            }
        }
        total
    }

    /// Continuous: log likelihood of row `n` with `delta` added to its
    /// current mean.
    pub fn row_loglik_shifted(&self, n: usize, delta: &[f64]) -> f64 {
        let noise_sd = self.noise_sd();
        let mut total = 0.0;
        for d in 0..self.d() {
            if self.data.observed[(n, d)] {
                total +=
                    normal_logpdf(self.data.x[(n, d)], self.mu[n][d] + delta[d], noise_sd);
            }
        }
        total
    }

    /// Binary: log likelihood of row `n` with the feature bits given by the
    /// sorted active set.
    pub fn row_loglik_active(&self, n: usize, active: &[usize]) -> f64 {
        let LikelihoodParams::Binary {
            false_detect,
            miss_detect,
        } = &self.state.params
        else {
            panic!("row_loglik_active is a binary-likelihood helper");
        };
        let mut total = 0.0;
        for d in 0..self.d() {
            if self.data.observed[(n, d)] {
                let z = active.binary_search(&d).is_ok();
                total += bernoulli_obs_logprob(
                    self.data.x[(n, d)] != 0.0,
                    z,
                    false_detect[d],
                    miss_detect[d],
                );
            }
        }
        total
    }

    /// Log-likelihood change from flipping feature bit (n, k) to `value`.
    pub fn z_flip_delta(&self, n: usize, k: usize, value: bool) -> f64 {
        let current = self.state.z.entries.get(n, k);
        if current == value {
            return 0.0;
        }
        match &self.state.params {
            LikelihoodParams::Continuous { weights, noise_sd } => {
                let sign = if value { 1.0 } else { -1.0 };
                let mut delta = 0.0;
                for d in 0..self.d() {
                    if self.data.observed[(n, d)] {
                        let x = self.data.x[(n, d)];
                        let old_mean = self.mu[n][d];
                        let new_mean = old_mean + sign * weights[k][d];
                        delta += normal_logpdf(x, new_mean, *noise_sd)
                            - normal_logpdf(x, old_mean, *noise_sd);
                    }
                }
                delta
            }
            LikelihoodParams::Binary {
                false_detect,
                miss_detect,
            } => {
                if !self.data.observed[(n, k)] {
                    return 0.0;
                }
                let x = self.data.x[(n, k)] != 0.0;
                bernoulli_obs_logprob(x, value, false_detect[k], miss_detect[k])
                    - bernoulli_obs_logprob(x, current, false_detect[k], miss_detect[k])
            }
        }
    }

    // Pattern-unfriendly enum access for the continuous branch.
    fn weights_and_sd(&self) -> (&[Vec<f64>], f64) {
        match &self.state.params {
            LikelihoodParams::Continuous {
                weights, noise_sd, ..
            } => (weights, *noise_sd),
            LikelihoodParams::Binary { .. } => unreachable!(),
        }
    }

    // ------------------------------------------------------------------
    // Structural edit primitives
    // ------------------------------------------------------------------

    /// Flips category membership c_{nl}, updating parent counts and (for
    /// derived storage) the feature bits and means it implies.
    pub fn set_c(&mut self, n: usize, l: usize, value: bool) {
        if self.state.c.entries.get(n, l) == value {
            return;
        }
        self.state.c.entries.set(n, l, value);
        let children = self.state.m.entries.row(l).to_vec();
        for k in children {
            if value {
                self.counts[k][n] += 1;
            } else {
                self.counts[k][n] -= 1;
            }
            self.refresh_derived_bit(n, k);
        }
    }

    /// Flips connection m_{lk}, updating counts for every member of the
    /// category and the derived feature bits.
    pub fn set_m(&mut self, l: usize, k: usize, value: bool) {
        if self.state.m.entries.get(l, k) == value {
            return;
        }
        self.state.m.entries.set(l, k, value);
        let members = self.state.c.entries.col(l).to_vec();
        for n in members {
            if value {
                self.counts[k][n] += 1;
            } else {
                self.counts[k][n] -= 1;
            }
            self.refresh_derived_bit(n, k);
        }
    }

    /// Sets a sampled feature bit directly (noisy-or only).
    pub fn set_z(&mut self, n: usize, k: usize, value: bool) {
        debug_assert_eq!(self.state.z.storage, FeatureStorage::Sampled);
        let current = self.state.z.entries.get(n, k);
        if current == value {
            return;
        }
        debug_assert!(!value || self.counts[k][n] > 0, "no-leak violation");
        self.state.z.entries.set(n, k, value);
        if self.is_continuous() {
            let (weights, _) = self.weights_and_sd();
            let sign = if value { 1.0 } else { -1.0 };
            let row = weights[k].clone();
            for (d, w) in row.iter().enumerate() {
                self.mu[n][d] += sign * w;
            }
        }
    }

    fn refresh_derived_bit(&mut self, n: usize, k: usize) {
        if self.state.z.storage != FeatureStorage::Derived {
            return;
        }
        let should = self.counts[k][n] > 0;
        let current = self.state.z.entries.get(n, k);
        if should == current {
            return;
        }
        self.state.z.entries.set(n, k, should);
        if self.is_continuous() {
            let sign = if should { 1.0 } else { -1.0 };
            let row = self.weights()[k].clone();
            for (d, w) in row.iter().enumerate() {
                self.mu[n][d] += sign * w;
            }
        }
    }

    /// Adds an empty category whose connection row has ones at
    /// `existing_cols`, plus one brand-new feature column per entry of
    /// `fresh_weights`, each parented by the new category. Returns the new
    /// category index. The category has no members yet, so no counts change
    /// for existing features.
    pub fn add_category(
        &mut self,
        existing_cols: &[usize],
        fresh_weights: Vec<Vec<f64>>,
    ) -> usize {
        let l_new = self.state.c.entries.push_col();
        let row = self.state.m.entries.push_row(existing_cols);
        debug_assert_eq!(l_new, row);
        for w in fresh_weights {
            self.add_feature_with_parent(l_new, w);
        }
        l_new
    }

    /// Adds a brand-new feature column parented by category `l`. Members of
    /// `l` get a parent count of one; derived storage activates their bits.
    pub fn add_feature_with_parent(&mut self, l: usize, weight_row: Vec<f64>) -> usize {
        let k_new = self.state.m.entries.push_col();
        self.state.z.entries.push_col();
        self.counts.push(vec![0u32; self.n()]);
        if let LikelihoodParams::Continuous { weights, .. } = &mut self.state.params {
            debug_assert_eq!(weight_row.len(), self.data.d());
            weights.push(weight_row);
        }
        self.state.m.entries.set(l, k_new, true);
        let members = self.state.c.entries.col(l).to_vec();
        for n in members {
            self.counts[k_new][n] += 1;
            self.refresh_derived_bit(n, k_new);
        }
        k_new
    }

    /// Removes an empty category (its column must have no members), dropping
    /// its connection row and any feature columns that lose their last
    /// parent. Feature columns are only cascaded when they are not pinned.
    pub fn remove_category(&mut self, l: usize) {
        assert!(self.state.c.entries.col(l).is_empty());
        let children = self.state.m.entries.row(l).to_vec();
        self.state.c.entries.remove_col(l);
        self.state.m.entries.remove_row(l);
        if !self.state.features_pinned() {
            // Children that lost their only parent: indices already reflect
            // the removed row, so re-check emptiness and drop from the top.
            let mut orphans: Vec<usize> = children
                .into_iter()
                .filter(|&k| self.state.m.entries.col(k).is_empty())
                .collect();
            orphans.sort_unstable();
            for k in orphans.into_iter().rev() {
                self.remove_feature(k);
            }
        }
    }

    /// Removes a feature column with no remaining parents and no active
    /// assignments.
    pub fn remove_feature(&mut self, k: usize) {
        assert!(self.state.m.entries.col(k).is_empty());
        assert_eq!(self.state.z.entries.col_sum(k), 0);
        self.state.m.entries.remove_col(k);
        self.state.z.entries.remove_col(k);
        self.counts.remove(k);
        if let LikelihoodParams::Continuous { weights, .. } = &mut self.state.params {
            weights.remove(k);
        }
    }

    /// Refreshes the mean matrix after the weight rows were resampled.
    pub fn refresh_means(&mut self) {
        if self.is_continuous() {
            self.mu = crate::likelihood::linear_means(
                &self.state.z.entries,
                self.weights(),
                self.d(),
            );
        }
    }

    #[cfg(debug_assertions)]
    pub fn debug_check(&self) {
        self.state
            .validate()
            .unwrap_or_else(|e| panic!("state invariant violated: {e}"));
        let k = self.state.k();
        for feat in 0..k {
            for n in 0..self.n() {
                let truth = self.state.parent_count(n, feat) as u32;
                assert_eq!(
                    self.counts[feat][n], truth,
                    "stale count at ({n}, {feat})"
                );
            }
        }
        if self.is_continuous() {
            let truth = crate::likelihood::linear_means(
                &self.state.z.entries,
                self.weights(),
                self.d(),
            );
            for n in 0..self.n() {
                for d in 0..self.d() {
                    assert!(
                        (self.mu[n][d] - truth[n][d]).abs() < 1e-6,
                        "stale mean at ({n}, {d}): {} vs {}",
                        self.mu[n][d],
                        truth[n][d]
                    );
                }
            }
        }
    }
}

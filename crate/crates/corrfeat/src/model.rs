//! Domain types shared by every module: the observed data, the three latent
//! binary layers, likelihood parameters, hyperparameters, and the chain state
//! that bundles one snapshot of all of them.
//!
//! The generative structure is a two-layer hierarchy: observations pick
//! categories (C), categories pick features (M), and the feature assignments
//! Z are the link-function image of the product C*M. Data X depend on Z and
//! the likelihood parameters only.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{sparse_dot, SparseBinaryMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Continuous,
    Binary,
}

/// Observed matrix with an observation mask. Cells with `observed = false`
/// (missing values or held-out cells) are excluded from every likelihood term.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub observed: Array2<bool>,
    pub kind: DataKind,
}

impl Dataset {
    pub fn new(x: Array2<f64>, observed: Array2<bool>, kind: DataKind) -> Result<Self> {
        if x.dim() != observed.dim() {
            return Err(Error::DimensionMismatch(format!(
                "data is {:?} but mask is {:?}",
                x.dim(),
                observed.dim()
            )));
        }
        if kind == DataKind::Binary {
            for ((i, j), &v) in x.indexed_iter() {
                if observed[(i, j)] && v != 0.0 && v != 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "binary dataset has value {v} at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Dataset { x, observed, kind })
    }

    /// Fully observed continuous data.
    pub fn fully_observed(x: Array2<f64>, kind: DataKind) -> Result<Self> {
        let observed = Array2::from_elem(x.dim(), true);
        Dataset::new(x, observed, kind)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_observed(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    /// Per-dimension mean over observed training cells; dimensions with no
    /// observed cells fall back to 0.
    pub fn column_means_observed(&self) -> Vec<f64> {
        (0..self.d())
            .map(|d| {
                let mut sum = 0.0;
                let mut count = 0usize;
                for n in 0..self.n() {
                    if self.observed[(n, d)] {
                        sum += self.x[(n, d)];
                        count += 1;
                    }
                }
                if count == 0 {
                    0.0
                } else {
                    sum / count as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryMode {
    /// One-hot rows: each observation belongs to exactly one category.
    Dp,
    /// Arbitrary binary rows: multiple memberships allowed.
    Ibp,
}

/// Observation-to-category assignments, N x L.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMatrix {
    pub entries: SparseBinaryMatrix,
    pub mode: CategoryMode,
}

impl CategoryMatrix {
    pub fn l(&self) -> usize {
        self.entries.n_cols()
    }

    /// The single category of row `n` (Dp mode only).
    pub fn assignment(&self, n: usize) -> usize {
        debug_assert_eq!(self.mode, CategoryMode::Dp);
        self.entries.row(n)[0]
    }
}

/// Category-to-feature links, L x K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionMatrix {
    pub entries: SparseBinaryMatrix,
}

impl ConnectionMatrix {
    pub fn k(&self) -> usize {
        self.entries.n_cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureStorage {
    /// Entries equal link(C*M) exactly and are recomputed, never mutated
    /// independently.
    Derived,
    /// Entries are sampled explicitly (noisy-or only); a one requires at
    /// least one active parent.
    Sampled,
}

/// Observation-to-feature assignments, N x K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureState {
    pub entries: SparseBinaryMatrix,
    pub storage: FeatureStorage,
}

/// Likelihood parameters for the two observation models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodParams {
    /// X = Z * weights + noise; weights have an Exponential(weight_rate)
    /// prior, so all entries are nonnegative.
    Continuous {
        /// K x D nonnegative feature weights.
        weights: Vec<Vec<f64>>,
        noise_sd: f64,
        weight_rate: f64,
    },
    /// Noisy tag observations: P(x=1 | z=1) = 1 - miss_detect[d],
    /// P(x=1 | z=0) = false_detect[d]. Features coincide with the data
    /// dimensions, so K = D.
    Binary {
        false_detect: Vec<f64>,
        miss_detect: Vec<f64>,
    },
}

impl LikelihoodParams {
    pub fn kind(&self) -> DataKind {
        match self {
            LikelihoodParams::Continuous { .. } => DataKind::Continuous,
            LikelihoodParams::Binary { .. } => DataKind::Binary,
        }
    }
}

/// Concentrations of the two nonparametric layers plus the hyperprior they
/// are resampled under. `q` is the noisy-or link's per-parent failure
/// probability; it is a fixed run constant, never sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub alpha_c: f64,
    pub alpha_m: f64,
    pub q: f64,
    pub gamma_shape: f64,
    pub gamma_rate: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha_c: 1.0,
            alpha_m: 1.0,
            q: 0.1,
            gamma_shape: 1.0,
            gamma_rate: 1.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_c <= 0.0 || self.alpha_m <= 0.0 {
            return Err(Error::InvalidParameter(
                "concentrations must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::InvalidParameter("q must lie in [0, 1]".into()));
        }
        if self.gamma_shape <= 0.0 || self.gamma_rate <= 0.0 {
            return Err(Error::InvalidParameter(
                "gamma hyperprior parameters must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Product,
    HardOr,
    NoisyOr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// Flat clustering baseline: Z = C with one feature per cluster.
    Dp,
    /// Independent-feature baseline: Z = C.
    Ibp,
    DpIbp,
    IbpIbp,
    NoisyOrIbpIbp,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 5] = [
        ModelVariant::Dp,
        ModelVariant::Ibp,
        ModelVariant::DpIbp,
        ModelVariant::IbpIbp,
        ModelVariant::NoisyOrIbpIbp,
    ];

    /// The baselines keep an identity connection layer so Z = C holds
    /// structurally; their counts never exceed one, so the product link is
    /// exact for them too.
    pub fn link(self) -> LinkKind {
        match self {
            ModelVariant::Dp | ModelVariant::Ibp | ModelVariant::DpIbp => LinkKind::Product,
            ModelVariant::IbpIbp => LinkKind::HardOr,
            ModelVariant::NoisyOrIbpIbp => LinkKind::NoisyOr,
        }
    }

    pub fn category_mode(self) -> CategoryMode {
        match self {
            ModelVariant::Dp | ModelVariant::DpIbp => CategoryMode::Dp,
            _ => CategoryMode::Ibp,
        }
    }

    /// Whether the connection matrix is a sampled layer (false for the
    /// baselines, whose M is a fixed identity).
    pub fn has_connection_layer(self) -> bool {
        matches!(
            self,
            ModelVariant::DpIbp | ModelVariant::IbpIbp | ModelVariant::NoisyOrIbpIbp
        )
    }

    pub fn feature_storage(self) -> FeatureStorage {
        if self.link() == LinkKind::NoisyOr {
            FeatureStorage::Sampled
        } else {
            FeatureStorage::Derived
        }
    }

    /// The model this one is initialised from in the warm-start chain:
    /// dp seeds ibp and dp-ibp, dp-ibp seeds ibp-ibp, ibp-ibp seeds the
    /// noisy-or variant.
    pub fn cascade_predecessor(self) -> Option<ModelVariant> {
        match self {
            ModelVariant::Dp => None,
            ModelVariant::Ibp | ModelVariant::DpIbp => Some(ModelVariant::Dp),
            ModelVariant::IbpIbp => Some(ModelVariant::DpIbp),
            ModelVariant::NoisyOrIbpIbp => Some(ModelVariant::IbpIbp),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Dp => "dp",
            ModelVariant::Ibp => "ibp",
            ModelVariant::DpIbp => "dp-ibp",
            ModelVariant::IbpIbp => "ibp-ibp",
            ModelVariant::NoisyOrIbpIbp => "noisyor-ibp-ibp",
        }
    }
}

impl std::str::FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidModel(format!("unknown model variant '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: ModelVariant,
}

impl ModelSpec {
    pub fn new(variant: ModelVariant) -> Self {
        ModelSpec { variant }
    }

    pub fn link(&self) -> LinkKind {
        self.variant.link()
    }
}

/// One MCMC snapshot: all latent matrices, parameters and hyperparameters.
///
/// A state is a self-contained value; chains clone and mutate their own copy
/// and never share mutable state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub spec: ModelSpec,
    pub c: CategoryMatrix,
    pub m: ConnectionMatrix,
    pub z: FeatureState,
    pub params: LikelihoodParams,
    pub hypers: Hyperparams,
    pub iteration: u64,
}

impl ChainState {
    pub fn n(&self) -> usize {
        self.c.entries.n_rows()
    }

    pub fn l(&self) -> usize {
        self.c.l()
    }

    pub fn k(&self) -> usize {
        self.m.k()
    }

    /// Binary data ties features to the data dimensions, so the feature
    /// columns are pinned: they are never grown or compacted away.
    pub fn features_pinned(&self) -> bool {
        self.params.kind() == DataKind::Binary
    }

    /// The ibp baseline on binary data pins its category columns too
    /// (identity structure with pinned features).
    pub fn categories_pinned(&self) -> bool {
        self.features_pinned() && !self.spec.variant.has_connection_layer()
    }

    /// Parent count of feature `k` for observation `n`.
    pub fn parent_count(&self, n: usize, k: usize) -> usize {
        sparse_dot(self.c.entries.row(n), self.m.entries.col(k))
    }

    /// Verifies every structural invariant. Cheap enough to run after each
    /// sweep in debug builds.
    pub fn validate(&self) -> Result<()> {
        let (n, l, k) = (self.n(), self.l(), self.k());
        if self.m.entries.n_rows() != l {
            return Err(Error::DimensionMismatch(format!(
                "connection matrix has {} rows but there are {l} categories",
                self.m.entries.n_rows()
            )));
        }
        if self.z.entries.n_rows() != n || self.z.entries.n_cols() != k {
            return Err(Error::DimensionMismatch(format!(
                "feature state is {}x{}, expected {n}x{k}",
                self.z.entries.n_rows(),
                self.z.entries.n_cols()
            )));
        }
        self.hypers.validate()?;
        if self.c.mode == CategoryMode::Dp {
            for row in 0..n {
                if self.c.entries.row_sum(row) != 1 {
                    return Err(Error::InvalidModel(format!(
                        "dp-mode category row {row} is not one-hot"
                    )));
                }
            }
        }
        if !self.categories_pinned() {
            if let Some(&col) = self.c.entries.empty_cols().first() {
                return Err(Error::InvalidModel(format!("empty category column {col}")));
            }
        }
        if !self.features_pinned() {
            if let Some(&col) = self.m.entries.empty_cols().first() {
                return Err(Error::InvalidModel(format!("empty feature column {col}")));
            }
        }
        if !self.spec.variant.has_connection_layer() {
            // Identity structure: Z = C exactly.
            if self.m.entries != SparseBinaryMatrix::identity(l) {
                return Err(Error::InvalidModel(
                    "baseline model requires an identity connection matrix".into(),
                ));
            }
        }
        let expected_storage = self.spec.variant.feature_storage();
        if self.z.storage != expected_storage {
            return Err(Error::InvalidModel(format!(
                "feature storage is {:?}, expected {:?}",
                self.z.storage, expected_storage
            )));
        }
        match self.z.storage {
            FeatureStorage::Derived => {
                for row in 0..n {
                    for feat in 0..k {
                        let count = self.parent_count(row, feat);
                        if self.spec.link() == LinkKind::Product && count > 1 {
                            return Err(Error::InvalidModel(format!(
                                "product link saw parent count {count} at ({row}, {feat})"
                            )));
                        }
                        if self.z.entries.get(row, feat) != (count > 0) {
                            return Err(Error::InvalidModel(format!(
                                "derived feature state out of date at ({row}, {feat})"
                            )));
                        }
                    }
                }
            }
            FeatureStorage::Sampled => {
                // No leak: a sampled one needs at least one active parent.
                for (row, feat) in self.z.entries.entries().collect::<Vec<_>>() {
                    if self.parent_count(row, feat) == 0 {
                        return Err(Error::InvalidModel(format!(
                            "feature ({row}, {feat}) active with no active parent"
                        )));
                    }
                }
            }
        }
        match &self.params {
            LikelihoodParams::Continuous {
                weights,
                noise_sd,
                weight_rate,
            } => {
                if weights.len() != k {
                    return Err(Error::DimensionMismatch(format!(
                        "{} weight rows for {k} features",
                        weights.len()
                    )));
                }
                if weights.iter().flatten().any(|&w| w < 0.0) {
                    return Err(Error::InvalidParameter("negative feature weight".into()));
                }
                if *noise_sd <= 0.0 || *weight_rate <= 0.0 {
                    return Err(Error::InvalidParameter(
                        "noise_sd and weight_rate must be positive".into(),
                    ));
                }
            }
            LikelihoodParams::Binary {
                false_detect,
                miss_detect,
            } => {
                if false_detect.len() != k || miss_detect.len() != k {
                    return Err(Error::DimensionMismatch(
                        "detection rates must have one entry per feature".into(),
                    ));
                }
                let ok = |p: &f64| (0.0..=1.0).contains(p);
                if !false_detect.iter().all(ok) || !miss_detect.iter().all(ok) {
                    return Err(Error::InvalidParameter(
                        "detection rates must lie in [0, 1]".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Removes empty category columns (with their connection rows) and empty
/// feature columns (with their feature-state columns and weight rows),
/// preserving the relative order of the survivors. Pinned dimensions are
/// left alone.
pub fn compact(mut state: ChainState) -> ChainState {
    if !state.categories_pinned() {
        for col in state.c.entries.empty_cols().into_iter().rev() {
            state.c.entries.remove_col(col);
            state.m.entries.remove_row(col);
        }
    }
    if !state.features_pinned() {
        for col in state.m.entries.empty_cols().into_iter().rev() {
            debug_assert_eq!(
                state.z.entries.col_sum(col),
                0,
                "removing a feature column that still has active assignments"
            );
            state.m.entries.remove_col(col);
            state.z.entries.remove_col(col);
            if let LikelihoodParams::Continuous { weights, .. } = &mut state.params {
                weights.remove(col);
            }
        }
    }
    state
}

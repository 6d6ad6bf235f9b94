//! Link functions mapping the parent count c_n . m_k to a feature
//! assignment.
//!
//! Every link satisfies the no-leak requirement: a zero parent count yields
//! an inactive feature with probability one. This is what keeps the number
//! of active features finite under the composed nonparametric priors.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::SparseBinaryMatrix;
use crate::model::{CategoryMatrix, ConnectionMatrix, FeatureState, FeatureStorage, LinkKind};

/// Number of active parent categories of a feature for one observation:
/// the dot product of a category row with a connection column.
pub fn product_count(c_row: &[bool], m_col: &[bool]) -> Result<usize> {
    if c_row.len() != m_col.len() {
        return Err(Error::DimensionMismatch(format!(
            "category row has length {} but connection column has length {}",
            c_row.len(),
            m_col.len()
        )));
    }
    Ok(c_row.iter().zip(m_col).filter(|(&c, &m)| c && m).count())
}

/// Activation probability of the noisy-or link: 1 - q^count, with the
/// convention q^0 = 1 (also at q = 0) so a zero count can never activate.
pub fn noisy_or_on_prob(q: f64, count: usize) -> f64 {
    if count == 0 {
        return 0.0;
    }
    1.0 - q.powi(count as i32)
}

/// Applies a link function to a parent count. The deterministic links ignore
/// `q` and the rng. A product-link count above one signals that the category
/// matrix was not one-hot, which is a model misconfiguration.
pub fn link_apply<R: Rng + ?Sized>(
    kind: LinkKind,
    count: usize,
    q: f64,
    rng: &mut R,
) -> Result<bool> {
    match kind {
        LinkKind::Product => {
            if count > 1 {
                return Err(Error::InvalidModel(format!(
                    "product link saw parent count {count}; categories must be one-hot"
                )));
            }
            Ok(count == 1)
        }
        LinkKind::HardOr => Ok(count > 0),
        LinkKind::NoisyOr => Ok(rng.random::<f64>() < noisy_or_on_prob(q, count)),
    }
}

/// Materialises Z = link(C * M) for the deterministic links. The noisy-or
/// link is rejected: its feature state is sampled, never derived.
pub fn compute_z(
    c: &CategoryMatrix,
    m: &ConnectionMatrix,
    kind: LinkKind,
) -> Result<FeatureState> {
    if kind == LinkKind::NoisyOr {
        return Err(Error::InvalidModel(
            "noisy-or feature assignments must be sampled, not derived".into(),
        ));
    }
    if c.entries.n_cols() != m.entries.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} categories but {} connection rows",
            c.entries.n_cols(),
            m.entries.n_rows()
        )));
    }
    let n = c.entries.n_rows();
    let k = m.entries.n_cols();
    let mut z = SparseBinaryMatrix::zeros(n, k);
    for row in 0..n {
        let active = c.entries.row(row);
        for feat in 0..k {
            let count = crate::matrix::sparse_dot(active, m.entries.col(feat));
            if kind == LinkKind::Product && count > 1 {
                return Err(Error::InvalidModel(format!(
                    "product link saw parent count {count} at ({row}, {feat})"
                )));
            }
            if count > 0 {
                z.set(row, feat, true);
            }
        }
    }
    Ok(FeatureState {
        entries: z,
        storage: FeatureStorage::Derived,
    })
}

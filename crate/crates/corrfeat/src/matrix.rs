//! Column-sparse binary matrices for the latent layers.
//!
//! The category, connection and feature matrices all have many rows and few
//! columns, and the Gibbs sweeps need both orientations quickly: "which rows
//! use column k" when computing usage counts, and "which columns does row n
//! use" when computing an observation's active set. Both index lists are kept
//! sorted and in sync.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "SparseRepr", into = "SparseRepr")]
pub struct SparseBinaryMatrix {
    n_rows: usize,
    /// Sorted row indices per column.
    col_rows: Vec<Vec<usize>>,
    /// Sorted column indices per row.
    row_cols: Vec<Vec<usize>>,
}

/// Serialized form: dimensions plus the list of one-entries.
#[derive(Serialize, Deserialize)]
struct SparseRepr {
    n_rows: usize,
    n_cols: usize,
    ones: Vec<(usize, usize)>,
}

impl From<SparseBinaryMatrix> for SparseRepr {
    fn from(m: SparseBinaryMatrix) -> Self {
        let ones = m.entries().collect();
        SparseRepr {
            n_rows: m.n_rows,
            n_cols: m.n_cols(),
            ones,
        }
    }
}

impl From<SparseRepr> for SparseBinaryMatrix {
    fn from(r: SparseRepr) -> Self {
        let mut m = SparseBinaryMatrix::zeros(r.n_rows, r.n_cols);
        for (i, j) in r.ones {
            m.set(i, j, true);
        }
        m
    }
}

impl SparseBinaryMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseBinaryMatrix {
            n_rows,
            col_rows: vec![Vec::new(); n_cols],
            row_cols: vec![Vec::new(); n_rows],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn from_entries(n_rows: usize, n_cols: usize, ones: &[(usize, usize)]) -> Self {
        let mut m = Self::zeros(n_rows, n_cols);
        for &(i, j) in ones {
            m.set(i, j, true);
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.col_rows.len()
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.col_rows[col].binary_search(&row).is_ok()
    }

    /// Sets an entry, keeping both orientations in sync.
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        assert!(row < self.n_rows && col < self.n_cols());
        let cr = &mut self.col_rows[col];
        match (cr.binary_search(&row), value) {
            (Ok(_), true) | (Err(_), false) => return,
            (Err(pos), true) => cr.insert(pos, row),
            (Ok(pos), false) => {
                cr.remove(pos);
            }
        }
        let rc = &mut self.row_cols[row];
        match (rc.binary_search(&col), value) {
            (Err(pos), true) => rc.insert(pos, col),
            (Ok(pos), false) => {
                rc.remove(pos);
            }
            _ => unreachable!("orientations out of sync"),
        }
    }

    /// Sorted rows with a one in column `col`.
    pub fn col(&self, col: usize) -> &[usize] {
        &self.col_rows[col]
    }

    /// Sorted columns with a one in row `row`.
    pub fn row(&self, row: usize) -> &[usize] {
        &self.row_cols[row]
    }

    pub fn col_sum(&self, col: usize) -> usize {
        self.col_rows[col].len()
    }

    pub fn row_sum(&self, row: usize) -> usize {
        self.row_cols[row].len()
    }

    pub fn total_ones(&self) -> usize {
        self.col_rows.iter().map(Vec::len).sum()
    }

    /// Appends an empty column, returning its index.
    pub fn push_col(&mut self) -> usize {
        self.col_rows.push(Vec::new());
        self.col_rows.len() - 1
    }

    /// Appends a row with ones in `cols`, returning its index.
    pub fn push_row(&mut self, cols: &[usize]) -> usize {
        let row = self.n_rows;
        self.n_rows += 1;
        self.row_cols.push(Vec::new());
        for &c in cols {
            self.set(row, c, true);
        }
        row
    }

    /// Removes column `col`; later columns shift down by one.
    pub fn remove_col(&mut self, col: usize) {
        let rows = self.col_rows.remove(col);
        for r in rows {
            let rc = &mut self.row_cols[r];
            let pos = rc.binary_search(&col).expect("orientations out of sync");
            rc.remove(pos);
        }
        for rc in &mut self.row_cols {
            for c in rc.iter_mut() {
                if *c > col {
                    *c -= 1;
                }
            }
        }
    }

    /// Removes row `row`; later rows shift down by one.
    pub fn remove_row(&mut self, row: usize) {
        let cols = self.row_cols.remove(row);
        self.n_rows -= 1;
        for c in cols {
            let cr = &mut self.col_rows[c];
            let pos = cr.binary_search(&row).expect("orientations out of sync");
            cr.remove(pos);
        }
        for cr in &mut self.col_rows {
            for r in cr.iter_mut() {
                if *r > row {
                    *r -= 1;
                }
            }
        }
    }

    /// All one-entries as (row, col), column-major.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.col_rows
            .iter()
            .enumerate()
            .flat_map(|(c, rows)| rows.iter().map(move |&r| (r, c)))
    }

    /// Indices of all-zero columns, ascending.
    pub fn empty_cols(&self) -> Vec<usize> {
        (0..self.n_cols()).filter(|&c| self.col_rows[c].is_empty()).collect()
    }

    #[cfg(debug_assertions)]
    pub(crate) fn check_consistency(&self) {
        for (c, rows) in self.col_rows.iter().enumerate() {
            assert!(rows.windows(2).all(|w| w[0] < w[1]), "column {c} not sorted");
            for &r in rows {
                assert!(self.row_cols[r].binary_search(&c).is_ok());
            }
        }
        for (r, cols) in self.row_cols.iter().enumerate() {
            assert!(cols.windows(2).all(|w| w[0] < w[1]), "row {r} not sorted");
            for &c in cols {
                assert!(self.col_rows[c].binary_search(&r).is_ok());
            }
        }
    }
}

/// Size of the intersection of two sorted index lists.
pub fn sparse_dot(a: &[usize], b: &[usize]) -> usize {
    let mut count = 0;
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::SmallRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn set_get_roundtrip() {
        let mut m = SparseBinaryMatrix::zeros(4, 3);
        m.set(1, 2, true);
        m.set(3, 0, true);
        assert!(m.get(1, 2));
        assert!(m.get(3, 0));
        assert!(!m.get(0, 0));
        m.set(1, 2, false);
        assert!(!m.get(1, 2));
        assert_eq!(m.total_ones(), 1);
    }

    #[test]
    fn remove_col_shifts_indices() {
        let mut m = SparseBinaryMatrix::from_entries(3, 3, &[(0, 0), (1, 1), (2, 2)]);
        m.remove_col(1);
        assert_eq!(m.n_cols(), 2);
        assert!(m.get(0, 0));
        assert!(m.get(2, 1));
        assert!(!m.get(1, 0));
    }

    #[test]
    fn remove_row_shifts_indices() {
        let mut m = SparseBinaryMatrix::from_entries(3, 2, &[(0, 0), (1, 1), (2, 0)]);
        m.remove_row(1);
        assert_eq!(m.n_rows(), 2);
        assert!(m.get(0, 0));
        assert!(m.get(1, 0));
        assert_eq!(m.col_sum(1), 0);
    }

    #[test]
    fn random_edits_stay_consistent_with_dense_oracle() {
        let mut rng = SmallRng::seed_from_u64(11);
        let (n, k) = (8, 5);
        let mut sparse = SparseBinaryMatrix::zeros(n, k);
        let mut dense = vec![vec![false; k]; n];
        for _ in 0..500 {
            let (i, j) = (rng.random_range(0..n), rng.random_range(0..k));
            let v = rng.random_bool(0.5);
            sparse.set(i, j, v);
            dense[i][j] = v;
        }
        for i in 0..n {
            for j in 0..k {
                assert_eq!(sparse.get(i, j), dense[i][j]);
            }
        }
        sparse.check_consistency();
        let ones: usize = dense.iter().flatten().filter(|&&b| b).count();
        assert_eq!(sparse.total_ones(), ones);
    }

    #[test]
    fn sparse_dot_matches_elementwise_and() {
        let mut rng = SmallRng::seed_from_u64(3);
        for _ in 0..50 {
            let len = 20;
            let a: Vec<bool> = (0..len).map(|_| rng.random_bool(0.4)).collect();
            let b: Vec<bool> = (0..len).map(|_| rng.random_bool(0.4)).collect();
            let ai: Vec<usize> = (0..len).filter(|&i| a[i]).collect();
            let bi: Vec<usize> = (0..len).filter(|&i| b[i]).collect();
            let brute = (0..len).filter(|&i| a[i] && b[i]).count();
            assert_eq!(sparse_dot(&ai, &bi), brute);
        }
    }

    #[test]
    fn serde_roundtrip() {
        let m = SparseBinaryMatrix::from_entries(4, 3, &[(0, 1), (2, 0), (3, 2)]);
        let s = serde_json::to_string(&m).unwrap();
        let back: SparseBinaryMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
    }
}

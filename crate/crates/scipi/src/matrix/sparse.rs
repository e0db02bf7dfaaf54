use std::sync::OnceLock;

use super::{DenseCountMatrix, MatrixError};

/// Column-major mirror of a CSR matrix. `triplet_ids[p]` is the CSR storage
/// position of the entry at CSC position `p`, so samplers that index triplets
/// can translate between the two orders.
#[derive(Debug, Clone)]
pub struct CscMirror {
    pub col_offsets: Vec<usize>,
    pub row_indices: Vec<usize>,
    pub values: Vec<f64>,
    pub triplet_ids: Vec<usize>,
}

/// CSR sparse matrix of strictly positive stored values. Structural zeros are
/// absent: `from_triplets` drops explicit zeros and merges duplicates.
#[derive(Debug)]
pub struct SparseCountMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    csc: OnceLock<CscMirror>,
}

impl Clone for SparseCountMatrix {
    fn clone(&self) -> Self {
        SparseCountMatrix {
            rows: self.rows,
            cols: self.cols,
            row_offsets: self.row_offsets.clone(),
            col_indices: self.col_indices.clone(),
            values: self.values.clone(),
            csc: OnceLock::new(),
        }
    }
}

impl SparseCountMatrix {
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, MatrixError> {
        for &(i, j, v) in triplets {
            if i >= rows || j >= cols {
                return Err(MatrixError::IndexOutOfBounds {
                    row: i,
                    col: j,
                    rows,
                    cols,
                });
            }
            if v < 0.0 || !v.is_finite() {
                return Err(MatrixError::NegativeEntry {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> =
            triplets.iter().copied().filter(|t| t.2 > 0.0).collect();
        sorted.sort_by_key(|&(i, j, _)| (i, j));

        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(sorted.len());
        for (i, j, v) in sorted {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }

        let mut row_offsets = vec![0usize; rows + 1];
        for &(i, _, _) in &merged {
            row_offsets[i + 1] += 1;
        }
        for i in 0..rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        let col_indices = merged.iter().map(|t| t.1).collect();
        let values = merged.iter().map(|t| t.2).collect();
        Ok(SparseCountMatrix {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
            csc: OnceLock::new(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`, each sorted by column.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_offsets[i]..self.row_offsets[i + 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    /// Triplet at CSR storage position `id`. The row lookup is a binary
    /// search over the offsets.
    pub fn triplet(&self, id: usize) -> (usize, usize, f64) {
        debug_assert!(id < self.nnz());
        let row = match self.row_offsets.binary_search(&id) {
            Ok(mut r) => {
                // empty rows share offsets; advance to the row that owns `id`
                while self.row_offsets[r + 1] == id {
                    r += 1;
                }
                r
            }
            Err(r) => r - 1,
        };
        (row, self.col_indices[id], self.values[id])
    }

    pub fn iter_triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn density(&self) -> f64 {
        if self.rows == 0 || self.cols == 0 {
            return 0.0;
        }
        self.nnz() as f64 / (self.rows as f64 * self.cols as f64)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for (&j, &v) in self.col_indices.iter().zip(&self.values) {
            sums[j] += v;
        }
        sums
    }

    /// The CSC mirror, built on first use and cached.
    pub fn csc(&self) -> &CscMirror {
        self.csc.get_or_init(|| {
            let mut col_counts = vec![0usize; self.cols];
            for &j in &self.col_indices {
                col_counts[j] += 1;
            }
            let mut col_offsets = vec![0usize; self.cols + 1];
            for j in 0..self.cols {
                col_offsets[j + 1] = col_offsets[j] + col_counts[j];
            }
            let mut cursor = col_offsets.clone();
            let nnz = self.nnz();
            let mut row_indices = vec![0usize; nnz];
            let mut values = vec![0.0; nnz];
            let mut triplet_ids = vec![0usize; nnz];
            for i in 0..self.rows {
                for id in self.row_range(i) {
                    let j = self.col_indices[id];
                    let p = cursor[j];
                    cursor[j] += 1;
                    row_indices[p] = i;
                    values[p] = self.values[id];
                    triplet_ids[p] = id;
                }
            }
            CscMirror {
                col_offsets,
                row_indices,
                values,
                triplet_ids,
            }
        })
    }

    /// Row indices and values of column `j`, sorted by row.
    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let csc = self.csc();
        let lo = csc.col_offsets[j];
        let hi = csc.col_offsets[j + 1];
        (&csc.row_indices[lo..hi], &csc.values[lo..hi])
    }

    /// Transposed copy built from the CSC mirror; the triplet sets agree by
    /// construction.
    pub fn transposed(&self) -> SparseCountMatrix {
        let csc = self.csc();
        SparseCountMatrix {
            rows: self.cols,
            cols: self.rows,
            row_offsets: csc.col_offsets.clone(),
            col_indices: csc.row_indices.clone(),
            values: csc.values.clone(),
            csc: OnceLock::new(),
        }
    }

    pub fn to_dense(&self) -> DenseCountMatrix {
        let mut out = DenseCountMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.iter_triplets() {
            out.set(i, j, v);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_merge_and_zeros_drop() {
        let m = SparseCountMatrix::from_triplets(
            2,
            3,
            &[(0, 1, 2.0), (0, 1, 3.0), (1, 0, 0.0), (1, 2, 1.0)],
        )
        .unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.row(0), (&[1usize][..], &[5.0][..]));
        assert_eq!(m.row(1), (&[2usize][..], &[1.0][..]));
    }

    #[test]
    fn out_of_bounds_triplet_is_rejected() {
        let err = SparseCountMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).unwrap_err();
        assert!(matches!(err, MatrixError::IndexOutOfBounds { row: 2, .. }));
    }

    #[test]
    fn csc_mirror_holds_the_same_triplets() {
        let triplets = [(0, 2, 1.0), (1, 0, 2.0), (1, 2, 3.0), (3, 1, 4.0)];
        let m = SparseCountMatrix::from_triplets(4, 3, &triplets).unwrap();
        let mut from_csc: Vec<(usize, usize, f64)> = Vec::new();
        let csc = m.csc();
        for j in 0..3 {
            for p in csc.col_offsets[j]..csc.col_offsets[j + 1] {
                from_csc.push((csc.row_indices[p], j, csc.values[p]));
            }
        }
        from_csc.sort_by_key(|&(i, j, _)| (i, j));
        let mut from_csr: Vec<_> = m.iter_triplets().collect();
        from_csr.sort_by_key(|&(i, j, _)| (i, j));
        assert_eq!(from_csc, from_csr);
    }

    #[test]
    fn transpose_swaps_coordinates() {
        let m = SparseCountMatrix::from_triplets(2, 3, &[(0, 2, 5.0), (1, 1, 7.0)]).unwrap();
        let t = m.transposed();
        assert_eq!(t.rows(), 3);
        assert_eq!(t.cols(), 2);
        let trips: Vec<_> = t.iter_triplets().collect();
        assert_eq!(trips, vec![(1, 1, 7.0), (2, 0, 5.0)]);
    }

    #[test]
    fn triplet_lookup_handles_empty_rows() {
        let m = SparseCountMatrix::from_triplets(4, 2, &[(0, 0, 1.0), (2, 1, 2.0), (3, 0, 3.0)])
            .unwrap();
        assert_eq!(m.triplet(0), (0, 0, 1.0));
        assert_eq!(m.triplet(1), (2, 1, 2.0));
        assert_eq!(m.triplet(2), (3, 0, 3.0));
    }
}

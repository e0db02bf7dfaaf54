//! Nonnegative matrix containers and the KL-divergence objective.
//!
//! Dense matrices are row-major `Vec<f64>`; sparse matrices are CSR with a
//! lazily built CSC mirror so transposed access never re-sorts triplets.

mod dense;
mod kl;
mod sparse;

pub use dense::DenseCountMatrix;
pub use kl::{kl_divergence, product_at_nonzeros, rebalance, DENOM_FLOOR};
pub use sparse::{CscMirror, SparseCountMatrix};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("entry index ({row}, {col}) outside {rows}x{cols}")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("matrix has zero {what}")]
    EmptyDimension { what: &'static str },
    #[error("column {col} sums to zero and cannot be normalized")]
    ZeroColumnSum { col: usize },
}

/// A count matrix in either storage layout. Solvers accept this so dense
/// benchmarks and sparse corpora run through identical code paths.
#[derive(Debug, Clone)]
pub enum CountMatrix {
    Dense(DenseCountMatrix),
    Sparse(SparseCountMatrix),
}

impl CountMatrix {
    pub fn rows(&self) -> usize {
        match self {
            CountMatrix::Dense(m) => m.rows(),
            CountMatrix::Sparse(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            CountMatrix::Dense(m) => m.cols(),
            CountMatrix::Sparse(m) => m.cols(),
        }
    }

    /// Count of stored nonzero entries (dense storage scans for them).
    pub fn nnz(&self) -> usize {
        match self {
            CountMatrix::Dense(m) => m.values().iter().filter(|v| **v > 0.0).count(),
            CountMatrix::Sparse(m) => m.nnz(),
        }
    }

    /// Fraction of entries that are nonzero.
    pub fn density(&self) -> f64 {
        let cells = (self.rows() * self.cols()) as f64;
        if cells == 0.0 {
            return 0.0;
        }
        self.nnz() as f64 / cells
    }

    pub fn sum(&self) -> f64 {
        match self {
            CountMatrix::Dense(m) => m.values().iter().sum(),
            CountMatrix::Sparse(m) => m.values().iter().sum(),
        }
    }

    pub fn col_sums(&self) -> Vec<f64> {
        match self {
            CountMatrix::Dense(m) => m.col_sums(),
            CountMatrix::Sparse(m) => m.col_sums(),
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        match self {
            CountMatrix::Dense(m) => m.row_sums(),
            CountMatrix::Sparse(m) => m.row_sums(),
        }
    }

    /// Visit the nonzero entries of row `i` as `(col, value)`.
    pub fn for_each_nonzero_in_row<F: FnMut(usize, f64)>(&self, i: usize, mut f: F) {
        match self {
            CountMatrix::Dense(m) => {
                for (j, &v) in m.row(i).iter().enumerate() {
                    if v > 0.0 {
                        f(j, v);
                    }
                }
            }
            CountMatrix::Sparse(m) => {
                let (cols, vals) = m.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    f(j, v);
                }
            }
        }
    }

    /// Transposed copy. Sparse input reuses the CSC mirror, so the triplet
    /// set is identical by construction.
    pub fn transposed(&self) -> CountMatrix {
        match self {
            CountMatrix::Dense(m) => CountMatrix::Dense(m.transposed()),
            CountMatrix::Sparse(m) => CountMatrix::Sparse(m.transposed()),
        }
    }

    /// Sparse copy of the same entries, used when element-mode sampling needs
    /// an indexable nonzero list.
    pub fn to_sparse(&self) -> SparseCountMatrix {
        match self {
            CountMatrix::Dense(m) => {
                let mut triplets = Vec::new();
                for i in 0..m.rows() {
                    for (j, &v) in m.row(i).iter().enumerate() {
                        if v > 0.0 {
                            triplets.push((i, j, v));
                        }
                    }
                }
                SparseCountMatrix::from_triplets(m.rows(), m.cols(), &triplets)
                    .expect("dense entries are already validated")
            }
            CountMatrix::Sparse(m) => m.clone(),
        }
    }

    pub fn to_dense(&self) -> DenseCountMatrix {
        match self {
            CountMatrix::Dense(m) => m.clone(),
            CountMatrix::Sparse(m) => m.to_dense(),
        }
    }
}

impl From<DenseCountMatrix> for CountMatrix {
    fn from(m: DenseCountMatrix) -> Self {
        CountMatrix::Dense(m)
    }
}

impl From<SparseCountMatrix> for CountMatrix {
    fn from(m: SparseCountMatrix) -> Self {
        CountMatrix::Sparse(m)
    }
}

/// Vector of nonnegative entries; constructors reject negatives so downstream
/// code can divide and take logs without re-checking signs.
#[derive(Debug, Clone, PartialEq)]
pub struct NonnegVector(Vec<f64>);

impl NonnegVector {
    pub fn new(values: Vec<f64>) -> Result<Self, MatrixError> {
        for (i, &v) in values.iter().enumerate() {
            if v < 0.0 || v.is_nan() {
                return Err(MatrixError::NegativeEntry {
                    row: i,
                    col: 0,
                    value: v,
                });
            }
        }
        Ok(NonnegVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

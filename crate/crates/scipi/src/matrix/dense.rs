use super::MatrixError;

/// Row-major dense matrix of nonnegative values. Houses data matrices and the
/// factor pair; checked constructors keep the nonnegativity invariant so
/// ratio and log operations downstream never see a sign surprise.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseCountMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseCountMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseCountMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatrixError> {
        if data.len() != rows * cols {
            return Err(MatrixError::ShapeMismatch {
                context: "from_vec",
                expected: (rows, cols),
                got: (data.len(), 1),
            });
        }
        for (idx, &v) in data.iter().enumerate() {
            if v < 0.0 || !v.is_finite() {
                return Err(MatrixError::NegativeEntry {
                    row: idx / cols.max(1),
                    col: idx % cols.max(1),
                    value: v,
                });
            }
        }
        Ok(DenseCountMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MatrixError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(MatrixError::ShapeMismatch {
                    context: "from_rows",
                    expected: (r, c),
                    got: (r, row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    /// Setter keeps the invariant in debug builds; hot loops use `row_mut`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        debug_assert!(v >= 0.0, "negative entry {v} at ({i}, {j})");
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        debug_assert!(i < self.rows);
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        debug_assert!(i < self.rows);
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_col(&mut self, j: usize, col: &[f64]) {
        debug_assert_eq!(col.len(), self.rows);
        for (i, &v) in col.iter().enumerate() {
            self.set(i, j, v);
        }
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (s, &v) in sums.iter_mut().zip(self.row(i)) {
                *s += v;
            }
        }
        sums
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn transposed(&self) -> DenseCountMatrix {
        let mut out = DenseCountMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.get(i, j);
            }
        }
        out
    }

    /// Matrix product, used for the model reconstruction Z = W*H.
    pub fn product(
        w: &DenseCountMatrix,
        h: &DenseCountMatrix,
    ) -> Result<DenseCountMatrix, MatrixError> {
        if w.cols != h.rows {
            return Err(MatrixError::ShapeMismatch {
                context: "product",
                expected: (w.cols, w.cols),
                got: (h.rows, h.cols),
            });
        }
        let mut out = DenseCountMatrix::zeros(w.rows, h.cols);
        for i in 0..w.rows {
            let wi = w.row(i);
            let oi = out.row_mut(i);
            for (k, &wik) in wi.iter().enumerate() {
                if wik == 0.0 {
                    continue;
                }
                for (o, &hkj) in oi.iter_mut().zip(h.row(k)) {
                    *o += wik * hkj;
                }
            }
        }
        Ok(out)
    }

    /// Columns scaled to unit sum. Returns the normalized matrix together
    /// with the original column sums so mass can be pushed into the other
    /// factor.
    pub fn normalize_columns(&self) -> Result<(DenseCountMatrix, Vec<f64>), MatrixError> {
        let sums = self.col_sums();
        for (j, &s) in sums.iter().enumerate() {
            if s <= 0.0 {
                return Err(MatrixError::ZeroColumnSum { col: j });
            }
        }
        let mut out = self.clone();
        for i in 0..out.rows {
            for (v, &s) in out.row_mut(i).iter_mut().zip(&sums) {
                *v /= s;
            }
        }
        Ok((out, sums))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_negative_entries() {
        let err = DenseCountMatrix::from_vec(2, 2, vec![1.0, -0.5, 0.0, 2.0]).unwrap_err();
        match err {
            MatrixError::NegativeEntry { row, col, value } => {
                assert_eq!((row, col), (0, 1));
                assert_eq!(value, -0.5);
            }
            other => panic!("expected NegativeEntry, got {other:?}"),
        }
    }

    #[test]
    fn product_matches_hand_example() {
        let w = DenseCountMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        let h = DenseCountMatrix::from_rows(&[vec![3.0, 0.0], vec![1.0, 4.0]]).unwrap();
        let z = DenseCountMatrix::product(&w, &h).unwrap();
        assert_eq!(z.values(), &[5.0, 8.0, 1.0, 4.0]);
    }

    #[test]
    fn normalize_columns_reports_zero_column() {
        let m = DenseCountMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        match m.normalize_columns() {
            Err(MatrixError::ZeroColumnSum { col }) => assert_eq!(col, 1),
            other => panic!("expected ZeroColumnSum, got {other:?}"),
        }
    }

    #[test]
    fn transpose_round_trips() {
        let m = DenseCountMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(m.transposed().transposed(), m);
    }
}

use super::{CountMatrix, DenseCountMatrix, MatrixError, SparseCountMatrix};

/// Floor applied to reconstruction entries before they appear in a
/// denominator or a log. Keeps ratios finite without masking a genuinely
/// zero model, which is still reported as an infinite divergence.
pub const DENOM_FLOOR: f64 = 1e-15;

/// Generalized KL divergence sum_ij [ V log(V/Z) - V + Z ] with Z = W*H and
/// the convention 0*log 0 = 0.
///
/// Sparse data uses the factored linear term sum_k (col sum of W)_k *
/// (row sum of H)_k, so the cost is O(nnz * K) rather than O(N*M*K). A zero
/// reconstruction under a positive observation yields `f64::INFINITY` rather
/// than an error.
pub fn kl_divergence(
    v: &CountMatrix,
    w: &DenseCountMatrix,
    h: &DenseCountMatrix,
) -> Result<f64, MatrixError> {
    check_factor_shapes(v.rows(), v.cols(), w, h)?;
    let k = w.cols();
    match v {
        CountMatrix::Dense(v) => {
            let mut total = 0.0;
            for i in 0..v.rows() {
                let vi = v.row(i);
                let wi = w.row(i);
                for (j, &vij) in vi.iter().enumerate() {
                    let mut z = 0.0;
                    for kk in 0..k {
                        z += wi[kk] * h.get(kk, j);
                    }
                    if vij > 0.0 {
                        if z <= DENOM_FLOOR {
                            return Ok(f64::INFINITY);
                        }
                        total += vij * (vij.ln() - z.ln()) - vij + z;
                    } else {
                        total += z;
                    }
                }
            }
            Ok(total)
        }
        CountMatrix::Sparse(v) => {
            let mut total = 0.0;
            for i in 0..v.rows() {
                let wi = w.row(i);
                let (cols, vals) = v.row(i);
                for (&j, &vij) in cols.iter().zip(vals) {
                    let mut z = 0.0;
                    for kk in 0..k {
                        z += wi[kk] * h.get(kk, j);
                    }
                    if z <= DENOM_FLOOR {
                        return Ok(f64::INFINITY);
                    }
                    // the +Z part of every cell is covered by the factored sum
                    total += vij * (vij.ln() - z.ln()) - vij;
                }
            }
            let w_sums = w.col_sums();
            let h_sums = h.row_sums();
            for (ws, hs) in w_sums.iter().zip(&h_sums) {
                total += ws * hs;
            }
            Ok(total)
        }
    }
}

/// Reconstruction values (W*H)_ij at exactly the stored nonzero positions of
/// `v`, aligned with its CSR value order. Coordinate descent keeps this
/// vector incrementally current instead of re-forming the full product.
pub fn product_at_nonzeros(
    v: &SparseCountMatrix,
    w: &DenseCountMatrix,
    h: &DenseCountMatrix,
) -> Result<Vec<f64>, MatrixError> {
    check_factor_shapes(v.rows(), v.cols(), w, h)?;
    let k = w.cols();
    let mut out = Vec::with_capacity(v.nnz());
    for i in 0..v.rows() {
        let wi = w.row(i);
        let (cols, _) = v.row(i);
        for &j in cols {
            let mut z = 0.0;
            for kk in 0..k {
                z += wi[kk] * h.get(kk, j);
            }
            out.push(z);
        }
    }
    Ok(out)
}

/// Rescales W's columns to unit sum and pushes the mass into H's rows.
/// Leaves the product W*H, and therefore the objective, unchanged.
pub fn rebalance(
    w: &DenseCountMatrix,
    h: &DenseCountMatrix,
) -> Result<(DenseCountMatrix, DenseCountMatrix), MatrixError> {
    let (w_norm, sums) = w.normalize_columns()?;
    let mut h_scaled = h.clone();
    for (kk, &s) in sums.iter().enumerate() {
        for v in h_scaled.row_mut(kk) {
            *v *= s;
        }
    }
    Ok((w_norm, h_scaled))
}

fn check_factor_shapes(
    rows: usize,
    cols: usize,
    w: &DenseCountMatrix,
    h: &DenseCountMatrix,
) -> Result<(), MatrixError> {
    if w.rows() != rows || h.cols() != cols || w.cols() != h.rows() {
        return Err(MatrixError::ShapeMismatch {
            context: "factor shapes",
            expected: (rows, cols),
            got: (w.rows(), h.cols()),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: &[Vec<f64>]) -> DenseCountMatrix {
        DenseCountMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn identity_against_flat_reconstruction_gives_two() {
        // V = I2 and Z = all-ones: diagonal cells contribute 0, off-diagonal
        // cells contribute 0 - 0 + 1 each.
        let v = CountMatrix::Dense(dense(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        let w = dense(&[vec![1.0], vec![1.0]]);
        let h = dense(&[vec![1.0, 1.0]]);
        let d = kl_divergence(&v, &w, &h).unwrap();
        assert!((d - 2.0).abs() < 1e-12, "expected 2, got {d}");
    }

    #[test]
    fn sparse_and_dense_paths_agree() {
        let trips = [(0, 0, 3.0), (0, 2, 1.0), (2, 1, 4.0), (3, 2, 2.0)];
        let sp = SparseCountMatrix::from_triplets(4, 3, &trips).unwrap();
        let dn = sp.to_dense();
        let w = dense(&[
            vec![0.5, 1.0],
            vec![0.2, 0.3],
            vec![1.5, 0.1],
            vec![0.7, 0.9],
        ]);
        let h = dense(&[vec![1.0, 0.5, 2.0], vec![0.3, 1.2, 0.4]]);
        let ds = kl_divergence(&CountMatrix::Sparse(sp), &w, &h).unwrap();
        let dd = kl_divergence(&CountMatrix::Dense(dn), &w, &h).unwrap();
        assert!((ds - dd).abs() < 1e-12 * (1.0 + dd.abs()), "{ds} vs {dd}");
    }

    #[test]
    fn zero_reconstruction_of_positive_count_is_infinite() {
        let v = CountMatrix::Dense(dense(&[vec![1.0]]));
        let w = dense(&[vec![0.0]]);
        let h = dense(&[vec![1.0]]);
        assert_eq!(kl_divergence(&v, &w, &h).unwrap(), f64::INFINITY);
    }

    #[test]
    fn perfect_reconstruction_is_zero() {
        let w = dense(&[vec![1.0, 0.0], vec![0.0, 2.0]]);
        let h = dense(&[vec![2.0, 1.0], vec![0.5, 3.0]]);
        let z = DenseCountMatrix::product(&w, &h).unwrap();
        let d = kl_divergence(&CountMatrix::Dense(z), &w, &h).unwrap();
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn rebalance_preserves_objective() {
        let v = CountMatrix::Dense(dense(&[vec![2.0, 1.0], vec![0.0, 3.0]]));
        let w = dense(&[vec![0.4, 1.1], vec![0.9, 0.2]]);
        let h = dense(&[vec![1.3, 0.8], vec![0.6, 2.0]]);
        let before = kl_divergence(&v, &w, &h).unwrap();
        let (w2, h2) = rebalance(&w, &h).unwrap();
        let after = kl_divergence(&v, &w2, &h2).unwrap();
        assert!((before - after).abs() < 1e-10 * (1.0 + before.abs()));
        for s in w2.col_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let v = CountMatrix::Dense(dense(&[vec![1.0, 0.0]]));
        let w = dense(&[vec![1.0], vec![1.0]]);
        let h = dense(&[vec![1.0, 1.0]]);
        assert!(kl_divergence(&v, &w, &h).is_err());
    }
}

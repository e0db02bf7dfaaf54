//! Stochastic estimates of the KL multiplier matrix W^T (V / (W H)).
//!
//! Both estimators are scaled so that their expectation over a uniform batch
//! equals the full multiplier: row batches carry n/s, element batches carry
//! nnz/s. Denominators are floored before division.

use crate::matrix::{CountMatrix, DenseCountMatrix, MatrixError, SparseCountMatrix, DENOM_FLOOR};

/// Exact multiplier W^T (V / (W H)), the gradient of sum V log(WH) in H.
/// Only positive observations contribute, so sparse data costs O(nnz * K).
pub fn full_multiplier(
    v: &CountMatrix,
    w: &DenseCountMatrix,
    h: &DenseCountMatrix,
) -> Result<DenseCountMatrix, MatrixError> {
    let all_rows: Vec<usize> = (0..v.rows()).collect();
    row_stochastic_gradient(v, &all_rows, w, h)
}

/// Row-batch multiplier estimate (n/s) * W_S^T (V_S / (W_S H)) for the
/// sampled rows. Duplicate indices (replacement sampling) contribute once
/// per appearance.
pub fn row_stochastic_gradient(
    v: &CountMatrix,
    rows: &[usize],
    w: &DenseCountMatrix,
    h: &DenseCountMatrix,
) -> Result<DenseCountMatrix, MatrixError> {
    check_shapes(v.rows(), v.cols(), w, h)?;
    let k = w.cols();
    let m = v.cols();
    let scale = v.rows() as f64 / rows.len() as f64;
    let mut out = DenseCountMatrix::zeros(k, m);
    let out_data = out.values_mut();
    for &i in rows {
        let wi = w.row(i);
        v.for_each_nonzero_in_row(i, |j, vij| {
            let mut z = 0.0;
            for (kk, &wik) in wi.iter().enumerate() {
                z += wik * h.get(kk, j);
            }
            let coeff = scale * vij / z.max(DENOM_FLOOR);
            for (kk, &wik) in wi.iter().enumerate() {
                out_data[kk * m + j] += wik * coeff;
            }
        });
    }
    Ok(out)
}

/// Element-batch multiplier estimate, returned as per-column dense slices
/// for only the columns a sampled nonzero touched, sorted by column. The
/// scale is nnz/s against the full multiplier.
pub fn element_stochastic_gradient(
    v: &SparseCountMatrix,
    triplet_ids: &[usize],
    w: &DenseCountMatrix,
    h: &DenseCountMatrix,
) -> Result<Vec<(usize, Vec<f64>)>, MatrixError> {
    check_shapes(v.rows(), v.cols(), w, h)?;
    let k = w.cols();
    let scale = v.nnz() as f64 / triplet_ids.len() as f64;
    let mut touched: Vec<(usize, Vec<f64>)> = Vec::new();
    for &id in triplet_ids {
        let (i, j, vij) = v.triplet(id);
        let wi = w.row(i);
        let mut z = 0.0;
        for (kk, &wik) in wi.iter().enumerate() {
            z += wik * h.get(kk, j);
        }
        let coeff = scale * vij / z.max(DENOM_FLOOR);
        let slot = match touched.binary_search_by_key(&j, |e| e.0) {
            Ok(pos) => &mut touched[pos].1,
            Err(pos) => {
                touched.insert(pos, (j, vec![0.0; k]));
                &mut touched[pos].1
            }
        };
        for (s, &wik) in slot.iter_mut().zip(wi) {
            *s += wik * coeff;
        }
    }
    Ok(touched)
}

fn check_shapes(
    rows: usize,
    cols: usize,
    w: &DenseCountMatrix,
    h: &DenseCountMatrix,
) -> Result<(), MatrixError> {
    if w.rows() != rows || h.cols() != cols || w.cols() != h.rows() {
        return Err(MatrixError::ShapeMismatch {
            context: "multiplier shapes",
            expected: (rows, cols),
            got: (w.rows(), h.cols()),
        });
    }
    Ok(())
}

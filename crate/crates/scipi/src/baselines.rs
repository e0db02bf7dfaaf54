//! Classical KL-NMF updaters for the right factor: multiplicative updates,
//! cyclic coordinate descent, and projected gradient with Armijo search.
//!
//! Every function here updates H in the model V ~ W H with W held fixed.
//! Left-factor updates go through the same entry points on transposed data,
//! which is how the alternation driver uses them.

use crate::matrix::{CountMatrix, DenseCountMatrix, MatrixError, DENOM_FLOOR};
use crate::sampling::{full_multiplier, RngStream};

/// One multiplicative update of the full H matrix:
/// H'_kj = H_kj * [W^T (V / (W H))]_kj / (sum_i W_ik).
pub fn mu_update(
    v: &CountMatrix,
    w: &DenseCountMatrix,
    h: &DenseCountMatrix,
) -> Result<DenseCountMatrix, MatrixError> {
    let num = full_multiplier(v, w, h)?;
    let wsum = w.col_sums();
    let k = h.rows();
    let m = h.cols();
    let mut out = DenseCountMatrix::zeros(k, m);
    for kk in 0..k {
        let denom = wsum[kk].max(DENOM_FLOOR);
        for j in 0..m {
            out.set(kk, j, h.get(kk, j) * num.get(kk, j) / denom);
        }
    }
    Ok(out)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct CcdStats {
    /// Full-data passes, in units where one sweep costs rank passes.
    pub work: f64,
    /// Coordinates left untouched because the curvature vanished.
    pub skipped: usize,
    /// Residual-product rebuilds forced by the sweep counter.
    pub rebuilds: usize,
}

/// Sweeps over which the maintained product W H is rebuilt from scratch to
/// stop incremental drift.
const CCD_REBUILD_EVERY: usize = 50;

/// Cyclic coordinate descent on H. Each coordinate takes one clamped Newton
/// step h' = max(0, h - g/c) with
///   g = sum_i W_ik - sum_i W_ik V_ij / Z_ij,
///   c = sum_i W_ik^2 V_ij / Z_ij^2,
/// and the product Z = W H is updated incrementally. Coordinates are visited
/// k-major, columns ascending, unless `shuffled` asks for a per-sweep random
/// order drawn from `stream`.
pub fn ccd_update(
    v: &CountMatrix,
    w: &DenseCountMatrix,
    h: &mut DenseCountMatrix,
    sweeps: usize,
    shuffled: bool,
    stream: &RngStream,
) -> Result<CcdStats, MatrixError> {
    check_factor_shapes(v, w, h)?;
    match v {
        CountMatrix::Dense(dv) => ccd_dense(dv, w, h, sweeps, shuffled, stream),
        CountMatrix::Sparse(_) => ccd_sparse(v, w, h, sweeps, shuffled, stream),
    }
}

fn coordinate_order(
    k: usize,
    m: usize,
    sweep: usize,
    shuffled: bool,
    stream: &RngStream,
) -> Vec<(usize, usize)> {
    let mut order: Vec<(usize, usize)> =
        (0..k).flat_map(|kk| (0..m).map(move |j| (kk, j))).collect();
    if shuffled {
        stream.child("sweep", sweep as u64).shuffle(&mut order);
    }
    order
}

fn ccd_dense(
    v: &DenseCountMatrix,
    w: &DenseCountMatrix,
    h: &mut DenseCountMatrix,
    sweeps: usize,
    shuffled: bool,
    stream: &RngStream,
) -> Result<CcdStats, MatrixError> {
    let (n, k, m) = (v.rows(), w.cols(), h.cols());
    let mut z = DenseCountMatrix::product(w, h)?;
    let mut stats = CcdStats::default();
    for sweep in 0..sweeps {
        if sweep > 0 && sweep % CCD_REBUILD_EVERY == 0 {
            z = DenseCountMatrix::product(w, h)?;
            stats.rebuilds += 1;
        }
        for (kk, j) in coordinate_order(k, m, sweep, shuffled, stream) {
            let mut g = 0.0;
            let mut c = 0.0;
            for i in 0..n {
                let wik = w.get(i, kk);
                let zij = z.get(i, j).max(DENOM_FLOOR);
                let vij = v.get(i, j);
                g += wik * (1.0 - vij / zij);
                c += wik * wik * vij / (zij * zij);
            }
            if c == 0.0 {
                stats.skipped += 1;
                continue;
            }
            let old = h.get(kk, j);
            let new = (old - g / c).max(0.0);
            let d = new - old;
            if d != 0.0 {
                h.set(kk, j, new);
                for i in 0..n {
                    let zij = z.get(i, j) + w.get(i, kk) * d;
                    z.set(i, j, zij.max(0.0));
                }
            }
        }
        stats.work += k as f64 * n as f64;
    }
    Ok(stats)
}

fn ccd_sparse(
    v: &CountMatrix,
    w: &DenseCountMatrix,
    h: &mut DenseCountMatrix,
    sweeps: usize,
    shuffled: bool,
    stream: &RngStream,
) -> Result<CcdStats, MatrixError> {
    let sp = match v {
        CountMatrix::Sparse(sp) => sp,
        CountMatrix::Dense(_) => unreachable!("dense handled by caller"),
    };
    let (k, m) = (w.cols(), h.cols());
    // Residual product kept only at the data nonzeros, CSR-aligned; the
    // all-rows gradient term collapses to the column sums of W.
    let mut z = crate::matrix::product_at_nonzeros(sp, w, h)?;
    let wsum = w.col_sums();
    let csc = sp.csc();
    let mut stats = CcdStats::default();
    for sweep in 0..sweeps {
        if sweep > 0 && sweep % CCD_REBUILD_EVERY == 0 {
            z = crate::matrix::product_at_nonzeros(sp, w, h)?;
            stats.rebuilds += 1;
        }
        for (kk, j) in coordinate_order(k, m, sweep, shuffled, stream) {
            let lo = csc.col_offsets[j];
            let hi = csc.col_offsets[j + 1];
            let mut g = wsum[kk];
            let mut c = 0.0;
            for p in lo..hi {
                let i = csc.row_indices[p];
                let vij = csc.values[p];
                let pos = csc.triplet_ids[p];
                let wik = w.get(i, kk);
                let zij = z[pos].max(DENOM_FLOOR);
                g -= wik * vij / zij;
                c += wik * wik * vij / (zij * zij);
            }
            if c == 0.0 {
                stats.skipped += 1;
                continue;
            }
            let old = h.get(kk, j);
            let new = (old - g / c).max(0.0);
            let d = new - old;
            if d != 0.0 {
                h.set(kk, j, new);
                for p in lo..hi {
                    let i = csc.row_indices[p];
                    let pos = csc.triplet_ids[p];
                    z[pos] = (z[pos] + w.get(i, kk) * d).max(0.0);
                }
            }
        }
        // element-unit convention: a sweep touches every nonzero k times
        stats.work += k as f64 * sp.nnz() as f64;
    }
    Ok(stats)
}

/// Warm-started Armijo step sizes, one per column of the factor being
/// updated. Survives across alternation rounds so the search starts near
/// the last accepted step.
#[derive(Debug, Clone)]
pub struct PgdState {
    pub alpha: Vec<f64>,
}

impl PgdState {
    pub fn new(cols: usize) -> Self {
        PgdState {
            alpha: vec![1.0; cols],
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct PgdStats {
    /// Full-data passes: one for the gradient plus a column-weighted share
    /// per line-search trial.
    pub work: f64,
    /// Armijo trials over all columns.
    pub trials: usize,
    /// Columns where the search hit the halving cap and took a zero step.
    pub exhausted: usize,
}

const ARMIJO_SIGMA: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;
const ARMIJO_GROWTH: f64 = 2.0;
const ARMIJO_MAX_HALVINGS: usize = 60;

/// One projected-gradient update of H, column by column. Each column takes
/// h' = max(0, h - alpha g) with alpha found by backtracking from twice the
/// previously accepted step; sufficient decrease is measured against the
/// KL objective restricted to that column.
pub fn pgd_update(
    v: &CountMatrix,
    w: &DenseCountMatrix,
    h: &mut DenseCountMatrix,
    state: &mut PgdState,
) -> Result<PgdStats, MatrixError> {
    check_factor_shapes(v, w, h)?;
    let (k, m) = (h.rows(), h.cols());
    if state.alpha.len() != m {
        state.alpha = vec![1.0; m];
    }
    let mult = full_multiplier(v, w, h)?;
    let wsum = w.col_sums();
    let n_units = full_pass_units(v);
    let mut stats = PgdStats::default();
    stats.work += n_units;

    // Column nonzeros: (row, value) pairs, enough to evaluate the objective.
    let col_entries = collect_column_entries(v);

    for j in 0..m {
        let h_col = h.col(j);
        let g: Vec<f64> = (0..k).map(|kk| wsum[kk] - mult.get(kk, j)).collect();
        let f_old = column_objective(&col_entries[j], w, &wsum, &h_col);
        let mut alpha = state.alpha[j] * ARMIJO_GROWTH;
        let mut accepted = false;
        for _ in 0..=ARMIJO_MAX_HALVINGS {
            let trial: Vec<f64> = h_col
                .iter()
                .zip(&g)
                .map(|(&hv, &gv)| (hv - alpha * gv).max(0.0))
                .collect();
            let f_new = column_objective(&col_entries[j], w, &wsum, &trial);
            let decrease: f64 = g
                .iter()
                .zip(trial.iter().zip(&h_col))
                .map(|(&gv, (&t, &hv))| gv * (t - hv))
                .sum();
            stats.trials += 1;
            stats.work += n_units / m as f64;
            if f_new - f_old <= ARMIJO_SIGMA * decrease {
                h.set_col(j, &trial);
                state.alpha[j] = alpha;
                accepted = true;
                break;
            }
            alpha *= ARMIJO_SHRINK;
        }
        if !accepted {
            // zero step; restart the schedule for this column
            state.alpha[j] = 1.0;
            stats.exhausted += 1;
        }
    }
    Ok(stats)
}

/// One fixed-step projected-gradient update with a caller-supplied step for
/// every entry: H'_kj = max(0, H_kj - alpha_kj * g_kj). With
/// alpha_kj = H_kj / sum_i W_ik this reproduces the multiplicative update.
pub fn pgd_step_given_alpha(
    v: &CountMatrix,
    w: &DenseCountMatrix,
    h: &DenseCountMatrix,
    alpha: &DenseCountMatrix,
) -> Result<DenseCountMatrix, MatrixError> {
    check_factor_shapes(v, w, h)?;
    let mult = full_multiplier(v, w, h)?;
    let wsum = w.col_sums();
    let (k, m) = (h.rows(), h.cols());
    let mut out = DenseCountMatrix::zeros(k, m);
    for kk in 0..k {
        for j in 0..m {
            let g = wsum[kk] - mult.get(kk, j);
            out.set(kk, j, (h.get(kk, j) - alpha.get(kk, j) * g).max(0.0));
        }
    }
    Ok(out)
}

/// Cost of one full pass over the data in the work-unit convention: rows
/// for dense data, stored nonzeros for sparse.
pub fn full_pass_units(v: &CountMatrix) -> f64 {
    match v {
        CountMatrix::Dense(_) => v.rows() as f64,
        CountMatrix::Sparse(_) => v.nnz() as f64,
    }
}

/// KL objective restricted to one column, dropping terms constant in h:
/// sum_k (sum_i W_ik) h_k - sum_{i in nonzeros} v_i log (W h)_i.
fn column_objective(
    entries: &[(usize, f64)],
    w: &DenseCountMatrix,
    wsum: &[f64],
    h_col: &[f64],
) -> f64 {
    let linear: f64 = wsum.iter().zip(h_col).map(|(&s, &hv)| s * hv).sum();
    let mut loglik = 0.0;
    for &(i, vij) in entries {
        let wi = w.row(i);
        let mut z = 0.0;
        for (kk, &wik) in wi.iter().enumerate() {
            z += wik * h_col[kk];
        }
        loglik += vij * z.max(DENOM_FLOOR).ln();
    }
    linear - loglik
}

fn collect_column_entries(v: &CountMatrix) -> Vec<Vec<(usize, f64)>> {
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); v.cols()];
    match v {
        CountMatrix::Dense(d) => {
            for i in 0..d.rows() {
                for (j, &val) in d.row(i).iter().enumerate() {
                    if val > 0.0 {
                        cols[j].push((i, val));
                    }
                }
            }
        }
        CountMatrix::Sparse(sp) => {
            for (i, j, val) in sp.iter_triplets() {
                cols[j].push((i, val));
            }
        }
    }
    cols
}

fn check_factor_shapes(
    v: &CountMatrix,
    w: &DenseCountMatrix,
    h: &DenseCountMatrix,
) -> Result<(), MatrixError> {
    if w.rows() != v.rows() || h.cols() != v.cols() || w.cols() != h.rows() {
        return Err(MatrixError::ShapeMismatch {
            context: "factor update shapes",
            expected: (v.rows(), v.cols()),
            got: (w.rows(), h.cols()),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{kl_divergence, SparseCountMatrix};

    fn tiny() -> (CountMatrix, DenseCountMatrix, DenseCountMatrix) {
        let v = CountMatrix::Dense(DenseCountMatrix::from_vec(2, 1, vec![2.0, 2.0]).unwrap());
        let w = DenseCountMatrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let h = DenseCountMatrix::from_vec(1, 1, vec![1.0]).unwrap();
        (v, w, h)
    }

    fn random_instance(
        stream: &mut RngStream,
        n: usize,
        m: usize,
        k: usize,
    ) -> (CountMatrix, DenseCountMatrix, DenseCountMatrix) {
        let v = DenseCountMatrix::from_vec(
            n,
            m,
            (0..n * m)
                .map(|_| (stream.next_f64() * 5.0).floor())
                .collect(),
        )
        .unwrap();
        let w =
            DenseCountMatrix::from_vec(n, k, (0..n * k).map(|_| stream.next_f64() + 0.1).collect())
                .unwrap();
        let h =
            DenseCountMatrix::from_vec(k, m, (0..k * m).map(|_| stream.next_f64() + 0.1).collect())
                .unwrap();
        (CountMatrix::Dense(v), w, h)
    }

    #[test]
    fn mu_hand_value() {
        let (v, w, h) = tiny();
        let h2 = mu_update(&v, &w, &h).unwrap();
        assert_eq!(h2.get(0, 0), 2.0);
    }

    #[test]
    fn ccd_hand_value() {
        let (v, w, mut h) = tiny();
        let stream = RngStream::from_seed(0);
        ccd_update(&v, &w, &mut h, 1, false, &stream).unwrap();
        assert_eq!(h.get(0, 0), 1.5);
    }

    #[test]
    fn pgd_hand_value_grows_then_shrinks() {
        let (v, w, mut h) = tiny();
        let mut state = PgdState::new(1);
        let stats = pgd_update(&v, &w, &mut h, &mut state).unwrap();
        // the grown step 2.0 overshoots to h = 5 and is rejected; 1.0 lands on 3
        assert_eq!(h.get(0, 0), 3.0);
        assert_eq!(stats.trials, 2);
        assert_eq!(state.alpha[0], 1.0);
    }

    #[test]
    fn mu_equals_pgd_with_multiplicative_steps() {
        let stream = RngStream::from_seed(7);
        for trial in 0..20 {
            let (v, w, h) = random_instance(&mut stream.child("case", trial), 6, 4, 3);
            let wsum = w.col_sums();
            let mut alpha = DenseCountMatrix::zeros(h.rows(), h.cols());
            for kk in 0..h.rows() {
                for j in 0..h.cols() {
                    alpha.set(kk, j, h.get(kk, j) / wsum[kk]);
                }
            }
            let by_mu = mu_update(&v, &w, &h).unwrap();
            let by_pgd = pgd_step_given_alpha(&v, &w, &h, &alpha).unwrap();
            for (a, b) in by_mu.values().iter().zip(by_pgd.values()) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn mu_never_increases_divergence() {
        let stream = RngStream::from_seed(21);
        for trial in 0..5 {
            let (v, mut w, mut h) = random_instance(&mut stream.child("case", trial), 8, 5, 3);
            let mut prev = kl_divergence(&v, &w, &h).unwrap();
            let vt = v.transposed();
            for _ in 0..25 {
                h = mu_update(&v, &w, &h).unwrap();
                w = mu_update(&vt, &h.transposed(), &w.transposed())
                    .unwrap()
                    .transposed();
                let cur = kl_divergence(&v, &w, &h).unwrap();
                assert!(
                    cur <= prev + 1e-9 * prev.abs().max(1.0),
                    "KL rose from {prev} to {cur}"
                );
                prev = cur;
            }
        }
    }

    #[test]
    fn ccd_monotone_on_sparse_data() {
        let mut stream = RngStream::from_seed(3);
        let (vd, w, h0) = random_instance(&mut stream, 7, 5, 2);
        let v = CountMatrix::Sparse(vd.to_sparse());
        let mut h = h0;
        let mut prev = kl_divergence(&v, &w, &h).unwrap();
        let rng = RngStream::from_seed(0);
        for _ in 0..3 {
            ccd_update(&v, &w, &mut h, 1, false, &rng).unwrap();
            let cur = kl_divergence(&v, &w, &h).unwrap();
            assert!(cur <= prev + 1e-9 * prev.abs().max(1.0));
            prev = cur;
        }
    }

    #[test]
    fn ccd_incremental_residual_does_not_drift() {
        let mut stream = RngStream::from_seed(17);
        let (vd, w, h0) = random_instance(&mut stream, 7, 5, 2);
        let v = CountMatrix::Sparse(vd.to_sparse());
        let rng = RngStream::from_seed(0);
        // one call carrying the residual across 120 sweeps (two forced rebuilds)
        let mut carried = h0.clone();
        let stats = ccd_update(&v, &w, &mut carried, 120, false, &rng).unwrap();
        assert_eq!(stats.rebuilds, 2);
        // vs. a fresh residual product every sweep
        let mut fresh = h0;
        for _ in 0..120 {
            ccd_update(&v, &w, &mut fresh, 1, false, &rng).unwrap();
        }
        for (a, b) in carried.values().iter().zip(fresh.values()) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn ccd_dense_and_sparse_agree() {
        let mut stream = RngStream::from_seed(11);
        let (v, w, h0) = random_instance(&mut stream, 6, 4, 3);
        let sparse = CountMatrix::Sparse(v.to_sparse());
        let rng = RngStream::from_seed(0);
        let mut hd = h0.clone();
        let mut hs = h0.clone();
        ccd_update(&v, &w, &mut hd, 2, false, &rng).unwrap();
        ccd_update(&sparse, &w, &mut hs, 2, false, &rng).unwrap();
        for (a, b) in hd.values().iter().zip(hs.values()) {
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn ccd_skips_zero_curvature_columns() {
        // second column of V is all zero: no curvature, coordinate skipped
        let v = CountMatrix::Sparse(
            SparseCountMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (1, 0, 1.0)]).unwrap(),
        );
        let w = DenseCountMatrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let mut h = DenseCountMatrix::from_vec(1, 2, vec![1.0, 0.7]).unwrap();
        let stats = ccd_update(&v, &w, &mut h, 1, false, &RngStream::from_seed(0)).unwrap();
        assert_eq!(stats.skipped, 1);
        assert_eq!(h.get(0, 1), 0.7);
    }

    #[test]
    fn ccd_shuffled_visits_every_coordinate() {
        let mut stream = RngStream::from_seed(5);
        let (v, w, h0) = random_instance(&mut stream, 6, 4, 3);
        let mut plain = h0.clone();
        let mut shuffled = h0.clone();
        let rng = RngStream::from_seed(9);
        ccd_update(&v, &w, &mut plain, 30, false, &rng).unwrap();
        ccd_update(&v, &w, &mut shuffled, 30, true, &rng).unwrap();
        // both orders settle near the same per-column optimum
        let f_plain = kl_divergence(&v, &w, &plain).unwrap();
        let f_shuf = kl_divergence(&v, &w, &shuffled).unwrap();
        assert!((f_plain - f_shuf).abs() <= 1e-3 * f_plain.abs().max(1.0));
    }

    #[test]
    fn pgd_descends_and_warms_alpha() {
        let mut stream = RngStream::from_seed(13);
        let (v, w, mut h) = random_instance(&mut stream, 8, 5, 3);
        let mut state = PgdState::new(5);
        let mut prev = kl_divergence(&v, &w, &h).unwrap();
        for _ in 0..10 {
            pgd_update(&v, &w, &mut h, &mut state).unwrap();
            let cur = kl_divergence(&v, &w, &h).unwrap();
            assert!(cur <= prev + 1e-9 * prev.abs().max(1.0));
            prev = cur;
        }
        assert!(state.alpha.iter().any(|&a| a != 1.0));
    }
}

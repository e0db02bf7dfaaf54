//! Batched updates over every column subproblem of one factor at once.
//!
//! Three update families share the data pass machinery here:
//! a variance-reduced epoch in y-space (the main solver), a plain
//! stochastic multiplicative update in x-space with no snapshot, and the
//! exact full-batch power step the multiplicative update reduces to.
//!
//! Row batches are shared by every column, since one data row touches all
//! of them; element batches are drawn per column from its own nonzeros.
//! Batch streams are derived the same way the generic solver derives them,
//! so a single-column run can be compared against it step for step.

use serde::{Deserialize, Serialize};

use crate::baselines::full_pass_units;
use crate::matrix::{CountMatrix, DenseCountMatrix, DENOM_FLOOR};
use crate::sampling::{full_multiplier, sample_indices, BatchSpec, RngStream, SamplingMode};
use crate::solver::{DOT_FLOOR, NORM_WINDOW};

use super::{KlnmfError, SubproblemBundle};

/// Degree of the column subproblems: the objective is invariant to scaling
/// y, shifting only by an additive constant.
const DEGREE: f64 = 0.0;

/// One variance-reduced epoch's shape.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochParams {
    pub eta: f64,
    /// Batch size as a fraction of the sample count (rows, or each
    /// column's nonzeros), rounded and clamped to [1, n].
    pub batch_proportion: f64,
    /// Inner steps per epoch.
    pub epoch_length: usize,
    #[serde(default)]
    pub replacement: bool,
    pub mode: SamplingMode,
}

/// The plain stochastic multiplicative update's shape. `epoch_length`
/// successive batch steps make one update, so its work is comparable to a
/// variance-reduced epoch of the same length.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VanillaParams {
    pub eta: f64,
    pub batch_proportion: f64,
    pub epoch_length: usize,
    #[serde(default)]
    pub replacement: bool,
    pub mode: SamplingMode,
}

#[derive(Debug, Default, Clone, Copy)]
pub struct EpochStats {
    /// Per-sample gradient evaluations: a full pass costs the sample count,
    /// one inner step costs twice its batch size.
    pub work: f64,
    /// Column re-anchors forced by the snapshot dot floor, plus collapsed
    /// steps that were rolled back.
    pub restarts: usize,
    /// Gradient entries clamped at zero.
    pub clamped: usize,
    /// Columns dropped because their anchor gradient vanished.
    pub skipped_columns: usize,
    /// Columns whose update collapsed to zero mass and was discarded.
    pub degenerate_steps: usize,
}

impl EpochStats {
    pub fn absorb(&mut self, other: &EpochStats) {
        self.work += other.work;
        self.restarts += other.restarts;
        self.clamped += other.clamped;
        self.skipped_columns += other.skipped_columns;
        self.degenerate_steps += other.degenerate_steps;
    }
}

/// One variance-reduced epoch over every active column of the bundle.
///
/// Per column the step is the generic solver's: anchor weight
/// alpha = |y.y0|^(p-1) / |y0|^(2(p-1)), estimate
/// g = alpha g0 + batch mean of (grad_l(y) - alpha grad_l(y0)), clamp g at
/// zero, then y <- (1-eta) y + eta g / |y|^(p-2) with p = 0. A column whose
/// anchor dot product falls under the floor is re-anchored at its current
/// direction instead of aborting the whole epoch. Batches for step t come
/// from `epoch_stream.child("step", t)` (row mode, shared) or
/// `epoch_stream.child("col", j).child("step", t)` (element mode).
pub fn svrg_epoch_all_columns(
    v: &CountMatrix,
    bundle: &mut SubproblemBundle,
    params: &EpochParams,
    epoch_stream: &RngStream,
) -> Result<EpochStats, KlnmfError> {
    validate_shapes(v, bundle)?;
    if !(params.eta > 0.0) || !params.eta.is_finite() {
        return Err(KlnmfError::InvalidConfig(format!(
            "eta {} must be positive",
            params.eta
        )));
    }
    if params.epoch_length == 0 {
        return Err(KlnmfError::InvalidConfig(
            "epoch length must be at least 1".into(),
        ));
    }
    match params.mode {
        SamplingMode::Row => row_epoch(v, bundle, params, epoch_stream),
        SamplingMode::Element => element_epoch(v, bundle, params, epoch_stream),
    }
}

fn validate_shapes(v: &CountMatrix, bundle: &SubproblemBundle) -> Result<(), KlnmfError> {
    if bundle.l.rows() != v.rows() || bundle.cols() != v.cols() {
        return Err(KlnmfError::FactorShape {
            rows: v.rows(),
            cols: v.cols(),
            w_rows: bundle.l.rows(),
            w_cols: bundle.l.cols(),
            h_rows: bundle.rank(),
            h_cols: bundle.cols(),
        });
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|&a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Column-major copy of the bundle iterate: column j occupies
/// `[j*k, (j+1)*k)`.
fn to_col_major(y: &DenseCountMatrix) -> Vec<f64> {
    let (k, m) = (y.rows(), y.cols());
    let mut out = vec![0.0; k * m];
    for j in 0..m {
        for kk in 0..k {
            out[j * k + kk] = y.get(kk, j);
        }
    }
    out
}

fn write_back(y: &mut DenseCountMatrix, data: &[f64]) {
    let (k, m) = (y.rows(), y.cols());
    for j in 0..m {
        for kk in 0..k {
            y.set(kk, j, data[j * k + kk].max(0.0));
        }
    }
}

/// Anchor multiplier of one column at the squared coordinates `x0_col`:
/// m_k = sum over the column's nonzeros of L_ik v_i / (L x0)_i.
fn column_multiplier(
    v: &CountMatrix,
    l: &DenseCountMatrix,
    j: usize,
    x0_col: &[f64],
    out: &mut [f64],
) {
    out.fill(0.0);
    let mut each = |i: usize, vij: f64| {
        if vij <= 0.0 {
            return;
        }
        let li = l.row(i);
        let mut z = 0.0;
        for (kk, &lik) in li.iter().enumerate() {
            z += lik * x0_col[kk];
        }
        let c = vij / z.max(DENOM_FLOOR);
        for (kk, &lik) in li.iter().enumerate() {
            out[kk] += lik * c;
        }
    };
    match v {
        CountMatrix::Dense(d) => {
            for i in 0..d.rows() {
                each(i, d.get(i, j));
            }
        }
        CountMatrix::Sparse(sp) => {
            let (rows, vals) = sp.col(j);
            for (&i, &val) in rows.iter().zip(vals) {
                each(i, val);
            }
        }
    }
}

/// Re-anchor column j at its current direction: normalize y into y0,
/// refresh x0 and the anchor gradient. Returns false when the fresh anchor
/// gradient vanishes and the column must be dropped.
#[allow(clippy::too_many_arguments)]
fn reanchor_column(
    v: &CountMatrix,
    l: &DenseCountMatrix,
    j: usize,
    k: usize,
    y: &[f64],
    y0: &mut [f64],
    x0: &mut [f64],
    gtil: &mut [f64],
) -> bool {
    let col = &y[j * k..(j + 1) * k];
    let n = norm(col);
    if n == 0.0 {
        return false;
    }
    for kk in 0..k {
        y0[j * k + kk] = col[kk] / n;
        x0[j * k + kk] = y0[j * k + kk] * y0[j * k + kk];
    }
    let mut m0 = vec![0.0; k];
    column_multiplier(v, l, j, &x0[j * k..(j + 1) * k], &mut m0);
    let mut any = false;
    for kk in 0..k {
        gtil[j * k + kk] = 2.0 * y0[j * k + kk] * m0[kk];
        if gtil[j * k + kk] != 0.0 {
            any = true;
        }
    }
    any
}

fn row_epoch(
    v: &CountMatrix,
    bundle: &mut SubproblemBundle,
    params: &EpochParams,
    epoch_stream: &RngStream,
) -> Result<EpochStats, KlnmfError> {
    let n = v.rows();
    let k = bundle.rank();
    let m_cols = bundle.cols();
    let l = bundle.l.clone();
    let eta = params.eta;
    let mut stats = EpochStats::default();

    let mut y = to_col_major(&bundle.y);
    let mut live = bundle.active.clone();

    // every live column enters the epoch normalized, like the generic
    // solver's snapshot point
    for j in 0..m_cols {
        if !live[j] {
            continue;
        }
        let nj = norm(&y[j * k..(j + 1) * k]);
        if nj == 0.0 {
            live[j] = false;
            stats.skipped_columns += 1;
            continue;
        }
        for kk in 0..k {
            y[j * k + kk] /= nj;
        }
    }

    // anchor the epoch: y0 = y, x0 = y0^2, gtil = 2 y0 * m(x0)
    let mut y0 = y.clone();
    let mut x0: Vec<f64> = y0.iter().map(|&a| a * a).collect();
    let mut gtil = vec![0.0; k * m_cols];
    for i in 0..n {
        let li = l.row(i);
        v.for_each_nonzero_in_row(i, |j, vij| {
            if !live[j] {
                return;
            }
            let base = j * k;
            let mut z = 0.0;
            for (kk, &lik) in li.iter().enumerate() {
                z += lik * x0[base + kk];
            }
            let c = vij / z.max(DENOM_FLOOR);
            for (kk, &lik) in li.iter().enumerate() {
                gtil[base + kk] += lik * c;
            }
        });
    }
    for j in 0..m_cols {
        if !live[j] {
            continue;
        }
        let mut any = false;
        for kk in 0..k {
            gtil[j * k + kk] *= 2.0 * y0[j * k + kk];
            if gtil[j * k + kk] != 0.0 {
                any = true;
            }
        }
        if !any {
            live[j] = false;
            stats.skipped_columns += 1;
        }
    }
    stats.work += n as f64;

    let spec = BatchSpec {
        size: BatchSpec::from_proportion(params.batch_proportion, n).size,
        replacement: params.replacement,
    };
    let scale = n as f64 / spec.size as f64;

    let mut alpha = vec![0.0; m_cols];
    let mut bt = vec![0.0; k * m_cols];
    let mut b0 = vec![0.0; k * m_cols];
    let mut is_dirty = vec![false; m_cols];
    let mut dirty: Vec<usize> = Vec::new();
    let mut gcol = vec![0.0; k];

    for t in 0..params.epoch_length {
        let mut rng = epoch_stream.child("step", t as u64);
        let batch = sample_indices(n, spec, &mut rng)?;

        // anchor weights, re-anchoring columns whose dot fell under floor
        for j in 0..m_cols {
            if !live[j] {
                continue;
            }
            let mut d = dot(&y[j * k..(j + 1) * k], &y0[j * k..(j + 1) * k]);
            let mut sc = norm(&y[j * k..(j + 1) * k]) * norm(&y0[j * k..(j + 1) * k]);
            if !(d.abs() > DOT_FLOOR * sc) {
                stats.restarts += 1;
                stats.work += n as f64 / m_cols as f64;
                if !reanchor_column(v, &l, j, k, &y, &mut y0, &mut x0, &mut gtil) {
                    live[j] = false;
                    stats.skipped_columns += 1;
                    continue;
                }
                d = dot(&y[j * k..(j + 1) * k], &y0[j * k..(j + 1) * k]);
                sc = norm(&y[j * k..(j + 1) * k]) * norm(&y0[j * k..(j + 1) * k]);
                if !(d.abs() > DOT_FLOOR * sc) {
                    live[j] = false;
                    stats.skipped_columns += 1;
                    continue;
                }
            }
            let n0 = norm(&y0[j * k..(j + 1) * k]);
            alpha[j] = d.abs().powf(DEGREE - 1.0) / n0.powf(2.0 * (DEGREE - 1.0));
        }

        // batch pass: accumulate current and anchor multipliers per column
        for &j in &dirty {
            bt[j * k..(j + 1) * k].fill(0.0);
            b0[j * k..(j + 1) * k].fill(0.0);
            is_dirty[j] = false;
        }
        dirty.clear();
        for &i in &batch {
            let li = l.row(i);
            v.for_each_nonzero_in_row(i, |j, vij| {
                if !live[j] {
                    return;
                }
                let base = j * k;
                let mut zt = 0.0;
                let mut z0 = 0.0;
                for (kk, &lik) in li.iter().enumerate() {
                    let yv = y[base + kk];
                    zt += lik * yv * yv;
                    z0 += lik * x0[base + kk];
                }
                let ct = scale * vij / zt.max(DENOM_FLOOR);
                let c0 = scale * vij / z0.max(DENOM_FLOOR);
                if !is_dirty[j] {
                    is_dirty[j] = true;
                    dirty.push(j);
                }
                for (kk, &lik) in li.iter().enumerate() {
                    bt[base + kk] += lik * ct;
                    b0[base + kk] += lik * c0;
                }
            });
        }
        stats.work += 2.0 * batch.len() as f64;

        // combine, clamp, and step every live column
        for j in 0..m_cols {
            if !live[j] {
                continue;
            }
            let base = j * k;
            let a = alpha[j];
            for kk in 0..k {
                let g = a * gtil[base + kk] + 2.0 * y[base + kk] * bt[base + kk]
                    - a * 2.0 * y0[base + kk] * b0[base + kk];
                if g < 0.0 {
                    stats.clamped += 1;
                    gcol[kk] = 0.0;
                } else {
                    gcol[kk] = g;
                }
            }
            let nj = norm(&y[base..base + k]);
            let denom = nj.powf(DEGREE - 2.0);
            for kk in 0..k {
                y[base + kk] = (1.0 - eta) * y[base + kk] + eta * gcol[kk] / denom;
            }
            let nn = norm(&y[base..base + k]);
            if nn == 0.0 {
                // collapsed step: fall back to the anchor
                y[base..base + k].copy_from_slice(&y0[base..base + k]);
                stats.degenerate_steps += 1;
            } else if nn < NORM_WINDOW.0 || nn > NORM_WINDOW.1 {
                for kk in 0..k {
                    y[base + kk] /= nn;
                }
            }
        }
    }

    finish_columns(&mut y, &mut live, k, m_cols, &mut stats);
    write_back(&mut bundle.y, &y);
    bundle.active = live;
    Ok(stats)
}

fn element_epoch(
    v: &CountMatrix,
    bundle: &mut SubproblemBundle,
    params: &EpochParams,
    epoch_stream: &RngStream,
) -> Result<EpochStats, KlnmfError> {
    let sp = match v {
        CountMatrix::Sparse(sp) => sp,
        CountMatrix::Dense(_) => return Err(KlnmfError::ElementSamplingNeedsSparse),
    };
    let k = bundle.rank();
    let m_cols = bundle.cols();
    let l = bundle.l.clone();
    let eta = params.eta;
    let mut stats = EpochStats::default();

    let mut y = to_col_major(&bundle.y);
    let mut live = bundle.active.clone();

    let mut y0 = vec![0.0; k];
    let mut x0 = vec![0.0; k];
    let mut gtil = vec![0.0; k];
    let mut m0 = vec![0.0; k];
    let mut bt = vec![0.0; k];
    let mut b0 = vec![0.0; k];
    let mut gcol = vec![0.0; k];

    for j in 0..m_cols {
        if !live[j] {
            continue;
        }
        let (rows, vals) = sp.col(j);
        let nj = rows.len();
        if nj == 0 {
            live[j] = false;
            stats.skipped_columns += 1;
            continue;
        }
        let base = j * k;
        let ynorm = norm(&y[base..base + k]);
        if ynorm == 0.0 {
            live[j] = false;
            stats.skipped_columns += 1;
            continue;
        }
        for kk in 0..k {
            y[base + kk] /= ynorm;
        }

        // per-column anchor
        y0.copy_from_slice(&y[base..base + k]);
        for kk in 0..k {
            x0[kk] = y0[kk] * y0[kk];
        }
        column_multiplier(v, &l, j, &x0, &mut m0);
        let mut any = false;
        for kk in 0..k {
            gtil[kk] = 2.0 * y0[kk] * m0[kk];
            any |= gtil[kk] != 0.0;
        }
        stats.work += nj as f64;
        if !any {
            live[j] = false;
            stats.skipped_columns += 1;
            continue;
        }

        let spec = BatchSpec {
            size: BatchSpec::from_proportion(params.batch_proportion, nj).size,
            replacement: params.replacement,
        };
        let scale = nj as f64 / spec.size as f64;
        let col_stream = epoch_stream.child("col", j as u64);

        let mut dropped = false;
        for t in 0..params.epoch_length {
            let mut rng = col_stream.child("step", t as u64);
            let batch = sample_indices(nj, spec, &mut rng)?;

            let yj = &y[base..base + k];
            let mut d = dot(yj, &y0);
            let mut sc = norm(yj) * norm(&y0);
            if !(d.abs() > DOT_FLOOR * sc) {
                stats.restarts += 1;
                stats.work += nj as f64;
                let ycol = &y[base..base + k];
                let yn = norm(ycol);
                if yn == 0.0 {
                    dropped = true;
                    break;
                }
                for kk in 0..k {
                    y0[kk] = y[base + kk] / yn;
                    x0[kk] = y0[kk] * y0[kk];
                }
                column_multiplier(v, &l, j, &x0, &mut m0);
                let mut any = false;
                for kk in 0..k {
                    gtil[kk] = 2.0 * y0[kk] * m0[kk];
                    any |= gtil[kk] != 0.0;
                }
                if !any {
                    dropped = true;
                    break;
                }
                let yj = &y[base..base + k];
                d = dot(yj, &y0);
                sc = norm(yj) * norm(&y0);
                if !(d.abs() > DOT_FLOOR * sc) {
                    dropped = true;
                    break;
                }
            }
            let n0 = norm(&y0);
            let a = d.abs().powf(DEGREE - 1.0) / n0.powf(2.0 * (DEGREE - 1.0));

            bt.fill(0.0);
            b0.fill(0.0);
            for &id in &batch {
                let i = rows[id];
                let vij = vals[id];
                let li = l.row(i);
                let mut zt = 0.0;
                let mut z0 = 0.0;
                for (kk, &lik) in li.iter().enumerate() {
                    let yv = y[base + kk];
                    zt += lik * yv * yv;
                    z0 += lik * x0[kk];
                }
                let ct = scale * vij / zt.max(DENOM_FLOOR);
                let c0 = scale * vij / z0.max(DENOM_FLOOR);
                for (kk, &lik) in li.iter().enumerate() {
                    bt[kk] += lik * ct;
                    b0[kk] += lik * c0;
                }
            }
            stats.work += 2.0 * batch.len() as f64;

            for kk in 0..k {
                let g = a * gtil[kk] + 2.0 * y[base + kk] * bt[kk] - a * 2.0 * y0[kk] * b0[kk];
                if g < 0.0 {
                    stats.clamped += 1;
                    gcol[kk] = 0.0;
                } else {
                    gcol[kk] = g;
                }
            }
            let nj_cur = norm(&y[base..base + k]);
            let denom = nj_cur.powf(DEGREE - 2.0);
            for kk in 0..k {
                y[base + kk] = (1.0 - eta) * y[base + kk] + eta * gcol[kk] / denom;
            }
            let nn = norm(&y[base..base + k]);
            if nn == 0.0 {
                for kk in 0..k {
                    y[base + kk] = y0[kk];
                }
                stats.degenerate_steps += 1;
            } else if nn < NORM_WINDOW.0 || nn > NORM_WINDOW.1 {
                for kk in 0..k {
                    y[base + kk] /= nn;
                }
            }
        }
        if dropped {
            live[j] = false;
            stats.skipped_columns += 1;
        }
    }

    finish_columns(&mut y, &mut live, k, m_cols, &mut stats);
    write_back(&mut bundle.y, &y);
    bundle.active = live;
    Ok(stats)
}

/// Exit normalization: every live column leaves with unit norm; columns
/// that lost all mass are dropped.
fn finish_columns(
    y: &mut [f64],
    live: &mut [bool],
    k: usize,
    m_cols: usize,
    stats: &mut EpochStats,
) {
    for j in 0..m_cols {
        if !live[j] {
            continue;
        }
        let base = j * k;
        let nj = norm(&y[base..base + k]);
        if nj == 0.0 {
            live[j] = false;
            stats.skipped_columns += 1;
            continue;
        }
        for kk in 0..k {
            y[base + kk] /= nj;
        }
    }
}

/// `epoch_length` plain stochastic multiplicative steps on the simplex
/// coordinates, no variance reduction:
/// x_kj <- x_kj * max(0, (1 - eta) + eta mhat_kj)^2, column-rescaled back
/// onto the simplex. The batch multiplier mhat is scaled so a full batch
/// reproduces the exact power step. A column whose rescale sum collapses
/// keeps its previous value for that step.
pub fn vanilla_stochastic_update(
    v: &CountMatrix,
    bundle: &mut SubproblemBundle,
    params: &VanillaParams,
    update_stream: &RngStream,
) -> Result<EpochStats, KlnmfError> {
    validate_shapes(v, bundle)?;
    if !(params.eta > 0.0) || !params.eta.is_finite() {
        return Err(KlnmfError::InvalidConfig(format!(
            "eta {} must be positive",
            params.eta
        )));
    }
    if params.epoch_length == 0 {
        return Err(KlnmfError::InvalidConfig(
            "epoch length must be at least 1".into(),
        ));
    }
    match params.mode {
        SamplingMode::Row => vanilla_row(v, bundle, params, update_stream),
        SamplingMode::Element => vanilla_element(v, bundle, params, update_stream),
    }
}

fn vanilla_row(
    v: &CountMatrix,
    bundle: &mut SubproblemBundle,
    params: &VanillaParams,
    update_stream: &RngStream,
) -> Result<EpochStats, KlnmfError> {
    let n = v.rows();
    let k = bundle.rank();
    let m_cols = bundle.cols();
    let l = bundle.l.clone();
    let mut stats = EpochStats::default();

    let x_dense = bundle.simplex_x();
    let mut x = to_col_major(&x_dense);
    let live = bundle.active.clone();

    let spec = BatchSpec {
        size: BatchSpec::from_proportion(params.batch_proportion, n).size,
        replacement: params.replacement,
    };
    let scale = n as f64 / spec.size as f64;

    let mut mhat = vec![0.0; k * m_cols];
    let mut is_dirty = vec![false; m_cols];
    let mut dirty: Vec<usize> = Vec::new();

    for t in 0..params.epoch_length {
        let mut rng = update_stream.child("step", t as u64);
        let batch = sample_indices(n, spec, &mut rng)?;

        for &j in &dirty {
            mhat[j * k..(j + 1) * k].fill(0.0);
            is_dirty[j] = false;
        }
        dirty.clear();
        for &i in &batch {
            let li = l.row(i);
            v.for_each_nonzero_in_row(i, |j, vij| {
                if !live[j] {
                    return;
                }
                let base = j * k;
                let mut z = 0.0;
                for (kk, &lik) in li.iter().enumerate() {
                    z += lik * x[base + kk];
                }
                let c = scale * vij / z.max(DENOM_FLOOR);
                if !is_dirty[j] {
                    is_dirty[j] = true;
                    dirty.push(j);
                }
                for (kk, &lik) in li.iter().enumerate() {
                    mhat[base + kk] += lik * c;
                }
            });
        }
        stats.work += batch.len() as f64;

        for j in 0..m_cols {
            if !live[j] {
                continue;
            }
            bracket_step(
                &mut x[j * k..(j + 1) * k],
                &mhat[j * k..(j + 1) * k],
                params.eta,
                &mut stats,
            );
        }
    }

    let mut out = DenseCountMatrix::zeros(k, m_cols);
    write_back(&mut out, &x);
    bundle.set_from_simplex(&out);
    Ok(stats)
}

fn vanilla_element(
    v: &CountMatrix,
    bundle: &mut SubproblemBundle,
    params: &VanillaParams,
    update_stream: &RngStream,
) -> Result<EpochStats, KlnmfError> {
    let sp = match v {
        CountMatrix::Sparse(sp) => sp,
        CountMatrix::Dense(_) => return Err(KlnmfError::ElementSamplingNeedsSparse),
    };
    let k = bundle.rank();
    let m_cols = bundle.cols();
    let l = bundle.l.clone();
    let mut stats = EpochStats::default();

    let x_dense = bundle.simplex_x();
    let mut x = to_col_major(&x_dense);
    let live = bundle.active.clone();

    let mut mhat = vec![0.0; k];

    for j in 0..m_cols {
        if !live[j] {
            continue;
        }
        let (rows, vals) = sp.col(j);
        let nj = rows.len();
        if nj == 0 {
            continue;
        }
        let base = j * k;
        let spec = BatchSpec {
            size: BatchSpec::from_proportion(params.batch_proportion, nj).size,
            replacement: params.replacement,
        };
        let scale = nj as f64 / spec.size as f64;
        let col_stream = update_stream.child("col", j as u64);

        for t in 0..params.epoch_length {
            let mut rng = col_stream.child("step", t as u64);
            let batch = sample_indices(nj, spec, &mut rng)?;
            mhat.fill(0.0);
            for &id in &batch {
                let i = rows[id];
                let vij = vals[id];
                let li = l.row(i);
                let mut z = 0.0;
                for (kk, &lik) in li.iter().enumerate() {
                    z += lik * x[base + kk];
                }
                let c = scale * vij / z.max(DENOM_FLOOR);
                for (kk, &lik) in li.iter().enumerate() {
                    mhat[kk] += lik * c;
                }
            }
            stats.work += batch.len() as f64;
            bracket_step(&mut x[base..base + k], &mhat, params.eta, &mut stats);
        }
    }

    let mut out = DenseCountMatrix::zeros(k, m_cols);
    write_back(&mut out, &x);
    bundle.set_from_simplex(&out);
    Ok(stats)
}

/// x <- x * max(0, (1 - eta) + eta m)^2, rescaled to unit sum. A collapsed
/// column keeps its previous coordinates.
fn bracket_step(x: &mut [f64], mhat: &[f64], eta: f64, stats: &mut EpochStats) {
    let prev: Vec<f64> = x.to_vec();
    let mut sum = 0.0;
    for (xv, &mv) in x.iter_mut().zip(mhat) {
        let bracket = (1.0 - eta) + eta * mv;
        let b = if bracket < 0.0 {
            stats.clamped += 1;
            0.0
        } else {
            bracket
        };
        *xv *= b * b;
        sum += *xv;
    }
    if sum > 0.0 {
        for xv in x.iter_mut() {
            *xv /= sum;
        }
    } else {
        x.copy_from_slice(&prev);
        stats.degenerate_steps += 1;
    }
}

/// The exact power step on every active column: x <- x * ((1-eta) + eta m)^2
/// with the full multiplier m = L^T (v / (L x)), rescaled to the simplex.
/// At eta = 1 this is one exact scale-invariant power iteration.
pub fn exact_scipi_update(
    v: &CountMatrix,
    bundle: &mut SubproblemBundle,
    eta: f64,
) -> Result<EpochStats, KlnmfError> {
    validate_shapes(v, bundle)?;
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(KlnmfError::InvalidConfig(format!(
            "eta {eta} must be positive"
        )));
    }
    let mut stats = EpochStats::default();
    let x = bundle.simplex_x();
    let m = full_multiplier(v, &bundle.l, &x)?;
    let k = bundle.rank();
    let mut next = DenseCountMatrix::zeros(k, bundle.cols());
    let mut col = vec![0.0; k];
    for j in 0..bundle.cols() {
        if !bundle.active[j] {
            continue;
        }
        for (kk, c) in col.iter_mut().enumerate() {
            *c = x.get(kk, j);
        }
        let mcol: Vec<f64> = (0..k).map(|kk| m.get(kk, j)).collect();
        bracket_step(&mut col, &mcol, eta, &mut stats);
        for (kk, &c) in col.iter().enumerate() {
            next.set(kk, j, c);
        }
    }
    stats.work += full_pass_units(v);
    bundle.set_from_simplex(&next);
    Ok(stats)
}

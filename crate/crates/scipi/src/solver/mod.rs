//! Scale-invariant power iteration, full-batch and stochastic.
//!
//! The full-batch step normalizes the gradient: x+ = grad f(x) / |grad f(x)|.
//! The stochastic solver runs variance-reduced epochs: a snapshot x0 with its
//! full gradient anchors m inner steps, each combining the snapshot gradient
//! (scaled by a homogeneity-corrected factor alpha) with a sampled correction,
//! then blending through the step size eta.

mod problem;

pub use problem::{DiagonalQuadratic, PcaProblem, ScaleInvariantProblem};

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::Trace;
use crate::sampling::{sample_indices, BatchSpec, RngStream, SamplingError};
use problem::{dot, norm};

/// Epochs abort and re-snapshot when |x_t . x_0| falls to this fraction of
/// |x_t||x_0|; alpha is unusable that close to orthogonality.
pub const DOT_FLOOR: f64 = 1e-8;

/// Iterates are renormalized once their norm leaves [2^-64, 2^64].
pub const NORM_WINDOW: (f64, f64) = (5.421010862427522e-20, 1.8446744073709552e19);

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("gradient vanished at the current point")]
    DegeneratePoint,
    #[error("snapshot gradient vanished; no direction to iterate")]
    DegenerateSnapshot,
    #[error("invalid solver input: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

/// One exact power-style step: the normalized full gradient.
pub fn sci_pi_step<P: ScaleInvariantProblem>(
    problem: &P,
    x: &[f64],
) -> Result<Vec<f64>, SolveError> {
    let mut g = vec![0.0; problem.dimension()];
    problem.grad_full(x, &mut g);
    let gn = norm(&g);
    if gn == 0.0 || !gn.is_finite() {
        return Err(SolveError::DegeneratePoint);
    }
    for v in &mut g {
        *v /= gn;
    }
    Ok(g)
}

/// Snapshot anchor: the point an epoch started from and its full gradient.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub x0: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Snapshot {
    pub fn take<P: ScaleInvariantProblem>(problem: &P, x0: Vec<f64>) -> Result<Self, SolveError> {
        let mut grad = vec![0.0; problem.dimension()];
        problem.grad_full(&x0, &mut grad);
        if norm(&grad) == 0.0 {
            return Err(SolveError::DegenerateSnapshot);
        }
        Ok(Snapshot { x0, grad })
    }
}

/// The snapshot weight alpha = |x_t . x_0|^(p-1) / |x_0|^(2(p-1)).
/// Errs when the dot product is under the floor, which callers treat as an
/// epoch abort rather than a fatal condition.
pub fn snapshot_alpha(p: f64, x_t: &[f64], x_0: &[f64]) -> Result<f64, SolveError> {
    let d = dot(x_t, x_0);
    let scale = norm(x_t) * norm(x_0);
    if !(d.abs() > DOT_FLOOR * scale) {
        return Err(SolveError::DegenerateSnapshot);
    }
    let n0 = norm(x_0);
    Ok(d.abs().powf(p - 1.0) / n0.powf(2.0 * (p - 1.0)))
}

/// Variance-reduced gradient estimate at x_t:
/// alpha * g0 + (1/s) sum_{l in batch} [grad f_l(x_t) - alpha grad f_l(x_0)].
pub fn svrg_gradient<P: ScaleInvariantProblem>(
    problem: &P,
    x_t: &[f64],
    snapshot: &Snapshot,
    batch: &[usize],
) -> Result<Vec<f64>, SolveError> {
    let alpha = snapshot_alpha(problem.degree(), x_t, &snapshot.x0)?;
    let d = problem.dimension();
    let s = batch.len() as f64;
    let mut g: Vec<f64> = snapshot.grad.iter().map(|&v| alpha * v).collect();
    let mut buf_t = vec![0.0; d];
    let mut buf_0 = vec![0.0; d];
    for &l in batch {
        problem.grad_sample(l, x_t, &mut buf_t);
        problem.grad_sample(l, &snapshot.x0, &mut buf_0);
        for ((gi, &bt), &b0) in g.iter_mut().zip(&buf_t).zip(&buf_0) {
            *gi += (bt - alpha * b0) / s;
        }
    }
    Ok(g)
}

/// Inner update x+ = (1 - eta) x + eta * g / |x|^(p-2).
pub fn inner_step(x: &[f64], g: &[f64], eta: f64, p: f64) -> Result<Vec<f64>, SolveError> {
    let n = norm(x);
    if n == 0.0 {
        return Err(SolveError::DegeneratePoint);
    }
    let denom = n.powf(p - 2.0);
    Ok(x.iter()
        .zip(g)
        .map(|(&xi, &gi)| (1.0 - eta) * xi + eta * gi / denom)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Tolerance,
    EpochLimit,
    TimeBudget,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub eta: f64,
    pub batch: BatchSpec,
    /// Inner steps per epoch (m).
    pub epoch_length: usize,
    pub max_epochs: usize,
    /// Epoch-level stop: |value - previous| < tolerance * max(1, |value|).
    pub tolerance: f64,
    #[serde(default)]
    pub time_budget_secs: Option<f64>,
    pub seed: u64,
    /// Keep a normalized copy of every inner iterate (for rate fitting).
    #[serde(default)]
    pub record_iterates: bool,
    /// Normalize after every inner step instead of only when the norm
    /// escapes its window. Direction sequences are unchanged either way.
    #[serde(default)]
    pub renormalize_each_step: bool,
}

impl SolverConfig {
    pub fn new(eta: f64, batch: BatchSpec, epoch_length: usize, max_epochs: usize) -> Self {
        SolverConfig {
            eta,
            batch,
            epoch_length,
            max_epochs,
            tolerance: 1e-10,
            time_budget_secs: None,
            seed: 0,
            record_iterates: false,
            renormalize_each_step: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    /// Final iterate, renormalized.
    pub x: Vec<f64>,
    /// Objective at the final normalized iterate.
    pub value: f64,
    pub epochs: usize,
    pub termination: Termination,
    /// Epoch aborts that forced a fresh snapshot.
    pub restarts: usize,
    /// Cumulative per-sample gradient evaluations.
    pub work: f64,
    pub trace: Trace,
    /// Normalized inner iterates (initial point first) when recording is on.
    pub iterates: Option<Vec<Vec<f64>>>,
}

/// Runs variance-reduced scale-invariant power iteration from `x_init`.
/// Batches come from the stream derived from `config.seed`.
pub fn solve<P: ScaleInvariantProblem>(
    problem: &P,
    x_init: &[f64],
    config: &SolverConfig,
) -> Result<SolveOutcome, SolveError> {
    solve_from_stream(problem, x_init, config, RngStream::from_seed(config.seed))
}

/// As `solve`, with the batch stream supplied by the caller. The batch for
/// inner step t of epoch e is drawn from `stream.child("epoch", e).child("step", t)`,
/// so two callers holding equal streams see identical batches.
pub fn solve_from_stream<P: ScaleInvariantProblem>(
    problem: &P,
    x_init: &[f64],
    config: &SolverConfig,
    stream: RngStream,
) -> Result<SolveOutcome, SolveError> {
    let d = problem.dimension();
    let n = problem.num_samples();
    let p = problem.degree();
    if x_init.len() != d {
        return Err(SolveError::InvalidConfig(format!(
            "initial point has length {}, problem dimension is {d}",
            x_init.len()
        )));
    }
    if !x_init.iter().all(|v| v.is_finite()) {
        return Err(SolveError::InvalidConfig("non-finite initial point".into()));
    }
    if !(config.eta > 0.0) || !config.eta.is_finite() {
        return Err(SolveError::InvalidConfig(format!(
            "eta {} must be positive",
            config.eta
        )));
    }
    if !p.is_finite() {
        return Err(SolveError::InvalidConfig(format!(
            "degree {p} is not finite"
        )));
    }
    if config.epoch_length == 0 {
        return Err(SolveError::InvalidConfig(
            "epoch length must be at least 1".into(),
        ));
    }
    if norm(x_init) == 0.0 {
        return Err(SolveError::DegeneratePoint);
    }

    let budget = config.time_budget_secs.map(Duration::from_secs_f64);
    let mut x = x_init.to_vec();
    let mut work = 0.0;
    let mut restarts = 0usize;
    let mut timed = Duration::ZERO;
    let mut trace = Trace::new("s-sci-pi");
    let mut iterates: Option<Vec<Vec<f64>>> = config.record_iterates.then(|| vec![normalized(&x)]);

    // objective evaluation stays outside the timed spans
    let mut value = problem.value(&normalized(&x));
    trace.push(timed.as_secs_f64(), work, 0, value);

    let mut termination = Termination::EpochLimit;
    let mut epoch = 0usize;
    while epoch < config.max_epochs {
        let span = Instant::now();
        let snapshot = Snapshot::take(problem, normalized(&x))?;
        work += n as f64;
        x = snapshot.x0.clone();

        let mut aborted = false;
        for t in 0..config.epoch_length {
            let mut rng = stream.child("epoch", epoch as u64).child("step", t as u64);
            let batch = sample_indices(n, config.batch, &mut rng)?;
            let g = match svrg_gradient(problem, &x, &snapshot, &batch) {
                Ok(g) => g,
                Err(SolveError::DegenerateSnapshot) => {
                    restarts += 1;
                    aborted = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            work += 2.0 * batch.len() as f64;
            x = inner_step(&x, &g, config.eta, p)?;
            let nx = norm(&x);
            if config.renormalize_each_step || nx < NORM_WINDOW.0 || nx > NORM_WINDOW.1 {
                if nx == 0.0 {
                    return Err(SolveError::DegeneratePoint);
                }
                for v in &mut x {
                    *v /= nx;
                }
            }
            if let Some(hist) = iterates.as_mut() {
                hist.push(normalized(&x));
            }
        }
        timed += span.elapsed();
        epoch += 1;

        let prev = value;
        value = problem.value(&normalized(&x));
        trace.push(active_seconds(timed), work, epoch as u64, value);

        if !aborted && (value - prev).abs() < config.tolerance * value.abs().max(1.0) {
            termination = Termination::Tolerance;
            break;
        }
        if let Some(b) = budget {
            if timed >= b {
                termination = Termination::TimeBudget;
                break;
            }
        }
    }

    let x_final = normalized(&x);
    let value = problem.value(&x_final);
    Ok(SolveOutcome {
        x: x_final,
        value,
        epochs: epoch,
        termination,
        restarts,
        work,
        trace,
        iterates,
    })
}

fn active_seconds(timed: Duration) -> f64 {
    timed.as_secs_f64()
}

fn normalized(x: &[f64]) -> Vec<f64> {
    let n = norm(x);
    if n == 0.0 {
        return x.to_vec();
    }
    x.iter().map(|v| v / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> Vec<f64> {
        normalized(v)
    }

    #[test]
    fn sci_pi_step_normalizes_the_gradient() {
        // diag(2,1) at (1,1): gradient (2,1), normalized (2,1)/sqrt(5)
        let p = DiagonalQuadratic::new(vec![2.0, 1.0]);
        let x = [1.0, 1.0];
        let step = sci_pi_step(&p, &x).unwrap();
        let s5 = 5.0f64.sqrt();
        assert!((step[0] - 2.0 / s5).abs() < 1e-15);
        assert!((step[1] - 1.0 / s5).abs() < 1e-15);
    }

    #[test]
    fn sci_pi_step_rejects_a_zero_gradient() {
        let p = DiagonalQuadratic::new(vec![1.0, 1.0]);
        assert!(matches!(
            sci_pi_step(&p, &[0.0, 0.0]),
            Err(SolveError::DegeneratePoint)
        ));
    }

    #[test]
    fn snapshot_alpha_matches_hand_values() {
        // p=0, unit snapshot, dot 0.5 -> alpha = 2
        let x0 = [1.0, 0.0];
        let xt = [0.5, f64::sqrt(0.75)];
        let a = snapshot_alpha(0.0, &xt, &x0).unwrap();
        assert!((a - 2.0).abs() < 1e-12, "{a}");
        // p=2 reduces to the bare dot product
        let a2 = snapshot_alpha(2.0, &xt, &x0).unwrap();
        assert!((a2 - 0.5).abs() < 1e-12);
        // p=1 is constant 1
        let a1 = snapshot_alpha(1.0, &xt, &x0).unwrap();
        assert!((a1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn snapshot_alpha_flags_near_orthogonal_pairs() {
        let x0 = [1.0, 0.0];
        let xt = [1e-12, 1.0];
        assert!(matches!(
            snapshot_alpha(0.0, &xt, &x0),
            Err(SolveError::DegenerateSnapshot)
        ));
    }

    #[test]
    fn inner_step_matches_hand_value() {
        // p=0, |x|=2, eta=0.5: 0.5*(2,0) + 0.5*(1,0)/2^-2 = (3,0)
        let x = [2.0, 0.0];
        let g = [1.0, 0.0];
        let out = inner_step(&x, &g, 0.5, 0.0).unwrap();
        assert!((out[0] - 3.0).abs() < 1e-14, "{out:?}");
        assert!(out[1].abs() < 1e-15);
    }

    #[test]
    fn full_batch_gradient_ignores_the_snapshot_point() {
        // s=n cancels the alpha terms exactly, so two different snapshots
        // give the same estimate
        let p = DiagonalQuadratic::new(vec![2.0, 1.0, 0.5]);
        let xt = [0.3, -0.8, 0.52];
        let batch: Vec<usize> = (0..3).collect();
        let s1 = Snapshot::take(&p, unit(&[1.0, 1.0, 1.0])).unwrap();
        let s2 = Snapshot::take(&p, unit(&[0.2, 0.9, -0.4])).unwrap();
        let g1 = svrg_gradient(&p, &xt, &s1, &batch).unwrap();
        let g2 = svrg_gradient(&p, &xt, &s2, &batch).unwrap();
        let mut full = vec![0.0; 3];
        p.grad_full(&xt, &mut full);
        for i in 0..3 {
            assert!((g1[i] - g2[i]).abs() < 1e-12, "{g1:?} vs {g2:?}");
            assert!((g1[i] - full[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn unbiased_over_enumerated_pair_batches() {
        // all 2-subsets of a 4-sample problem average to the full gradient
        let p = DiagonalQuadratic::new(vec![2.0, 1.0, 0.5, 0.1]);
        let xt = unit(&[0.4, 0.3, -0.7, 0.5]);
        let x0 = unit(&[1.0, 0.8, 0.6, 0.4]);
        let snap = Snapshot::take(&p, x0).unwrap();
        let mut mean = vec![0.0; 4];
        let mut count = 0.0;
        for a in 0..4 {
            for b in (a + 1)..4 {
                let g = svrg_gradient(&p, &xt, &snap, &[a, b]).unwrap();
                for (m, &gi) in mean.iter_mut().zip(&g) {
                    *m += gi;
                }
                count += 1.0;
            }
        }
        let mut full = vec![0.0; 4];
        p.grad_full(&xt, &mut full);
        for (m, &f) in mean.iter().zip(&full) {
            assert!((m / count - f).abs() < 1e-12, "{} vs {f}", m / count);
        }
    }

    #[test]
    fn zero_epoch_budget_returns_the_initial_point() {
        let p = DiagonalQuadratic::new(vec![2.0, 1.0]);
        let cfg = SolverConfig::new(1.0, BatchSpec::without_replacement(2), 1, 0);
        let out = solve(&p, &[0.6, 0.8], &cfg).unwrap();
        assert_eq!(out.epochs, 0);
        assert_eq!(out.termination, Termination::EpochLimit);
        assert_eq!(out.x, vec![0.6, 0.8]);
    }

    #[test]
    fn full_batch_eta_one_reproduces_power_iteration() {
        let eigs = vec![2.0, 1.0, 0.5, 0.1];
        let p = DiagonalQuadratic::new(eigs.clone());
        let mut cfg = SolverConfig::new(1.0, BatchSpec::without_replacement(4), 1, 40);
        cfg.renormalize_each_step = true;
        cfg.record_iterates = true;
        cfg.tolerance = 0.0;
        let x0 = unit(&[1.0, 1.0, 1.0, 1.0]);
        let out = solve(&p, &x0, &cfg).unwrap();
        // classical power iteration as the oracle
        let mut y = x0.clone();
        let hist = out.iterates.unwrap();
        assert_eq!(hist.len(), 41);
        for step in hist.iter().skip(1) {
            let ay: Vec<f64> = eigs.iter().zip(&y).map(|(&e, &yi)| e * yi).collect();
            y = unit(&ay);
            for (a, b) in step.iter().zip(&y) {
                assert!((a - b).abs() < 1e-12, "drift {a} vs {b}");
            }
        }
        // converges to e1
        assert!((out.x[0].abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn converges_on_the_diagonal_quadratic_with_small_batches() {
        let p = DiagonalQuadratic::new(vec![2.0, 1.0, 0.5, 0.1]);
        let mut cfg = SolverConfig::new(0.5, BatchSpec::without_replacement(2), 20, 400);
        cfg.tolerance = 1e-13;
        cfg.seed = 7;
        let out = solve(&p, &unit(&[1.0, 1.0, 1.0, 1.0]), &cfg).unwrap();
        assert!(
            (out.x[0].abs() - 1.0).abs() < 1e-6,
            "top coordinate {:?}, termination {:?}",
            out.x,
            out.termination
        );
    }

    #[test]
    fn scale_of_the_start_does_not_change_directions() {
        let p = PcaProblem::from_rows(vec![
            vec![1.0, 0.3, -0.2],
            vec![0.4, 1.1, 0.5],
            vec![-0.3, 0.2, 0.9],
            vec![0.8, -0.5, 0.1],
        ]);
        let mut cfg = SolverConfig::new(0.7, BatchSpec::without_replacement(2), 5, 20);
        cfg.seed = 11;
        cfg.tolerance = 0.0;
        let base: Vec<f64> = vec![0.5, 0.5, 0.5];
        let scaled: Vec<f64> = base.iter().map(|v| v * 37.5).collect();
        let a = solve(&p, &base, &cfg).unwrap();
        let b = solve(&p, &scaled, &cfg).unwrap();
        for (x, y) in a.x.iter().zip(&b.x) {
            assert!((x - y).abs() < 1e-9, "{:?} vs {:?}", a.x, b.x);
        }
    }
}

//! Grid experiments: replicate runs, curve aggregation, and parameter
//! search.
//!
//! One configuration runs as several independently seeded replicates; the
//! aggregate is a mean and median relative-error curve on a shared time
//! grid plus the distribution of final errors. The search sweeps a
//! cartesian grid, skips configurations that always diverge, and breaks
//! ties toward the cheaper configuration.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::klnmf::{alternate, AlternateConfig, Scheme, UpdateRule};
use crate::matrix::CountMatrix;

use super::{init_model, BenchError, ClockKind, ReferenceObjective, Trace};

/// Curve interpolation floors relative errors here so a replicate that
/// hits the reference exactly does not poison the log-space mean.
const CURVE_FLOOR: f64 = 1e-300;

/// One stochastic configuration under test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub eta: f64,
    /// Batch size as a fraction of the sample count.
    pub batch_proportion: f64,
    pub epoch_length: usize,
}

/// Cartesian parameter grid plus the run budgets shared by every point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub batch_proportions: Vec<f64>,
    pub epoch_lengths: Vec<usize>,
    pub step_sizes: Vec<f64>,
    pub replicates: usize,
    pub rank: usize,
    pub max_rounds: usize,
    #[serde(default)]
    pub work_limit: Option<f64>,
    #[serde(default)]
    pub time_limit_secs: Option<f64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub clock: ClockKind,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        ExperimentGrid {
            batch_proportions: vec![1e-4, 1e-3, 1e-2, 0.1, 1.0],
            epoch_lengths: vec![10, 100, 1000],
            step_sizes: vec![0.01, 0.1, 1.0],
            replicates: 10,
            rank: 20,
            max_rounds: 200,
            work_limit: None,
            time_limit_secs: None,
            master_seed: 0,
            clock: ClockKind::Work,
        }
    }
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<(), BenchError> {
        for &p in &self.batch_proportions {
            if !(p > 0.0 && p <= 1.0) {
                return Err(BenchError::InvalidGrid(format!(
                    "batch proportion {p} is outside (0, 1]"
                )));
            }
        }
        for &eta in &self.step_sizes {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(BenchError::InvalidGrid(format!(
                    "step size {eta} is outside (0, 1]"
                )));
            }
        }
        if self.epoch_lengths.iter().any(|&m| m == 0) {
            return Err(BenchError::InvalidGrid("epoch length 0".into()));
        }
        if self.replicates == 0 {
            return Err(BenchError::InvalidGrid("zero replicates".into()));
        }
        if self.rank == 0 {
            return Err(BenchError::InvalidGrid("rank 0".into()));
        }
        if self.max_rounds == 0 {
            return Err(BenchError::InvalidGrid("zero rounds".into()));
        }
        Ok(())
    }

    /// Grid points that actually vary the template rule: the full product
    /// for stochastic rules, step size alone for full-batch power steps,
    /// and a single placeholder point for parameter-free baselines.
    pub fn points(&self, template: &UpdateRule) -> Vec<GridPoint> {
        if template.samples_stochastically() {
            let mut points = Vec::new();
            for &eta in &self.step_sizes {
                for &m in &self.epoch_lengths {
                    for &p in &self.batch_proportions {
                        points.push(GridPoint {
                            eta,
                            batch_proportion: p,
                            epoch_length: m,
                        });
                    }
                }
            }
            points
        } else if matches!(template, UpdateRule::FSciPi { .. }) {
            self.step_sizes
                .iter()
                .map(|&eta| GridPoint {
                    eta,
                    batch_proportion: 1.0,
                    epoch_length: 1,
                })
                .collect()
        } else {
            vec![GridPoint {
                eta: 0.0,
                batch_proportion: 1.0,
                epoch_length: 1,
            }]
        }
    }
}

/// The template rule with one grid point's parameters substituted in.
pub(crate) fn rule_at(template: &UpdateRule, point: GridPoint) -> UpdateRule {
    match template.clone() {
        UpdateRule::SSciPi {
            replacement, mode, ..
        } => UpdateRule::SSciPi {
            eta: point.eta,
            batch_proportion: point.batch_proportion,
            epoch_length: point.epoch_length,
            replacement,
            mode,
        },
        UpdateRule::Vanilla {
            replacement, mode, ..
        } => UpdateRule::Vanilla {
            eta: point.eta,
            batch_proportion: point.batch_proportion,
            epoch_length: point.epoch_length,
            replacement,
            mode,
        },
        UpdateRule::FSciPi { .. } => UpdateRule::FSciPi { eta: point.eta },
        other => other,
    }
}

/// One replicate's run of one configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateRun {
    pub replicate: usize,
    pub seed: u64,
    /// True when the trace hit a non-finite objective; excluded from every
    /// aggregate.
    pub diverged: bool,
    pub trace: Trace,
}

/// Replicate runs of one configuration plus their aggregate curves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub solver: String,
    pub point: GridPoint,
    pub runs: Vec<ReplicateRun>,
    /// Shared time grid of the aggregate curves, in the experiment clock.
    pub curve_times: Vec<f64>,
    pub mean_curve: Vec<f64>,
    pub median_curve: Vec<f64>,
    /// Final relative error of each non-divergent replicate, in replicate
    /// order.
    pub final_errors: Vec<f64>,
    /// Infinite when every replicate diverged.
    pub mean_final_error: f64,
    pub median_final_error: f64,
}

impl ExperimentResult {
    pub fn divergent_count(&self) -> usize {
        self.runs.iter().filter(|r| r.diverged).count()
    }

    fn has_survivors(&self) -> bool {
        !self.final_errors.is_empty()
    }
}

/// Runs `grid.replicates` independently seeded replicates of one
/// configuration and aggregates them. Replicate `r` uses seed
/// `master_seed + r` for both its initial model and its sampling stream,
/// so results are reproducible run to run and independent of how the
/// replicates are scheduled.
pub fn run_experiment(
    v: &CountMatrix,
    template: &UpdateRule,
    point: GridPoint,
    grid: &ExperimentGrid,
    reference: &ReferenceObjective,
) -> Result<ExperimentResult, BenchError> {
    grid.validate()?;
    let rule = rule_at(template, point);
    let runs: Vec<ReplicateRun> = (0..grid.replicates)
        .into_par_iter()
        .map(|replicate| -> Result<ReplicateRun, BenchError> {
            let seed = grid.master_seed.wrapping_add(replicate as u64);
            let init = init_model(v, grid.rank, seed)?;
            let mut config = AlternateConfig::new(rule.clone(), grid.max_rounds);
            config.scheme = Scheme::OneStep;
            config.work_limit = grid.work_limit;
            config.time_limit_secs = grid.time_limit_secs;
            config.seed = seed;
            let outcome = alternate(v, init, &config)?;
            let mut trace = outcome.trace;
            let diverged = trace.diverged();
            if !diverged {
                trace.fill_rel_errors(reference.value)?;
            }
            Ok(ReplicateRun {
                replicate,
                seed,
                diverged,
                trace,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    for run in runs.iter().filter(|r| r.diverged) {
        eprintln!(
            "warning: {} replicate {} (seed {}) diverged and is excluded from aggregates",
            rule.name(),
            run.replicate,
            run.seed
        );
    }

    Ok(aggregate(rule.name(), point, runs, grid.clock))
}

/// Builds the aggregate curves from replicate runs. Runs are reordered by
/// replicate index first, so the aggregate is invariant to the order the
/// runs arrive in.
pub(crate) fn aggregate(
    solver: &str,
    point: GridPoint,
    mut runs: Vec<ReplicateRun>,
    clock: ClockKind,
) -> ExperimentResult {
    runs.sort_by_key(|r| r.replicate);
    let included: Vec<&ReplicateRun> = runs
        .iter()
        .filter(|r| !r.diverged && !r.trace.records.is_empty())
        .collect();

    let mut curve_times = Vec::new();
    let mut mean_curve = Vec::new();
    let mut median_curve = Vec::new();
    let mut final_errors = Vec::new();

    if !included.is_empty() {
        // The densest replicate donates the grid, clipped to the shortest
        // replicate's horizon so every curve is interpolation, never
        // extrapolation.
        let donor = included
            .iter()
            .map(|r| &r.trace.records)
            .max_by_key(|records| records.len())
            .unwrap();
        let horizon = included
            .iter()
            .map(|r| clock.time_of(r.trace.records.last().unwrap()))
            .fold(f64::INFINITY, f64::min);
        curve_times = donor
            .iter()
            .map(|rec| clock.time_of(rec))
            .filter(|&t| t <= horizon)
            .collect();
        if curve_times.last().copied() != Some(horizon) {
            curve_times.push(horizon);
        }

        let sampled: Vec<Vec<f64>> = included
            .iter()
            .map(|r| {
                let knots: Vec<(f64, f64)> = r
                    .trace
                    .records
                    .iter()
                    .map(|rec| (clock.time_of(rec), rec.rel_error.unwrap_or(f64::NAN)))
                    .collect();
                curve_times.iter().map(|&t| interp_log(&knots, t)).collect()
            })
            .collect();
        for idx in 0..curve_times.len() {
            let mut column: Vec<f64> = sampled.iter().map(|curve| curve[idx]).collect();
            mean_curve.push(column.iter().sum::<f64>() / column.len() as f64);
            median_curve.push(median_in_place(&mut column));
        }

        final_errors = included
            .iter()
            .map(|r| r.trace.final_rel_error().unwrap_or(f64::NAN))
            .collect();
    }

    let mean_final_error = if final_errors.is_empty() {
        f64::INFINITY
    } else {
        final_errors.iter().sum::<f64>() / final_errors.len() as f64
    };
    let median_final_error = if final_errors.is_empty() {
        f64::INFINITY
    } else {
        median_in_place(&mut final_errors.clone())
    };

    ExperimentResult {
        solver: solver.to_string(),
        point,
        runs,
        curve_times,
        mean_curve,
        median_curve,
        final_errors,
        mean_final_error,
        median_final_error,
    }
}

/// Piecewise log-linear interpolation of the error. Knot times are
/// nondecreasing; on a repeated time the later value wins. Queries are
/// clamped to the knot range.
fn interp_log(knots: &[(f64, f64)], t: f64) -> f64 {
    debug_assert!(!knots.is_empty());
    if t <= knots[0].0 {
        return knots[0].1;
    }
    if t >= knots[knots.len() - 1].0 {
        return knots[knots.len() - 1].1;
    }
    let upper = knots.partition_point(|&(time, _)| time < t);
    let (t1, g1) = knots[upper];
    let (t0, g0) = knots[upper - 1];
    if t1 == t0 || t >= t1 {
        return g1;
    }
    let w = (t - t0) / (t1 - t0);
    let ln0 = g0.max(CURVE_FLOOR).ln();
    let ln1 = g1.max(CURVE_FLOOR).ln();
    (ln0 * (1.0 - w) + ln1 * w).exp()
}

pub(crate) fn median_in_place(values: &mut [f64]) -> f64 {
    debug_assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Selection order for grid points: lower mean final error wins, then the
/// smaller step size, the shorter epoch, and the larger batch, so ties go
/// to the configuration that is cheaper or more conservative to rerun.
pub(crate) fn better_point(a: &ExperimentResult, b: &ExperimentResult) -> Ordering {
    let key_a = (
        a.mean_final_error,
        a.point.eta,
        a.point.epoch_length as f64,
        -a.point.batch_proportion,
    );
    let key_b = (
        b.mean_final_error,
        b.point.eta,
        b.point.epoch_length as f64,
        -b.point.batch_proportion,
    );
    key_a.partial_cmp(&key_b).unwrap_or(Ordering::Equal)
}

/// A dedicated worker pool when `SCIPI_THREADS` is set, otherwise none and
/// rayon's global pool serves.
pub fn worker_pool() -> Result<Option<rayon::ThreadPool>, BenchError> {
    let raw = match std::env::var("SCIPI_THREADS") {
        Ok(raw) => raw,
        Err(_) => return Ok(None),
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| BenchError::InvalidThreads(raw.clone()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| BenchError::Pool(e.to_string()))?;
    Ok(Some(pool))
}

/// Runs every grid point of the template rule and returns the results in
/// grid order together with the index of the best point. Points whose
/// replicates all diverged stay in the report but are never selected;
/// when no point survives the search fails.
pub fn grid_search(
    v: &CountMatrix,
    template: &UpdateRule,
    grid: &ExperimentGrid,
    reference: &ReferenceObjective,
) -> Result<(usize, Vec<ExperimentResult>), BenchError> {
    grid.validate()?;
    let points = grid.points(template);
    if points.is_empty() {
        return Err(BenchError::EmptyGrid);
    }

    let sweep = || -> Result<Vec<ExperimentResult>, BenchError> {
        points
            .par_iter()
            .map(|&point| run_experiment(v, template, point, grid, reference))
            .collect()
    };
    let results = match worker_pool()? {
        Some(pool) => pool.install(sweep)?,
        None => sweep()?,
    };

    let best = results
        .iter()
        .enumerate()
        .filter(|(_, r)| r.has_survivors() && r.mean_final_error.is_finite())
        .min_by(|(_, a), (_, b)| better_point(a, b))
        .map(|(idx, _)| idx)
        .ok_or(BenchError::AllDiverged)?;
    Ok((best, results))
}

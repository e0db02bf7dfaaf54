//! Pinned end-to-end checks behind `scipi repro` and the acceptance test
//! target.
//!
//! Each criterion is a self-contained scenario with its tolerances fixed
//! in code: reductions to classical power iteration, rate and gradient
//! verification, baseline formula cross-checks, the scaled-down solver
//! comparison, data-layer fixtures, and harness determinism. A criterion
//! reports one pass/fail line; failures carry the measured numbers so a
//! regression is diagnosable from the report alone.

use std::time::Instant;

use crate::baselines::{ccd_update, mu_update, pgd_step_given_alpha, pgd_update, PgdState};
use crate::bench::{
    compute_reference, emit, grid_search, ClockKind, ExperimentGrid, ExperimentResult,
};
use crate::data::{gen_poisson, preprocess_min_sum, read_bag_of_words, SyntheticSpec};
use crate::klnmf::{
    alternate, exact_scipi_update, AlternateConfig, FactorPair, SubproblemBundle, UpdateRule,
};
use crate::matrix::{CountMatrix, DenseCountMatrix};
use crate::sampling::{BatchSpec, RngStream, SamplingMode};
use crate::solver::{
    inner_step, solve, svrg_gradient, DiagonalQuadratic, ScaleInvariantProblem, Snapshot,
    SolverConfig,
};
use crate::verify::{check_gradient, fit_rate, spectral_diagnostics};

/// Outcome of one pinned check.
#[derive(Debug, Clone)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub seconds: f64,
    pub detail: String,
}

impl CriterionReport {
    /// The one-line form printed by `scipi repro` and the acceptance test.
    pub fn line(&self) -> String {
        format!(
            "criterion {:02} {}: {} ({:.2}s) {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.seconds,
            self.detail
        )
    }
}

/// Runs one criterion body and folds its runtime budget (infinite when the
/// criterion does not pin one) into the verdict.
fn report<F>(id: usize, name: &'static str, budget_secs: f64, body: F) -> CriterionReport
where
    F: FnOnce() -> Result<(bool, String), Box<dyn std::error::Error>>,
{
    let start = Instant::now();
    let (mut passed, detail) = match body() {
        Ok(outcome) => outcome,
        Err(err) => (false, format!("error: {err}")),
    };
    let seconds = start.elapsed().as_secs_f64();
    let mut detail = detail;
    if seconds >= budget_secs {
        passed = false;
        detail = format!("{detail}; over the {budget_secs}s budget");
    }
    CriterionReport {
        id,
        name,
        passed,
        seconds,
        detail,
    }
}

fn normalized(x: &[f64]) -> Vec<f64> {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter().map(|v| v / n).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Full-batch variance-reduced iteration on a diagonal quadratic matches
/// classical power iteration step for step.
pub fn criterion_01() -> CriterionReport {
    report(1, "power-iteration-reduction", 1.0, || {
        let problem = DiagonalQuadratic::new(vec![2.0, 1.0, 0.5, 0.1]);
        let x0 = vec![1.0, 0.8, 0.6, 0.4];
        let mut config = SolverConfig::new(1.0, BatchSpec::without_replacement(4), 1, 100);
        config.tolerance = 0.0;
        config.record_iterates = true;
        let outcome = solve(&problem, &x0, &config)?;
        let iterates = outcome.iterates.expect("recording was on");
        if iterates.len() != 101 {
            return Ok((
                false,
                format!("expected 101 iterates, got {}", iterates.len()),
            ));
        }

        let eigs = [2.0, 1.0, 0.5, 0.1];
        let mut classic = normalized(&x0);
        let mut worst = max_abs_diff(&iterates[0], &classic);
        for step in iterates.iter().skip(1) {
            let mapped: Vec<f64> = classic.iter().zip(eigs).map(|(&c, e)| e * c).collect();
            classic = normalized(&mapped);
            worst = worst.max(max_abs_diff(step, &classic));
        }
        Ok((
            worst <= 1e-12,
            format!("max per-step deviation {worst:.3e} (tol 1e-12)"),
        ))
    })
}

/// The fitted convergence rate on the same quadratic matches the spectral
/// prediction (second eigenvalue over first, squared).
pub fn criterion_02() -> CriterionReport {
    report(2, "rate-prediction", 1.0, || {
        let problem = DiagonalQuadratic::new(vec![2.0, 1.0, 0.5, 0.1]);
        let x0 = vec![1.0, 0.8, 0.6, 0.4];
        let mut config = SolverConfig::new(1.0, BatchSpec::without_replacement(4), 1, 18);
        config.tolerance = 0.0;
        config.record_iterates = true;
        let outcome = solve(&problem, &x0, &config)?;
        let iterates = outcome.iterates.expect("recording was on");
        let x_star = [1.0, 0.0, 0.0, 0.0];
        let fit = fit_rate(&iterates, &x_star)?;
        Ok((
            (fit.rate - 0.25).abs() <= 0.02,
            format!("fitted rate {:.4} (expected 0.25 +- 0.02)", fit.rate),
        ))
    })
}

/// The exact full-batch power step on the two-component mixture toy
/// against the closed-form maximum-likelihood solution.
pub fn criterion_03() -> CriterionReport {
    report(3, "subproblem-oracle", 1.0, || {
        let v = CountMatrix::Dense(DenseCountMatrix::from_vec(2, 1, vec![3.0, 1.0])?);
        let w = DenseCountMatrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0])?;
        let h = DenseCountMatrix::from_vec(2, 1, vec![0.5, 0.5])?;
        // eta = 0.5: the identity-mixing optimum sits on the certification
        // boundary, where the undamped power map is an exact two-cycle
        // (simplex ratio r maps to 9/r); any damping contracts
        let mut bundle = SubproblemBundle::build(&v, &w, &h)?;
        let target = [0.75, 0.25];
        let mut err = f64::INFINITY;
        for step in 0..200 {
            exact_scipi_update(&v, &mut bundle, 0.5)?;
            let x = bundle.simplex_x();
            err = (x.get(0, 0) - target[0])
                .abs()
                .max((x.get(1, 0) - target[1]).abs());
            if err <= 1e-8 {
                return Ok((
                    true,
                    format!(
                        "reached the closed-form MLE within {err:.3e} in {} steps",
                        step + 1
                    ),
                ));
            }
        }
        Ok((
            false,
            format!("distance to the MLE still {err:.3e} after 200 damped steps"),
        ))
    })
}

/// The variance-reduced estimator is unbiased: averaging over every batch
/// equals the full gradient.
pub fn criterion_04() -> CriterionReport {
    report(4, "svrg-unbiasedness", f64::INFINITY, || {
        let problem = DiagonalQuadratic::new(vec![1.5, 0.9, 0.4, 0.2]);
        let batches: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];
        let mut stream = RngStream::from_seed(404);
        let mut worst = 0.0_f64;
        for _ in 0..5 {
            let x: Vec<f64> = (0..4).map(|_| 0.5 + stream.next_f64()).collect();
            let x0: Vec<f64> = (0..4).map(|_| 0.5 + stream.next_f64()).collect();
            let snapshot = Snapshot::take(&problem, x0)?;
            let mut mean = vec![0.0; 4];
            for batch in &batches {
                let g = svrg_gradient(&problem, &x, &snapshot, batch)?;
                for (m, gi) in mean.iter_mut().zip(g) {
                    *m += gi / batches.len() as f64;
                }
            }
            let mut full = vec![0.0; 4];
            problem.grad_full(&x, &mut full);
            worst = worst.max(max_abs_diff(&mean, &full));
        }
        Ok((
            worst <= 1e-12,
            format!("max batch-average deviation {worst:.3e} (tol 1e-12)"),
        ))
    })
}

/// f_l(x) = (a_l . x)^2 / (c_l . x): a degree-1 homogeneous finite sum,
/// exercising the solver between the quadratic and log-likelihood cases.
struct RatioProblem {
    a: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
}

impl ScaleInvariantProblem for RatioProblem {
    fn dimension(&self) -> usize {
        self.a[0].len()
    }

    fn num_samples(&self) -> usize {
        self.a.len()
    }

    fn degree(&self) -> f64 {
        1.0
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for (a, c) in self.a.iter().zip(&self.c) {
            let s: f64 = a.iter().zip(x).map(|(ai, xi)| ai * xi).sum();
            let t: f64 = c.iter().zip(x).map(|(ci, xi)| ci * xi).sum();
            total += s * s / t;
        }
        total / self.a.len() as f64
    }

    fn grad_sample(&self, sample: usize, x: &[f64], out: &mut [f64]) {
        let a = &self.a[sample];
        let c = &self.c[sample];
        let s: f64 = a.iter().zip(x).map(|(ai, xi)| ai * xi).sum();
        let t: f64 = c.iter().zip(x).map(|(ci, xi)| ci * xi).sum();
        let ratio = s / t;
        for ((o, &ai), &ci) in out.iter_mut().zip(a).zip(c) {
            *o = 2.0 * ratio * ai - ratio * ratio * ci;
        }
    }
}

/// Worst relative commutation defect of inner_step(svrg_gradient(.)) under
/// positive rescaling, over 100 random trials.
fn equivariance_defect<P: ScaleInvariantProblem>(
    problem: &P,
    stream: &mut RngStream,
) -> Result<f64, Box<dyn std::error::Error>> {
    let p = problem.degree();
    let d = problem.dimension();
    let n = problem.num_samples();
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let x: Vec<f64> = (0..d).map(|_| 0.3 + stream.next_f64()).collect();
        let x0: Vec<f64> = (0..d).map(|_| 0.3 + stream.next_f64()).collect();
        let snapshot = Snapshot::take(problem, x0)?;
        let batch = [stream.uniform_below(n), stream.uniform_below(n)];
        let eta = 0.25 + 0.75 * stream.next_f64();
        let c = (stream.next_f64() * 100f64.ln() + 0.1f64.ln()).exp();

        let g = svrg_gradient(problem, &x, &snapshot, &batch)?;
        let stepped = inner_step(&x, &g, eta, p)?;
        let scaled: Vec<f64> = x.iter().map(|xi| c * xi).collect();
        let g_scaled = svrg_gradient(problem, &scaled, &snapshot, &batch)?;
        let stepped_scaled = inner_step(&scaled, &g_scaled, eta, p)?;

        let expected: Vec<f64> = stepped.iter().map(|yi| c * yi).collect();
        let denom = expected.iter().map(|v| v.abs()).fold(1.0_f64, f64::max);
        worst = worst.max(max_abs_diff(&stepped_scaled, &expected) / denom);
    }
    Ok(worst)
}

/// One variance-reduced inner step commutes with positive rescaling of the
/// iterate for degrees 0, 1, and 2.
pub fn criterion_05() -> CriterionReport {
    report(5, "scale-equivariance", f64::INFINITY, || {
        let mut stream = RngStream::from_seed(505);

        let quadratic = DiagonalQuadratic::new(vec![2.0, 1.0, 0.5, 0.1]);
        let ratio = {
            let mut vecs = |n: usize, d: usize| -> Vec<Vec<f64>> {
                (0..n)
                    .map(|_| (0..d).map(|_| 0.2 + stream.next_f64()).collect())
                    .collect()
            };
            RatioProblem {
                a: vecs(5, 4),
                c: vecs(5, 4),
            }
        };
        let (v, bundle) = {
            let mut positive = |rows: usize, cols: usize| -> Vec<f64> {
                (0..rows * cols).map(|_| 0.3 + stream.next_f64()).collect()
            };
            let v = CountMatrix::Dense(DenseCountMatrix::from_vec(4, 1, vec![2.0, 1.0, 3.0, 1.0])?);
            let w = DenseCountMatrix::from_vec(4, 3, positive(4, 3))?;
            let h = DenseCountMatrix::from_vec(3, 1, positive(3, 1))?;
            let bundle = SubproblemBundle::build(&v, &w, &h)?;
            (v, bundle)
        };
        let subproblem = bundle.column_problem(&v, 0, SamplingMode::Row)?;

        let worst = equivariance_defect(&subproblem, &mut stream)?
            .max(equivariance_defect(&ratio, &mut stream)?)
            .max(equivariance_defect(&quadratic, &mut stream)?);
        Ok((
            worst <= 1e-10,
            format!("max relative commutation defect {worst:.3e} (tol 1e-10)"),
        ))
    })
}

/// Multiplicative updates never increase the objective, and products W H
/// are fixed points of their own update.
pub fn criterion_06() -> CriterionReport {
    report(6, "mu-monotonicity-and-fixed-point", f64::INFINITY, || {
        let mut stream = RngStream::from_seed(606);
        let mut worst_rise = 0.0_f64;
        for _ in 0..20 {
            let mut entries = |count: usize, floor: f64, span: f64| -> Vec<f64> {
                (0..count)
                    .map(|_| floor + span * stream.next_f64())
                    .collect()
            };
            let v = CountMatrix::Dense(DenseCountMatrix::from_vec(
                8,
                6,
                entries(48, 0.0, 6.0).iter().map(|u| u.floor()).collect(),
            )?);
            let w = DenseCountMatrix::from_vec(8, 3, entries(24, 0.2, 1.0))?;
            let h = DenseCountMatrix::from_vec(3, 6, entries(18, 0.2, 1.0))?;
            let config = AlternateConfig::new(UpdateRule::Mu, 200);
            let outcome = alternate(&v, FactorPair::new(w, h)?, &config)?;
            for pair in outcome.trace.records.windows(2) {
                let slack = 1e-10 * pair[0].objective.abs().max(1.0);
                worst_rise = worst_rise.max(pair[1].objective - pair[0].objective - slack);
            }
        }

        let mut worst_drift = 0.0_f64;
        for _ in 0..5 {
            let mut entries = |count: usize| -> Vec<f64> {
                (0..count).map(|_| 0.2 + stream.next_f64()).collect()
            };
            let w = DenseCountMatrix::from_vec(8, 3, entries(24))?;
            let h = DenseCountMatrix::from_vec(3, 6, entries(18))?;
            let v = CountMatrix::Dense(DenseCountMatrix::product(&w, &h)?);
            let config = AlternateConfig::new(UpdateRule::Mu, 1);
            let outcome = alternate(&v, FactorPair::new(w.clone(), h.clone())?, &config)?;
            for (new, old) in outcome
                .pair
                .w
                .values()
                .iter()
                .chain(outcome.pair.h.values().iter())
                .zip(w.values().iter().chain(h.values().iter()))
            {
                worst_drift = worst_drift.max((new - old).abs() / old.abs());
            }
        }
        let passed = worst_rise <= 0.0 && worst_drift <= 1e-12;
        Ok((
            passed,
            format!(
                "worst objective rise past slack {worst_rise:.3e}; worst fixed-point drift \
                 {worst_drift:.3e} (tol 1e-12)"
            ),
        ))
    })
}

/// Hand-derived single-update values for each baseline, and the fixed-step
/// projected-gradient specialization that reproduces the multiplicative
/// update.
pub fn criterion_07() -> CriterionReport {
    report(7, "baseline-formulas", f64::INFINITY, || {
        let v = CountMatrix::Dense(DenseCountMatrix::from_vec(2, 1, vec![2.0, 2.0])?);
        let w = DenseCountMatrix::from_vec(2, 1, vec![1.0, 1.0])?;
        let h = DenseCountMatrix::from_vec(1, 1, vec![1.0])?;

        let mu = mu_update(&v, &w, &h)?.get(0, 0);
        let mut h_ccd = h.clone();
        let stream = RngStream::from_seed(7);
        ccd_update(&v, &w, &mut h_ccd, 1, false, &stream)?;
        let ccd = h_ccd.get(0, 0);
        let mut h_pgd = h.clone();
        let mut state = PgdState::new(1);
        pgd_update(&v, &w, &mut h_pgd, &mut state)?;
        let pgd = h_pgd.get(0, 0);
        if mu != 2.0 || ccd != 1.5 || pgd != 3.0 {
            return Ok((
                false,
                format!("hand fixture gave mu={mu}, ccd={ccd}, pgd={pgd} (want 2, 1.5, 3)"),
            ));
        }

        let mut stream = RngStream::from_seed(707);
        let mut worst = 0.0_f64;
        for _ in 0..20 {
            let mut entries = |count: usize, floor: f64| -> Vec<f64> {
                (0..count).map(|_| floor + stream.next_f64()).collect()
            };
            let v = CountMatrix::Dense(DenseCountMatrix::from_vec(
                5,
                4,
                entries(20, 0.0).iter().map(|u| (u * 7.0).floor()).collect(),
            )?);
            let w = DenseCountMatrix::from_vec(5, 3, entries(15, 0.2))?;
            let h = DenseCountMatrix::from_vec(3, 4, entries(12, 0.2))?;
            let wsum = w.col_sums();
            let mut alpha = DenseCountMatrix::zeros(3, 4);
            for kk in 0..3 {
                for j in 0..4 {
                    alpha.set(kk, j, h.get(kk, j) / wsum[kk]);
                }
            }
            let fixed_step = pgd_step_given_alpha(&v, &w, &h, &alpha)?;
            let mu = mu_update(&v, &w, &h)?;
            for (a, b) in fixed_step.values().iter().zip(mu.values()) {
                worst = worst.max((a - b).abs() / b.abs().max(1.0));
            }
        }
        Ok((
            worst <= 1e-12,
            format!(
                "hand values exact; max multiplicative/projected-gradient gap {worst:.3e} \
                 (tol 1e-12)"
            ),
        ))
    })
}

fn work_to_error(result: &ExperimentResult, replicate: usize, target: f64) -> Option<f64> {
    result
        .runs
        .iter()
        .find(|run| run.replicate == replicate && !run.diverged)
        .and_then(|run| run.trace.work_to_reach(target))
}

/// Scaled-down dense-data comparison: grid-searched stochastic updates
/// reach 1% relative error with no more sampled-gradient work than the
/// full-batch power method, and both use less than multiplicative updates.
pub fn criterion_08() -> CriterionReport {
    report(8, "work-efficiency-comparison", 300.0, || {
        let spec = SyntheticSpec::new(300, 300, 0.9, 8080)?;
        let v = CountMatrix::Dense(gen_poisson(&spec)?.to_dense());
        let rank = 5;
        let reference = compute_reference(&v, rank, 6.0, None)?;

        // each family gets a work cap generous enough that its own
        // crossing of the target is never censored; the comparison metric
        // is work to the target, so unequal caps do not bias it
        let budget = |work: f64, rounds: usize| ExperimentGrid {
            batch_proportions: vec![1e-4, 1e-3, 1e-2, 0.1, 1.0],
            epoch_lengths: vec![10, 100],
            step_sizes: vec![0.01, 0.1, 1.0],
            replicates: 5,
            rank,
            max_rounds: rounds,
            work_limit: Some(work),
            time_limit_secs: None,
            master_seed: 8,
            clock: ClockKind::Work,
        };
        let grid = budget(2e5, 450);
        let stochastic = UpdateRule::SSciPi {
            eta: 0.1,
            batch_proportion: 0.1,
            epoch_length: 10,
            replacement: false,
            mode: None,
        };
        let (best_s, s_results) = grid_search(&v, &stochastic, &grid, &reference)?;
        let (best_f, f_results) = grid_search(
            &v,
            &UpdateRule::FSciPi { eta: 1.0 },
            &budget(6e5, 1100),
            &reference,
        )?;
        let (best_m, m_results) =
            grid_search(&v, &UpdateRule::Mu, &budget(1.3e6, 2400), &reference)?;
        let s = &s_results[best_s];
        let f = &f_results[best_f];
        let m = &m_results[best_m];

        let target = 0.01;
        let mut satisfied = 0;
        let mut lines = Vec::new();
        for replicate in 0..grid.replicates {
            let ws = work_to_error(s, replicate, target);
            let wf = work_to_error(f, replicate, target);
            let wm = work_to_error(m, replicate, target);
            let ok = match (ws, wf, wm) {
                (Some(ws), Some(wf), Some(wm)) => ws <= wf && ws < wm && wf < wm,
                _ => false,
            };
            if ok {
                satisfied += 1;
            }
            lines.push(format!(
                "r{replicate}: s={ws:?} f={wf:?} mu={wm:?}{}",
                if ok { "" } else { " (unmet)" }
            ));
        }
        let passed = satisfied * 2 > grid.replicates;
        Ok((
            passed,
            format!(
                "{satisfied}/{} replicates satisfy work(s) <= work(f) < work(mu) at error \
                 {target}; best stochastic point eta={} s/n={} m={}; {}",
                grid.replicates,
                s.point.eta,
                s.point.batch_proportion,
                s.point.epoch_length,
                lines.join("; ")
            ),
        ))
    })
}

/// Expectation-maximization on one simplex column: x <- x * m / sum(v),
/// monotone on the likelihood, used to pin exact subproblem solutions.
fn em_solve_column(l: &DenseCountMatrix, v: &[f64], iters: usize) -> Vec<f64> {
    let k = l.cols();
    let total: f64 = v.iter().sum();
    let mut x = vec![1.0 / k as f64; k];
    for _ in 0..iters {
        let mut next = vec![0.0; k];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let z: f64 = (0..k).map(|kk| l.get(i, kk) * x[kk]).sum();
            for (kk, n) in next.iter_mut().enumerate() {
                *n += l.get(i, kk) * x[kk] * vi / z;
            }
        }
        for (xi, n) in x.iter_mut().zip(next) {
            *xi = n / total;
        }
    }
    x
}

/// Spectral diagnostics at exact solutions: tiny residual and a strict
/// spectral gap on nondegenerate toys.
pub fn criterion_09() -> CriterionReport {
    report(9, "eigen-structure-at-solutions", f64::INFINITY, || {
        let mut details = Vec::new();
        let mut passed = true;

        let quadratic = DiagonalQuadratic::new(vec![2.0, 1.0, 0.5, 0.1]);
        let diag = spectral_diagnostics(&quadratic, &[1.0, 0.0, 0.0, 0.0])?;
        passed &= diag.residual < 1e-4 && diag.multiplier > diag.tangent_bound;
        details.push(format!(
            "quadratic: residual {:.2e}, multiplier {:.3} vs bound {:.3}",
            diag.residual, diag.multiplier, diag.tangent_bound
        ));

        // Overlapping mixing columns keep the tangent spectrum strictly
        // inside the multiplier; identity mixing would sit on the boundary.
        let mut stream = RngStream::from_seed(909);
        for (rows, k) in [(5, 3), (6, 4), (7, 3)] {
            let l_raw: Vec<f64> = (0..rows * k).map(|_| 0.2 + stream.next_f64()).collect();
            let w = DenseCountMatrix::from_vec(rows, k, l_raw)?;
            let counts: Vec<f64> = (0..rows)
                .map(|_| 1.0 + (stream.next_f64() * 7.0).floor())
                .collect();
            let v = CountMatrix::Dense(DenseCountMatrix::from_vec(rows, 1, counts.clone())?);
            let h = DenseCountMatrix::from_vec(k, 1, vec![1.0 / k as f64; k])?;
            let bundle = SubproblemBundle::build(&v, &w, &h)?;
            let problem = bundle.column_problem(&v, 0, SamplingMode::Row)?;
            let x = em_solve_column(&bundle.l, &counts, 4000);
            let y: Vec<f64> = x.iter().map(|xi| xi.sqrt()).collect();
            let diag = spectral_diagnostics(&problem, &y)?;
            passed &= diag.residual < 1e-4 && diag.multiplier > diag.tangent_bound;
            details.push(format!(
                "{rows}x{k} column: residual {:.2e}, multiplier {:.3} vs bound {:.3}",
                diag.residual, diag.multiplier, diag.tangent_bound
            ));
        }
        Ok((passed, details.join("; ")))
    })
}

/// Generator sparsity, the preprocessing fixture, and the bag-of-words
/// fixture.
pub fn criterion_10() -> CriterionReport {
    report(10, "data-layer", f64::INFINITY, || {
        let spec = SyntheticSpec::new(1000, 1000, 0.10, 2024)?;
        let sample = gen_poisson(&spec)?;
        let fraction = sample.nnz() as f64 / 1e6;
        let generator_ok = (fraction - 0.10).abs() <= 0.003;

        let v = CountMatrix::Dense(DenseCountMatrix::from_vec(2, 2, vec![25.0, 0.0, 1.0, 0.0])?);
        let (kept, rows, cols) = preprocess_min_sum(&v, 20.0)?;
        let preprocess_ok = rows == vec![0]
            && cols == vec![0]
            && kept.rows() == 1
            && kept.cols() == 1
            && kept.to_dense().get(0, 0) == 25.0;

        let text = "2\n3\n2\n1 2 5\n2 3 1\n";
        let (loaded, warnings) = read_bag_of_words(text.as_bytes())?;
        let dense = loaded.to_dense();
        let mut triplets = Vec::new();
        for i in 0..dense.rows() {
            for j in 0..dense.cols() {
                if dense.get(i, j) != 0.0 {
                    triplets.push((i, j, dense.get(i, j)));
                }
            }
        }
        let loader_ok = loaded.rows() == 2
            && loaded.cols() == 3
            && warnings.is_empty()
            && triplets == vec![(0, 1, 5.0), (1, 2, 1.0)];

        Ok((
            generator_ok && preprocess_ok && loader_ok,
            format!(
                "nonzero fraction {fraction:.4} (want 0.100 +- 0.003); preprocess fixture \
                 {}; bag-of-words fixture {}",
                if preprocess_ok { "ok" } else { "wrong" },
                if loader_ok { "ok" } else { "wrong" }
            ),
        ))
    })
}

/// Finite-difference agreement of the per-sample gradients in both
/// sampling modes.
pub fn criterion_11() -> CriterionReport {
    report(11, "gradient-correctness", f64::INFINITY, || {
        let mut stream = RngStream::from_seed(1111);
        let mut worst = 0.0_f64;
        for _ in 0..5 {
            let (rows, k) = (6, 4);
            let l_raw: Vec<f64> = (0..rows * k).map(|_| 0.2 + stream.next_f64()).collect();
            let w = DenseCountMatrix::from_vec(rows, k, l_raw)?;
            let counts: Vec<f64> = (0..rows)
                .map(|_| (stream.next_f64() * 6.0).floor())
                .collect();
            let dense = DenseCountMatrix::from_vec(rows, 1, counts)?;
            let v = CountMatrix::Sparse(CountMatrix::Dense(dense).to_sparse());
            let h = DenseCountMatrix::from_vec(k, 1, vec![1.0 / k as f64; k])?;
            let bundle = SubproblemBundle::build(&v, &w, &h)?;
            for mode in [SamplingMode::Row, SamplingMode::Element] {
                let problem = bundle.column_problem(&v, 0, mode)?;
                for _ in 0..5 {
                    let y: Vec<f64> = (0..k).map(|_| 0.3 + stream.next_f64()).collect();
                    let y = normalized(&y);
                    worst = worst.max(check_gradient(&problem, &y, 1e-5));
                }
            }
        }
        Ok((
            worst <= 1e-6,
            format!("max finite-difference mismatch {worst:.3e} (tol 1e-6)"),
        ))
    })
}

/// The whole harness path (search, replicates, emission) is byte-for-byte
/// reproducible under a fixed master seed.
pub fn criterion_12() -> CriterionReport {
    report(12, "harness-determinism", f64::INFINITY, || {
        let spec = SyntheticSpec::new(40, 30, 0.5, 12)?;
        let v = CountMatrix::Sparse(gen_poisson(&spec)?);
        let reference = compute_reference(&v, 3, 2.0, None)?;
        let grid = ExperimentGrid {
            batch_proportions: vec![0.5, 1.0],
            epoch_lengths: vec![5],
            step_sizes: vec![0.5],
            replicates: 2,
            rank: 3,
            max_rounds: 12,
            work_limit: None,
            time_limit_secs: None,
            master_seed: 99,
            clock: ClockKind::Work,
        };
        let template = UpdateRule::SSciPi {
            eta: 0.1,
            batch_proportion: 0.1,
            epoch_length: 1,
            replacement: false,
            mode: None,
        };

        let dir = std::env::temp_dir().join(format!("scipi-repro-{}", std::process::id()));
        std::fs::create_dir_all(&dir)?;
        let mut emitted = Vec::new();
        for stem in ["first", "second"] {
            let (_, results) = grid_search(&v, &template, &grid, &reference)?;
            emitted.push(emit(&dir, stem, &results, grid.clock)?);
        }
        let csv_a = std::fs::read(&emitted[0].csv)?;
        let csv_b = std::fs::read(&emitted[1].csv)?;
        let json_equal = std::fs::read(&emitted[0].json)? == std::fs::read(&emitted[1].json)?;
        let svg_equal = std::fs::read(&emitted[0].svg)? == std::fs::read(&emitted[1].svg)?;
        let _ = std::fs::remove_dir_all(&dir);
        Ok((
            csv_a == csv_b && json_equal && svg_equal,
            format!(
                "csv identical: {}; json identical: {json_equal}; svg identical: {svg_equal}",
                csv_a == csv_b
            ),
        ))
    })
}

/// Runs every pinned check in order.
pub fn run_all() -> Vec<CriterionReport> {
    vec![
        criterion_01(),
        criterion_02(),
        criterion_03(),
        criterion_04(),
        criterion_05(),
        criterion_06(),
        criterion_07(),
        criterion_08(),
        criterion_09(),
        criterion_10(),
        criterion_11(),
        criterion_12(),
    ]
}

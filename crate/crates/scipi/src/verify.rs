//! Numerical verification tools: finite-difference oracles for gradients and
//! Hessians, spectral diagnostics at solutions, and empirical convergence-rate
//! fitting.
//!
//! At a unit-norm stationary point the gradient is a multiple of the point,
//! grad f(x*) = lambda* x*, and x* is an eigenvector of the Hessian there.
//! The diagnostics recover lambda* from the Lagrange relation, eigendecompose
//! a finite-difference Hessian, and compare lambda* against the largest
//! tangent eigenvalue magnitude: lambda* above that bound certifies a strict
//! local maximum, and (bound / lambda*)^2 predicts the asymptotic rate at
//! which the optimality gap 1 - (x_t . x*)^2 contracts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::ScaleInvariantProblem;

/// Central-difference step, scaled by max(1, |x|).
pub const FD_STEP: f64 = 1e-5;

/// Eigenvector residuals above this flag the point as not stationary.
pub const STATIONARY_RESIDUAL: f64 = 1e-3;

/// Dense Jacobi eigensolves stay cheap only for small dimensions.
pub const EIGEN_DIM_LIMIT: usize = 50;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("history holds {got} iterates, rate fitting needs at least {needed}")]
    ShortHistory { needed: usize, got: usize },
    #[error("every gap sits at the convergence floor, nothing to fit")]
    DegenerateGaps,
    #[error("dimension {0} exceeds the dense eigensolver limit {EIGEN_DIM_LIMIT}")]
    DimensionTooLarge(usize),
}

/// Spectral picture of the objective at a candidate solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralDiagnostics {
    /// lambda* = grad f(x*) . x*.
    pub multiplier: f64,
    /// Eigenvalues of the finite-difference Hessian, descending.
    pub eigenvalues: Vec<f64>,
    /// |H x* - lambda_1 x*| with lambda_1 the eigenvalue whose eigenvector
    /// aligns best with x*.
    pub residual: f64,
    /// Largest |eigenvalue| of the Hessian restricted to the tangent space.
    pub tangent_bound: f64,
    /// Spectral norm of the full Hessian.
    pub hessian_norm: f64,
    /// (tangent_bound / multiplier)^2, the asymptotic gap contraction.
    pub predicted_rate: f64,
    /// multiplier strictly dominates the tangent spectrum.
    pub certifies_local_max: bool,
    /// residual stayed under the stationarity threshold.
    pub stationary: bool,
}

/// Optimality-gap decay fitted from an iterate history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateFit {
    /// 1 - (x_t . x*)^2 over the pre-convergence window.
    pub gaps: Vec<f64>,
    /// Consecutive gap ratios.
    pub ratios: Vec<f64>,
    /// Geometric mean of the last third of the ratios.
    pub rate: f64,
}

/// Worst componentwise relative error between grad_full and central finite
/// differences of value(), probed at step h * max(1, |x|).
pub fn check_gradient<P: ScaleInvariantProblem>(problem: &P, x: &[f64], h: f64) -> f64 {
    let d = problem.dimension();
    let delta = h * norm(x).max(1.0);
    let mut grad = vec![0.0; d];
    problem.grad_full(x, &mut grad);
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..d {
        let xi = probe[i];
        probe[i] = xi + delta;
        let plus = problem.value(&probe);
        probe[i] = xi - delta;
        let minus = problem.value(&probe);
        probe[i] = xi;
        let fd = (plus - minus) / (2.0 * delta);
        worst = worst.max((fd - grad[i]).abs() / grad[i].abs().max(1.0));
    }
    worst
}

/// Central differences of grad_full, symmetrized. Row-major d x d.
pub fn hessian_fd<P: ScaleInvariantProblem>(problem: &P, x: &[f64], h: f64) -> Vec<f64> {
    let d = problem.dimension();
    let delta = h * norm(x).max(1.0);
    let mut hess = vec![0.0; d * d];
    let mut plus = vec![0.0; d];
    let mut minus = vec![0.0; d];
    let mut probe = x.to_vec();
    for i in 0..d {
        let xi = probe[i];
        probe[i] = xi + delta;
        problem.grad_full(&probe, &mut plus);
        probe[i] = xi - delta;
        problem.grad_full(&probe, &mut minus);
        probe[i] = xi;
        for j in 0..d {
            hess[j * d + i] = (plus[j] - minus[j]) / (2.0 * delta);
        }
    }
    for p in 0..d {
        for q in (p + 1)..d {
            let s = 0.5 * (hess[p * d + q] + hess[q * d + p]);
            hess[p * d + q] = s;
            hess[q * d + p] = s;
        }
    }
    hess
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major, d x d).
/// Returns (eigenvalue, eigenvector) pairs sorted by descending eigenvalue.
pub fn symmetric_eigen(a: &[f64], d: usize) -> Vec<(f64, Vec<f64>)> {
    assert_eq!(a.len(), d * d, "matrix must be d x d");
    let mut m = a.to_vec();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let frob = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    if frob > 0.0 {
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..d {
                for q in (p + 1)..d {
                    off += m[p * d + q] * m[p * d + q];
                }
            }
            if off.sqrt() <= 1e-14 * frob {
                break;
            }
            for p in 0..d {
                for q in (p + 1)..d {
                    let apq = m[p * d + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (m[q * d + q] - m[p * d + p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for i in 0..d {
                        let mip = m[i * d + p];
                        let miq = m[i * d + q];
                        m[i * d + p] = c * mip - s * miq;
                        m[i * d + q] = s * mip + c * miq;
                    }
                    for j in 0..d {
                        let mpj = m[p * d + j];
                        let mqj = m[q * d + j];
                        m[p * d + j] = c * mpj - s * mqj;
                        m[q * d + j] = s * mpj + c * mqj;
                    }
                    for i in 0..d {
                        let vip = v[i * d + p];
                        let viq = v[i * d + q];
                        v[i * d + p] = c * vip - s * viq;
                        v[i * d + q] = s * vip + c * viq;
                    }
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..d)
        .map(|j| (m[j * d + j], (0..d).map(|i| v[i * d + j]).collect()))
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    pairs
}

/// Build the spectral picture at a candidate solution: the multiplier from
/// the Lagrange relation, the finite-difference Hessian spectrum, the
/// eigenvector residual at x*, and the tangent bound from the projected
/// Hessian (I - x x^T) H (I - x x^T) with the x*-aligned direction removed.
pub fn spectral_diagnostics<P: ScaleInvariantProblem>(
    problem: &P,
    x_star: &[f64],
) -> Result<SpectralDiagnostics, VerifyError> {
    let d = problem.dimension();
    if d > EIGEN_DIM_LIMIT {
        return Err(VerifyError::DimensionTooLarge(d));
    }
    let unit = normalized(x_star);
    let mut grad = vec![0.0; d];
    problem.grad_full(&unit, &mut grad);
    let multiplier = dot(&grad, &unit);

    let hess = hessian_fd(problem, &unit, FD_STEP);
    let pairs = symmetric_eigen(&hess, d);
    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let hessian_norm = eigenvalues.iter().fold(0.0f64, |acc, &e| acc.max(e.abs()));

    let lambda_aligned = pairs
        .iter()
        .max_by(|a, b| {
            let da = dot(&a.1, &unit).abs();
            let db = dot(&b.1, &unit).abs();
            da.partial_cmp(&db).unwrap()
        })
        .map(|p| p.0)
        .unwrap_or(0.0);
    let hx = matvec(&hess, d, &unit);
    let residual = hx
        .iter()
        .zip(&unit)
        .map(|(&a, &u)| {
            let r = a - lambda_aligned * u;
            r * r
        })
        .sum::<f64>()
        .sqrt();

    // tangent restriction: subtract the x* row, column, and diagonal parts
    let q = dot(&hx, &unit);
    let mut projected = hess.clone();
    for i in 0..d {
        for j in 0..d {
            projected[i * d + j] += q * unit[i] * unit[j] - hx[i] * unit[j] - unit[i] * hx[j];
        }
    }
    let tangent_pairs = symmetric_eigen(&projected, d);
    let artifact = tangent_pairs
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| {
            let da = dot(&a.1, &unit).abs();
            let db = dot(&b.1, &unit).abs();
            da.partial_cmp(&db).unwrap()
        })
        .map(|(i, _)| i)
        .unwrap_or(0);
    let tangent_bound = tangent_pairs
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != artifact)
        .fold(0.0f64, |acc, (_, p)| acc.max(p.0.abs()));

    let predicted_rate = (tangent_bound / multiplier).powi(2);
    Ok(SpectralDiagnostics {
        multiplier,
        eigenvalues,
        residual,
        tangent_bound,
        hessian_norm,
        predicted_rate,
        certifies_local_max: multiplier > tangent_bound,
        stationary: residual <= STATIONARY_RESIDUAL,
    })
}

/// Fit the asymptotic gap contraction from an iterate history and a known
/// (or well-approximated) solution. Gaps that already sit on the roundoff
/// floor are excluded: once the floor is below 1e-12, everything within 10x
/// of it is treated as converged noise.
pub fn fit_rate(iterates: &[Vec<f64>], x_star: &[f64]) -> Result<RateFit, VerifyError> {
    if iterates.len() < 10 {
        return Err(VerifyError::ShortHistory {
            needed: 10,
            got: iterates.len(),
        });
    }
    let star = normalized(x_star);
    let mut gaps: Vec<f64> = iterates
        .iter()
        .map(|y| {
            let u = normalized(y);
            let a = dot(&u, &star);
            1.0 - a * a
        })
        .filter(|&g| g > 0.0)
        .collect();
    if let Some(floor) = gaps.iter().copied().reduce(f64::min) {
        if floor < 1e-12 {
            gaps.retain(|&g| g > 10.0 * floor);
        }
    }
    if gaps.len() < 2 {
        return Err(VerifyError::DegenerateGaps);
    }
    let ratios: Vec<f64> = gaps.windows(2).map(|w| w[1] / w[0]).collect();
    let tail = ratios.len() - (ratios.len() / 3).max(1);
    let window = &ratios[tail..];
    let rate = (window.iter().map(|r| r.ln()).sum::<f64>() / window.len() as f64).exp();
    Ok(RateFit { gaps, ratios, rate })
}

fn matvec(a: &[f64], d: usize, x: &[f64]) -> Vec<f64> {
    (0..d)
        .map(|i| (0..d).map(|j| a[i * d + j] * x[j]).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn normalized(x: &[f64]) -> Vec<f64> {
    let n = norm(x);
    if n == 0.0 {
        return x.to_vec();
    }
    x.iter().map(|v| v / n).collect()
}

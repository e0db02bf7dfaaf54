//! Solve one column's simplex subproblem to convergence, then check the
//! solution with the spectral tools: the Lagrange multiplier against the
//! tangent Hessian bound, and the predicted contraction against the rate
//! actually measured from the iterates.

use scipi::bench::init_model;
use scipi::data::{gen_poisson, SyntheticSpec};
use scipi::klnmf::SubproblemBundle;
use scipi::matrix::CountMatrix;
use scipi::sampling::{BatchSpec, SamplingMode};
use scipi::solver::{solve, ScaleInvariantProblem, SolverConfig};
use scipi::verify::{check_gradient, fit_rate, spectral_diagnostics};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec::new(30, 10, 0.2, 17)?;
    let v = CountMatrix::Dense(gen_poisson(&spec)?.to_dense());
    let rank = 3;
    let init = init_model(&v, rank, 5)?;
    let bundle = SubproblemBundle::build(&v, &init.w, &init.h)?;
    let problem = bundle.column_problem(&v, 0, SamplingMode::Row)?;

    println!(
        "finite-difference gradient defect: {:.3e}",
        check_gradient(&problem, &[0.6, 0.5, 0.4], 1e-5)
    );

    let x = bundle.simplex_x();
    let y0: Vec<f64> = (0..rank).map(|k| x.get(k, 0).sqrt()).collect();
    let n = problem.num_samples();
    let mut config = SolverConfig::new(1.0, BatchSpec::without_replacement(n), 1, 300);
    config.record_iterates = true;
    let out = solve(&problem, &y0, &config)?;
    println!(
        "column 0 solved: objective {:.6e} after {} epochs",
        out.value, out.epochs
    );

    let diag = spectral_diagnostics(&problem, &out.x)?;
    let measured = fit_rate(out.iterates.as_ref().unwrap(), &out.x)?;
    println!(
        "multiplier {:.4}, tangent bound {:.4}, stationarity residual {:.2e}",
        diag.multiplier, diag.tangent_bound, diag.residual
    );
    println!(
        "certifies local max: {}; predicted contraction {:.4}, measured {:.4}",
        diag.certifies_local_max, diag.predicted_rate, measured.rate
    );
    Ok(())
}

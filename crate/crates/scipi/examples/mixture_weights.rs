//! Maximum-likelihood mixture weights for two known components via the
//! simplex subproblem. The undamped power step oscillates in a period-two
//! cycle on this instance because the optimum sits exactly on the
//! certification boundary; damping the step makes it converge to the
//! closed-form answer (3/4, 1/4).

use scipi::klnmf::{exact_scipi_update, SubproblemBundle};
use scipi::matrix::{CountMatrix, DenseCountMatrix};
use scipi::verify::spectral_diagnostics;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // observations v = (3, 1) under identity components: f(x) = 3 log x1 + log x2
    let v = CountMatrix::Dense(DenseCountMatrix::from_vec(2, 1, vec![3.0, 1.0])?);
    let w = DenseCountMatrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0])?;
    let h = DenseCountMatrix::from_vec(2, 1, vec![0.5, 0.5])?;

    let mut undamped = SubproblemBundle::build(&v, &w, &h)?;
    print!("eta = 1.0:");
    for _ in 0..6 {
        exact_scipi_update(&v, &mut undamped, 1.0)?;
        let x = undamped.simplex_x();
        print!(" ({:.4}, {:.4})", x.get(0, 0), x.get(1, 0));
    }
    println!("  <- period-two cycle");

    let mut damped = SubproblemBundle::build(&v, &w, &h)?;
    for _ in 0..80 {
        exact_scipi_update(&v, &mut damped, 0.5)?;
    }
    let x = damped.simplex_x();
    println!(
        "eta = 0.5: ({:.6}, {:.6})  <- the closed-form weights (0.75, 0.25)",
        x.get(0, 0),
        x.get(1, 0)
    );

    // the multiplier ties the largest tangent eigenvalue, so no local
    // contraction certificate exists and the undamped cycle is neutral
    let problem = damped.column_problem(&v, 0, scipi::sampling::SamplingMode::Row)?;
    let y: Vec<f64> = (0..2).map(|k| x.get(k, 0).sqrt()).collect();
    let diag = spectral_diagnostics(&problem, &y)?;
    println!(
        "multiplier {:.3}, tangent bound {:.3}, certifies local max: {}",
        diag.multiplier, diag.tangent_bound, diag.certifies_local_max
    );
    Ok(())
}

//! Factorize a synthetic Poisson count matrix with one-step alternating
//! updates, comparing multiplicative updates against the stochastic
//! power-iteration rule under the same wall-clock budget.

use scipi::bench::init_model;
use scipi::data::{gen_poisson, SyntheticSpec};
use scipi::klnmf::{alternate, AlternateConfig, UpdateRule};
use scipi::matrix::CountMatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec::new(150, 100, 0.65, 3)?;
    let v = CountMatrix::Dense(gen_poisson(&spec)?.to_dense());
    let rank = 4;
    println!(
        "data: {}x{}, density {:.3}, rank {rank}",
        v.rows(),
        v.cols(),
        v.density()
    );

    let rules = [
        UpdateRule::Mu,
        UpdateRule::SSciPi {
            eta: 0.1,
            batch_proportion: 0.1,
            epoch_length: 10,
            replacement: false,
            mode: None,
        },
    ];
    for rule in rules {
        let init = init_model(&v, rank, 0)?;
        let mut config = AlternateConfig::new(rule, 100_000);
        config.time_limit_secs = Some(2.0);
        config.seed = 0;
        let outcome = alternate(&v, init, &config)?;
        let last = outcome.trace.records.last().unwrap();
        println!(
            "{:8} objective {:.6e} after {} rounds, {} work units ({:?})",
            config.rule.name(),
            last.objective,
            outcome.rounds,
            outcome.work,
            outcome.termination
        );
    }
    Ok(())
}

//! End-to-end acceptance suite. Each test exercises one release criterion
//! and prints a single pass/fail line; tolerances live next to the checks
//! in `bench::repro`.

use scipi::bench::repro::{self, CriterionReport};

fn check(report: CriterionReport) {
    let line = report.line();
    println!("{line}");
    assert!(report.passed, "{line}");
}

#[test]
fn criterion_01_power_iteration_reduction() {
    check(repro::criterion_01());
}

#[test]
fn criterion_02_rate_prediction() {
    check(repro::criterion_02());
}

#[test]
fn criterion_03_subproblem_oracle() {
    check(repro::criterion_03());
}

#[test]
fn criterion_04_svrg_unbiasedness() {
    check(repro::criterion_04());
}

#[test]
fn criterion_05_scale_equivariance() {
    check(repro::criterion_05());
}

#[test]
fn criterion_06_mu_monotonicity_and_fixed_points() {
    check(repro::criterion_06());
}

#[test]
fn criterion_07_baseline_formulas() {
    check(repro::criterion_07());
}

#[test]
fn criterion_08_work_efficiency_comparison() {
    check(repro::criterion_08());
}

#[test]
fn criterion_09_eigen_structure_at_solutions() {
    check(repro::criterion_09());
}

#[test]
fn criterion_10_data_layer() {
    check(repro::criterion_10());
}

#[test]
fn criterion_11_gradient_correctness() {
    check(repro::criterion_11());
}

#[test]
fn criterion_12_harness_determinism() {
    check(repro::criterion_12());
}

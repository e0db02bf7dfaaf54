//! Scale-invariant power iteration over finite sums, applied to KL-divergence
//! nonnegative matrix factorization.
//!
//! The crate is organized as a library with runnable examples; the `scipi`
//! binary is a thin front-end over the same entry points.
//!
//! - [`matrix`]: dense/CSR containers and the KL objective.
//! - [`sampling`]: deterministic splittable RNG streams, batch samplers, and
//!   stochastic multiplier estimates.
//! - [`solver`]: the generic scale-invariant problem trait, the power-style
//!   full-batch step, and the variance-reduced stochastic solver.
//! - [`klnmf`]: the column subproblem reformulation, epoch updates for a full
//!   factor, recovery, and alternating minimization.
//! - [`baselines`]: multiplicative updates, cyclic coordinate descent, and
//!   projected gradient descent for the same subproblems.
//! - [`data`]: corpus loaders, a synthetic Poisson generator, and
//!   preprocessing.
//! - [`verify`]: finite-difference checks, spectral diagnostics at solutions,
//!   and convergence-rate fitting.
//! - [`bench`]: traces, references, grid search, and result emission.

pub mod baselines;
pub mod bench;
pub mod data;
pub mod klnmf;
pub mod matrix;
pub mod sampling;
pub mod solver;
pub mod verify;

//! Seeded sampling: splittable RNG streams, batch index draws, and the
//! stochastic multiplier estimators built on them.

mod batch;
mod gradients;
mod rng;

pub use batch::{sample_indices, BatchSpec, SamplingError, SamplingMode};
pub use gradients::{element_stochastic_gradient, full_multiplier, row_stochastic_gradient};
pub use rng::RngStream;

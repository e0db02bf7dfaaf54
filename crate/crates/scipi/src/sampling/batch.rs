use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::rng::RngStream;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("batch size {s} exceeds population {n} without replacement")]
    BatchTooLarge { s: usize, n: usize },
    #[error("batch size must be at least 1")]
    EmptyBatch,
    #[error("population is empty")]
    EmptyPopulation,
}

/// What a stochastic sample indexes: data rows or stored nonzero elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Row,
    Element,
}

impl SamplingMode {
    /// Row sampling when at least half the entries are populated, element
    /// sampling otherwise.
    pub fn for_density(density: f64) -> SamplingMode {
        if density < 0.5 {
            SamplingMode::Element
        } else {
            SamplingMode::Row
        }
    }
}

/// Batch shape shared by the samplers: size plus replacement flag. Sampling
/// without replacement is the default; opt into replacement explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub size: usize,
    #[serde(default)]
    pub replacement: bool,
}

impl BatchSpec {
    pub fn without_replacement(size: usize) -> BatchSpec {
        BatchSpec {
            size,
            replacement: false,
        }
    }

    pub fn with_replacement(size: usize) -> BatchSpec {
        BatchSpec {
            size,
            replacement: true,
        }
    }

    /// Batch size from a proportion of the population, clamped to [1, n].
    pub fn from_proportion(proportion: f64, n: usize) -> BatchSpec {
        let raw = (proportion * n as f64).round() as usize;
        BatchSpec::without_replacement(raw.clamp(1, n.max(1)))
    }
}

/// Draws `spec.size` indices from [0, n), sorted ascending. Without
/// replacement the draw is uniform over subsets (Floyd's algorithm); with
/// replacement indices may repeat and repeats keep their multiplicity.
pub fn sample_indices(
    n: usize,
    spec: BatchSpec,
    rng: &mut RngStream,
) -> Result<Vec<usize>, SamplingError> {
    if n == 0 {
        return Err(SamplingError::EmptyPopulation);
    }
    if spec.size == 0 {
        return Err(SamplingError::EmptyBatch);
    }
    if spec.replacement {
        let mut out: Vec<usize> = (0..spec.size).map(|_| rng.uniform_below(n)).collect();
        out.sort_unstable();
        return Ok(out);
    }
    if spec.size > n {
        return Err(SamplingError::BatchTooLarge { s: spec.size, n });
    }
    if spec.size == n {
        return Ok((0..n).collect());
    }
    let mut chosen = BTreeSet::new();
    for j in (n - spec.size)..n {
        let t = rng.uniform_below(j + 1);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    Ok(chosen.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn without_replacement_is_sorted_and_distinct() {
        let mut rng = RngStream::from_seed(5);
        for _ in 0..200 {
            let s = sample_indices(20, BatchSpec::without_replacement(7), &mut rng).unwrap();
            assert_eq!(s.len(), 7);
            assert!(s.windows(2).all(|w| w[0] < w[1]), "{s:?}");
            assert!(*s.last().unwrap() < 20);
        }
    }

    #[test]
    fn full_batch_is_the_identity_permutation() {
        let mut rng = RngStream::from_seed(5);
        let s = sample_indices(6, BatchSpec::without_replacement(6), &mut rng).unwrap();
        assert_eq!(s, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn oversized_batch_without_replacement_errors() {
        let mut rng = RngStream::from_seed(5);
        let err = sample_indices(3, BatchSpec::without_replacement(4), &mut rng).unwrap_err();
        assert!(matches!(err, SamplingError::BatchTooLarge { s: 4, n: 3 }));
    }

    #[test]
    fn replacement_allows_oversampling_and_repeats() {
        let mut rng = RngStream::from_seed(11);
        let s = sample_indices(2, BatchSpec::with_replacement(10), &mut rng).unwrap();
        assert_eq!(s.len(), 10);
        assert!(s.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn marginal_inclusion_is_uniform() {
        // each of 10 indices should appear in a 3-subset with frequency 0.3
        let mut rng = RngStream::from_seed(99);
        let mut counts = [0usize; 10];
        let trials = 100_000;
        for _ in 0..trials {
            for i in sample_indices(10, BatchSpec::without_replacement(3), &mut rng).unwrap() {
                counts[i] += 1;
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / trials as f64;
            assert!((freq - 0.3).abs() < 0.01, "index {i}: {freq}");
        }
    }

    #[test]
    fn proportion_clamps_to_at_least_one() {
        assert_eq!(BatchSpec::from_proportion(1e-4, 300).size, 1);
        assert_eq!(BatchSpec::from_proportion(0.01, 300).size, 3);
        assert_eq!(BatchSpec::from_proportion(1.0, 300).size, 300);
    }
}

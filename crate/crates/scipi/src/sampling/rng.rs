//! Deterministic splittable random streams.
//!
//! Every stream is identified by a 64-bit id derived purely from the master
//! seed and the path of `(tag, index)` splits that produced it, never from
//! how much output a parent has consumed. That makes any stream in a run
//! reconstructible in isolation, which is what keeps per-column and
//! per-replicate work independent of scheduling.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const SEED_SALT: u64 = 0x243f_6a88_85a3_08d3;
const INDEX_SALT: u64 = 0x4528_21e6_38d0_1377;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// A splitmix64 generator with label-derived splitting.
#[derive(Debug, Clone)]
pub struct RngStream {
    id: u64,
    state: u64,
}

impl RngStream {
    pub fn from_seed(seed: u64) -> Self {
        let id = mix64(seed ^ SEED_SALT);
        RngStream {
            id,
            state: mix64(id ^ GOLDEN),
        }
    }

    /// Child stream for `(tag, index)`. Children of equal parents and equal
    /// labels are identical; consumption of the parent plays no part.
    pub fn child(&self, tag: &str, index: u64) -> RngStream {
        let id = mix64(self.id ^ fnv1a64(tag.as_bytes()) ^ mix64(index ^ INDEX_SALT));
        RngStream {
            id,
            state: mix64(id ^ GOLDEN),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform double in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). Uses widening multiplication with a
    /// rejection step, so the distribution is exactly uniform.
    pub fn uniform_below(&mut self, n: usize) -> usize {
        assert!(n > 0, "uniform_below needs a positive bound");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            let m = (x as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    /// Poisson draw by inversion of the CDF; exact for the moderate rates the
    /// generator uses and deterministic across platforms.
    pub fn poisson(&mut self, lambda: f64) -> u64 {
        debug_assert!(lambda >= 0.0 && lambda.is_finite());
        if lambda == 0.0 {
            return 0;
        }
        let u = self.next_f64();
        let mut k = 0u64;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
            // guard against a stuck tail once p underflows
            if p <= 0.0 {
                break;
            }
        }
        k
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.uniform_below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_seed_and_path_reproduce_the_sequence() {
        let mut a = RngStream::from_seed(42).child("col", 7);
        let mut b = RngStream::from_seed(42).child("col", 7);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn children_ignore_parent_consumption() {
        let mut parent = RngStream::from_seed(9);
        let before = parent.child("x", 3);
        for _ in 0..100 {
            parent.next_u64();
        }
        let mut after = parent.child("x", 3);
        let mut b = before;
        for _ in 0..32 {
            assert_eq!(b.next_u64(), after.next_u64());
        }
    }

    #[test]
    fn distinct_paths_do_not_collide() {
        // smoke test: ids and first outputs across tags and indices differ
        let root = RngStream::from_seed(1);
        let mut seen = std::collections::HashSet::new();
        for tag in ["h", "w", "rep", "gen"] {
            for idx in 0..256u64 {
                let mut s = root.child(tag, idx);
                assert!(seen.insert(s.next_u64()), "collision at ({tag}, {idx})");
            }
        }
    }

    #[test]
    fn doubles_land_in_unit_interval_with_sane_mean() {
        let mut s = RngStream::from_seed(123);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let x = s.next_f64();
            assert!((0.0..1.0).contains(&x));
            sum += x;
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn uniform_below_is_unbiased_over_small_range() {
        let mut s = RngStream::from_seed(7);
        let mut counts = [0usize; 10];
        let draws = 200_000;
        for _ in 0..draws {
            counts[s.uniform_below(10)] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.1).abs() < 0.005, "bucket {i}: {freq}");
        }
    }

    #[test]
    fn poisson_matches_mean_and_zero_mass() {
        let lambda = 2.302585092994046; // -ln(0.1)
        let mut s = RngStream::from_seed(2024);
        let n = 200_000;
        let mut sum = 0u64;
        let mut zeros = 0usize;
        for _ in 0..n {
            let k = s.poisson(lambda);
            sum += k;
            if k == 0 {
                zeros += 1;
            }
        }
        let mean = sum as f64 / n as f64;
        let se = (lambda / n as f64).sqrt();
        assert!((mean - lambda).abs() < 4.0 * se, "mean {mean} vs {lambda}");
        let zero_freq = zeros as f64 / n as f64;
        assert!((zero_freq - 0.1).abs() < 0.005, "zero mass {zero_freq}");
    }

    #[test]
    fn golden_outputs_pin_the_implementation() {
        // frozen first outputs; a change here invalidates every recorded seed
        let mut s = RngStream::from_seed(0);
        let got: Vec<u64> = (0..4).map(|_| s.next_u64()).collect();
        assert_eq!(
            got,
            vec![
                0x3a224767aa1c7624,
                0x3cef4e520472e131,
                0xd6c84543516dbf36,
                0x2ad542e1bea93f24,
            ]
        );
        let mut c = RngStream::from_seed(0).child("t", 1);
        assert_eq!(c.next_u64(), 0x79308f3af19000ed);
    }
}

//! Seeded randomness, stable hashing and integer apportionment.
//!
//! Every random decision in the pipeline goes through [`SeededRng`], which
//! wraps ChaCha8 and implements its own bounded draws and shuffles so the
//! output does not depend on the sampling algorithms of any `rand` release.
//! Seeds for the individual stages are derived from the single configured
//! seed with [`stage_seed`].

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// First eight bytes (big-endian) of the SHA-256 digest of `bytes`.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(head)
}

/// Hash of several string parts, separated so that `("ab", "c")` and
/// `("a", "bc")` differ.
pub fn stable_hash_parts(parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_be_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(head)
}

/// Stage seed: `seed + stable_hash(stage)` with wrapping addition.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    seed.wrapping_add(stable_hash(stage.as_bytes()))
}

/// Deterministic generator with pinned draw algorithms.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..bound` by rejection sampling. `bound` must be
    /// positive.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "below() needs a positive bound");
        // largest multiple of bound that fits in u64
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let x = self.inner.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }

    /// Uniform float in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Fisher-Yates shuffle, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n`, in draw order. Partial Fisher-Yates.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot draw {k} of {n} without replacement");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

/// Tolerance used when flooring quotas so that `0.8 * 10` style products
/// that land a hair under an integer still floor to it.
const QUOTA_EPS: f64 = 1e-9;

/// Largest-remainder (Hamilton) apportionment of `total` seats across
/// `weights`, which must be non-negative and sum to a positive value.
/// Equal remainders go to the lower index.
pub fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut seats: Vec<usize> = quotas
        .iter()
        .map(|q| (q + QUOTA_EPS).floor().max(0.0) as usize)
        .collect();
    let assigned: usize = seats.iter().sum();
    if assigned >= total {
        // only reachable through the epsilon; trim from the highest index
        let mut excess = assigned - total;
        for seat in seats.iter_mut().rev() {
            let take = excess.min(*seat);
            *seat -= take;
            excess -= take;
        }
        return seats;
    }
    let mut order: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    let remainder = |i: usize| quotas[i] - seats[i] as f64;
    // stable sort keeps index order among equal remainders
    order.sort_by(|&a, &b| remainder(b).total_cmp(&remainder(a)));
    for &i in order.iter().cycle().take(total - assigned) {
        seats[i] += 1;
    }
    seats
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Radical inverse of `index` in `base`: the base-`b` digits of `index`
/// mirrored about the radix point. With a permutation, each digit `d` is
/// replaced by `perm[d]` before mirroring.
///
/// The result is computed as one integer division so that small indices
/// reproduce exact fractions (`radical_inverse(1, 3, None) == 1.0 / 3.0`).
pub fn radical_inverse(index: u64, base: u32, permutation: Option<&[u16]>) -> f64 {
    debug_assert!(base >= 2);
    let b = base as u128;
    let mut n = index as u128;
    let mut reversed: u128 = 0;
    let mut scale: u128 = 1;
    while n > 0 {
        let digit = (n % b) as usize;
        let digit = permutation.map_or(digit, |p| p[digit] as usize);
        reversed = reversed * b + digit as u128;
        scale *= b;
        n /= b;
    }
    let value = reversed as f64 / scale as f64;
    // large indices lose exactness in the u128 -> f64 conversion
    value.min(1.0 - f64::EPSILON / 2.0)
}

/// The first `count` primes in ascending order.
pub fn first_primes(count: usize) -> Vec<u32> {
    let mut primes = Vec::with_capacity(count);
    let mut candidate = 2u32;
    while primes.len() < count {
        if primes
            .iter()
            .take_while(|&&p| p * p <= candidate)
            .all(|&p| candidate % p != 0)
        {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Faure's digit permutation for `base`, built recursively from smaller bases.
pub fn faure_permutation(base: u32) -> Vec<u16> {
    let base = base as usize;
    let mut perms: Vec<Vec<u16>> = Vec::with_capacity(base + 1);
    for b in 0..=base {
        let p = if b <= 3 {
            (0..b as u16).collect()
        } else if b % 2 == 0 {
            let half = &perms[b / 2];
            let mut p = vec![0u16; b];
            for (i, &d) in half.iter().enumerate() {
                p[i] = 2 * d;
                p[b / 2 + i] = 2 * d + 1;
            }
            p
        } else {
            let mid = (b / 2) as u16;
            let prev = &perms[b - 1];
            let mut p = vec![0u16; b];
            for (i, &d) in prev.iter().enumerate() {
                let slot = i + usize::from(i >= mid as usize);
                p[slot] = d + u16::from(d >= mid);
            }
            p[mid as usize] = mid;
            p
        };
        perms.push(p);
    }
    perms.pop().unwrap_or_default()
}

/// Bases and optional digit permutations for a Halton sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct HaltonConfig {
    pub bases: Vec<u32>,
    pub permutations: Option<Vec<Vec<u16>>>,
}

impl HaltonConfig {
    /// Plain Halton sequence on the first `dims` primes.
    pub fn new(dims: usize) -> Self {
        Self {
            bases: first_primes(dims),
            permutations: None,
        }
    }

    /// Halton with Faure digit permutations.
    pub fn faure(dims: usize) -> Self {
        let bases = first_primes(dims);
        let perms = bases.iter().map(|&b| faure_permutation(b)).collect();
        Self {
            bases,
            permutations: Some(perms),
        }
    }

    /// Halton with random digit permutations. Digit 0 stays fixed so trailing
    /// zero digits still contribute nothing and values remain in `[0, 1)`.
    pub fn random(dims: usize, seed: u64) -> Self {
        let bases = first_primes(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let perms = bases
            .iter()
            .map(|&b| {
                let mut tail: Vec<u16> = (1..b as u16).collect();
                tail.shuffle(&mut rng);
                std::iter::once(0).chain(tail).collect()
            })
            .collect();
        Self {
            bases,
            permutations: Some(perms),
        }
    }

    pub fn dims(&self) -> usize {
        self.bases.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &b) in self.bases.iter().enumerate() {
            if b < 2 || (2..b).take_while(|d| d * d <= b).any(|d| b % d == 0) {
                return Err(Error::Config(format!("Halton base {b} is not prime")));
            }
            if i > 0 && self.bases[i - 1] >= b {
                return Err(Error::Config("Halton bases must be strictly ascending".into()));
            }
        }
        if let Some(perms) = &self.permutations {
            if perms.len() != self.bases.len() {
                return Err(Error::Config(format!(
                    "{} permutations for {} bases",
                    perms.len(),
                    self.bases.len()
                )));
            }
            for (p, &b) in perms.iter().zip(&self.bases) {
                let mut seen = vec![false; b as usize];
                if p.len() != b as usize || p.first() != Some(&0) {
                    return Err(Error::Config(format!("invalid permutation for base {b}")));
                }
                for &d in p {
                    match seen.get_mut(d as usize) {
                        Some(s) if !*s => *s = true,
                        _ => {
                            return Err(Error::Config(format!(
                                "permutation for base {b} is not a bijection"
                            )))
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Halton point `index`: component `j` is the radical inverse in the `j`-th base.
pub fn halton_point(index: u64, config: &HaltonConfig) -> Vec<f64> {
    config
        .bases
        .iter()
        .enumerate()
        .map(|(j, &b)| {
            let perm = config.permutations.as_ref().map(|p| p[j].as_slice());
            radical_inverse(index, b, perm)
        })
        .collect()
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A prime modulus below 2^63.
///
/// Primes below 2^32 take a plain `u64` product path; larger ones (the
/// 61-bit verification primes used for integer rank) go through `u128`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct PrimeModulus {
    p: u64,
}

impl PrimeModulus {
    pub const MERSENNE_31: u64 = (1 << 31) - 1;

    pub fn new(p: u64) -> Result<Self> {
        if p >= 1 << 63 || !is_prime(p) {
            return Err(Error::InvalidModulus(p));
        }
        Ok(Self { p })
    }

    #[inline]
    pub fn get(self) -> u64 {
        self.p
    }

    #[inline]
    pub fn is_small(self) -> bool {
        self.p < 1 << 32
    }

    #[inline]
    pub fn reduce_i64(self, x: i64) -> u64 {
        x.rem_euclid(self.p as i64) as u64
    }

    #[inline]
    pub fn add(self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.p {
            s - self.p
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.p - b
        }
    }

    #[inline]
    pub fn mul(self, a: u64, b: u64) -> u64 {
        if self.is_small() {
            a * b % self.p
        } else {
            mul_mod_wide(a, b, self.p)
        }
    }

    pub fn pow(self, base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.p;
        let mut b = base % self.p;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        acc
    }

    /// Inverse of a nonzero residue, by Fermat.
    pub fn inv(self, a: u64) -> u64 {
        debug_assert!(!a.is_multiple_of(self.p));
        self.pow(a, self.p - 2)
    }
}

impl TryFrom<u64> for PrimeModulus {
    type Error = Error;
    fn try_from(p: u64) -> Result<Self> {
        Self::new(p)
    }
}

impl From<PrimeModulus> for u64 {
    fn from(m: PrimeModulus) -> u64 {
        m.p
    }
}

impl std::fmt::Display for PrimeModulus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.p)
    }
}

#[inline]
fn mul_mod_wide(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_wide(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod_wide(acc, b, m);
        }
        b = mul_mod_wide(b, b, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin; the first twelve prime bases suffice for all
/// of `u64`.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &b in &BASES {
        if n.is_multiple_of(b) {
            return n == b;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod_wide(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_wide(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Draws a uniformly random prime from `[2^(bits-1), 2^bits)`.
pub fn random_prime<R: rand::Rng + ?Sized>(rng: &mut R, bits: u32) -> PrimeModulus {
    assert!((3..=63).contains(&bits));
    let lo = 1u64 << (bits - 1);
    loop {
        let candidate = rng.random_range(lo..(lo << 1)) | 1;
        if is_prime(candidate) {
            return PrimeModulus { p: candidate };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial_division(n: u64) -> bool {
        n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
    }

    #[test]
    fn miller_rabin_matches_trial_division_below_10k() {
        for n in 0..10_000 {
            assert_eq!(is_prime(n), trial_division(n), "n = {n}");
        }
    }

    #[test]
    fn known_large_primes_and_composites() {
        assert!(is_prime(PrimeModulus::MERSENNE_31));
        assert!(is_prime((1 << 61) - 1));
        assert!(!is_prime(3_215_031_751)); // strong pseudoprime to bases 2,3,5,7
        assert!(!is_prime(((1u64 << 31) - 1) * 65_537));
    }

    #[test]
    fn composite_modulus_rejected() {
        assert_eq!(PrimeModulus::new(9), Err(Error::InvalidModulus(9)));
        assert!(PrimeModulus::new(1).is_err());
        assert!(PrimeModulus::new(2).is_ok());
    }

    #[test]
    fn inverse_round_trip() {
        for p in [2u64, 3, 5, 7, 2_147_483_647, (1 << 61) - 1] {
            let m = PrimeModulus::new(p).unwrap();
            for a in [1u64, 2, 3, p - 1, p / 2 + 1] {
                let a = a % p;
                if a == 0 {
                    continue;
                }
                assert_eq!(m.mul(a, m.inv(a)), 1, "p={p} a={a}");
            }
        }
    }
}

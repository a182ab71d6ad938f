//! Probabilistic prime generation over a caller-supplied random stream.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;

/// Miller-Rabin rounds used for key material.
pub const MILLER_RABIN_ROUNDS: usize = 40;

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

/// Miller-Rabin with `rounds` random bases, preceded by trial division.
pub fn is_probable_prime<R: Rng + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    for &p in SMALL_PRIMES.iter() {
        let p = BigUint::from(p);
        if *n == p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }

    let one = BigUint::one();
    let n_minus_one = n - &one;
    let shift = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> shift;

    'witness: for _ in 0..rounds {
        // n > 251 here, so [2, n-1) is never empty
        let a = rng.gen_biguint_range(&two, &n_minus_one);
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..shift {
            x = x.modpow(&two, n);
            if x == n_minus_one {
                continue 'witness;
            }
            if x == one {
                return false;
            }
        }
        return false;
    }
    true
}

/// Draws a prime with exactly `bits` bits whose top two bits are set, so the
/// product of two such primes has exactly `2 * bits` bits.
///
/// Returns `None` if no prime turned up within `max_attempts` candidates.
pub fn random_prime<R: Rng + ?Sized>(
    bits: u64,
    max_attempts: usize,
    rng: &mut R,
) -> Option<BigUint> {
    assert!(bits >= 3, "prime width must leave room for the fixed top and low bits");
    for _ in 0..max_attempts {
        let mut candidate = rng.gen_biguint(bits);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(bits - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, MILLER_RABIN_ROUNDS, rng) {
            return Some(candidate);
        }
    }
    None
}

/// Inverse of `a` modulo `m`, if it exists.
pub fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    use num_bigint::BigInt;
    if m.is_zero() {
        return None;
    }
    let a = BigInt::from(a % m);
    let m_signed = BigInt::from(m.clone());
    let egcd = a.extended_gcd(&m_signed);
    if !egcd.gcd.is_one() {
        return None;
    }
    let inv = egcd.x.mod_floor(&m_signed);
    inv.to_biguint()
}

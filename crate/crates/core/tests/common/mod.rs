#![allow(dead_code)]

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::One;
use rand::Rng;

use privcon::paillier::{Ciphertext, KeyPair, Plaintext};

/// The toy key with `n = 35`.
pub fn z35() -> KeyPair {
    KeyPair::from_primes(&BigUint::from(5u32), &BigUint::from(7u32)).unwrap()
}

pub fn units(n: u64) -> Vec<u64> {
    (1..n).filter(|r| r.gcd(&n) == 1).collect()
}

/// Every plaintext under every nonce, every sum and every scalar multiple
/// modulo 35. Returns the number of failed identities.
pub fn exhaustive_z35() -> usize {
    let kp = z35();
    let pk = &kp.public;
    let n = 35u64;
    let mut failures = 0;
    let enc = |m: u64, r: u64| {
        pk.encrypt_with_nonce(&Plaintext::from(m), &BigUint::from(r))
            .unwrap()
    };
    let dec = |c: &Ciphertext| -> BigUint { kp.private.decrypt(c).unwrap().into_inner() };
    let rs = units(n);
    for m in 0..n {
        for &r in &rs {
            if dec(&enc(m, r)) != BigUint::from(m) {
                failures += 1;
            }
        }
    }
    for m1 in 0..n {
        let c1 = enc(m1, rs[(m1 as usize) % rs.len()]);
        for m2 in 0..n {
            let c2 = enc(m2, rs[(m2 as usize * 7 + 3) % rs.len()]);
            if dec(&pk.add(&c1, &c2).unwrap()) != BigUint::from((m1 + m2) % n) {
                failures += 1;
            }
            if dec(&pk.scale(&c1, &BigUint::from(m2)).unwrap()) != BigUint::from(m1 * m2 % n) {
                failures += 1;
            }
        }
    }
    failures
}

/// One random roundtrip/addition/scaling identity under `kp`.
pub fn random_identity<R: Rng>(kp: &KeyPair, rng: &mut R) -> bool {
    let pk = &kp.public;
    let n = pk.n();
    let m1 = rng.gen_biguint_below(n);
    let m2 = rng.gen_biguint_below(n);
    let k = rng.gen_biguint_below(n);
    let c1 = pk.encrypt(&Plaintext::new(m1.clone()), rng).unwrap();
    let c2 = pk.encrypt(&Plaintext::new(m2.clone()), rng).unwrap();
    let dec = |c: &Ciphertext| -> BigUint { kp.private.decrypt(c).unwrap().into_inner() };
    dec(&c1) == m1
        && dec(&pk.add(&c1, &c2).unwrap()) == (&m1 + &m2) % n
        && dec(&pk.scale(&c1, &k).unwrap()) == (&m1 * &k) % n
        && dec(&pk.scale(&c1, &BigUint::one()).unwrap()) == m1
}

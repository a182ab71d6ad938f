//! Paillier cryptosystem with `g = n + 1`.
//!
//! Plaintexts live in `Z_n`, ciphertexts in the multiplicative group mod
//! `n^2`. Multiplying ciphertexts adds plaintexts; raising a ciphertext to a
//! plaintext integer power multiplies the plaintext by that integer.
//!
//! Generated moduli have exactly the requested number of bits: both primes
//! are drawn with their top two bits set.

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::primes::{mod_inverse, random_prime};

/// Smallest accepted modulus size in bits.
pub const MIN_KEY_BITS: u64 = 16;
/// Default modulus size.
pub const DEFAULT_KEY_BITS: u64 = 256;

const PRIME_ATTEMPTS: usize = 100_000;
const KEYPAIR_ATTEMPTS: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PaillierError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("key generation failed: {0}")]
    KeyGeneration(String),
    #[error("ciphertext was produced under key {found}, expected {expected}")]
    KeyMismatch {
        expected: KeyFingerprint,
        found: KeyFingerprint,
    },
    #[error("decryption failed: {0}")]
    Decryption(String),
    #[error("malformed key encoding: {0}")]
    Format(String),
}

/// First 64 bits of SHA-256 over the big-endian modulus.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyFingerprint(pub [u8; 8]);

impl KeyFingerprint {
    pub fn of_modulus(n: &BigUint) -> Self {
        let digest = Sha256::digest(n.to_bytes_be());
        let mut out = [0u8; 8];
        out.copy_from_slice(&digest[..8]);
        KeyFingerprint(out)
    }
}

impl fmt::Display for KeyFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for KeyFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyFingerprint({self})")
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    g: BigUint,
    n_squared: BigUint,
    fingerprint: KeyFingerprint,
}

#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey {
    lambda: BigUint,
    mu: BigUint,
    n: BigUint,
    n_squared: BigUint,
    fingerprint: KeyFingerprint,
}

#[derive(Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub public: PublicKey,
    pub private: PrivateKey,
}

/// A value in `Z_n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Plaintext(BigUint);

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Ciphertext {
    value: BigUint,
    key: KeyFingerprint,
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PublicKey")
            .field("bits", &self.bit_length())
            .field("fingerprint", &self.fingerprint)
            .finish()
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrivateKey")
            .field("fingerprint", &self.fingerprint)
            .finish_non_exhaustive()
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("KeyPair").field(&self.public).finish()
    }
}

impl Plaintext {
    pub fn new(value: BigUint) -> Self {
        Plaintext(value)
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn into_inner(self) -> BigUint {
        self.0
    }
}

impl From<u64> for Plaintext {
    fn from(v: u64) -> Self {
        Plaintext(BigUint::from(v))
    }
}

impl Ciphertext {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn key_fingerprint(&self) -> KeyFingerprint {
        self.key
    }

    /// Big-endian magnitude bytes of the ciphertext value.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.value.to_bytes_be()
    }

    /// Rebuilds a ciphertext received as raw bytes under `pk`.
    pub fn from_bytes(pk: &PublicKey, bytes: &[u8]) -> Result<Self, PaillierError> {
        let value = BigUint::from_bytes_be(bytes);
        if value >= pk.n_squared {
            return Err(PaillierError::InvalidArgument(
                "ciphertext value exceeds n^2".into(),
            ));
        }
        Ok(Ciphertext {
            value,
            key: pk.fingerprint,
        })
    }
}

impl PublicKey {
    fn from_modulus(n: BigUint) -> Self {
        let g = &n + 1u32;
        let n_squared = &n * &n;
        let fingerprint = KeyFingerprint::of_modulus(&n);
        PublicKey {
            n,
            g,
            n_squared,
            fingerprint,
        }
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn bit_length(&self) -> u64 {
        self.n.bits()
    }

    pub fn fingerprint(&self) -> KeyFingerprint {
        self.fingerprint
    }

    fn check(&self, c: &Ciphertext) -> Result<(), PaillierError> {
        if c.key != self.fingerprint {
            return Err(PaillierError::KeyMismatch {
                expected: self.fingerprint,
                found: c.key,
            });
        }
        Ok(())
    }

    /// Encrypts `m` with a fresh nonce drawn uniformly from `Z*_n`.
    pub fn encrypt<R: Rng + ?Sized>(
        &self,
        m: &Plaintext,
        rng: &mut R,
    ) -> Result<Ciphertext, PaillierError> {
        let one = BigUint::one();
        let r = loop {
            let r = rng.gen_biguint_range(&one, &self.n);
            if r.gcd(&self.n).is_one() {
                break r;
            }
        };
        self.encrypt_with_nonce(m, &r)
    }

    /// Encrypts `m` with an explicit nonce `r in Z*_n`.
    pub fn encrypt_with_nonce(
        &self,
        m: &Plaintext,
        r: &BigUint,
    ) -> Result<Ciphertext, PaillierError> {
        if m.0 >= self.n {
            return Err(PaillierError::InvalidArgument(
                "plaintext must lie in [0, n)".into(),
            ));
        }
        if r.is_zero() || *r >= self.n || !r.gcd(&self.n).is_one() {
            return Err(PaillierError::InvalidArgument(
                "nonce must be a unit modulo n".into(),
            ));
        }
        // g^m = (1 + n)^m = 1 + m*n  (mod n^2)
        let g_m = (BigUint::one() + &m.0 * &self.n) % &self.n_squared;
        let r_n = r.modpow(&self.n, &self.n_squared);
        Ok(Ciphertext {
            value: (g_m * r_n) % &self.n_squared,
            key: self.fingerprint,
        })
    }

    /// Ciphertext of `m1 + m2 mod n`.
    pub fn add(&self, c1: &Ciphertext, c2: &Ciphertext) -> Result<Ciphertext, PaillierError> {
        self.check(c1)?;
        self.check(c2)?;
        Ok(Ciphertext {
            value: (&c1.value * &c2.value) % &self.n_squared,
            key: self.fingerprint,
        })
    }

    /// Ciphertext of `k * m mod n` for a plaintext scalar `k`.
    pub fn scale(&self, c: &Ciphertext, k: &BigUint) -> Result<Ciphertext, PaillierError> {
        self.check(c)?;
        Ok(Ciphertext {
            value: c.value.modpow(k, &self.n_squared),
            key: self.fingerprint,
        })
    }

    /// `n` and `g`, each as a 4-byte big-endian length followed by the
    /// big-endian magnitude.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_field(&mut out, &self.n);
        put_field(&mut out, &self.g);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PaillierError> {
        let mut cursor = bytes;
        let n = take_field(&mut cursor)?;
        let g = take_field(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(PaillierError::Format("trailing bytes after public key".into()));
        }
        let pk = PublicKey::from_modulus(n);
        validate_public(&pk, &g)?;
        Ok(pk)
    }
}

fn validate_public(pk: &PublicKey, g: &BigUint) -> Result<(), PaillierError> {
    if pk.n <= BigUint::one() || pk.n.is_even() {
        return Err(PaillierError::Format("modulus must be odd and > 1".into()));
    }
    if *g != pk.g {
        return Err(PaillierError::Format("generator must equal n + 1".into()));
    }
    Ok(())
}

impl PrivateKey {
    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.mu
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn fingerprint(&self) -> KeyFingerprint {
        self.fingerprint
    }

    /// `m = L(c^lambda mod n^2) * mu mod n` with `L(u) = (u - 1) / n`.
    pub fn decrypt(&self, c: &Ciphertext) -> Result<Plaintext, PaillierError> {
        if c.key != self.fingerprint {
            return Err(PaillierError::KeyMismatch {
                expected: self.fingerprint,
                found: c.key,
            });
        }
        if c.value >= self.n_squared {
            return Err(PaillierError::Decryption("ciphertext exceeds n^2".into()));
        }
        if !c.value.gcd(&self.n).is_one() {
            return Err(PaillierError::Decryption(
                "ciphertext is not a unit modulo n^2".into(),
            ));
        }
        let u = c.value.modpow(&self.lambda, &self.n_squared);
        let (l, rem) = (u - 1u32).div_rem(&self.n);
        if !rem.is_zero() {
            return Err(PaillierError::Decryption(
                "c^lambda is not congruent to 1 mod n".into(),
            ));
        }
        Ok(Plaintext((l * &self.mu) % &self.n))
    }
}

impl KeyPair {
    /// Generates a key pair whose modulus has exactly `bit_length` bits.
    pub fn generate<R: Rng + ?Sized>(bit_length: u64, rng: &mut R) -> Result<Self, PaillierError> {
        if bit_length < MIN_KEY_BITS || !bit_length.is_multiple_of(2) {
            return Err(PaillierError::InvalidArgument(format!(
                "key size must be even and at least {MIN_KEY_BITS} bits, got {bit_length}"
            )));
        }
        let half = bit_length / 2;
        for _ in 0..KEYPAIR_ATTEMPTS {
            let p = random_prime(half, PRIME_ATTEMPTS, rng)
                .ok_or_else(|| PaillierError::KeyGeneration("no prime found for p".into()))?;
            let q = random_prime(half, PRIME_ATTEMPTS, rng)
                .ok_or_else(|| PaillierError::KeyGeneration("no prime found for q".into()))?;
            if let Ok(pair) = KeyPair::from_primes(&p, &q) {
                debug_assert_eq!(pair.public.bit_length(), bit_length);
                return Ok(pair);
            }
        }
        Err(PaillierError::KeyGeneration(format!(
            "no admissible prime pair after {KEYPAIR_ATTEMPTS} attempts"
        )))
    }

    /// Builds a key pair from explicit primes. Meant for toy moduli in tests;
    /// primality of `p` and `q` is the caller's responsibility.
    pub fn from_primes(p: &BigUint, q: &BigUint) -> Result<Self, PaillierError> {
        if p == q {
            return Err(PaillierError::InvalidArgument("p and q must differ".into()));
        }
        if *p < BigUint::from(3u32) || *q < BigUint::from(3u32) {
            return Err(PaillierError::InvalidArgument("p and q must be odd primes".into()));
        }
        let n = p * q;
        let lambda = (p - 1u32) * (q - 1u32);
        if !n.gcd(&lambda).is_one() {
            return Err(PaillierError::InvalidArgument(
                "gcd(pq, (p-1)(q-1)) must be 1".into(),
            ));
        }
        let mu = mod_inverse(&lambda, &n)
            .ok_or_else(|| PaillierError::InvalidArgument("lambda is not invertible mod n".into()))?;
        Ok(KeyPair::from_parts(n, lambda, mu))
    }

    fn from_parts(n: BigUint, lambda: BigUint, mu: BigUint) -> Self {
        let public = PublicKey::from_modulus(n);
        let private = PrivateKey {
            lambda,
            mu,
            n: public.n.clone(),
            n_squared: public.n_squared.clone(),
            fingerprint: public.fingerprint,
        };
        KeyPair { public, private }
    }

    /// `n`, `g`, `lambda`, `mu`, each length-prefixed as in
    /// [`PublicKey::to_bytes`].
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.public.to_bytes();
        put_field(&mut out, &self.private.lambda);
        put_field(&mut out, &self.private.mu);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PaillierError> {
        let mut cursor = bytes;
        let n = take_field(&mut cursor)?;
        let g = take_field(&mut cursor)?;
        let lambda = take_field(&mut cursor)?;
        let mu = take_field(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(PaillierError::Format("trailing bytes after key pair".into()));
        }
        let pair = KeyPair::from_parts(n, lambda, mu);
        validate_public(&pair.public, &g)?;
        if !((&pair.private.lambda * &pair.private.mu) % &pair.private.n).is_one() {
            return Err(PaillierError::Format("lambda * mu must be 1 mod n".into()));
        }
        Ok(pair)
    }
}

fn put_field(out: &mut Vec<u8>, v: &BigUint) {
    let bytes = v.to_bytes_be();
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(&bytes);
}

fn take_field(cursor: &mut &[u8]) -> Result<BigUint, PaillierError> {
    if cursor.len() < 4 {
        return Err(PaillierError::Format("truncated length prefix".into()));
    }
    let (len, rest) = cursor.split_at(4);
    let len = u32::from_be_bytes(len.try_into().expect("4 bytes")) as usize;
    if rest.len() < len {
        return Err(PaillierError::Format("truncated field".into()));
    }
    let (field, rest) = rest.split_at(len);
    *cursor = rest;
    Ok(BigUint::from_bytes_be(field))
}

//! Hash-then-sign message authentication.
//!
//! A signer holds an RSA-style private exponent and publishes the matching
//! verification key with every message. The signature is the SHA-256 digest
//! of the payload raised to the private exponent; a receiver raises it to
//! the public exponent and compares against a freshly computed digest.
//! Because anyone can mint a key pair, receivers also check the transported
//! key against a registry of known signer identities.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::paillier::KeyFingerprint;
use crate::primes::{mod_inverse, random_prime};
use crate::NodeId;

pub const DEFAULT_SIGNING_BITS: u64 = 512;
/// The digest is 256 bits, so the modulus needs headroom above it.
pub const MIN_SIGNING_BITS: u64 = 320;
const PUBLIC_EXPONENT: u32 = 65_537;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SignatureError {
    #[error("signing modulus must be even and at least {MIN_SIGNING_BITS} bits, got {0}")]
    KeySize(u64),
    #[error("signing key generation failed")]
    Generation,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerificationKey {
    n: BigUint,
    e: BigUint,
}

impl VerificationKey {
    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn fingerprint(&self) -> KeyFingerprint {
        let mut hasher = Sha256::new();
        hasher.update(b"verification-key");
        let n = self.n.to_bytes_be();
        hasher.update((n.len() as u32).to_be_bytes());
        hasher.update(&n);
        hasher.update(self.e.to_bytes_be());
        let digest = hasher.finalize();
        let mut out = [0u8; 8];
        out.copy_from_slice(&digest[..8]);
        KeyFingerprint(out)
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct SigningKey {
    d: BigUint,
    verification: VerificationKey,
}

impl std::fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SigningKey")
            .field("verification", &self.verification.fingerprint())
            .finish_non_exhaustive()
    }
}

impl SigningKey {
    pub fn generate<R: Rng + ?Sized>(bits: u64, rng: &mut R) -> Result<Self, SignatureError> {
        if bits < MIN_SIGNING_BITS || !bits.is_multiple_of(2) {
            return Err(SignatureError::KeySize(bits));
        }
        let e = BigUint::from(PUBLIC_EXPONENT);
        for _ in 0..64 {
            let p = random_prime(bits / 2, 100_000, rng).ok_or(SignatureError::Generation)?;
            let q = random_prime(bits / 2, 100_000, rng).ok_or(SignatureError::Generation)?;
            if p == q {
                continue;
            }
            let phi = (&p - 1u32) * (&q - 1u32);
            if !phi.gcd(&e).is_one() {
                continue;
            }
            let d = mod_inverse(&e, &phi).ok_or(SignatureError::Generation)?;
            return Ok(SigningKey {
                d,
                verification: VerificationKey { n: p * q, e },
            });
        }
        Err(SignatureError::Generation)
    }

    pub fn verification_key(&self) -> &VerificationKey {
        &self.verification
    }
}

/// Signature plus the verification key it claims.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignatureBlock {
    pub digest_cipher: BigUint,
    pub verification_key: VerificationKey,
}

fn digest(payload: &[u8]) -> BigUint {
    BigUint::from_bytes_be(&Sha256::digest(payload))
}

pub fn sign(payload: &[u8], key: &SigningKey) -> SignatureBlock {
    debug_assert!(!payload.is_empty(), "signed payloads are never empty");
    let h = digest(payload);
    SignatureBlock {
        digest_cipher: h.modpow(&key.d, &key.verification.n),
        verification_key: key.verification.clone(),
    }
}

/// Accepts iff the block's digest matches `payload`. Malformed blocks are
/// rejected rather than reported.
pub fn verify(payload: &[u8], block: &SignatureBlock) -> bool {
    let key = &block.verification_key;
    if key.n.bits() < MIN_SIGNING_BITS || block.digest_cipher >= key.n || key.e.is_one() {
        return false;
    }
    block.digest_cipher.modpow(&key.e, &key.n) == digest(payload)
}

/// Verification-key fingerprints bound to node identities at setup.
#[derive(Clone, Debug, Default)]
pub struct SignerRegistry {
    known: HashMap<NodeId, KeyFingerprint>,
}

impl SignerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, node: NodeId, key: &VerificationKey) {
        self.known.insert(node, key.fingerprint());
    }

    pub fn fingerprint_of(&self, node: NodeId) -> Option<KeyFingerprint> {
        self.known.get(&node).copied()
    }

    /// Why a message claiming to come from `sender` must be rejected, if it must.
    pub fn check(
        &self,
        sender: NodeId,
        payload: &[u8],
        block: Option<&SignatureBlock>,
    ) -> Result<(), &'static str> {
        let block = block.ok_or("missing signature")?;
        match self.fingerprint_of(sender) {
            Some(fp) if fp == block.verification_key.fingerprint() => {}
            Some(_) => return Err("verification key is not registered to the sender"),
            None => return Err("sender has no registered signing identity"),
        }
        if verify(payload, block) {
            Ok(())
        } else {
            Err("signature does not match payload")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn key(seed: u64) -> SigningKey {
        SigningKey::generate(DEFAULT_SIGNING_BITS, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn sign_then_verify() {
        let k = key(1);
        let block = sign(b"hello", &k);
        assert!(verify(b"hello", &block));
        assert!(verify(b"hello", &block), "verification is deterministic");
        assert!(!verify(b"hellp", &block));
    }

    #[test]
    fn wrong_key_rejected() {
        let a = key(1);
        let b = key(2);
        let mut block = sign(b"payload", &a);
        block.verification_key = b.verification_key().clone();
        assert!(!verify(b"payload", &block));
    }

    #[test]
    fn malformed_blocks_rejected() {
        let k = key(3);
        let mut block = sign(b"x", &k);
        block.digest_cipher = k.verification_key().modulus() + 1u32;
        assert!(!verify(b"x", &block));
        let tiny = SignatureBlock {
            digest_cipher: BigUint::from(1u32),
            verification_key: VerificationKey {
                n: BigUint::from(35u32),
                e: BigUint::from(5u32),
            },
        };
        assert!(!verify(b"x", &tiny));
    }

    #[test]
    fn single_bit_corruptions_rejected() {
        let k = key(4);
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let len = rng.gen_range(1..200);
            let mut payload: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            let block = sign(&payload, &k);
            let bit = rng.gen_range(0..len * 8);
            payload[bit / 8] ^= 1 << (bit % 8);
            assert!(!verify(&payload, &block));
        }
    }

    #[test]
    fn registry_binds_identity() {
        let honest = key(5);
        let forger = key(6);
        let mut registry = SignerRegistry::new();
        registry.register(NodeId(0), honest.verification_key());
        let payload = b"tampered";
        // a forger's self-signed block verifies on its own...
        let forged = sign(payload, &forger);
        assert!(verify(payload, &forged));
        // ...but not as the registered sender
        assert!(registry.check(NodeId(0), payload, Some(&forged)).is_err());
        assert!(registry.check(NodeId(0), payload, None).is_err());
        assert!(registry
            .check(NodeId(0), payload, Some(&sign(payload, &honest)))
            .is_ok());
        assert!(registry
            .check(NodeId(1), payload, Some(&sign(payload, &honest)))
            .is_err());
    }

    #[test]
    fn key_size_enforced() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert_eq!(
            SigningKey::generate(256, &mut rng).unwrap_err(),
            SignatureError::KeySize(256)
        );
    }
}

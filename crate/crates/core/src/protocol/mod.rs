//! Confidential pairwise exchange.
//!
//! One directional exchange between an initiator `i` and a responder `j`:
//!
//! 1. `i` sends `E_i(-x_i)` together with its public key.
//! 2. `j` encrypts `x_j` under `i`'s key, multiplies the two ciphertexts to
//!    get `E_i(x_j - x_i)`, and raises the result to its scaled weight
//!    `a_j`, yielding `E_i(a_j (x_j - x_i))`. `j` never holds `i`'s private
//!    key.
//! 3. `i` decrypts, strips overflow bits, rescales, and multiplies by its
//!    own weight `a_i` to obtain `a_i a_j (x_j - x_i)`.
//!
//! Running both directions with the same per-round draws gives the
//! symmetric edge weight `a_i a_j` on both ends.

pub mod signature;

use num_bigint::BigUint;
use rand::Rng;
use thiserror::Error;

use crate::consensus::NodeState;
use crate::fixedpoint::{
    self, decode, encode, encode_rounded, EncodedValue, FixedConfig, FixedPointError, Rounding,
};
use crate::paillier::{Ciphertext, KeyPair, PaillierError, PublicKey};
use crate::NodeId;
use signature::{sign, SignatureBlock, SignerRegistry, SigningKey};

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("weight range must satisfy 0 < a_min < a_bar, got ({a_min}, {a_bar}]")]
    WeightRange { a_min: f64, a_bar: f64 },
    #[error("weight drawn for round {drawn_at} used in round {round}")]
    StaleDraw { drawn_at: u64, round: u64 },
    #[error("message for node {expected} delivered to node {found}")]
    Misaddressed { expected: NodeId, found: NodeId },
    #[error("node {0} has no signing key")]
    MissingSigningKey(NodeId),
    #[error("rejected message {from} -> {to} in round {round}: {reason}")]
    Tampered {
        from: NodeId,
        to: NodeId,
        round: u64,
        reason: &'static str,
    },
    #[error(transparent)]
    Encoding(#[from] FixedPointError),
    #[error(transparent)]
    Crypto(#[from] PaillierError),
}

/// Key material held by one node.
#[derive(Clone, Debug)]
pub struct NodeKeys {
    pub paillier: KeyPair,
    pub signing: Option<SigningKey>,
}

/// Whether messages on a channel are signed and checked.
#[derive(Clone, Copy, Debug)]
pub enum Authentication<'a> {
    Off,
    Signed(&'a SignerRegistry),
}

impl Authentication<'_> {
    fn enabled(&self) -> bool {
        matches!(self, Authentication::Signed(_))
    }

    fn check(
        &self,
        from: NodeId,
        to: NodeId,
        round: u64,
        payload: &[u8],
        block: Option<&SignatureBlock>,
    ) -> Result<(), ProtocolError> {
        match self {
            Authentication::Off => Ok(()),
            Authentication::Signed(registry) => registry
                .check(from, payload, block)
                .map_err(|reason| ProtocolError::Tampered {
                    from,
                    to,
                    round,
                    reason,
                }),
        }
    }
}

/// A node's private multiplier for one round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightDraw {
    pub a: f64,
    pub drawn_at: u64,
}

impl WeightDraw {
    fn check_round(&self, round: u64) -> Result<(), ProtocolError> {
        if self.drawn_at != round {
            return Err(ProtocolError::StaleDraw {
                drawn_at: self.drawn_at,
                round,
            });
        }
        Ok(())
    }
}

/// Uniform draw on `(a_min, a_bar]`.
pub fn draw_weight<R: Rng + ?Sized>(
    rng: &mut R,
    a_min: f64,
    a_bar: f64,
    round: u64,
) -> Result<WeightDraw, ProtocolError> {
    if !(a_min > 0.0 && a_min < a_bar && a_bar.is_finite()) {
        return Err(ProtocolError::WeightRange { a_min, a_bar });
    }
    // gen_range covers [a_min, a_bar); reflect it onto (a_min, a_bar]
    let u: f64 = rng.gen_range(a_min..a_bar);
    let a = (a_min + a_bar - u).min(a_bar);
    Ok(WeightDraw {
        a: if a <= a_min { a_bar } else { a },
        drawn_at: round,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExchangeRequest {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub round: u64,
    pub enc_neg_state: Ciphertext,
    pub sender_key: PublicKey,
    pub signature: Option<SignatureBlock>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExchangeResponse {
    pub responder: NodeId,
    pub initiator: NodeId,
    pub round: u64,
    pub enc_weighted_diff: Ciphertext,
    pub signature: Option<SignatureBlock>,
}

/// What the initiator learns from one exchange.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedDifference {
    /// `a_i * a_j * (x_j - x_i)`, or `a_j * (x_j - x_i)` when `a_i` is fixed at 1.
    pub value: f64,
    /// The decrypted `a_j * (x_j - x_i)` before the initiator's multiplier.
    pub partial: f64,
    pub neighbor_id: NodeId,
    pub round: u64,
}

const REQUEST_TAG: u8 = 0x01;
const RESPONSE_TAG: u8 = 0x02;

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

fn header(tag: u8, round: u64, from: NodeId, to: NodeId) -> Vec<u8> {
    let mut out = Vec::with_capacity(17 + 2 * 68);
    out.push(tag);
    out.extend_from_slice(&round.to_be_bytes());
    out.extend_from_slice(&from.0.to_be_bytes());
    out.extend_from_slice(&to.0.to_be_bytes());
    out
}

impl ExchangeRequest {
    /// Canonical bytes covered by the signature: tag `0x01`, round (u64),
    /// sender (u32), receiver (u32), length-prefixed ciphertext, and
    /// length-prefixed modulus of the sender's key. Integers big-endian.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = header(REQUEST_TAG, self.round, self.sender, self.receiver);
        put_bytes(&mut out, &self.enc_neg_state.to_bytes());
        put_bytes(&mut out, &self.sender_key.n().to_bytes_be());
        out
    }
}

impl ExchangeResponse {
    /// Tag `0x02`, round, responder, initiator, length-prefixed ciphertext.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = header(RESPONSE_TAG, self.round, self.responder, self.initiator);
        put_bytes(&mut out, &self.enc_weighted_diff.to_bytes());
        out
    }
}

fn signing_key(node: &NodeState) -> Result<&SigningKey, ProtocolError> {
    node.keys
        .signing
        .as_ref()
        .ok_or(ProtocolError::MissingSigningKey(node.id))
}

/// Step 1: encrypt the negated state under the initiator's own key.
pub fn initiate<R: Rng + ?Sized>(
    node: &NodeState,
    receiver: NodeId,
    round: u64,
    cfg: &FixedConfig,
    auth: Authentication<'_>,
    rng: &mut R,
) -> Result<ExchangeRequest, ProtocolError> {
    let pk = &node.keys.paillier.public;
    let neg = encode(-node.x, cfg.state_scale, cfg)?;
    let enc_neg_state = pk.encrypt(&neg.to_plaintext(), rng)?;
    let mut req = ExchangeRequest {
        sender: node.id,
        receiver,
        round,
        enc_neg_state,
        sender_key: pk.clone(),
        signature: None,
    };
    if auth.enabled() {
        req.signature = Some(sign(&req.canonical_bytes(), signing_key(node)?));
    }
    Ok(req)
}

/// Steps 2-3, run by the responder entirely in ciphertext.
pub fn respond<R: Rng + ?Sized>(
    req: &ExchangeRequest,
    responder: &NodeState,
    a_j: &WeightDraw,
    cfg: &FixedConfig,
    auth: Authentication<'_>,
    rng: &mut R,
) -> Result<ExchangeResponse, ProtocolError> {
    if req.receiver != responder.id {
        return Err(ProtocolError::Misaddressed {
            expected: req.receiver,
            found: responder.id,
        });
    }
    auth.check(
        req.sender,
        req.receiver,
        req.round,
        &req.canonical_bytes(),
        req.signature.as_ref(),
    )?;
    a_j.check_round(req.round)?;

    let pk = &req.sender_key;
    let own = encode(responder.x, cfg.state_scale, cfg)?;
    let enc_own = pk.encrypt(&own.to_plaintext(), rng)?;
    let enc_diff = pk.add(&enc_own, &req.enc_neg_state)?;
    let weight = encode_rounded(a_j.a, cfg.weight_scale, cfg.word_width, Rounding::Nearest)?;
    let enc_weighted_diff = pk.scale(&enc_diff, &weight.to_biguint())?;

    let mut resp = ExchangeResponse {
        responder: responder.id,
        initiator: req.sender,
        round: req.round,
        enc_weighted_diff,
        signature: None,
    };
    if auth.enabled() {
        resp.signature = Some(sign(&resp.canonical_bytes(), signing_key(responder)?));
    }
    Ok(resp)
}

/// Decrypts and rescales a response, then applies the initiator's own
/// multiplier. `a_i = None` fixes that multiplier at 1, as the max/min
/// rules do.
pub fn finalize(
    resp: &ExchangeResponse,
    node: &NodeState,
    a_i: Option<&WeightDraw>,
    cfg: &FixedConfig,
    auth: Authentication<'_>,
) -> Result<WeightedDifference, ProtocolError> {
    if resp.initiator != node.id {
        return Err(ProtocolError::Misaddressed {
            expected: resp.initiator,
            found: node.id,
        });
    }
    auth.check(
        resp.responder,
        resp.initiator,
        resp.round,
        &resp.canonical_bytes(),
        resp.signature.as_ref(),
    )?;
    if let Some(draw) = a_i {
        draw.check_round(resp.round)?;
    }
    let plain = node.keys.paillier.private.decrypt(&resp.enc_weighted_diff)?;
    let word = fixedpoint::reduce_after_decrypt(&plain, cfg);
    Ok(rescale(word, a_i.map(|d| d.a), resp.responder, resp.round, cfg))
}

fn rescale(
    word: EncodedValue,
    a_i: Option<f64>,
    neighbor_id: NodeId,
    round: u64,
    cfg: &FixedConfig,
) -> WeightedDifference {
    let partial = decode(word, cfg.total_scale());
    WeightedDifference {
        value: a_i.map_or(partial, |a| a * partial),
        partial,
        neighbor_id,
        round,
    }
}

/// Plaintext reference for one directional exchange, using the same
/// encodings and integer arithmetic as the encrypted path.
pub fn quantized_exchange(
    x_i: f64,
    x_j: f64,
    a_i: Option<f64>,
    a_j: f64,
    cfg: &FixedConfig,
) -> Result<WeightedDifference, ProtocolError> {
    let own = encode(x_j, cfg.state_scale, cfg)?.to_signed();
    let neg = encode(-x_i, cfg.state_scale, cfg)?.to_signed();
    let weight =
        encode_rounded(a_j, cfg.weight_scale, cfg.word_width, Rounding::Nearest)?.to_signed();
    let word = EncodedValue::from_signed((own + neg).wrapping_mul(weight), cfg.word_width);
    Ok(rescale(word, a_i, NodeId(0), 0, cfg))
}

/// Worst-case gap between an exchange result and `a_i a_j (x_j - x_i)`.
///
/// The state difference carries at most one state quantum of error (two
/// with directed rounding) and `a_j` at most half a weight quantum; `a_i`
/// is applied exactly. `a_i = None` stands for the multiplier 1.
pub fn exchange_error_bound(a_i: Option<f64>, a_j: f64, diff: f64, cfg: &FixedConfig) -> f64 {
    let s = match cfg.rounding {
        Rounding::Nearest => 1.0 / cfg.state_scale as f64,
        Rounding::Floor | Rounding::Ceil => 2.0 / cfg.state_scale as f64,
    };
    let h = 0.5 / cfg.weight_scale as f64;
    let d = diff.abs();
    a_i.unwrap_or(1.0) * (a_j * s + h * (d + s)) + 1e-12 * (1.0 + d)
}

/// Unsigned exponent the responder would use for `a_j`.
pub fn weight_exponent(a_j: f64, cfg: &FixedConfig) -> Result<BigUint, ProtocolError> {
    Ok(encode_rounded(a_j, cfg.weight_scale, cfg.word_width, Rounding::Nearest)?.to_biguint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paillier::Plaintext;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn node(id: u32, x: f64, seed: u64, signing: bool) -> NodeState {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let paillier = KeyPair::generate(256, &mut rng).unwrap();
        let signing = signing.then(|| SigningKey::generate(512, &mut rng).unwrap());
        NodeState::new(NodeId(id), x, 1.0, NodeKeys { paillier, signing })
    }

    fn draw(a: f64, round: u64) -> WeightDraw {
        WeightDraw { a, drawn_at: round }
    }

    #[test]
    fn weight_draw_range() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        for round in 0..10_000 {
            let w = draw_weight(&mut rng, 0.01, 0.99, round).unwrap();
            assert!(w.a > 0.01 && w.a <= 0.99);
            assert_eq!(w.drawn_at, round);
        }
        assert!(draw_weight(&mut rng, 0.5, 0.5, 0).is_err());
        assert!(draw_weight(&mut rng, 0.0, 0.5, 0).is_err());
    }

    #[test]
    fn weight_draws_are_uniform() {
        // chi-square over 10 bins, 10^4 draws; 99.9% critical value for 9 dof is 27.88
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mut bins = [0usize; 10];
        for round in 0..10_000u64 {
            let a = draw_weight(&mut rng, 0.01, 0.99, round).unwrap().a;
            let idx = (((a - 0.01) / 0.98) * 10.0).ceil() as usize - 1;
            bins[idx.min(9)] += 1;
        }
        let expected = 1000.0;
        let chi2: f64 = bins
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 27.88, "chi2 = {chi2}, bins = {bins:?}");
    }

    #[test]
    fn initiate_encrypts_negated_state() {
        let cfg = FixedConfig::default();
        let n = node(0, 1.0, 1, false);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let req = initiate(&n, NodeId(1), 0, &cfg, Authentication::Off, &mut rng).unwrap();
        let plain = n.keys.paillier.private.decrypt(&req.enc_neg_state).unwrap();
        assert_eq!(plain, Plaintext::new(BigUint::from((1u128 << 64) - 100_000)));

        let zero = node(0, 0.0, 1, false);
        let req = initiate(&zero, NodeId(1), 0, &cfg, Authentication::Off, &mut rng).unwrap();
        let plain = zero.keys.paillier.private.decrypt(&req.enc_neg_state).unwrap();
        assert_eq!(plain, Plaintext::from(0));
    }

    #[test]
    fn worked_exchange() {
        let cfg = FixedConfig::default();
        let i = node(0, 1.0, 1, false);
        let j = node(1, 2.0, 2, false);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let req = initiate(&i, j.id, 3, &cfg, Authentication::Off, &mut rng).unwrap();
        let resp = respond(&req, &j, &draw(0.5, 3), &cfg, Authentication::Off, &mut rng).unwrap();
        let out = finalize(&resp, &i, Some(&draw(0.4, 3)), &cfg, Authentication::Off).unwrap();
        assert!((out.partial - 0.5).abs() <= 2e-5);
        assert!((out.value - 0.2).abs() <= 1e-4);
        assert_eq!(out.neighbor_id, NodeId(1));

        let unit = finalize(&resp, &i, None, &cfg, Authentication::Off).unwrap();
        assert_eq!(unit.value, unit.partial);
    }

    #[test]
    fn equal_states_cancel_exactly() {
        let cfg = FixedConfig::default();
        let i = node(0, std::f64::consts::E, 1, false);
        let j = node(1, std::f64::consts::E, 2, false);
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let req = initiate(&i, j.id, 0, &cfg, Authentication::Off, &mut rng).unwrap();
        let resp = respond(&req, &j, &draw(0.7, 0), &cfg, Authentication::Off, &mut rng).unwrap();
        let out = finalize(&resp, &i, Some(&draw(0.3, 0)), &cfg, Authentication::Off).unwrap();
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn directions_nearly_cancel() {
        let cfg = FixedConfig::default();
        let i = node(0, 1.234567, 1, false);
        let j = node(1, -5.4321, 2, false);
        let (a_i, a_j) = (draw(0.613, 2), draw(0.287, 2));
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let auth = Authentication::Off;
        let req = initiate(&i, j.id, 2, &cfg, auth, &mut rng).unwrap();
        let resp = respond(&req, &j, &a_j, &cfg, auth, &mut rng).unwrap();
        let ij = finalize(&resp, &i, Some(&a_i), &cfg, auth).unwrap();
        let req = initiate(&j, i.id, 2, &cfg, auth, &mut rng).unwrap();
        let resp = respond(&req, &i, &a_i, &cfg, auth, &mut rng).unwrap();
        let ji = finalize(&resp, &j, Some(&a_j), &cfg, auth).unwrap();
        // only the rounding of each side's weight word separates the two
        let h = 0.5 / cfg.weight_scale as f64;
        let d = 5.4321 + 1.234567 + 1.0 / cfg.state_scale as f64;
        assert!((ij.value + ji.value).abs() <= d * h * (0.613 + 0.287));
        let exact = 0.613 * 0.287 * (-5.4321 - 1.234567);
        assert!((ij.value - exact).abs() <= exchange_error_bound(Some(0.613), 0.287, -6.666667, &cfg));
    }

    #[test]
    fn stale_draw_and_misaddressing_rejected() {
        let cfg = FixedConfig::default();
        let i = node(0, 1.0, 1, false);
        let j = node(1, 2.0, 2, false);
        let k = node(2, 2.0, 3, false);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let req = initiate(&i, j.id, 4, &cfg, Authentication::Off, &mut rng).unwrap();
        assert!(matches!(
            respond(&req, &j, &draw(0.5, 3), &cfg, Authentication::Off, &mut rng),
            Err(ProtocolError::StaleDraw { .. })
        ));
        assert!(matches!(
            respond(&req, &k, &draw(0.5, 4), &cfg, Authentication::Off, &mut rng),
            Err(ProtocolError::Misaddressed { .. })
        ));
    }

    #[test]
    fn signed_request_detects_every_byte_flip() {
        let cfg = FixedConfig::default();
        let i = node(0, 1.0, 1, true);
        let j = node(1, 2.0, 2, true);
        let mut registry = SignerRegistry::new();
        registry.register(i.id, i.keys.signing.as_ref().unwrap().verification_key());
        registry.register(j.id, j.keys.signing.as_ref().unwrap().verification_key());
        let auth = Authentication::Signed(&registry);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let req = initiate(&i, j.id, 0, &cfg, auth, &mut rng).unwrap();
        let bytes = req.canonical_bytes();
        let block = req.signature.as_ref().unwrap();
        assert!(registry.check(i.id, &bytes, Some(block)).is_ok());
        for pos in 0..bytes.len() {
            let mut corrupted = bytes.clone();
            corrupted[pos] ^= 0x5a;
            assert!(registry.check(i.id, &corrupted, Some(block)).is_err(), "byte {pos}");
        }
        assert!(respond(&req, &j, &draw(0.5, 0), &cfg, auth, &mut rng).is_ok());
    }

    #[test]
    fn homomorphic_injection_is_rejected_when_signed() {
        let cfg = FixedConfig::default();
        let i = node(0, 1.0, 1, true);
        let j = node(1, 2.0, 2, true);
        let mut registry = SignerRegistry::new();
        registry.register(i.id, i.keys.signing.as_ref().unwrap().verification_key());
        registry.register(j.id, j.keys.signing.as_ref().unwrap().verification_key());
        let auth = Authentication::Signed(&registry);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut req = initiate(&i, j.id, 0, &cfg, auth, &mut rng).unwrap();
        let pk = req.sender_key.clone();
        let noise = pk
            .encrypt(&encode(5.0, cfg.state_scale, &cfg).unwrap().to_plaintext(), &mut rng)
            .unwrap();
        req.enc_neg_state = pk.add(&req.enc_neg_state, &noise).unwrap();
        assert!(matches!(
            respond(&req, &j, &draw(0.5, 0), &cfg, auth, &mut rng),
            Err(ProtocolError::Tampered { .. })
        ));

        // the attacker re-signs with its own key pair
        let eve_key = SigningKey::generate(512, &mut rng).unwrap();
        req.signature = Some(sign(&req.canonical_bytes(), &eve_key));
        assert!(matches!(
            respond(&req, &j, &draw(0.5, 0), &cfg, auth, &mut rng),
            Err(ProtocolError::Tampered { .. })
        ));

        req.signature = None;
        assert!(matches!(
            respond(&req, &j, &draw(0.5, 0), &cfg, auth, &mut rng),
            Err(ProtocolError::Tampered { .. })
        ));
    }

    #[test]
    fn quantized_reference_matches_encrypted_path() {
        let cfg = FixedConfig::default();
        let i = node(0, -3.25, 1, false);
        let j = node(1, 7.125, 2, false);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let req = initiate(&i, j.id, 0, &cfg, Authentication::Off, &mut rng).unwrap();
        let resp = respond(&req, &j, &draw(0.61, 0), &cfg, Authentication::Off, &mut rng).unwrap();
        let out = finalize(&resp, &i, Some(&draw(0.37, 0)), &cfg, Authentication::Off).unwrap();
        let reference = quantized_exchange(-3.25, 7.125, Some(0.37), 0.61, &cfg).unwrap();
        assert_eq!(out.partial, reference.partial);
        assert_eq!(out.value, reference.value);
    }
}

//! Real <-> fixed-width integer codec for Paillier plaintexts.
//!
//! Reals are scaled, rounded and stored as `word_width`-bit two's-complement
//! words. Encrypted arithmetic treats those words as unsigned; after
//! decryption only the low `word_width` bits are kept, which restores the
//! signed result as long as nothing wrapped modulo `n`.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::paillier::Plaintext;

pub const DEFAULT_SCALE: u64 = 100_000;
pub const DEFAULT_WORD_WIDTH: u32 = 64;

#[derive(Debug, Error, PartialEq)]
pub enum FixedPointError {
    #[error("{value} * {scale} does not fit in a signed {width}-bit word")]
    Range { value: f64, scale: u64, width: u32 },
    #[error("invalid fixed-point configuration: {0}")]
    Config(String),
}

/// How a scaled real is mapped onto the integer grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    /// Nearest integer, ties away from zero.
    #[default]
    Nearest,
    Floor,
    Ceil,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedConfig {
    pub state_scale: u64,
    pub weight_scale: u64,
    pub word_width: u32,
    /// Rounding applied to states; weights always round to nearest.
    pub rounding: Rounding,
}

impl Default for FixedConfig {
    fn default() -> Self {
        FixedConfig {
            state_scale: DEFAULT_SCALE,
            weight_scale: DEFAULT_SCALE,
            word_width: DEFAULT_WORD_WIDTH,
            rounding: Rounding::Nearest,
        }
    }
}

impl FixedConfig {
    pub fn with_rounding(self, rounding: Rounding) -> Self {
        FixedConfig { rounding, ..self }
    }

    pub fn validate(&self) -> Result<(), FixedPointError> {
        if self.state_scale == 0 || self.weight_scale == 0 {
            return Err(FixedPointError::Config("scales must be at least 1".into()));
        }
        if !(8..=128).contains(&self.word_width) {
            return Err(FixedPointError::Config(format!(
                "word width must be in [8, 128], got {}",
                self.word_width
            )));
        }
        Ok(())
    }

    /// Scale carried by a decrypted weighted difference.
    pub fn total_scale(&self) -> u128 {
        self.state_scale as u128 * self.weight_scale as u128
    }

    /// Checks that one exchange cannot wrap modulo a `key_bits`-bit `n`.
    ///
    /// The responder adds two words (`< 2^(W+1)`) and raises the result to
    /// a word-sized exponent, so the plaintext stays below `2^(2W+1)`; any
    /// modulus with at least `2W + 2` bits exceeds that.
    pub fn check_key_budget(&self, key_bits: u64) -> Result<(), FixedPointError> {
        let needed = 2 * self.word_width as u64 + 2;
        if key_bits < needed {
            return Err(FixedPointError::Config(format!(
                "{key_bits}-bit keys are too small for {}-bit words (need at least {needed} bits)",
                self.word_width
            )));
        }
        Ok(())
    }

    /// Checks that a weighted difference of states bounded by `max_abs_state`
    /// still fits in a signed word.
    pub fn check_state_budget(&self, max_abs_state: f64) -> Result<(), FixedPointError> {
        let limit = 2f64.powi(self.word_width as i32 - 1);
        // |X_j - X_i| <= 2 * (max|x| * N + 1), weight word <= M
        let worst = 2.0 * (max_abs_state * self.state_scale as f64 + 1.0) * self.weight_scale as f64;
        if !(worst < limit) {
            return Err(FixedPointError::Config(format!(
                "states up to {max_abs_state} overflow {}-bit weighted differences",
                self.word_width
            )));
        }
        Ok(())
    }
}

/// A `width`-bit word, read as two's complement when interpreted as signed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EncodedValue {
    bits: u128,
    width: u32,
}

fn mask(width: u32) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

impl EncodedValue {
    pub fn from_bits(bits: u128, width: u32) -> Self {
        assert!((1..=128).contains(&width), "word width out of range");
        EncodedValue {
            bits: bits & mask(width),
            width,
        }
    }

    /// Two's-complement word for a signed integer; wraps like a cast.
    pub fn from_signed(v: i128, width: u32) -> Self {
        EncodedValue::from_bits(v as u128, width)
    }

    pub fn bits(&self) -> u128 {
        self.bits
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn to_signed(&self) -> i128 {
        if self.width == 128 {
            return self.bits as i128;
        }
        let sign = 1u128 << (self.width - 1);
        if self.bits & sign != 0 {
            self.bits as i128 - (1i128 << self.width)
        } else {
            self.bits as i128
        }
    }

    /// The word read as an unsigned plaintext.
    pub fn to_plaintext(&self) -> Plaintext {
        Plaintext::new(BigUint::from(self.bits))
    }

    /// The word read as an unsigned exponent.
    pub fn to_biguint(&self) -> BigUint {
        BigUint::from(self.bits)
    }
}

/// `round(x * scale)` as a `word_width`-bit two's-complement word.
pub fn encode(x: f64, scale: u64, cfg: &FixedConfig) -> Result<EncodedValue, FixedPointError> {
    encode_rounded(x, scale, cfg.word_width, cfg.rounding)
}

/// [`encode`] with an explicit rounding rule.
pub fn encode_rounded(
    x: f64,
    scale: u64,
    word_width: u32,
    rounding: Rounding,
) -> Result<EncodedValue, FixedPointError> {
    let scaled = x * scale as f64;
    let rounded = match rounding {
        Rounding::Nearest => scaled.round(),
        Rounding::Floor => scaled.floor(),
        Rounding::Ceil => scaled.ceil(),
    };
    let limit = 2f64.powi(word_width as i32 - 1);
    if !(rounded.abs() < limit) {
        return Err(FixedPointError::Range {
            value: x,
            scale,
            width: word_width,
        });
    }
    // rounded is integral and |rounded| < 2^127, so the cast is exact
    Ok(EncodedValue::from_signed(rounded as i128, word_width))
}

/// Signed value of `v` divided by `total_scale`.
pub fn decode(v: EncodedValue, total_scale: u128) -> f64 {
    v.to_signed() as f64 / total_scale as f64
}

/// Keeps the low `word_width` bits of a decrypted plaintext.
pub fn reduce_after_decrypt(m: &Plaintext, cfg: &FixedConfig) -> EncodedValue {
    let digits = m.value().to_u64_digits();
    let low = digits.first().copied().unwrap_or(0) as u128
        | (digits.get(1).copied().unwrap_or(0) as u128) << 64;
    EncodedValue::from_bits(low, cfg.word_width)
}

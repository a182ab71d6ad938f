//! Timing of one directional exchange.

use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::consensus::NodeState;
use crate::fixedpoint::FixedConfig;
use crate::paillier::{KeyPair, PaillierError};
use crate::protocol::{finalize, initiate, respond, Authentication, NodeKeys, ProtocolError, WeightDraw};
use crate::rng::{derive_stream, Purpose};
use crate::NodeId;

pub const MIN_REPETITIONS: usize = 10;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("need at least {MIN_REPETITIONS} repetitions, got {0}")]
    TooFewRepetitions(usize),
    #[error(transparent)]
    Keys(#[from] PaillierError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub key_bits: u64,
    pub repetitions: usize,
    pub word_width: u32,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

/// Fixed-point settings for a key size. Keys too small for the default
/// 64-bit words get the widest word they can hold, which is enough for
/// timing but not for correct results.
pub fn bench_config(key_bits: u64) -> FixedConfig {
    let default = FixedConfig::default();
    if default.check_key_budget(key_bits).is_ok() {
        return default;
    }
    FixedConfig {
        word_width: (key_bits.saturating_sub(2) / 2).clamp(8, 64) as u32,
        state_scale: 4,
        weight_scale: 4,
        ..default
    }
}

/// Times initiate, respond and finalize between two fresh nodes.
pub fn bench_exchange(key_bits: u64, repetitions: usize, seed: u64) -> Result<BenchReport, BenchError> {
    if repetitions < MIN_REPETITIONS {
        return Err(BenchError::TooFewRepetitions(repetitions));
    }
    let cfg = bench_config(key_bits);
    let node = |id: u32, x: f64| -> Result<NodeState, BenchError> {
        let mut rng = derive_stream(seed, Purpose::PaillierKey, &[id as u64]);
        let keys = NodeKeys {
            paillier: KeyPair::generate(key_bits, &mut rng)?,
            signing: None,
        };
        Ok(NodeState::new(NodeId(id), x, 1.0, keys))
    };
    let (i, j) = (node(0, 1.0)?, node(1, 2.0)?);
    let mut rng = derive_stream(seed, Purpose::Encryption, &[]);
    let auth = Authentication::Off;
    let mut samples = Vec::with_capacity(repetitions);
    for round in 0..repetitions as u64 {
        let a_i = WeightDraw { a: 0.4, drawn_at: round };
        let a_j = WeightDraw { a: 0.5, drawn_at: round };
        let start = Instant::now();
        let req = initiate(&i, j.id, round, &cfg, auth, &mut rng)?;
        let resp = respond(&req, &j, &a_j, &cfg, auth, &mut rng)?;
        std::hint::black_box(finalize(&resp, &i, Some(&a_i), &cfg, auth)?);
        samples.push(start.elapsed());
    }
    Ok(summarize(key_bits, cfg.word_width, samples))
}

fn summarize(key_bits: u64, word_width: u32, mut samples: Vec<Duration>) -> BenchReport {
    samples.sort();
    let ms = |d: Duration| d.as_secs_f64() * 1e3;
    let n = samples.len();
    let median = if n % 2 == 1 {
        ms(samples[n / 2])
    } else {
        (ms(samples[n / 2 - 1]) + ms(samples[n / 2])) / 2.0
    };
    BenchReport {
        key_bits,
        repetitions: n,
        word_width,
        mean_ms: samples.iter().map(|&d| ms(d)).sum::<f64>() / n as f64,
        median_ms: median,
        min_ms: ms(samples[0]),
        max_ms: ms(samples[n - 1]),
    }
}

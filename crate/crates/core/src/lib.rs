//! Privacy-preserving network consensus.
//!
//! Nodes agree on the average, weighted average, maximum or minimum of their
//! states without revealing them. Each pairwise exchange runs under the
//! initiator's Paillier key, so a neighbor only ever returns a weighted,
//! encrypted difference that the initiator decrypts.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod consensus;
pub mod fixedpoint;
pub mod network;
pub mod paillier;
pub mod primes;
pub mod privacy_analysis;
pub mod protocol;
pub mod rng;
pub mod scenarios;

use serde::{Deserialize, Serialize};

/// Index of a node in `0..n_nodes`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(u32::try_from(i).expect("node index fits in u32"))
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

//! Curious and active adversaries.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::trace::RunTrace;
use crate::fixedpoint::{encode, FixedConfig};
use crate::paillier::{Ciphertext, PublicKey};
use crate::privacy_analysis::AdversaryView;
use crate::protocol::ProtocolError;
use crate::NodeId;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversaryConfig {
    /// Honest-but-curious nodes whose views can be collected.
    pub curious: BTreeSet<NodeId>,
    /// Groups of curious nodes that pool their views.
    pub collusion: Vec<BTreeSet<NodeId>>,
    /// Sign every message and check signatures against registered keys.
    pub signatures: bool,
    pub tamper: Vec<TamperSpec>,
}

/// Additive injection into the request `from` sends to `to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TamperSpec {
    pub from: NodeId,
    pub to: NodeId,
    pub xi: f64,
    /// Rounds to tamper with; every round when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<Vec<u64>>,
    /// Re-sign the modified message with the attacker's own key.
    #[serde(default)]
    pub resign: bool,
}

impl TamperSpec {
    pub fn applies(&self, round: u64, from: NodeId, to: NodeId) -> bool {
        self.from == from
            && self.to == to
            && self.rounds.as_ref().is_none_or(|r| r.contains(&round))
    }
}

impl AdversaryConfig {
    pub fn tamper_for(&self, round: u64, from: NodeId, to: NodeId) -> Option<&TamperSpec> {
        self.tamper.iter().find(|t| t.applies(round, from, to))
    }
}

/// Shifts the plaintext under `c` by `xi`, using only public material.
pub fn tamper<R: Rng + ?Sized>(
    c: &Ciphertext,
    xi: f64,
    pk: &PublicKey,
    cfg: &FixedConfig,
    rng: &mut R,
) -> Result<Ciphertext, ProtocolError> {
    let shift = encode(xi, cfg.state_scale, cfg)?;
    let noise = pk.encrypt(&shift.to_plaintext(), rng)?;
    Ok(pk.add(c, &noise)?)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AdversaryError {
    #[error("no adversary nodes given")]
    Empty,
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("node {0} is not marked curious")]
    NotCurious(NodeId),
    #[error("nodes {0:?} do not share a collusion set")]
    NotColluding(Vec<NodeId>),
}

/// Everything the given curious node, or colluding group, legitimately
/// saw during the run.
pub fn eavesdrop_collect(
    trace: &RunTrace,
    adversary: &[NodeId],
) -> Result<AdversaryView, AdversaryError> {
    let scenario = &trace.scenario;
    let cfg = &scenario.adversary;
    let observers: BTreeSet<NodeId> = adversary.iter().copied().collect();
    if observers.is_empty() {
        return Err(AdversaryError::Empty);
    }
    for &id in &observers {
        if id.index() >= scenario.n_nodes {
            return Err(AdversaryError::UnknownNode(id));
        }
        if !cfg.curious.contains(&id) {
            return Err(AdversaryError::NotCurious(id));
        }
    }
    if observers.len() > 1 && !cfg.collusion.iter().any(|g| observers.is_subset(g)) {
        return Err(AdversaryError::NotColluding(observers.into_iter().collect()));
    }

    let column = |id: NodeId, rows: &[Vec<f64>]| rows.iter().map(|r| r[id.index()]).collect();
    let own_draws: BTreeMap<NodeId, Vec<f64>> = observers
        .iter()
        .map(|&id| (id, column(id, &trace.draws)))
        .collect();
    let own_states: BTreeMap<NodeId, Vec<f64>> = observers
        .iter()
        .map(|&id| (id, column(id, &trace.states)))
        .collect();
    let final_value = observers
        .iter()
        .map(|id| trace.final_states()[id.index()])
        .sum::<f64>()
        / observers.len() as f64;

    Ok(AdversaryView {
        observations: trace
            .observations
            .iter()
            .filter(|o| observers.contains(&o.observer))
            .copied()
            .collect(),
        channel_ciphertexts: trace
            .messages
            .iter()
            .filter(|m| observers.contains(&m.from) || observers.contains(&m.to))
            .cloned()
            .collect(),
        own_draws,
        own_states,
        final_value,
        observers,
        n_nodes: scenario.n_nodes,
        rule: scenario.rule,
        topology: scenario
            .topology
            .build(scenario.n_nodes)
            .expect("trace scenario was validated"),
        rounds_observed: trace.rounds_run(),
        tolerance: scenario.tolerance,
        quantization: match trace.engine {
            super::trace::Engine::Encrypted => Some(scenario.effective_fixed()),
            super::trace::Engine::PlaintextOracle => None,
        },
    })
}

//! Run records and their file formats.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::Serialize;

use super::scenario::Scenario;
use super::topology::Edge;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Paillier-encrypted exchanges over fixed-point words.
    Encrypted,
    /// Exact real arithmetic with the same weight draws.
    PlaintextOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Request,
    Response,
}

/// One message as it crossed the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageRecord {
    pub round: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub kind: MessageKind,
    pub ciphertext: Vec<u8>,
}

/// What an initiator decrypted in one exchange.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub round: u64,
    pub observer: NodeId,
    pub neighbor: NodeId,
    /// `a_j (x_j - x_i)` as decrypted.
    pub partial: f64,
    /// The contribution after the observer's own multiplier.
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TamperEvent {
    pub round: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub xi: f64,
    pub resigned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub round: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub reason: String,
}

/// Complete record of one run. Ground truth such as every node's weight
/// draws is kept for analysis; adversaries see only what
/// [`eavesdrop_collect`](super::adversary::eavesdrop_collect) extracts.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub scenario: Scenario,
    pub engine: Engine,
    /// `states[k][i]` is node `i` before round `k`'s update.
    pub states: Vec<Vec<f64>>,
    /// `draws[k][i]` is node `i`'s multiplier in round `k`.
    pub draws: Vec<Vec<f64>>,
    pub messages: Vec<MessageRecord>,
    pub observations: Vec<Observation>,
    pub tamper_events: Vec<TamperEvent>,
    pub rejections: Vec<Rejection>,
    /// Edges whose contributions were applied, per round.
    pub applied_edges: Vec<Vec<Edge>>,
    pub converged_round: Option<u64>,
    pub warnings: Vec<String>,
}

impl RunTrace {
    pub fn rounds_run(&self) -> u64 {
        self.states.len() as u64 - 1
    }

    pub fn final_states(&self) -> &[f64] {
        self.states.last().expect("trace holds the initial states")
    }

    pub fn converged(&self) -> bool {
        self.converged_round.is_some()
    }

    /// Consensus estimate: the weighted mean of the final states under the
    /// weighted rule, the plain mean otherwise.
    pub fn final_value(&self) -> f64 {
        let x = self.final_states();
        let w = self.scenario.node_weights();
        let total: f64 = w.iter().sum();
        x.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / total
    }

    /// `round,node,state` lines, header first. States use the shortest
    /// representation that parses back to the same value.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "round,node,state")?;
        for (k, states) in self.states.iter().enumerate() {
            for (i, x) in states.iter().enumerate() {
                writeln!(out, "{k},{i},{x:?}")?;
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> RunSummary {
        let mut view_sizes = BTreeMap::new();
        for id in &self.scenario.adversary.curious {
            let n = self.observations.iter().filter(|o| o.observer == *id).count();
            view_sizes.insert(id.0, n);
        }
        RunSummary {
            scenario: self.scenario.name.clone(),
            seed: self.scenario.seed,
            engine: self.engine,
            final_value: self.final_value(),
            final_spread: crate::consensus::spread(self.final_states()),
            converged: self.converged(),
            convergence_round: self.converged_round,
            rounds_run: self.rounds_run(),
            messages: self.messages.len(),
            tamper_events: self.tamper_events.len(),
            detections: self.rejections.len(),
            adversary_view_sizes: view_sizes,
            warnings: self.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub engine: Engine,
    pub final_value: f64,
    pub final_spread: f64,
    pub converged: bool,
    pub convergence_round: Option<u64>,
    pub rounds_run: u64,
    pub messages: usize,
    pub tamper_events: usize,
    pub detections: usize,
    /// Observations per curious node, keyed by node id.
    pub adversary_view_sizes: BTreeMap<u32, usize>,
    pub warnings: Vec<String>,
}

//! What a curious node can and cannot infer from its view of a run.
//!
//! An eavesdropper `E` learns `a_j (x_j - x_E)` from every exchange it
//! initiates, its own draws and states, and the final consensus value. When
//! `E` is a target's only neighbor that is enough to recover the target's
//! initial state. With two legitimate neighbors the system has more
//! unknowns than equations, and [`find_witness`] exhibits a second initial
//! state that explains the same view.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::consensus::{Rule, RuleConfig};
use crate::fixedpoint::FixedConfig;
use crate::network::topology::TopologySchedule;
use crate::network::trace::{MessageRecord, Observation, RunTrace};
use crate::NodeId;

#[derive(Debug, Error, PartialEq)]
pub enum PrivacyError {
    #[error("analysis precondition violated: {0}")]
    Contract(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Exactly what a curious node, or a colluding group, saw.
#[derive(Debug, Clone)]
pub struct AdversaryView {
    pub observers: BTreeSet<NodeId>,
    /// Decrypted differences from exchanges the observers initiated.
    pub observations: Vec<Observation>,
    /// Each observer's multiplier per round.
    pub own_draws: BTreeMap<NodeId, Vec<f64>>,
    /// Each observer's state trajectory, initial state first.
    pub own_states: BTreeMap<NodeId, Vec<f64>>,
    /// Ciphertexts on channels incident to an observer.
    pub channel_ciphertexts: Vec<MessageRecord>,
    /// The observers' final state, taken as the consensus value.
    pub final_value: f64,
    /// Network size, assumed known to the adversary.
    pub n_nodes: usize,
    pub rule: RuleConfig,
    pub topology: TopologySchedule,
    /// Number of rounds with observations; the last observed round is one less.
    pub rounds_observed: u64,
    /// Convergence tolerance of the run.
    pub tolerance: f64,
    /// Fixed-point settings when the view comes from encrypted exchanges.
    pub quantization: Option<FixedConfig>,
}

impl AdversaryView {
    pub fn observation(&self, round: u64, neighbor: NodeId) -> Option<&Observation> {
        self.observations
            .iter()
            .find(|o| o.round == round && o.neighbor == neighbor)
    }

    /// Observations counted as scalar equations.
    pub fn num_observations(&self) -> usize {
        self.observations.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Configuration {
    /// The adversary `E` has two honest neighbors `A` and `B`.
    TwoLegitimateNeighbors,
    /// The adversary is the only neighbor of `A`.
    Leaf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EquationLedger {
    pub num_equations: usize,
    pub num_unknowns: usize,
    pub equation_labels: Vec<String>,
    pub unknown_labels: Vec<String>,
    pub solvable: bool,
}

/// Equations and unknowns available to the adversary over rounds `0..=k`.
pub fn ledger_for_configuration(config: Configuration, k: u64) -> EquationLedger {
    let rounds = 0..=k;
    let (equation_labels, unknown_labels): (Vec<String>, Vec<String>) = match config {
        Configuration::TwoLegitimateNeighbors => {
            let mut eq: Vec<String> = rounds.clone().map(|r| format!("dx_EA[{r}]")).collect();
            eq.extend(rounds.clone().map(|r| format!("dx_EB[{r}]")));
            eq.push("x_A[0] + x_B[0] + x_E[0] = 3 alpha".into());
            let mut unk = vec!["x_A[0]".to_string(), "x_B[0]".to_string()];
            unk.extend(rounds.clone().map(|r| format!("a_A[{r}]")));
            unk.extend(rounds.map(|r| format!("a_B[{r}]")));
            (eq, unk)
        }
        Configuration::Leaf => {
            let mut eq: Vec<String> = rounds.clone().map(|r| format!("dx_EA[{r}]")).collect();
            eq.push("x_A[K] = alpha".into());
            let mut unk = vec!["x_A[0]".to_string()];
            unk.extend(rounds.map(|r| format!("a_A[{r}]")));
            (eq, unk)
        }
    };
    EquationLedger {
        num_equations: equation_labels.len(),
        num_unknowns: unknown_labels.len(),
        solvable: equation_labels.len() >= unknown_labels.len(),
        equation_labels,
        unknown_labels,
    }
}

/// Recovers the initial state of `target` when every neighbor it ever has
/// belongs to the adversary: `x_A[0] = alpha + epsilon * sum_k dx_EA[k]`.
pub fn infer_leaf_initial_state(view: &AdversaryView, target: NodeId) -> Result<f64, PrivacyError> {
    if view.rule.rule != Rule::Average {
        return Err(PrivacyError::Contract(
            "leaf recovery applies to the average rule".into(),
        ));
    }
    if target.index() >= view.n_nodes || view.observers.contains(&target) {
        return Err(PrivacyError::Contract(format!(
            "node {target} is not an honest node of this network"
        )));
    }
    let neighbors = view.topology.all_neighbors(target);
    if neighbors.is_empty() {
        return Err(PrivacyError::Contract(format!("node {target} has no neighbors")));
    }
    if let Some(outside) = neighbors.iter().find(|j| !view.observers.contains(j)) {
        return Err(PrivacyError::Contract(format!(
            "node {target} also talks to honest node {outside}"
        )));
    }
    let total: f64 = view
        .observations
        .iter()
        .filter(|o| o.neighbor == target)
        .map(|o| o.value)
        .sum();
    Ok(view.final_value + view.rule.epsilon * total)
}

/// Per-round Perron matrix `I - epsilon * D^-1 L(a_i a_j)` in `order`
/// coordinates, with `D` the node weights (identity for plain averaging).
pub fn perron_matrix(
    topology: &TopologySchedule,
    round: u64,
    draws: &[f64],
    epsilon: f64,
    node_weights: &[f64],
    order: &[NodeId],
) -> DMatrix<f64> {
    let n = order.len();
    let col: BTreeMap<NodeId, usize> = order.iter().enumerate().map(|(c, &id)| (id, c)).collect();
    let mut p = DMatrix::identity(n, n);
    for e in topology.edges_at(round) {
        let (Some(&u), Some(&v)) = (col.get(&e.a), col.get(&e.b)) else {
            continue;
        };
        let w = draws[e.a.index()] * draws[e.b.index()];
        let (wu, wv) = (node_weights[e.a.index()], node_weights[e.b.index()]);
        p[(u, v)] += epsilon * w / wu;
        p[(u, u)] -= epsilon * w / wu;
        p[(v, u)] += epsilon * w / wv;
        p[(v, v)] -= epsilon * w / wv;
    }
    p
}

/// Ground-truth inputs for the observability system; test harness only.
#[derive(Debug, Clone)]
pub struct ObservabilityInputs {
    pub adversary: NodeId,
    /// Column order of the state vector.
    pub order: Vec<NodeId>,
    /// `draws[k][i]`, every node, rounds `0..=K`.
    pub draws: Vec<Vec<f64>>,
    /// `P^(k)` for rounds `0..K`.
    pub perron: Vec<DMatrix<f64>>,
    pub topology: TopologySchedule,
    /// Last observed round `K`.
    pub last_round: u64,
}

impl ObservabilityInputs {
    /// Reads the draws and Perron matrices of `trace` up to round `last_round`.
    pub fn from_trace(
        trace: &RunTrace,
        adversary: NodeId,
        order: Vec<NodeId>,
        last_round: u64,
    ) -> Self {
        let scenario = &trace.scenario;
        let topology = scenario
            .topology
            .build(scenario.n_nodes)
            .expect("trace scenario was validated");
        let weights = scenario.node_weights();
        let perron = (0..last_round)
            .map(|k| {
                perron_matrix(
                    &topology,
                    k,
                    &trace.draws[k as usize],
                    scenario.rule.epsilon,
                    &weights,
                    &order,
                )
            })
            .collect();
        ObservabilityInputs {
            adversary,
            order,
            draws: trace.draws[..=last_round as usize].to_vec(),
            perron,
            topology,
            last_round,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ObservabilityRecord {
    /// `C_E^(k)` for rounds `0..=K`.
    pub c_blocks: Vec<DMatrix<f64>>,
    pub perron: Vec<DMatrix<f64>>,
    /// `(round, neighbor)` for each stacked row.
    pub row_labels: Vec<(u64, NodeId)>,
    pub stacked: DMatrix<f64>,
}

impl ObservabilityRecord {
    /// Predicted observations for initial state `x0` (in column order).
    pub fn predict(&self, x0: &DVector<f64>) -> DVector<f64> {
        &self.stacked * x0
    }
}

/// Stacks `C^(0)`, `C^(1) P^(0)`, ..., `C^(K) P^(K-1) ... P^(0)`.
pub fn build_observability(inputs: &ObservabilityInputs) -> Result<ObservabilityRecord, PrivacyError> {
    let n = inputs.order.len();
    let k_last = inputs.last_round as usize;
    let all: BTreeSet<NodeId> = inputs.order.iter().copied().collect();
    let expected: BTreeSet<NodeId> = (0..inputs.topology.n_nodes()).map(NodeId::from).collect();
    if all != expected || all.len() != n {
        return Err(PrivacyError::Dimension(format!(
            "column order {:?} is not a permutation of the {} nodes",
            inputs.order,
            inputs.topology.n_nodes()
        )));
    }
    if inputs.draws.len() != k_last + 1 || inputs.perron.len() != k_last {
        return Err(PrivacyError::Dimension(format!(
            "need {} rounds of draws and {} Perron matrices, got {} and {}",
            k_last + 1,
            k_last,
            inputs.draws.len(),
            inputs.perron.len()
        )));
    }
    if let Some(p) = inputs.perron.iter().find(|p| p.shape() != (n, n)) {
        return Err(PrivacyError::Dimension(format!(
            "Perron matrix is {:?}, expected {n}x{n}",
            p.shape()
        )));
    }
    if let Some(d) = inputs.draws.iter().find(|d| d.len() != n) {
        return Err(PrivacyError::Dimension(format!("{} draws for {n} nodes", d.len())));
    }

    let e = inputs.adversary;
    let col_e = inputs
        .order
        .iter()
        .position(|&id| id == e)
        .ok_or_else(|| PrivacyError::Dimension(format!("adversary {e} not in column order")))?;
    let mut c_blocks = Vec::with_capacity(k_last + 1);
    let mut row_labels = Vec::new();
    let mut rows: Vec<DMatrix<f64>> = Vec::new();
    let mut product = DMatrix::identity(n, n);
    for k in 0..=k_last {
        let neighbors: Vec<(usize, NodeId)> = inputs
            .order
            .iter()
            .enumerate()
            .filter(|(_, &id)| inputs.topology.neighbors_at(k as u64, e).contains(&id))
            .map(|(c, &id)| (c, id))
            .collect();
        let a_e = inputs.draws[k][e.index()];
        let mut c = DMatrix::zeros(neighbors.len(), n);
        for (r, &(col, id)) in neighbors.iter().enumerate() {
            let w = a_e * inputs.draws[k][id.index()];
            c[(r, col)] = w;
            c[(r, col_e)] = -w;
            row_labels.push((k as u64, id));
        }
        rows.push(&c * &product);
        c_blocks.push(c);
        if k < k_last {
            product = &inputs.perron[k] * product;
        }
    }
    let total: usize = rows.iter().map(|r| r.nrows()).sum();
    let mut stacked = DMatrix::zeros(total, n);
    let mut at = 0;
    for r in &rows {
        stacked.rows_mut(at, r.nrows()).copy_from(r);
        at += r.nrows();
    }
    Ok(ObservabilityRecord {
        c_blocks,
        perron: inputs.perron.clone(),
        row_labels,
        stacked,
    })
}

/// Candidate scores at or below this explain the view.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-12;

/// How far `candidate` (initial states of every node) is from explaining
/// `view` when the honest nodes' draws are free. Zero means consistent.
///
/// The check replays the run forward: each round the honest draws are
/// solved from the observed differences, must land in `[a_min, a_bar]`,
/// and drive the candidate trajectory; at the end every node must sit at
/// the consensus value and the initial states must sum to `n` times it.
/// Requires a plaintext-oracle view with a single observer adjacent to
/// every honest node that interacts in a round. Quantized views are
/// refused: draws solved from rounded differences absorb the rounding, so
/// even the true states would not replay exactly.
pub fn residual_attack_check(view: &AdversaryView, candidate: &[f64]) -> Result<f64, PrivacyError> {
    let n = view.n_nodes;
    if candidate.len() != n {
        return Err(PrivacyError::Dimension(format!(
            "{} candidate states for {n} nodes",
            candidate.len()
        )));
    }
    if view.rule.rule != Rule::Average {
        return Err(PrivacyError::Contract("the check models the average rule".into()));
    }
    if view.quantization.is_some() {
        return Err(PrivacyError::Contract(
            "the check needs exact observations from a plaintext-oracle view".into(),
        ));
    }
    let e = match view.observers.iter().collect::<Vec<_>>()[..] {
        [&e] => e,
        _ => return Err(PrivacyError::Contract("the check models a single observer".into())),
    };
    let states_e = &view.own_states[&e];
    let draws_e = &view.own_draws[&e];
    let eps = view.rule.epsilon;
    let (a_min, a_bar) = (view.rule.a_min, view.rule.a_bar);

    let mut score = (candidate[e.index()] - states_e[0]).abs();
    let mut x = candidate.to_vec();
    for k in 0..view.rounds_observed {
        let x_e = states_e[k as usize];
        let mut a = vec![f64::NAN; n];
        a[e.index()] = draws_e[k as usize];
        let edges = view.topology.edges_at(k);
        for j in (0..n).map(NodeId::from).filter(|&j| j != e) {
            let active = edges.iter().any(|ed| ed.touches(j));
            if !active {
                continue;
            }
            let Some(obs) = view.observation(k, j) else {
                return Err(PrivacyError::Contract(format!(
                    "node {j} interacts in round {k} without the observer"
                )));
            };
            let d = x[j.index()] - x_e;
            let p = obs.partial;
            let allow = 1e-13 * (1.0 + d.abs());
            let a_j = if d != 0.0 { (p / d).clamp(a_min, a_bar) } else { a_bar };
            score = score.max((a_j * d - p).abs() - allow);
            a[j.index()] = a_j;
        }
        let mut next = x.clone();
        for ed in edges {
            let (u, v) = (ed.a.index(), ed.b.index());
            let xu = if ed.a == e { x_e } else { x[u] };
            let xv = if ed.b == e { x_e } else { x[v] };
            let flow = eps * a[u] * a[v] * (xv - xu);
            next[u] += flow;
            next[v] -= flow;
        }
        next[e.index()] = states_e[k as usize + 1];
        x = next;
    }
    let final_allowance = view.tolerance;
    for (j, xj) in x.iter().enumerate() {
        if j != e.index() {
            score = score.max((xj - view.final_value).abs() - final_allowance);
        }
    }
    let total: f64 = candidate.iter().sum();
    let sum_allowance = n as f64 * final_allowance;
    score = score.max((total - n as f64 * view.final_value).abs() - sum_allowance);
    Ok(score.max(0.0))
}

/// A second explanation of the view, found by moving mass between two
/// honest nodes so the sum constraint still holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub states: Vec<f64>,
    /// Largest coordinate difference from the reference.
    pub distance: f64,
    pub score: f64,
}

/// Searches for a consistent initial state other than `reference`, which
/// must itself be consistent. Tries shifts `+t / -t` on the first two
/// honest nodes, halving `t` from 1 down to `min_distance`.
pub fn find_witness(
    view: &AdversaryView,
    reference: &[f64],
    min_distance: f64,
) -> Result<Option<Witness>, PrivacyError> {
    if residual_attack_check(view, reference)? > CONSISTENCY_TOLERANCE {
        return Err(PrivacyError::Contract("reference states do not explain the view".into()));
    }
    let honest: Vec<usize> = (0..view.n_nodes)
        .filter(|i| !view.observers.contains(&NodeId::from(*i)))
        .collect();
    let [u, v, ..] = honest[..] else {
        return Err(PrivacyError::Contract("need at least two honest nodes".into()));
    };
    let mut t = 1.0;
    while t >= min_distance {
        for shift in [t, -t] {
            let mut states = reference.to_vec();
            states[u] += shift;
            states[v] -= shift;
            let score = residual_attack_check(view, &states)?;
            if score <= CONSISTENCY_TOLERANCE {
                let distance = (states[u] - reference[u]).abs().max((states[v] - reference[v]).abs());
                return Ok(Some(Witness {
                    states,
                    distance,
                    score,
                }));
            }
        }
        t /= 2.0;
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_counts() {
        let l = ledger_for_configuration(Configuration::TwoLegitimateNeighbors, 3);
        assert_eq!((l.num_equations, l.num_unknowns, l.solvable), (9, 10, false));
        let l = ledger_for_configuration(Configuration::Leaf, 3);
        assert_eq!((l.num_equations, l.num_unknowns, l.solvable), (5, 5, true));
        let l = ledger_for_configuration(Configuration::TwoLegitimateNeighbors, 0);
        assert_eq!((l.num_equations, l.num_unknowns), (3, 4));
        assert_eq!(l.equation_labels.len(), l.num_equations);
        assert_eq!(l.unknown_labels.len(), l.num_unknowns);
    }

    #[test]
    fn perron_rows_sum_to_one() {
        let ring = TopologySchedule::ring(4);
        let order: Vec<NodeId> = (0..4).map(NodeId::from).collect();
        let p = perron_matrix(&ring, 0, &[0.5, 0.6, 0.7, 0.8], 0.5, &[1.0; 4], &order);
        for r in 0..4 {
            assert!((p.row(r).sum() - 1.0).abs() < 1e-15);
            assert!(p.row(r).iter().all(|&v| v >= 0.0));
        }
        assert!((p[(0, 1)] - 0.5 * 0.5 * 0.6).abs() < 1e-15);
        assert_eq!(p, p.transpose());
    }
}

//! Discrete-time update rules and their parameter bounds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::topology::TopologySchedule;
use crate::protocol::{NodeKeys, WeightedDifference};
use crate::NodeId;

#[derive(Debug, Error, PartialEq)]
pub enum ConsensusError {
    #[error("node weight must be positive, got {0}")]
    NonPositiveWeight(f64),
    #[error("pairwise terms for node {0} lack the self term")]
    MissingSelfTerm(NodeId),
    #[error("mixed rounds in one update: expected {expected}, found {found}")]
    MixedRounds { expected: u64, found: u64 },
}

/// Per-node simulation state.
#[derive(Clone, Debug)]
pub struct NodeState {
    pub id: NodeId,
    pub x: f64,
    /// Weight for weighted averaging; 1 under the other rules.
    pub w: f64,
    pub keys: NodeKeys,
}

impl NodeState {
    pub fn new(id: NodeId, x: f64, w: f64, keys: NodeKeys) -> Self {
        NodeState { id, x, w, keys }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Average,
    WeightedAverage,
    Max,
    Min,
}

impl Rule {
    /// Max and min drop the initiator's multiplier.
    pub fn uses_initiator_weight(self) -> bool {
        matches!(self, Rule::Average | Rule::WeightedAverage)
    }

    pub fn uses_step_size(self) -> bool {
        self.uses_initiator_weight()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleConfig {
    pub rule: Rule,
    /// Step size; ignored by max/min.
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_a_min")]
    pub a_min: f64,
    #[serde(default = "default_a_bar")]
    pub a_bar: f64,
}

fn default_a_min() -> f64 {
    0.01
}

fn default_a_bar() -> f64 {
    0.99
}

fn check_round(diffs: &[WeightedDifference]) -> Result<(), ConsensusError> {
    if let Some(first) = diffs.first() {
        if let Some(other) = diffs.iter().find(|d| d.round != first.round) {
            return Err(ConsensusError::MixedRounds {
                expected: first.round,
                found: other.round,
            });
        }
    }
    Ok(())
}

/// `x_i + epsilon * sum(diffs)`.
pub fn update_average(
    x_i: f64,
    diffs: &[WeightedDifference],
    epsilon: f64,
) -> Result<f64, ConsensusError> {
    check_round(diffs)?;
    Ok(x_i + epsilon * diffs.iter().map(|d| d.value).sum::<f64>())
}

/// `x_i + (epsilon / w_i) * sum(diffs)`.
pub fn update_weighted(
    x_i: f64,
    diffs: &[WeightedDifference],
    epsilon: f64,
    w_i: f64,
) -> Result<f64, ConsensusError> {
    if !(w_i > 0.0) {
        return Err(ConsensusError::NonPositiveWeight(w_i));
    }
    check_round(diffs)?;
    Ok(x_i + epsilon / w_i * diffs.iter().map(|d| d.value).sum::<f64>())
}

fn self_term_present(node: NodeId, pairwise: &[WeightedDifference]) -> bool {
    pairwise
        .iter()
        .any(|d| d.neighbor_id == node && d.value == 0.0)
}

/// The zero-valued term a node contributes to its own max/min update.
pub fn self_term(node: NodeId, round: u64) -> WeightedDifference {
    WeightedDifference {
        value: 0.0,
        partial: 0.0,
        neighbor_id: node,
        round,
    }
}

/// `x_i + max(pairwise)`; `pairwise` must contain the node's self term.
pub fn update_max(
    node: NodeId,
    x_i: f64,
    pairwise: &[WeightedDifference],
) -> Result<f64, ConsensusError> {
    if !self_term_present(node, pairwise) {
        return Err(ConsensusError::MissingSelfTerm(node));
    }
    check_round(pairwise)?;
    let step = pairwise.iter().map(|d| d.value).fold(0.0, f64::max);
    Ok(x_i + step)
}

/// `x_i + min(pairwise)`; `pairwise` must contain the node's self term.
pub fn update_min(
    node: NodeId,
    x_i: f64,
    pairwise: &[WeightedDifference],
) -> Result<f64, ConsensusError> {
    if !self_term_present(node, pairwise) {
        return Err(ConsensusError::MissingSelfTerm(node));
    }
    check_round(pairwise)?;
    let step = pairwise.iter().map(|d| d.value).fold(0.0, f64::min);
    Ok(x_i + step)
}

/// Outcome of [`validate_rule_config`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleCheck {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl RuleCheck {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks step size and weight bounds against the schedule's max degree.
///
/// `epsilon = 1 / max_degree` is accepted with a warning: with `a_bar < 1`
/// every effective edge weight `epsilon * a_i * a_j` stays strictly below
/// `1 / max_degree`. For weighted averaging the bound scales with the
/// smallest node weight. `node_weights` may be empty for the other rules.
pub fn validate_rule_config(
    cfg: &RuleConfig,
    topology: &TopologySchedule,
    node_weights: &[f64],
) -> RuleCheck {
    let mut check = RuleCheck::default();
    if !(cfg.a_min > 0.0 && cfg.a_min < cfg.a_bar) {
        check.violations.push(format!(
            "weight bounds must satisfy 0 < a_min < a_bar, got a_min={} a_bar={}",
            cfg.a_min, cfg.a_bar
        ));
    }
    if !(cfg.a_bar > 0.0 && cfg.a_bar < 1.0) {
        check
            .violations
            .push(format!("a_bar must lie in (0, 1), got {}", cfg.a_bar));
    }
    if !cfg.rule.uses_step_size() {
        return check;
    }

    let max_degree = topology.max_degree();
    let min_weight = match cfg.rule {
        Rule::WeightedAverage => {
            if let Some(w) = node_weights.iter().find(|w| !(**w > 0.0)) {
                check
                    .violations
                    .push(format!("node weights must be positive, got {w}"));
                return check;
            }
            node_weights.iter().copied().fold(f64::INFINITY, f64::min)
        }
        _ => 1.0,
    };
    if !(cfg.epsilon > 0.0) {
        check
            .violations
            .push(format!("epsilon must be positive, got {}", cfg.epsilon));
        return check;
    }
    if max_degree == 0 || !min_weight.is_finite() {
        return check;
    }
    let bound = min_weight / max_degree as f64;
    let rel = (cfg.epsilon - bound) / bound;
    if rel > 1e-12 {
        check.violations.push(format!(
            "epsilon {} exceeds {bound} (max degree {max_degree})",
            cfg.epsilon
        ));
    } else if rel.abs() <= 1e-12 {
        check.warnings.push(format!(
            "epsilon {} sits exactly on the bound {bound}; accepted because a_bar < 1",
            cfg.epsilon
        ));
    }
    check
}

/// `max - min` over the given states.
pub fn spread(states: &[f64]) -> f64 {
    let (lo, hi) = states
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if states.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

//! Scenario files: everything needed to reproduce one run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::adversary::AdversaryConfig;
use super::topology::{Edge, TopologySchedule, TopologySpec};
use crate::consensus::{validate_rule_config, Rule, RuleConfig};
use crate::fixedpoint::{FixedConfig, Rounding};
use crate::paillier::{DEFAULT_KEY_BITS, MIN_KEY_BITS};
use crate::protocol::signature::{DEFAULT_SIGNING_BITS, MIN_SIGNING_BITS};
use crate::NodeId;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyRotation {
    /// One key pair per node for the whole run.
    #[default]
    Static,
    /// Fresh Paillier keys for every node at the start of every round.
    PerRound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeySpec {
    pub bits: u64,
    pub signing_bits: u64,
    pub rotation: KeyRotation,
}

impl Default for KeySpec {
    fn default() -> Self {
        KeySpec {
            bits: DEFAULT_KEY_BITS,
            signing_bits: DEFAULT_SIGNING_BITS,
            rotation: KeyRotation::Static,
        }
    }
}

pub const DEFAULT_MAX_ROUNDS: u64 = 200;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

fn default_max_rounds() -> u64 {
    DEFAULT_MAX_ROUNDS
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub n_nodes: usize,
    pub initial_states: Vec<f64>,
    /// Node weights; required by the weighted-average rule only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    pub rule: RuleConfig,
    pub topology: TopologySpec,
    #[serde(default)]
    pub keys: KeySpec,
    #[serde(default)]
    pub fixed: FixedConfig,
    #[serde(default)]
    pub adversary: AdversaryConfig,
}

/// A scenario that passed validation, with its derived pieces.
#[derive(Debug, Clone)]
pub struct Validated {
    pub topology: TopologySchedule,
    /// The fixed-point settings the engine uses, with the rule's rounding.
    pub fixed: FixedConfig,
    pub weights: Vec<f64>,
    pub warnings: Vec<String>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Max and min round states toward the extreme they track so the
    /// extreme itself never moves; averaging keeps the configured mode.
    pub fn effective_fixed(&self) -> FixedConfig {
        match self.rule.rule {
            Rule::Max => self.fixed.with_rounding(Rounding::Floor),
            Rule::Min => self.fixed.with_rounding(Rounding::Ceil),
            Rule::Average | Rule::WeightedAverage => self.fixed,
        }
    }

    /// Node weights, all 1 unless the scenario supplies them.
    pub fn node_weights(&self) -> Vec<f64> {
        self.weights
            .clone()
            .unwrap_or_else(|| vec![1.0; self.n_nodes])
    }

    /// Collects every problem with the scenario rather than stopping at
    /// the first.
    pub fn validate(&self) -> Result<Validated, ScenarioError> {
        let mut problems = Vec::new();
        let mut warnings = Vec::new();
        let n = self.n_nodes;

        if n == 0 {
            problems.push("n_nodes must be at least 1".to_string());
        }
        if self.initial_states.len() != n {
            problems.push(format!(
                "initial_states has {} entries for {n} nodes",
                self.initial_states.len()
            ));
        }
        if let Some(x) = self.initial_states.iter().find(|x| !x.is_finite()) {
            problems.push(format!("initial state {x} is not finite"));
        }
        match (&self.weights, self.rule.rule) {
            (None, Rule::WeightedAverage) => {
                problems.push("weighted_average needs a weights list".to_string())
            }
            (Some(w), _) if w.len() != n => {
                problems.push(format!("weights has {} entries for {n} nodes", w.len()))
            }
            (Some(w), _) if w.iter().any(|w| !(*w > 0.0 && w.is_finite())) => {
                problems.push("weights must be positive and finite".to_string())
            }
            _ => {}
        }
        if !(self.tolerance > 0.0) {
            problems.push(format!("tolerance must be positive, got {}", self.tolerance));
        }

        let topology = match self.topology.build(n) {
            Ok(t) => Some(t),
            Err(e) => {
                problems.push(format!("topology: {e}"));
                None
            }
        };
        let weights = self.node_weights();
        if let Some(t) = &topology {
            let check = validate_rule_config(&self.rule, t, &weights);
            problems.extend(check.violations);
            warnings.extend(check.warnings);
            if let Some(w) = t.check_union_connectivity(self.topology.connectivity_window) {
                warnings.push(format!("connectivity: {w}"));
            }
        }

        let fixed = self.effective_fixed();
        if let Err(e) = fixed.validate() {
            problems.push(e.to_string());
        } else {
            if let Err(e) = fixed.check_key_budget(self.keys.bits) {
                problems.push(e.to_string());
            }
            let max_state = self
                .initial_states
                .iter()
                .fold(0.0f64, |m, x| m.max(x.abs()));
            let max_xi = self
                .adversary
                .tamper
                .iter()
                .fold(0.0f64, |m, t| m.max(t.xi.abs()));
            if let Err(e) = fixed.check_state_budget(max_state + max_xi) {
                problems.push(e.to_string());
            }
        }
        if self.keys.bits < MIN_KEY_BITS || !self.keys.bits.is_multiple_of(2) {
            problems.push(format!(
                "key bits must be even and at least {MIN_KEY_BITS}, got {}",
                self.keys.bits
            ));
        }
        if self.adversary.signatures
            && (self.keys.signing_bits < MIN_SIGNING_BITS || !self.keys.signing_bits.is_multiple_of(2))
        {
            problems.push(format!(
                "signing bits must be even and at least {MIN_SIGNING_BITS}, got {}",
                self.keys.signing_bits
            ));
        }

        self.validate_adversary(topology.as_ref(), &mut problems);

        match topology {
            Some(topology) if problems.is_empty() => Ok(Validated {
                topology,
                fixed,
                weights,
                warnings,
            }),
            _ => Err(ScenarioError::Invalid(problems)),
        }
    }

    fn validate_adversary(&self, topology: Option<&TopologySchedule>, problems: &mut Vec<String>) {
        let n = self.n_nodes;
        let adv = &self.adversary;
        let out_of_range = |id: &NodeId| id.index() >= n;
        if let Some(id) = adv.curious.iter().find(|id| out_of_range(id)) {
            problems.push(format!("curious node {id} does not exist"));
        }
        for group in &adv.collusion {
            if let Some(id) = group.iter().find(|id| !adv.curious.contains(id)) {
                problems.push(format!("colluding node {id} is not marked curious"));
            }
        }
        for (i, a) in adv.collusion.iter().enumerate() {
            for b in &adv.collusion[i + 1..] {
                if let Some(id) = a.intersection(b).next() {
                    problems.push(format!("node {id} is in more than one collusion set"));
                }
            }
        }
        for t in &adv.tamper {
            if out_of_range(&t.from) || out_of_range(&t.to) || t.from == t.to {
                problems.push(format!("tamper entry {} -> {} is not an edge", t.from, t.to));
                continue;
            }
            if !t.xi.is_finite() {
                problems.push(format!("tamper xi {} is not finite", t.xi));
            }
            let edge = Edge::new(t.from, t.to);
            let Some(topology) = topology else { continue };
            match &t.rounds {
                None if !topology.ever_contains(edge) => problems.push(format!(
                    "tamper edge {} -> {} is never scheduled",
                    t.from, t.to
                )),
                Some(rounds) => {
                    if let Some(k) = rounds.iter().find(|&&k| !topology.is_active(k, edge)) {
                        problems.push(format!(
                            "tamper edge {} -> {} is not scheduled in round {k}",
                            t.from, t.to
                        ));
                    }
                }
                None => {}
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RING: &str = r#"
name = "ring"
seed = 7
n_nodes = 4
initial_states = [1.0, 2.0, 4.0, 8.0]

[rule]
rule = "average"
epsilon = 0.5

[topology]
mode = "static"
edges = [[0, 1], [1, 2], [2, 3], [3, 0]]
"#;

    #[test]
    fn parses_with_defaults() {
        let s = Scenario::from_toml_str(RING).unwrap();
        assert_eq!(s.max_rounds, 200);
        assert_eq!(s.tolerance, 1e-4);
        assert_eq!(s.keys.bits, 256);
        assert_eq!(s.fixed, FixedConfig::default());
        assert!(!s.adversary.signatures);
        let v = s.validate().unwrap();
        assert_eq!(v.topology.max_degree(), 2);
        assert_eq!(v.warnings.len(), 1, "epsilon on the bound warns");
    }

    #[test]
    fn toml_roundtrip() {
        let s = Scenario::from_toml_str(RING).unwrap();
        assert_eq!(Scenario::from_toml_str(&s.to_toml_string()).unwrap(), s);
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = format!("{RING}\n[keys]\nbitz = 3\n");
        assert!(matches!(
            Scenario::from_toml_str(&text),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn all_problems_reported() {
        let mut s = Scenario::from_toml_str(RING).unwrap();
        s.initial_states.pop();
        s.rule.epsilon = 0.9;
        s.keys.bits = 64;
        s.adversary.curious.insert(NodeId(9));
        let Err(ScenarioError::Invalid(problems)) = s.validate() else {
            panic!("scenario should be invalid");
        };
        assert_eq!(problems.len(), 4, "{problems:?}");
    }

    #[test]
    fn tamper_must_reference_a_scheduled_edge() {
        let text = format!(
            "{RING}\n[adversary]\ntamper = [{{ from = 0, to = 2, xi = 5.0 }}]\n"
        );
        let s = Scenario::from_toml_str(&text).unwrap();
        assert!(s.validate().is_err());
        let text = format!(
            "{RING}\n[adversary]\ntamper = [{{ from = 0, to = 1, xi = 5.0, rounds = [0, 3] }}]\n"
        );
        assert!(Scenario::from_toml_str(&text).unwrap().validate().is_ok());
    }

    #[test]
    fn extreme_rules_use_directed_rounding() {
        let mut s = Scenario::from_toml_str(RING).unwrap();
        s.rule.rule = Rule::Max;
        assert_eq!(s.effective_fixed().rounding, Rounding::Floor);
        s.rule.rule = Rule::Min;
        assert_eq!(s.effective_fixed().rounding, Rounding::Ceil);
    }

    #[test]
    fn weighted_rule_needs_weights() {
        let mut s = Scenario::from_toml_str(RING).unwrap();
        s.rule.rule = Rule::WeightedAverage;
        assert!(s.validate().is_err());
        s.weights = Some(vec![0.1, 0.2, 0.3, 0.4]);
        s.rule.epsilon = 0.05;
        assert!(s.validate().is_ok());
    }
}

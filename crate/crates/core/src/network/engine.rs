//! Synchronous round driver.

use thiserror::Error;

use super::adversary::tamper;
use super::scenario::{KeyRotation, Scenario, ScenarioError};
use super::topology::Edge;
use super::trace::{
    Engine, MessageKind, MessageRecord, Observation, Rejection, RunTrace, TamperEvent,
};
use crate::consensus::{
    self, spread, update_average, update_max, update_min, update_weighted, ConsensusError,
    NodeState, Rule,
};
use crate::fixedpoint::FixedConfig;
use crate::paillier::{KeyPair, PaillierError};
use crate::protocol::signature::{sign, SignatureError, SignerRegistry, SigningKey};
use crate::protocol::{
    draw_weight, finalize, initiate, respond, Authentication, NodeKeys, ProtocolError,
    WeightDraw, WeightedDifference,
};
use crate::rng::{derive_stream, Purpose};
use crate::NodeId;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("key generation for node {node}: {source}")]
    Keys { node: NodeId, source: PaillierError },
    #[error("signing key generation: {0}")]
    Signing(#[from] SignatureError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
}

/// Runs `scenario` with encrypted exchanges.
pub fn run(scenario: &Scenario) -> Result<RunTrace, RunError> {
    run_with(scenario, Engine::Encrypted)
}

enum Outcome {
    Accepted(WeightedDifference),
    Rejected,
}

struct Crypto {
    nodes: Vec<NodeState>,
    registry: SignerRegistry,
    attacker: Option<SigningKey>,
}

struct Driver<'a> {
    scenario: &'a Scenario,
    cfg: FixedConfig,
    crypto: Option<Crypto>,
    trace: RunTrace,
}

fn paillier_keys(scenario: &Scenario, node: usize, round: u64) -> Result<KeyPair, RunError> {
    let path: &[u64] = match scenario.keys.rotation {
        KeyRotation::Static => &[node as u64],
        KeyRotation::PerRound => &[node as u64, round],
    };
    let mut rng = derive_stream(scenario.seed, Purpose::PaillierKey, path);
    KeyPair::generate(scenario.keys.bits, &mut rng).map_err(|source| RunError::Keys {
        node: NodeId::from(node),
        source,
    })
}

impl<'a> Driver<'a> {
    fn setup_crypto(scenario: &Scenario, weights: &[f64]) -> Result<Crypto, RunError> {
        let signatures = scenario.adversary.signatures;
        let mut registry = SignerRegistry::new();
        let mut nodes = Vec::with_capacity(scenario.n_nodes);
        for (i, &weight) in weights.iter().enumerate() {
            let id = NodeId::from(i);
            let signing = if signatures {
                let mut rng = derive_stream(scenario.seed, Purpose::SigningKey, &[i as u64]);
                let key = SigningKey::generate(scenario.keys.signing_bits, &mut rng)?;
                registry.register(id, key.verification_key());
                Some(key)
            } else {
                None
            };
            let keys = NodeKeys {
                paillier: paillier_keys(scenario, i, 0)?,
                signing,
            };
            nodes.push(NodeState::new(id, scenario.initial_states[i], weight, keys));
        }
        let attacker = if signatures && scenario.adversary.tamper.iter().any(|t| t.resign) {
            let mut rng = derive_stream(scenario.seed, Purpose::Tamper, &[u64::MAX]);
            Some(SigningKey::generate(scenario.keys.signing_bits, &mut rng)?)
        } else {
            None
        };
        Ok(Crypto {
            nodes,
            registry,
            attacker,
        })
    }

    fn exchange(
        &mut self,
        round: u64,
        from: NodeId,
        to: NodeId,
        x: &[f64],
        draws: &[f64],
    ) -> Result<Outcome, RunError> {
        let tamper_spec = self.scenario.adversary.tamper_for(round, from, to).cloned();
        let signatures = self.scenario.adversary.signatures;
        if let Some(t) = &tamper_spec {
            self.trace.tamper_events.push(TamperEvent {
                round,
                from,
                to,
                xi: t.xi,
                resigned: t.resign && signatures,
            });
        }
        let uses_own = self.scenario.rule.rule.uses_initiator_weight();
        let a_i = WeightDraw {
            a: draws[from.index()],
            drawn_at: round,
        };
        let a_j = WeightDraw {
            a: draws[to.index()],
            drawn_at: round,
        };

        let Some(crypto) = &self.crypto else {
            // plaintext oracle: signatures catch every modification
            if tamper_spec.is_some() && signatures {
                self.reject(round, from, to, "signature does not match payload");
                return Ok(Outcome::Rejected);
            }
            let xi = tamper_spec.map_or(0.0, |t| t.xi);
            let partial = a_j.a * (x[to.index()] - x[from.index()] + xi);
            let value = if uses_own { a_i.a * partial } else { partial };
            return Ok(Outcome::Accepted(WeightedDifference {
                value,
                partial,
                neighbor_id: to,
                round,
            }));
        };

        let auth = if signatures {
            Authentication::Signed(&crypto.registry)
        } else {
            Authentication::Off
        };
        let initiator = &crypto.nodes[from.index()];
        let responder = &crypto.nodes[to.index()];
        let mut rng = derive_stream(
            self.scenario.seed,
            Purpose::Encryption,
            &[round, from.0 as u64, to.0 as u64],
        );
        let mut req = initiate(initiator, to, round, &self.cfg, auth, &mut rng)?;
        if let Some(t) = &tamper_spec {
            let mut trng = derive_stream(
                self.scenario.seed,
                Purpose::Tamper,
                &[round, from.0 as u64, to.0 as u64],
            );
            req.enc_neg_state = tamper(&req.enc_neg_state, t.xi, &req.sender_key, &self.cfg, &mut trng)?;
            if let (true, Some(key)) = (t.resign, &crypto.attacker) {
                req.signature = Some(sign(&req.canonical_bytes(), key));
            }
        }
        let request_bytes = req.enc_neg_state.to_bytes();
        self.trace.messages.push(MessageRecord {
            round,
            from,
            to,
            kind: MessageKind::Request,
            ciphertext: request_bytes,
        });

        let resp = match respond(&req, responder, &a_j, &self.cfg, auth, &mut rng) {
            Ok(resp) => resp,
            Err(ProtocolError::Tampered { reason, .. }) => {
                self.reject(round, from, to, reason);
                return Ok(Outcome::Rejected);
            }
            Err(e) => return Err(e.into()),
        };
        let own = uses_own.then_some(&a_i);
        let result = finalize(&resp, initiator, own, &self.cfg, auth);
        self.trace.messages.push(MessageRecord {
            round,
            from: to,
            to: from,
            kind: MessageKind::Response,
            ciphertext: resp.enc_weighted_diff.to_bytes(),
        });
        match result {
            Ok(diff) => Ok(Outcome::Accepted(diff)),
            Err(ProtocolError::Tampered { reason, .. }) => {
                self.reject(round, to, from, reason);
                Ok(Outcome::Rejected)
            }
            Err(e) => Err(e.into()),
        }
    }

    fn reject(&mut self, round: u64, from: NodeId, to: NodeId, reason: &str) {
        self.trace.rejections.push(Rejection {
            round,
            from,
            to,
            reason: reason.to_string(),
        });
    }

    fn observe(&mut self, observer: NodeId, diff: &WeightedDifference) {
        self.trace.observations.push(Observation {
            round: diff.round,
            observer,
            neighbor: diff.neighbor_id,
            partial: diff.partial,
            value: diff.value,
        });
    }
}

/// Runs `scenario` on the chosen engine. Both engines share weight draws,
/// so their trajectories differ only by quantization.
pub fn run_with(scenario: &Scenario, engine: Engine) -> Result<RunTrace, RunError> {
    let validated = scenario.validate()?;
    let n = scenario.n_nodes;
    let rule = scenario.rule;
    let crypto = match engine {
        Engine::Encrypted => Some(Driver::setup_crypto(scenario, &validated.weights)?),
        Engine::PlaintextOracle => None,
    };
    let mut driver = Driver {
        scenario,
        cfg: validated.fixed,
        crypto,
        trace: RunTrace {
            scenario: scenario.clone(),
            engine,
            states: vec![scenario.initial_states.clone()],
            draws: Vec::new(),
            messages: Vec::new(),
            observations: Vec::new(),
            tamper_events: Vec::new(),
            rejections: Vec::new(),
            applied_edges: Vec::new(),
            converged_round: None,
            warnings: validated.warnings.clone(),
        },
    };

    for k in 0..scenario.max_rounds {
        if k > 0 && scenario.keys.rotation == KeyRotation::PerRound {
            if let Some(crypto) = &mut driver.crypto {
                for (i, node) in crypto.nodes.iter_mut().enumerate() {
                    node.keys.paillier = paillier_keys(scenario, i, k)?;
                }
            }
        }
        let x = driver.trace.states.last().expect("initial states").clone();
        let draws = (0..n)
            .map(|i| {
                let mut rng = derive_stream(scenario.seed, Purpose::WeightDraw, &[i as u64, k]);
                draw_weight(&mut rng, rule.a_min, rule.a_bar, k).map(|d| d.a)
            })
            .collect::<Result<Vec<f64>, _>>()?;

        let mut terms: Vec<Vec<WeightedDifference>> = vec![Vec::new(); n];
        let mut applied: Vec<Edge> = Vec::new();
        for &edge in validated.topology.edges_at(k) {
            let forward = driver.exchange(k, edge.a, edge.b, &x, &draws)?;
            let backward = driver.exchange(k, edge.b, edge.a, &x, &draws)?;
            if let Outcome::Accepted(d) = &forward {
                driver.observe(edge.a, d);
            }
            if let Outcome::Accepted(d) = &backward {
                driver.observe(edge.b, d);
            }
            // a rejection on either side voids the edge for this round
            if let (Outcome::Accepted(f), Outcome::Accepted(b)) = (forward, backward) {
                terms[edge.a.index()].push(f);
                terms[edge.b.index()].push(b);
                applied.push(edge);
            }
        }

        let mut next = Vec::with_capacity(n);
        for (i, mut diffs) in terms.into_iter().enumerate() {
            let id = NodeId::from(i);
            let value = match rule.rule {
                Rule::Average => update_average(x[i], &diffs, rule.epsilon)?,
                Rule::WeightedAverage => {
                    update_weighted(x[i], &diffs, rule.epsilon, validated.weights[i])?
                }
                Rule::Max => {
                    diffs.push(consensus::self_term(id, k));
                    update_max(id, x[i], &diffs)?
                }
                Rule::Min => {
                    diffs.push(consensus::self_term(id, k));
                    update_min(id, x[i], &diffs)?
                }
            };
            next.push(value);
        }
        if let Some(crypto) = &mut driver.crypto {
            for (node, &v) in crypto.nodes.iter_mut().zip(&next) {
                node.x = v;
            }
        }
        let settled = spread(&x) < scenario.tolerance && spread(&next) < scenario.tolerance;
        driver.trace.states.push(next);
        driver.trace.draws.push(draws);
        driver.trace.applied_edges.push(applied);
        if settled {
            driver.trace.converged_round = Some(k + 1);
            break;
        }
    }
    Ok(driver.trace)
}

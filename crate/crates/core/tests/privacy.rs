use nalgebra::DVector;
use rand::Rng;

use privcon::network::{eavesdrop_collect, run, run_with, Engine, Scenario};
use privcon::privacy_analysis::{
    build_observability, find_witness, infer_leaf_initial_state, ledger_for_configuration,
    residual_attack_check, Configuration, ObservabilityInputs, PrivacyError, CONSISTENCY_TOLERANCE,
};
use privcon::rng::{derive_stream, Purpose};
use privcon::{scenarios, NodeId};

const ALICE: NodeId = NodeId(0);
const BOB: NodeId = NodeId(1);
const EVE_LEAF: NodeId = NodeId(1);
const EVE: NodeId = NodeId(2);

fn bundled(name: &str) -> Scenario {
    scenarios::load(name).unwrap().unwrap()
}

#[test]
fn leaf_attack_recovers_initial_state() {
    let s = bundled("leaf_attack");
    let t = run(&s).unwrap();
    assert!(t.converged());
    let view = eavesdrop_collect(&t, &[EVE_LEAF]).unwrap();
    let recovered = infer_leaf_initial_state(&view, ALICE).unwrap();
    assert!((recovered - 4.0).abs() < 1e-3, "recovered {recovered}");
}

#[test]
fn leaf_attack_with_equal_states_is_exact() {
    let mut s = bundled("leaf_attack");
    s.initial_states = vec![2.5, 2.5];
    let t = run(&s).unwrap();
    let view = eavesdrop_collect(&t, &[EVE_LEAF]).unwrap();
    assert!(view.observations.iter().all(|o| o.value == 0.0));
    assert_eq!(infer_leaf_initial_state(&view, ALICE).unwrap(), 2.5);
}

#[test]
fn leaf_attack_refuses_triangle() {
    let t = run(&bundled("triangle_eavesdrop")).unwrap();
    let view = eavesdrop_collect(&t, &[EVE]).unwrap();
    assert!(matches!(
        infer_leaf_initial_state(&view, ALICE),
        Err(PrivacyError::Contract(_))
    ));
    assert!(infer_leaf_initial_state(&view, EVE).is_err());
}

#[test]
fn view_size_matches_ledger() {
    for k in 0..=20u64 {
        let mut tri = bundled("triangle_eavesdrop");
        tri.max_rounds = k + 1;
        tri.tolerance = 1e-300;
        let t = run_with(&tri, Engine::PlaintextOracle).unwrap();
        let view = eavesdrop_collect(&t, &[EVE]).unwrap();
        let ledger = ledger_for_configuration(Configuration::TwoLegitimateNeighbors, k);
        assert_eq!(view.num_observations(), ledger.num_equations - 1);
        assert!(!ledger.solvable);

        let mut leaf = bundled("leaf_attack");
        leaf.max_rounds = k + 1;
        leaf.tolerance = 1e-300;
        let t = run_with(&leaf, Engine::PlaintextOracle).unwrap();
        let view = eavesdrop_collect(&t, &[EVE_LEAF]).unwrap();
        let ledger = ledger_for_configuration(Configuration::Leaf, k);
        assert_eq!(view.num_observations(), ledger.num_equations - 1);
        assert!(ledger.solvable);
    }
}

fn triangle_observability(k: u64) -> (privcon::privacy_analysis::ObservabilityRecord, Vec<f64>, Vec<f64>) {
    let mut s = bundled("triangle_eavesdrop");
    s.max_rounds = k + 1;
    s.tolerance = 1e-300;
    let t = run_with(&s, Engine::PlaintextOracle).unwrap();
    let inputs = ObservabilityInputs::from_trace(&t, EVE, vec![ALICE, BOB, EVE], k);
    let record = build_observability(&inputs).unwrap();
    let observed: Vec<f64> = record
        .row_labels
        .iter()
        .map(|&(round, j)| {
            t.observations
                .iter()
                .find(|o| o.observer == EVE && o.round == round && o.neighbor == j)
                .unwrap()
                .value
        })
        .collect();
    (record, observed, s.initial_states)
}

#[test]
fn observability_reproduces_observations() {
    let (record, observed, x0) = triangle_observability(2);
    assert_eq!(record.stacked.shape(), (6, 3));
    let predicted = record.predict(&DVector::from_vec(x0));
    for (p, o) in predicted.iter().zip(&observed) {
        assert!((p - o).abs() < 1e-6, "{p} vs {o}");
    }
}

#[test]
fn observability_at_round_zero_is_c0() {
    let (record, _, _) = triangle_observability(0);
    assert_eq!(record.stacked, record.c_blocks[0]);
    assert!(record.perron.is_empty());
}

#[test]
fn leaf_observability_shape() {
    let mut s = bundled("leaf_attack");
    s.max_rounds = 2;
    let t = run_with(&s, Engine::PlaintextOracle).unwrap();
    let inputs = ObservabilityInputs::from_trace(&t, EVE_LEAF, vec![ALICE, EVE_LEAF], 1);
    let record = build_observability(&inputs).unwrap();
    assert_eq!(record.stacked.shape(), (2, 2));

    let bad = ObservabilityInputs {
        order: vec![ALICE],
        ..inputs.clone()
    };
    assert!(matches!(build_observability(&bad), Err(PrivacyError::Dimension(_))));
    let short = ObservabilityInputs {
        perron: vec![],
        ..inputs
    };
    assert!(matches!(build_observability(&short), Err(PrivacyError::Dimension(_))));
}

fn random_triangle(seed: u64) -> Scenario {
    let mut s = bundled("triangle_eavesdrop");
    s.seed = seed;
    let mut rng = derive_stream(seed, Purpose::Scenario, &[]);
    s.initial_states = (0..3).map(|_| rng.gen_range(-10.0..10.0)).collect();
    s
}

#[test]
fn truth_is_consistent_and_witness_exists() {
    for seed in 0..5 {
        let s = random_triangle(seed);
        let t = run_with(&s, Engine::PlaintextOracle).unwrap();
        let view = eavesdrop_collect(&t, &[EVE]).unwrap();
        assert!(residual_attack_check(&view, &s.initial_states).unwrap() <= CONSISTENCY_TOLERANCE);
        let witness = find_witness(&view, &s.initial_states, 1e-12).unwrap().unwrap();
        assert!(witness.distance >= 1e-12);
        assert_ne!(witness.states, s.initial_states);
        let sum: f64 = witness.states.iter().sum();
        assert!((sum - s.initial_states.iter().sum::<f64>()).abs() < 1e-9);
    }
}

#[test]
fn sum_violations_are_inconsistent() {
    let s = random_triangle(1);
    let t = run_with(&s, Engine::PlaintextOracle).unwrap();
    let view = eavesdrop_collect(&t, &[EVE]).unwrap();
    let mut shifted = s.initial_states.clone();
    shifted[0] += 0.5;
    assert!(residual_attack_check(&view, &shifted).unwrap() > 1e-3);
    let mut wrong_eve = s.initial_states.clone();
    wrong_eve[2] += 1.0;
    wrong_eve[0] -= 1.0;
    assert!(residual_attack_check(&view, &wrong_eve).unwrap() > 0.5);
}

#[test]
fn residual_check_refuses_quantized_views() {
    let t = run(&bundled("triangle_eavesdrop")).unwrap();
    let view = eavesdrop_collect(&t, &[EVE]).unwrap();
    assert!(matches!(
        residual_attack_check(&view, &[3.0, 7.0, 5.0]),
        Err(PrivacyError::Contract(_))
    ));
}

mod common;

use comply_core::automata::model_to_automaton;
use comply_core::automata::{rule_to_automaton, Emptiness, FiniteAutomaton};
use comply_core::decomposition::{decompose_auto, DecomposeOptions, Status};
use comply_core::process_model::{generate_random_choreography, plant_rule, GeneratorParams, LabelMode, PlantedShape};
use comply_core::rule_model::{evaluate_rule, Trace};
use comply_core::verification::{check_local_compliance, model_automaton_satisfies, verify_decomposition, Outcome};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BARE: LabelMode = LabelMode::Bare;
const LETTERS: [&str; 4] = ["A", "B", "C", "D"];

fn alphabet() -> Vec<String> {
    LETTERS.iter().map(|s| s.to_string()).collect()
}

fn rule_automaton(seed: u64, nodes: usize) -> FiniteAutomaton {
    let r = common::random_rule(&mut ChaCha8Rng::seed_from_u64(seed), &LETTERS, nodes);
    rule_to_automaton(&r, &alphabet(), BARE).unwrap()
}

fn same_language(a: &FiniteAutomaton, b: &FiniteAutomaton, max_len: usize) -> bool {
    common::words(&alphabet(), max_len).iter().all(|w| a.accepts(w) == b.accepts(w))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn automaton_agrees_with_trace_oracle(seed in any::<u64>(), nodes in 2usize..=4) {
        let r = common::random_rule(&mut ChaCha8Rng::seed_from_u64(seed), &LETTERS, nodes);
        let aut = rule_to_automaton(&r, &alphabet(), BARE).unwrap();
        for w in common::words(&alphabet(), 5) {
            let expected = evaluate_rule(&Trace { events: w.clone() }, &r, BARE).unwrap();
            prop_assert_eq!(aut.accepts(&w), expected, "rule {} on {:?}", r.to_json(), w);
        }
    }

    #[test]
    fn boolean_laws_hold(s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = rule_automaton(s1, 3);
        let b = rule_automaton(s2, 3);
        let not_a = a.complement().unwrap();
        prop_assert!(same_language(&not_a.complement().unwrap(), &a, 5));
        prop_assert_eq!(a.intersect(&not_a).unwrap().is_empty(), Emptiness::Empty);
        // De Morgan
        let lhs = a.union(&b).unwrap().complement().unwrap();
        let rhs = not_a.intersect(&b.complement().unwrap()).unwrap();
        prop_assert!(same_language(&lhs, &rhs, 5));
        let m = a.minimize().unwrap();
        prop_assert!(m.num_states() <= a.determinize().unwrap().complete().unwrap().num_states());
        prop_assert!(same_language(&m, &a, 5));
    }

    #[test]
    fn emptiness_witness_is_accepted(seed in any::<u64>()) {
        let not_a = rule_automaton(seed, 3).complement().unwrap();
        if let Emptiness::Witness(t) = not_a.is_empty() {
            prop_assert!(not_a.accepts_trace(&t));
            // no shorter word is accepted
            for w in common::words(&alphabet(), t.len().saturating_sub(1)) {
                prop_assert!(!not_a.accepts(&w));
            }
        }
    }

    #[test]
    fn generator_is_deterministic_and_sound(seed in any::<u64>()) {
        let params = GeneratorParams::default();
        let a = generate_random_choreography(&params, seed).unwrap();
        let b = generate_random_choreography(&params, seed).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
        prop_assert!(a.check_consistency().is_empty());
        prop_assert!(a.check_compatibility().is_empty());
        for (p, m) in &a.private {
            prop_assert_eq!(&a.public[p], &m.public_view());
        }
        let r1 = plant_rule(&a, PlantedShape::Response, seed).unwrap();
        prop_assert_eq!(r1, plant_rule(&b, PlantedShape::Response, seed).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// The witness-free check used during decomposition agrees with the
    /// full local compliance verdict.
    #[test]
    fn fast_local_check_agrees_with_verdict(seed in any::<u64>(), shape in 0usize..4) {
        let chor = generate_random_choreography(&GeneratorParams::default(), seed).unwrap();
        let shape = [PlantedShape::Response, PlantedShape::Precedence, PlantedShape::AbsenceAfter, PlantedShape::AbsenceBefore][shape];
        let mut rule = plant_rule(&chor, shape, seed).unwrap();
        // move both nodes onto the first node's partner
        let p = rule.nodes[0].partner.clone();
        let model = chor.private_model(&p).unwrap();
        let locals: Vec<String> = model.activities().iter().map(|a| a.label.clone()).collect();
        rule.nodes[1].partner = p.clone();
        rule.nodes[1].activity = locals[seed as usize % locals.len()].clone();
        prop_assume!(rule.nodes[0].activity != rule.nodes[1].activity);
        let rule = chor.resolve_rule(&rule);
        let aut = model_to_automaton(model, &p, LabelMode::Atomic).unwrap();
        let fast = model_automaton_satisfies(&aut, &rule, LabelMode::Atomic).unwrap();
        let full = check_local_compliance(model, &p, &rule, LabelMode::Atomic).unwrap();
        prop_assert_eq!(fast, full.is_ok());
    }

    /// Split results on random models: each assertion is owned by one
    /// partner, ids are unique, and together they imply the rule.
    #[test]
    fn decompositions_of_planted_rules_are_sound(seed in any::<u64>(), shape in 0usize..4) {
        let params = GeneratorParams { allow_loops: false, ..Default::default() };
        let chor = generate_random_choreography(&params, seed).unwrap();
        let shape = [PlantedShape::Response, PlantedShape::Precedence, PlantedShape::AbsenceAfter, PlantedShape::AbsenceBefore][shape];
        let rule = plant_rule(&chor, shape, seed).unwrap();
        let d = decompose_auto(&rule, &chor, DecomposeOptions::default()).unwrap();
        prop_assert_ne!(d.status, Status::Failed);
        let mut ids: Vec<&str> = d.assertions.iter().map(|a| a.rule.id.as_str()).collect();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), d.assertions.len());
        for a in &d.assertions {
            prop_assert!(a.rule.nodes.iter().all(|n| n.partner == a.partner));
            prop_assert!(comply_core::rule_model::validate_rule(&a.rule).is_empty());
        }
        let updated = d.choreography.clone().unwrap_or(chor);
        let universe = updated.alphabet(LabelMode::Atomic);
        let v = verify_decomposition(&d.rules(), &rule, Some(&universe), LabelMode::Atomic).unwrap();
        prop_assert_eq!(v.outcome, Outcome::Correct);
    }
}

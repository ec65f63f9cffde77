use comply_core::automata::{rule_to_automaton, FiniteAutomaton};
use comply_core::process_model::LabelMode;
use comply_core::rule_model::{
    activations, evaluate_rule, shapes, validate_rule, ComplianceRule, Connector, Pattern, RuleEdge, RuleNode, Trace,
};

const BARE: LabelMode = LabelMode::Bare;

fn words(alphabet: &[&str], max_len: usize) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::<String>::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &layer {
            for a in alphabet {
                let mut v = w.clone();
                v.push(a.to_string());
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

fn eval(t: &[&str], r: &ComplianceRule) -> bool {
    evaluate_rule(&Trace::new(t), r, BARE).unwrap()
}

/// Direct transcription of the four binary equivalences.
fn binary_reference(w: &[String], shape: usize) -> bool {
    let pos = |l: &str| -> Vec<usize> { (0..w.len()).filter(|&i| w[i] == l).collect() };
    let (a, b) = (pos("A"), pos("B"));
    match shape {
        0 => a.iter().all(|&i| b.iter().any(|&j| i < j)),
        1 => b.iter().all(|&j| a.iter().any(|&i| i < j)),
        2 => a.iter().all(|&i| b.iter().all(|&j| j <= i)),
        _ => b.iter().all(|&j| a.iter().all(|&i| j <= i)),
    }
}

#[test]
fn binary_shapes_match_reference_exhaustively() {
    let rules = [
        shapes::response("r", "P", "A", "B"),
        shapes::precedence("r", "P", "A", "B"),
        shapes::absence_after("r", "P", "A", "B"),
        shapes::absence_before("r", "P", "A", "B"),
    ];
    for w in words(&["A", "B", "C"], 7) {
        for (k, r) in rules.iter().enumerate() {
            let t = Trace { events: w.clone() };
            assert_eq!(evaluate_rule(&t, r, BARE).unwrap(), binary_reference(&w, k), "shape {k} on {w:?}");
        }
    }
}

#[test]
fn worked_examples() {
    let resp = shapes::response("r", "P", "A", "B");
    assert!(eval(&["A", "B"], &resp));
    assert!(!eval(&["B", "A"], &resp));
    assert!(eval(&["A"], &shapes::absence_after("r", "P", "A", "C")));
    let acts = activations(&Trace::new(&["A", "B", "A", "B"]), &resp, BARE).unwrap();
    assert_eq!(acts.len(), 2);
    assert!(acts.iter().all(|a| a.satisfied));
    assert!(activations(&Trace::new(&["B"]), &resp, BARE).unwrap().is_empty());
}

#[test]
fn malformed_rules_are_reported() {
    let mut r = shapes::response("r", "P", "A", "B");
    r.nodes[0].pattern = Pattern::ConsOcc;
    assert!(validate_rule(&r).contains(&"no antecedence occurrence".to_string()));
    let mut c = ComplianceRule::new("c");
    c.nodes.push(RuleNode::activity("n1", "P", "A", Pattern::AnteOcc));
    c.nodes.push(RuleNode::activity("n2", "P", "B", Pattern::ConsOcc));
    c.edges.push(RuleEdge::new("n1", "n2", Connector::Consequence));
    c.edges.push(RuleEdge::new("n2", "n1", Connector::Consequence));
    assert!(validate_rule(&c).contains(&"cyclic edges".to_string()));
}

#[test]
fn automaton_matches_oracle_on_binary_shapes() {
    let alphabet = ["A", "B", "C"];
    for r in [
        shapes::response("r", "P", "A", "B"),
        shapes::precedence("r", "P", "A", "B"),
        shapes::absence_after("r", "P", "A", "B"),
        shapes::absence_before("r", "P", "A", "B"),
    ] {
        let aut: FiniteAutomaton = rule_to_automaton(&r, &alphabet, BARE).unwrap();
        for w in words(&alphabet, 6) {
            assert_eq!(aut.accepts(&w), evaluate_rule(&Trace { events: w.clone() }, &r, BARE).unwrap(), "{w:?}");
        }
    }
}

//! Acceptance suite: one PASS/FAIL line per criterion, then a single assert.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use comply_core::automata::rule_to_automaton;
use comply_core::decomposition::templates::template;
use comply_core::decomposition::{
    apply_theorem_template, decompose, decompose_auto, instantiate, validate_theorem, ChoreographyKnowledge,
    DecomposeOptions, Decomposition, Status, TemplateId, TheoremResult,
};
use comply_core::fixtures;
use comply_core::negotiation::{parse_transcript, replay_transcript, run_negotiation, Strategy};
use comply_core::process_model::{
    generate_random_choreography, plant_rule, Choreography, GeneratorParams, LabelMode, PlantedShape,
};
use comply_core::rule_model::{evaluate_rule, shapes, ComplianceRule, Connector, Pattern, RuleEdge, RuleNode, Trace};
use comply_core::verification::{
    check_global_compliance, check_local_compliance, verify_decomposition, GlobalMode, Outcome,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{render, ATOMIC};

fn load(name: &str) -> (ComplianceRule, Choreography) {
    (fixtures::rule(name).unwrap(), fixtures::choreography(fixtures::rule_fixture(name)).unwrap())
}

fn within(t: Instant, limit: Duration, what: &str) {
    assert!(t.elapsed() < limit, "{what} took {:?}, limit {limit:?}", t.elapsed());
}

fn running_example_split() {
    let t = Instant::now();
    let (rule, chor) = load("c3");
    let d = decompose(&rule, &chor, DecomposeOptions::default()).unwrap();
    assert_eq!(d.status, Status::Transitive);
    assert_eq!(
        render(&d),
        [
            "SpecialCarrier: transport_intermediate +safety_check +order_special_transport | \
             safety_check->transport_intermediate order_special_transport->safety_check",
            "Middleman: order_special_transport +get_permission_of_authority | \
             get_permission_of_authority->order_special_transport",
        ]
    );
    let v = verify_decomposition(&d.rules(), &rule, None, ATOMIC).unwrap();
    assert_eq!(v.outcome, Outcome::Correct);
    within(t, Duration::from_secs(1), "C3");
}

fn worked_examples() {
    let cases: &[(&str, TemplateId, &[&str])] = &[
        (
            "example1",
            TemplateId::T1a,
            &[
                "Middleman: get_permission_of_authority +order_special_transport | get_permission_of_authority->order_special_transport",
                "SpecialCarrier: order_special_transport +safety_check | order_special_transport->safety_check",
            ],
        ),
        (
            "example2",
            TemplateId::Cor1,
            &[
                "Manufacturer: process_order +order_intermediate | process_order->order_intermediate",
                "Middleman: order_intermediate +fwd_order_intermediate | order_intermediate->fwd_order_intermediate",
                "Supplier: fwd_order_intermediate +produce_intermediate | fwd_order_intermediate->produce_intermediate",
            ],
        ),
        (
            "example6",
            TemplateId::T3,
            &[
                "Middleman: get_permission_of_authority +fwd_order_intermediate | fwd_order_intermediate->get_permission_of_authority",
                "Supplier: fwd_order_intermediate prepare_transport +waybill_for_intermediate | \
                 fwd_order_intermediate->prepare_transport prepare_transport->waybill_for_intermediate",
                "SpecialCarrier: waybill_for_intermediate +transport_intermediate +arrival_of_intermediate | \
                 waybill_for_intermediate->transport_intermediate transport_intermediate->arrival_of_intermediate",
                "Manufacturer: arrival_of_intermediate +production | arrival_of_intermediate->production",
            ],
        ),
        (
            "example7",
            TemplateId::T5,
            &[
                "Middleman: order_intermediate +fwd_order_intermediate +order_special_transport | \
                 order_intermediate->fwd_order_intermediate order_special_transport->fwd_order_intermediate",
                "SpecialCarrier: transport_intermediate +order_special_transport +waybill_for_intermediate | \
                 order_special_transport->waybill_for_intermediate waybill_for_intermediate->transport_intermediate",
                "Supplier: fwd_order_intermediate waybill_for_intermediate +prepare_transport | \
                 fwd_order_intermediate->prepare_transport prepare_transport->waybill_for_intermediate",
            ],
        ),
        (
            "example8",
            TemplateId::T6,
            &[
                "Supplier: prepare_details +request_details +production_status +transport_details +waybill_for_intermediate | \
                 request_details->prepare_details prepare_details->production_status \
                 production_status->transport_details transport_details->waybill_for_intermediate",
                "SpecialCarrier: request_details safety_check waybill_for_intermediate -transport_details | \
                 request_details->safety_check safety_check->transport_details transport_details->waybill_for_intermediate",
                "SpecialCarrier: transport_details safety_check +transport_confirmation | \
                 transport_details->transport_confirmation transport_confirmation->safety_check",
                "Middleman: production_status transport_confirmation +internal_checks | \
                 production_status->internal_checks internal_checks->transport_confirmation",
            ],
        ),
        (
            "example9",
            TemplateId::T7,
            &[
                "Supplier: prepare_details +production_status +transport_details | \
                 prepare_details->production_status production_status->transport_details",
                "SpecialCarrier: safety_check +transport_details +transport_confirmation | \
                 transport_details->transport_confirmation transport_confirmation->safety_check",
                "Middleman: production_status transport_confirmation +internal_checks | \
                 production_status->internal_checks internal_checks->transport_confirmation",
            ],
        ),
    ];
    for (name, id, want) in cases {
        let t = Instant::now();
        let (rule, chor) = load(name);
        let found = apply_theorem_template(id, &rule, &mut ChoreographyKnowledge::new(chor)).unwrap();
        assert_eq!(found.len(), 1, "{name}");
        assert_eq!(render(&found[0]), *want, "{name}");
        within(t, Duration::from_secs(5), name);
    }

    let t = Instant::now();
    let (rule, chor) = load("example3");
    let d = decompose_auto(&rule, &chor, DecomposeOptions::default()).unwrap();
    assert_eq!(d.status, Status::RequiredSync);
    within(t, Duration::from_secs(5), "example3");

    let t = Instant::now();
    let (rule, chor) = load("example4");
    let d = instantiate(
        TemplateId::T2b,
        &rule,
        &ChoreographyKnowledge::new(chor),
        &["order_special_transport".into()],
        None,
    )
    .unwrap();
    let carrier = d.assertions.iter().find(|a| a.partner == fixtures::SPECIAL_CARRIER).unwrap();
    let trace = Trace::new(&[
        "act:SpecialCarrier.transport_intermediate",
        "msg:order_special_transport!SpecialCarrier",
        "msg:order_special_transport?Manufacturer",
        "act:Manufacturer.quick_test_intermediate",
    ]);
    assert!(!evaluate_rule(&trace, &carrier.rule, LabelMode::Async).unwrap());
    assert!(!evaluate_rule(&trace, &rule, LabelMode::Async).unwrap());
    within(t, Duration::from_secs(5), "example4");
}

fn theorem_validation() {
    let t = Instant::now();
    for id in ["T1a", "T1b", "Cor1", "T2a", "T2b", "T3", "T5", "T7", "T8"] {
        let r = validate_theorem(id, None, 7).unwrap();
        assert!(matches!(r, TheoremResult::Holds { .. }), "{id}: {r:?}");
    }
    for id in ["T4(2,2)", "T6"] {
        let r = validate_theorem(id, None, 8).unwrap();
        assert!(matches!(r, TheoremResult::Holds { .. }), "{id}: {r:?}");
    }
    let r = validate_theorem("T1a-converse", None, 7).unwrap();
    assert_eq!(r, TheoremResult::Counterexample { trace: Trace::new(&["A", "C"]) });
    within(t, Duration::from_secs(300), "theorems");
}

/// Template shapes, the four binary shapes and random rules: at least 20,
/// every pattern kind, at most five letters.
fn equivalence_corpus() -> Vec<ComplianceRule> {
    let mut corpus: Vec<ComplianceRule> =
        ["T1a", "T1b", "T2a", "T2b", "T3", "T4(2,2)", "T4(2,3)", "T5", "T6", "T7", "T8"]
            .iter()
            .map(|id| template(id.parse().unwrap()).shape)
            .collect();
    corpus.extend([
        shapes::response("r", "P", "A", "B"),
        shapes::precedence("p", "P", "A", "B"),
        shapes::absence_after("aa", "P", "A", "B"),
        shapes::absence_before("ab", "P", "A", "B"),
    ]);
    // antecedence absence: A not preceded by B requires C afterwards
    corpus.push(ComplianceRule {
        id: "ante-abs".into(),
        nodes: vec![
            RuleNode::activity("a", "P", "A", Pattern::AnteOcc),
            RuleNode::activity("b", "P", "B", Pattern::AnteAbs),
            RuleNode::activity("c", "P", "C", Pattern::ConsOcc),
        ],
        edges: vec![RuleEdge::new("b", "a", Connector::Antecedence), RuleEdge::new("a", "c", Connector::Consequence)],
    });
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..12 {
        corpus.push(common::random_rule(&mut rng, &["A", "B", "C", "D", "E"], 2 + i % 4));
    }
    corpus
}

fn oracle_equivalence() -> String {
    let t = Instant::now();
    let corpus = equivalence_corpus();
    assert!(corpus.len() >= 20);
    for p in [Pattern::AnteOcc, Pattern::AnteAbs, Pattern::ConsOcc, Pattern::ConsAbs] {
        assert!(corpus.iter().any(|r| r.nodes.iter().any(|n| n.pattern == p)), "{p:?} uncovered");
    }
    let mut mismatches = 0;
    let mut traces = 0;
    for r in &corpus {
        let letters: Vec<String> = r.labels(LabelMode::Bare).into_iter().collect();
        assert!(letters.len() <= 5, "{}", r.id);
        let aut = rule_to_automaton(r, &letters, LabelMode::Bare).unwrap();
        for w in common::words(&letters, 6) {
            let t = Trace { events: w };
            traces += 1;
            if aut.accepts_trace(&t) != evaluate_rule(&t, r, LabelMode::Bare).unwrap() {
                mismatches += 1;
            }
        }
    }
    assert_eq!(mismatches, 0);
    within(t, Duration::from_secs(120), "equivalence");
    format!("{} rules, {traces} traces", corpus.len())
}

fn soundness_sweep() -> String {
    let t = Instant::now();
    let shapes =
        [PlantedShape::Response, PlantedShape::Precedence, PlantedShape::AbsenceAfter, PlantedShape::AbsenceBefore];
    let mut failures = Vec::new();
    let (mut transitive, mut synced, mut failed) = (0, 0, 0);
    for seed in 0..100u64 {
        let chor = generate_random_choreography(&GeneratorParams::default(), seed).unwrap();
        let rule = plant_rule(&chor, shapes[seed as usize % 4], seed).unwrap();
        let d = decompose_auto(&rule, &chor, DecomposeOptions::default()).unwrap();
        match d.status {
            Status::Failed => {
                failed += 1;
                continue;
            }
            Status::RequiredSync => synced += 1,
            Status::Transitive => transitive += 1,
        }
        let model = d.choreography.clone().unwrap_or(chor);
        assert_eq!(d.status == Status::RequiredSync, !d.sync_messages.is_empty());
        let universe = model.alphabet(ATOMIC);
        let v = verify_decomposition(&d.rules(), &rule, Some(&universe), ATOMIC).unwrap();
        if v.outcome != Outcome::Correct {
            failures.push(seed);
        }
    }
    assert!(failures.is_empty(), "unsound for seeds {failures:?}");
    within(t, Duration::from_secs(300), "sweep");
    format!("{transitive} transitive, {synced} with sync, {failed} failed")
}

fn compliance_claims() {
    let chor = fixtures::running_example();
    let t = Instant::now();
    let model = chor.private_model(fixtures::MANUFACTURER).unwrap();
    let v = check_local_compliance(model, fixtures::MANUFACTURER, &fixtures::rule("c1").unwrap(), ATOMIC).unwrap();
    assert_eq!(v.outcome, Outcome::Compliant);
    within(t, Duration::from_secs(1), "local C1");
    let t = Instant::now();
    let v = check_global_compliance(&chor, &fixtures::rule("c2").unwrap(), GlobalMode::Public, ATOMIC, 1).unwrap();
    assert_eq!(v.outcome, Outcome::Compliant);
    within(t, Duration::from_secs(1), "global C2");
    let t = Instant::now();
    let v = check_global_compliance(&chor, &fixtures::rule("c3").unwrap(), GlobalMode::ChoreographyOnly, ATOMIC, 1)
        .unwrap();
    assert!(matches!(v.outcome, Outcome::Inapplicable { .. }), "{:?}", v.outcome);
    within(t, Duration::from_secs(1), "global C3");
}

/// Chain rule over `n` local activities spread across the partners of a
/// random choreography sized to `n`.
fn generated_rule(n: usize, seed: u64) -> (ComplianceRule, Choreography) {
    let params = GeneratorParams { partners: 4, activities: n, messages: n, depth: 1, allow_loops: false };
    let chor = generate_random_choreography(&params, seed).unwrap();
    let mut locals: Vec<(String, String)> = chor
        .private
        .iter()
        .flat_map(|(p, m)| {
            m.activities().into_iter().filter(|a| !a.is_interaction()).map(move |a| (p.clone(), a.label.clone()))
        })
        .collect();
    locals.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut rule = ComplianceRule::new(&format!("N{n}"));
    for (i, (p, a)) in locals.iter().take(n).enumerate() {
        let pattern = if i == 0 { Pattern::AnteOcc } else { Pattern::ConsOcc };
        rule.nodes.push(RuleNode::activity(&format!("n{i}"), p, a, pattern));
        if i > 0 {
            rule.edges.push(RuleEdge::new(&format!("n{}", i - 1), &format!("n{i}"), Connector::Consequence));
        }
    }
    (rule, chor)
}

fn complexity_guardrail() -> String {
    let sizes = [5usize, 10, 20, 40];
    let mut points = Vec::new();
    for &n in &sizes {
        let mut total = 0u64;
        for seed in 0..3 {
            let (rule, chor) = generated_rule(n, seed);
            let d = decompose(&rule, &chor, DecomposeOptions::default()).unwrap();
            total += d.counters.total().max(1);
        }
        points.push(((n as f64).ln(), (total as f64 / 3.0).ln()));
    }
    let k = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / k, sy / k);
    let cov: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let slope = cov / var;
    assert!(slope <= 4.3, "log-log slope {slope:.2}");
    format!("slope {slope:.2}")
}

fn same_language_bounded(a: &Decomposition, b: &Decomposition, max_len: usize) {
    let mut letters = std::collections::BTreeSet::new();
    for r in a.rules().iter().chain(b.rules().iter()) {
        letters.extend(r.labels(ATOMIC));
    }
    let letters: Vec<String> = letters.into_iter().collect();
    for w in common::words(&letters, max_len) {
        let t = Trace { events: w };
        let holds = |d: &Decomposition| d.rules().iter().all(|r| evaluate_rule(&t, r, ATOMIC).unwrap());
        assert_eq!(holds(a), holds(b), "{:?}", t.events);
    }
}

fn negotiation_equivalence() {
    for name in fixtures::RULES {
        let (rule, chor) = load(name);
        let central = decompose_auto(&rule, &chor, DecomposeOptions::default()).unwrap();
        for strategy in [Strategy::Leader, Strategy::Leaderless] {
            let o = run_negotiation(&chor, &rule, 1, strategy, DecomposeOptions::default()).unwrap();
            assert_eq!(o.decomposition.status, central.status, "{name}");
            assert_eq!(o.decomposition.sync_messages, central.sync_messages, "{name}");
            assert_eq!(o.decomposition.rules(), central.rules(), "{name} {strategy}");
            same_language_bounded(&o.decomposition, &central, 3);
            let again = run_negotiation(&chor, &rule, 1, strategy, DecomposeOptions::default()).unwrap();
            assert_eq!(again.transcript_jsonl(), o.transcript_jsonl(), "{name}");
            let replayed = replay_transcript(&parse_transcript(&o.transcript_jsonl()).unwrap()).unwrap();
            assert_eq!(replayed, o.decomposition, "{name}");
        }
    }
}

fn criterion(n: usize, what: &str, f: impl FnOnce() -> Option<String>) -> bool {
    let t = Instant::now();
    let r = catch_unwind(AssertUnwindSafe(f));
    let secs = t.elapsed().as_secs_f64();
    match r {
        Ok(note) => {
            let note = note.map(|s| format!(", {s}")).unwrap_or_default();
            println!("PASS criterion {n}: {what} ({secs:.2}s{note})");
            true
        }
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            println!("FAIL criterion {n}: {what} ({secs:.2}s): {msg}");
            false
        }
    }
}

#[test]
fn acceptance() {
    let results = [
        criterion(1, "running example split and verification", || {
            running_example_split();
            None
        }),
        criterion(2, "worked template examples, sync and async loop case", || {
            worked_examples();
            None
        }),
        criterion(3, "template theorems by exhaustive enumeration", || {
            theorem_validation();
            None
        }),
        criterion(4, "rule automata equal the trace oracle", || Some(oracle_equivalence())),
        criterion(5, "soundness sweep over 100 random choreographies", || Some(soundness_sweep())),
        criterion(6, "local and global compliance claims", || {
            compliance_claims();
            None
        }),
        criterion(7, "decomposition operation count growth", || Some(complexity_guardrail())),
        criterion(8, "negotiation matches central decomposition", || {
            negotiation_equivalence();
            None
        }),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

mod common;

use comply_core::decomposition::{
    apply_theorem_template, decompose, decompose_auto, insert_sync_message, instantiate, select_template,
    ChoreographyKnowledge, DecomposeOptions, Status, TemplateId,
};
use comply_core::fixtures;
use comply_core::process_model::LabelMode;
use comply_core::rule_model::{activations, evaluate_rule, Trace};
use comply_core::verification::{verify_decomposition, Outcome};

use common::{brute_force_bindings, implies_bounded, render, ATOMIC};

fn load(name: &str) -> (comply_core::rule_model::ComplianceRule, comply_core::process_model::Choreography) {
    (fixtures::rule(name).unwrap(), fixtures::choreography(fixtures::rule_fixture(name)).unwrap())
}

/// Template search against the brute-force oracle; results frozen below.
#[test]
fn template_bindings_match_brute_force() {
    let cases: &[(&str, TemplateId, &[&str], Option<&str>)] = &[
        ("example1", TemplateId::T1a, &["order_special_transport"], None),
        ("example2", TemplateId::Cor1, &["order_intermediate", "fwd_order_intermediate"], Some("Middleman")),
        ("c2", TemplateId::T1b, &["waybill_for_intermediate"], None),
        (
            "example6",
            TemplateId::T3,
            &["fwd_order_intermediate", "waybill_for_intermediate", "arrival_of_intermediate"],
            None,
        ),
        (
            "example7",
            TemplateId::T5,
            &["fwd_order_intermediate", "order_special_transport", "waybill_for_intermediate"],
            None,
        ),
        (
            "example8",
            TemplateId::T6,
            &[
                "request_details",
                "production_status",
                "transport_details",
                "waybill_for_intermediate",
                "transport_confirmation",
            ],
            None,
        ),
        ("example9", TemplateId::T7, &["production_status", "transport_details", "transport_confirmation"], None),
    ];
    for (name, id, msgs, q) in cases {
        let (rule, chor) = load(name);
        let oracle = brute_force_bindings(*id, &rule, &chor);
        let frozen = vec![(msgs.iter().map(|s| s.to_string()).collect::<Vec<_>>(), q.map(String::from))];
        assert_eq!(oracle, frozen, "{name}: oracle drifted");
        let mut k = ChoreographyKnowledge::new(chor.clone());
        let found = apply_theorem_template(id, &rule, &mut k).unwrap();
        assert_eq!(found.len(), 1, "{name}");
        let expected = instantiate(*id, &rule, &k, &frozen[0].0, q.as_deref()).unwrap();
        assert_eq!(found[0].assertions, expected.assertions, "{name}");
        let v = verify_decomposition(&found[0].rules(), &rule, None, ATOMIC).unwrap();
        assert_eq!(v.outcome, Outcome::Correct, "{name}");
    }
}

#[test]
fn template_order_follows_rule_shape() {
    let cases = [
        ("example1", vec![TemplateId::T1a, TemplateId::Cor1]),
        ("c2", vec![TemplateId::T1b]),
        ("example6", vec![TemplateId::T3, TemplateId::T4 { n: 2, m: 2 }]),
        ("example7", vec![TemplateId::T7, TemplateId::T5, TemplateId::T6]),
        ("example9", vec![TemplateId::T7, TemplateId::T5, TemplateId::T6]),
        ("c1", vec![]),
    ];
    for (name, want) in cases {
        let (rule, chor) = load(name);
        assert_eq!(select_template(&rule, &ChoreographyKnowledge::new(chor)), want, "{name}");
    }
}

#[test]
fn c3_splits_into_carrier_and_middleman_assertions() {
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
    assert!(d.assertions.iter().all(|a| a.provenance.template == "split"));
    assert_eq!(implies_bounded(&d.rules(), &rule, 6), None);
}

#[test]
fn every_fixture_rule_decomposes_correctly() {
    for name in fixtures::RULES {
        let (rule, chor) = load(name);
        let d = decompose_auto(&rule, &chor, DecomposeOptions::default()).unwrap();
        assert_ne!(d.status, Status::Failed, "{name}");
        // every assertion stays within its owner's alphabet
        let owners_chor = d.choreography.clone().unwrap_or(chor);
        for a in &d.assertions {
            let alphabet = owners_chor.private_model(&a.partner).unwrap();
            for n in &a.rule.nodes {
                assert_eq!(n.partner, a.partner, "{name}");
                assert!(alphabet.find(&n.activity).is_some(), "{name}: {} not in {}", n.activity, a.partner);
            }
        }
        let v = verify_decomposition(&d.rules(), &rule, None, ATOMIC).unwrap();
        assert_eq!(v.outcome, Outcome::Correct, "{name}");
        assert_eq!(implies_bounded(&d.rules(), &rule, 5), None, "{name}");
    }
}

#[test]
fn missing_route_inserts_sync_message() {
    let (rule, chor) = load("example3");
    let d = decompose_auto(&rule, &chor, DecomposeOptions::default()).unwrap();
    assert_eq!(d.status, Status::RequiredSync);
    assert_eq!(d.sync_messages.len(), 1);
    let s = &d.sync_messages[0];
    assert_eq!(s.name, "sync.E3.prepare_transport.safety_check");
    assert_eq!((s.from_partner.as_str(), s.to_partner.as_str()), ("Supplier", "SpecialCarrier"));
    assert_eq!(
        render(&d),
        [
            "Supplier: prepare_transport +sync.E3.prepare_transport.safety_check | \
             prepare_transport->sync.E3.prepare_transport.safety_check",
            "SpecialCarrier: sync.E3.prepare_transport.safety_check +safety_check | \
             sync.E3.prepare_transport.safety_check->safety_check",
        ]
    );
    let updated = d.choreography.clone().unwrap();
    assert!(updated.check_consistency().is_empty());
    assert!(updated.check_compatibility().is_empty());
    assert!(updated.gamma.iter().any(|g| g[1] == s.name));

    // decomposing again on the updated choreography needs no new sync
    let again = decompose_auto(&rule, &updated, DecomposeOptions::default()).unwrap();
    assert_eq!(again.status, Status::Transitive);
    assert_eq!(again.rules(), d.rules());
    assert!(again.choreography.is_none());

    // the same sync cannot be inserted twice
    assert!(insert_sync_message(&updated, s).is_err());

    let strict = decompose_auto(&rule, &chor, DecomposeOptions { no_sync: true }).unwrap();
    assert_eq!(strict.status, Status::Failed);
    assert!(strict.assertions.is_empty());
}

#[test]
fn manufacturing_rule_needs_sync() {
    let (rule, chor) = load("manufacturing-c1");
    let d = decompose_auto(&rule, &chor, DecomposeOptions::default()).unwrap();
    assert_eq!(d.status, Status::RequiredSync);
    assert_eq!(d.sync_messages[0].name, "sync.C1.place_order.resource_planning");
    let v = verify_decomposition(&d.rules(), &rule, None, ATOMIC).unwrap();
    assert_eq!(v.outcome, Outcome::Correct);
}

/// The absence-before template is sound on paper but the looped carrier
/// can transport in one iteration and order in the next; under
/// asynchronous messaging the carrier's assertion catches it.
#[test]
fn absence_before_template_in_a_loop() {
    let (rule, chor) = load("example4");
    let k = ChoreographyKnowledge::new(chor);
    let d = instantiate(TemplateId::T2b, &rule, &k, &["order_special_transport".to_string()], None).unwrap();
    assert_eq!(d.assertions.len(), 2);
    let carrier = d.assertions.iter().find(|a| a.partner == "SpecialCarrier").unwrap();
    let trace = Trace::new(&[
        "act:SpecialCarrier.transport_intermediate",
        "msg:order_special_transport!SpecialCarrier",
        "msg:order_special_transport?Manufacturer",
        "act:Manufacturer.quick_test_intermediate",
    ]);
    assert!(!evaluate_rule(&trace, &rule, LabelMode::Async).unwrap());
    assert!(!evaluate_rule(&trace, &carrier.rule, LabelMode::Async).unwrap());
    let acts = activations(&trace, &carrier.rule, LabelMode::Async).unwrap();
    assert!(acts.iter().any(|a| !a.satisfied));
}

#[test]
fn template_ids_round_trip() {
    for s in ["T1a", "T1b", "Cor1", "T2a", "T2b", "T3", "T4(2,3)", "T5", "T6", "T7", "T8"] {
        let id: TemplateId = s.parse().unwrap();
        assert_eq!(id.to_string(), s);
        assert_eq!(serde_json::from_str::<TemplateId>(&serde_json::to_string(&id).unwrap()).unwrap(), id);
    }
    assert!("T9".parse::<TemplateId>().is_err());
}

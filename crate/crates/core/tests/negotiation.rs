use std::collections::BTreeMap;

use comply_core::decomposition::templates::{match_shape, template};
use comply_core::decomposition::{decompose_auto, DecomposeOptions, TemplateId};
use comply_core::fixtures;
use comply_core::negotiation::{
    generate_candidates, parse_transcript, replay_transcript, run_negotiation, MessageKind, PartnerAgent, Strategy,
    TemplateAssignment,
};

fn assignment(rule: &str, id: TemplateId, assertion: usize, q: Option<&str>) -> TemplateAssignment {
    let gcr = fixtures::rule(rule).unwrap();
    let vars = match_shape(&template(id).shape, &gcr).unwrap();
    TemplateAssignment { template: id, assertion, vars, intermediary: q.map(String::from) }
}

fn binding(pairs: &[(usize, &str)]) -> BTreeMap<usize, String> {
    pairs.iter().map(|(i, m)| (*i, m.to_string())).collect()
}

#[test]
fn agents_propose_only_their_compliant_messages() {
    let chor = fixtures::running_example();
    let mut mm = PartnerAgent::new(&chor, "Middleman").unwrap();
    let a = assignment("example1", TemplateId::T1a, 0, None);
    assert_eq!(generate_candidates(&mut mm, &a).unwrap(), vec![binding(&[(1, "order_special_transport")])]);

    let mut sc = PartnerAgent::new(&chor, "SpecialCarrier").unwrap();
    let b = assignment("example1", TemplateId::T1a, 1, None);
    assert_eq!(generate_candidates(&mut sc, &b).unwrap(), vec![binding(&[(1, "order_special_transport")])]);
    // the carrier does not own the first assertion
    assert!(generate_candidates(&mut sc, &a).is_err());

    let mut m = PartnerAgent::new(&chor, "Manufacturer").unwrap();
    let c = assignment("example2", TemplateId::Cor1, 0, Some("Middleman"));
    assert_eq!(generate_candidates(&mut m, &c).unwrap(), vec![binding(&[(1, "order_intermediate")])]);
}

#[test]
fn negotiation_agrees_with_central_decomposition() {
    for name in fixtures::RULES {
        let rule = fixtures::rule(name).unwrap();
        let chor = fixtures::choreography(fixtures::rule_fixture(name)).unwrap();
        let central = decompose_auto(&rule, &chor, DecomposeOptions::default()).unwrap();
        for strategy in [Strategy::Leader, Strategy::Leaderless] {
            let o = run_negotiation(&chor, &rule, 11, strategy, DecomposeOptions::default()).unwrap();
            let d = &o.decomposition;
            assert_eq!(d.status, central.status, "{name} {strategy}");
            assert_eq!(d.assertions, central.assertions, "{name} {strategy}");
            assert_eq!(d.sync_messages, central.sync_messages, "{name} {strategy}");
            assert_eq!(d.choreography, central.choreography, "{name} {strategy}");
            assert!(o.rounds >= 2);
            let kinds: Vec<MessageKind> = o.transcript.iter().map(|m| m.kind).collect();
            match strategy {
                Strategy::Leader => assert_eq!(kinds[0], MessageKind::LeaderAnnounce),
                Strategy::Leaderless => assert!(!kinds.contains(&MessageKind::LeaderAnnounce)),
            }
            assert_eq!(kinds.last(), Some(&MessageKind::MatchResult));
            assert_eq!(!d.sync_messages.is_empty(), kinds.contains(&MessageKind::SyncRequired), "{name}");
        }
    }
}

#[test]
fn transcripts_are_deterministic_and_replayable() {
    let chor = fixtures::running_example();
    let rule = fixtures::rule("c3").unwrap();
    for strategy in [Strategy::Leader, Strategy::Leaderless] {
        let a = run_negotiation(&chor, &rule, 5, strategy, DecomposeOptions::default()).unwrap();
        let b = run_negotiation(&chor, &rule, 5, strategy, DecomposeOptions::default()).unwrap();
        assert_eq!(a.transcript_jsonl(), b.transcript_jsonl());
        let other_seed = run_negotiation(&chor, &rule, 6, strategy, DecomposeOptions::default()).unwrap();
        assert_eq!(other_seed.decomposition.assertions, a.decomposition.assertions);
        let parsed = parse_transcript(&a.transcript_jsonl()).unwrap();
        assert_eq!(parsed, a.transcript);
        assert_eq!(replay_transcript(&parsed).unwrap(), a.decomposition);
    }
    assert!(parse_transcript("{not json}\n").is_err());
    assert!(replay_transcript(&[]).is_err());
}

#[test]
fn unsound_choreography_is_rejected() {
    let mut chor = fixtures::running_example();
    chor.private.get_mut("Supplier").unwrap().remove("transport_details");
    let rule = fixtures::rule("c3").unwrap();
    assert!(run_negotiation(&chor, &rule, 0, Strategy::Leader, DecomposeOptions::default()).is_err());
}

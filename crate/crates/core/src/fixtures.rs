//! Built-in choreographies and rules: the supply-chain running example, its
//! variants for the worked decomposition examples, and a manufacturing case.

use crate::process_model::{Activity, Block, Choreography};
use crate::rule_model::{ComplianceRule, Connector, Pattern, RuleEdge, RuleNode};

pub const BULK_BUYER: &str = "BulkBuyer";
pub const MANUFACTURER: &str = "Manufacturer";
pub const MIDDLEMAN: &str = "Middleman";
pub const SUPPLIER: &str = "Supplier";
pub const SPECIAL_CARRIER: &str = "SpecialCarrier";

/// Names accepted by [`choreography`].
pub const CHOREOGRAPHIES: &[&str] = &["running", "example4", "example7", "adapted", "manufacturing"];

/// Names accepted by [`rule`].
pub const RULES: &[&str] = &[
    "c1",
    "c2",
    "c3",
    "example1",
    "example2",
    "example3",
    "example4",
    "example6",
    "example7",
    "example8",
    "example9",
    "manufacturing-c1",
];

pub fn choreography(name: &str) -> Option<Choreography> {
    Some(match name {
        "running" => running_example(),
        "example4" => example4(),
        "example7" => example7(),
        "adapted" => adapted(),
        "manufacturing" => manufacturing(),
        _ => return None,
    })
}

/// Named rule, with message activities resolved against its fixture.
pub fn rule(name: &str) -> Option<ComplianceRule> {
    let raw = raw_rule(name)?;
    Some(choreography(rule_fixture(name))?.resolve_rule(&raw))
}

fn raw_rule(name: &str) -> Option<ComplianceRule> {
    Some(match name {
        "c1" => c1(),
        "c2" => c2(),
        "c3" => c3(),
        "example1" => response("E1", (MIDDLEMAN, "get_permission_of_authority"), (SPECIAL_CARRIER, "safety_check")),
        "example2" => response("E2", (MANUFACTURER, "process_order"), (SUPPLIER, "produce_intermediate")),
        "example3" => response("E3", (SUPPLIER, "prepare_transport"), (SPECIAL_CARRIER, "safety_check")),
        "example4" => example4_rule(),
        "example6" => example6_rule(),
        "example7" => between(
            "E7",
            (MIDDLEMAN, "order_intermediate"),
            (SPECIAL_CARRIER, "transport_intermediate"),
            (SUPPLIER, "prepare_transport"),
        ),
        "example8" | "example9" => between(
            if name == "example8" { "E8" } else { "E9" },
            (SUPPLIER, "prepare_details"),
            (SPECIAL_CARRIER, "safety_check"),
            (MIDDLEMAN, "internal_checks"),
        ),
        "manufacturing-c1" => response("C1", ("Partner1", "place_order"), ("Partner2", "resource_planning")),
        _ => return None,
    })
}

/// Fixture a named rule is meant to be decomposed against.
pub fn rule_fixture(name: &str) -> &'static str {
    match name {
        "example4" => "example4",
        "example7" => "example7",
        "example8" | "example9" => "adapted",
        "manufacturing-c1" => "manufacturing",
        _ => "running",
    }
}

fn with_public_views(partners: &[&str], private: Vec<(&str, Block)>) -> Choreography {
    let mut c = Choreography { partners: partners.iter().map(|p| p.to_string()).collect(), ..Default::default() };
    for (p, b) in private {
        c.public.insert(p.to_string(), b.public_view());
        c.private.insert(p.to_string(), b);
    }
    c.gamma = c.derive_gamma();
    c
}

fn interactions(list: &[(&str, &str, &str)]) -> Block {
    Block::Seq(list.iter().map(|(m, from, to)| Activity::interaction(m, from, to)).collect())
}

fn running_partners() -> [&'static str; 5] {
    [BULK_BUYER, MANUFACTURER, MIDDLEMAN, SPECIAL_CARRIER, SUPPLIER]
}

fn bulk_buyer() -> Block {
    Block::Seq(vec![Activity::send("order", MANUFACTURER), Activity::receive("deliver", MANUFACTURER)])
}

fn manufacturer() -> Block {
    Block::Seq(vec![
        Activity::receive("order", BULK_BUYER),
        Activity::private("process_order"),
        Activity::send("order_intermediate", MIDDLEMAN),
        Activity::receive("arrival_of_intermediate", SPECIAL_CARRIER),
        Activity::public("production"),
        Activity::public("final_test"),
        Activity::send("deliver", BULK_BUYER),
    ])
}

fn supplier() -> Block {
    Block::Seq(vec![
        Activity::receive("fwd_order_intermediate", MIDDLEMAN),
        Activity::private("produce_intermediate"),
        Activity::receive("request_details", SPECIAL_CARRIER),
        Activity::send("transport_details", SPECIAL_CARRIER),
        Activity::public("pack_intermediate"),
        Activity::private("prepare_transport"),
        Activity::send("waybill_for_intermediate", SPECIAL_CARRIER),
    ])
}

fn special_carrier() -> Block {
    Block::Seq(vec![
        Activity::receive("order_special_transport", MIDDLEMAN),
        Activity::send("request_details", SUPPLIER),
        Activity::receive("transport_details", SUPPLIER),
        Activity::private("safety_check"),
        Activity::receive("waybill_for_intermediate", SUPPLIER),
        Activity::public("transport_intermediate"),
        Activity::send("arrival_of_intermediate", MANUFACTURER),
    ])
}

fn running_choreography_model() -> Block {
    interactions(&[
        ("order", BULK_BUYER, MANUFACTURER),
        ("order_intermediate", MANUFACTURER, MIDDLEMAN),
        ("fwd_order_intermediate", MIDDLEMAN, SUPPLIER),
        ("order_special_transport", MIDDLEMAN, SPECIAL_CARRIER),
        ("request_details", SPECIAL_CARRIER, SUPPLIER),
        ("transport_details", SUPPLIER, SPECIAL_CARRIER),
        ("waybill_for_intermediate", SUPPLIER, SPECIAL_CARRIER),
        ("arrival_of_intermediate", SPECIAL_CARRIER, MANUFACTURER),
        ("deliver", MANUFACTURER, BULK_BUYER),
    ])
}

/// Supply chain: a bulk buyer orders from a manufacturer, who obtains an
/// intermediate product through a middleman from a supplier; a special
/// carrier transports it.
pub fn running_example() -> Choreography {
    let mut c = with_public_views(
        &running_partners(),
        vec![
            (BULK_BUYER, bulk_buyer()),
            (MANUFACTURER, manufacturer()),
            (
                MIDDLEMAN,
                Block::Seq(vec![
                    Activity::receive("order_intermediate", MANUFACTURER),
                    Activity::send("fwd_order_intermediate", SUPPLIER),
                    Activity::private("get_permission_of_authority"),
                    Activity::send("order_special_transport", SPECIAL_CARRIER),
                ]),
            ),
            (SPECIAL_CARRIER, special_carrier()),
            (SUPPLIER, supplier()),
        ],
    );
    c.choreography = Some(running_choreography_model());
    c
}

/// Running example where the middleman orders the special transport
/// before forwarding the order to the supplier.
pub fn example7() -> Choreography {
    let mut c = running_example();
    let mm = Block::Seq(vec![
        Activity::receive("order_intermediate", MANUFACTURER),
        Activity::private("get_permission_of_authority"),
        Activity::send("order_special_transport", SPECIAL_CARRIER),
        Activity::send("fwd_order_intermediate", SUPPLIER),
    ]);
    c.public.insert(MIDDLEMAN.to_string(), mm.public_view());
    c.private.insert(MIDDLEMAN.to_string(), mm);
    c.gamma = c.derive_gamma();
    c.choreography = Some(interactions(&[
        ("order", BULK_BUYER, MANUFACTURER),
        ("order_intermediate", MANUFACTURER, MIDDLEMAN),
        ("order_special_transport", MIDDLEMAN, SPECIAL_CARRIER),
        ("fwd_order_intermediate", MIDDLEMAN, SUPPLIER),
        ("request_details", SPECIAL_CARRIER, SUPPLIER),
        ("transport_details", SUPPLIER, SPECIAL_CARRIER),
        ("waybill_for_intermediate", SUPPLIER, SPECIAL_CARRIER),
        ("arrival_of_intermediate", SPECIAL_CARRIER, MANUFACTURER),
        ("deliver", MANUFACTURER, BULK_BUYER),
    ]));
    c
}

/// Running example extended with detail preparation at the supplier,
/// production-status and transport-confirmation messages to the middleman,
/// and internal checks at the middleman.
pub fn adapted() -> Choreography {
    let mut c = with_public_views(
        &running_partners(),
        vec![
            (BULK_BUYER, bulk_buyer()),
            (MANUFACTURER, manufacturer()),
            (
                MIDDLEMAN,
                Block::Seq(vec![
                    Activity::receive("order_intermediate", MANUFACTURER),
                    Activity::send("fwd_order_intermediate", SUPPLIER),
                    Activity::private("get_permission_of_authority"),
                    Activity::send("order_special_transport", SPECIAL_CARRIER),
                    Activity::receive("production_status", SUPPLIER),
                    Activity::private("internal_checks"),
                    Activity::receive("transport_confirmation", SPECIAL_CARRIER),
                ]),
            ),
            (
                SPECIAL_CARRIER,
                Block::Seq(vec![
                    Activity::receive("order_special_transport", MIDDLEMAN),
                    Activity::send("request_details", SUPPLIER),
                    Activity::receive("transport_details", SUPPLIER),
                    Activity::send("transport_confirmation", MIDDLEMAN),
                    Activity::private("safety_check"),
                    Activity::receive("waybill_for_intermediate", SUPPLIER),
                    Activity::public("transport_intermediate"),
                    Activity::send("arrival_of_intermediate", MANUFACTURER),
                ]),
            ),
            (
                SUPPLIER,
                Block::Seq(vec![
                    Activity::receive("fwd_order_intermediate", MIDDLEMAN),
                    Activity::private("produce_intermediate"),
                    Activity::receive("request_details", SPECIAL_CARRIER),
                    Activity::private("prepare_details"),
                    Activity::send("production_status", MIDDLEMAN),
                    Activity::send("transport_details", SPECIAL_CARRIER),
                    Activity::public("pack_intermediate"),
                    Activity::private("prepare_transport"),
                    Activity::send("waybill_for_intermediate", SPECIAL_CARRIER),
                ]),
            ),
        ],
    );
    c.choreography = Some(interactions(&[
        ("order", BULK_BUYER, MANUFACTURER),
        ("order_intermediate", MANUFACTURER, MIDDLEMAN),
        ("fwd_order_intermediate", MIDDLEMAN, SUPPLIER),
        ("order_special_transport", MIDDLEMAN, SPECIAL_CARRIER),
        ("request_details", SPECIAL_CARRIER, SUPPLIER),
        ("production_status", SUPPLIER, MIDDLEMAN),
        ("transport_details", SUPPLIER, SPECIAL_CARRIER),
        ("transport_confirmation", SPECIAL_CARRIER, MIDDLEMAN),
        ("waybill_for_intermediate", SUPPLIER, SPECIAL_CARRIER),
        ("arrival_of_intermediate", SPECIAL_CARRIER, MANUFACTURER),
        ("deliver", MANUFACTURER, BULK_BUYER),
    ]));
    c
}

/// Carrier and manufacturer fragment inside a loop: the carrier either
/// transports or orders a special transport from the manufacturer, who then
/// runs a quick test.
pub fn example4() -> Choreography {
    let sc = Block::looped(
        Block::Xor(vec![
            Activity::public("transport_intermediate"),
            Activity::send("order_special_transport", MANUFACTURER),
        ]),
        2,
    );
    let man = Block::looped(
        Block::Xor(vec![
            Activity::private("idle"),
            Block::Seq(vec![
                Activity::receive("order_special_transport", SPECIAL_CARRIER),
                Activity::private("quick_test_intermediate"),
            ]),
        ]),
        2,
    );
    let mut c = with_public_views(&[MANUFACTURER, SPECIAL_CARRIER], vec![(MANUFACTURER, man), (SPECIAL_CARRIER, sc)]);
    c.choreography = Some(Block::looped(
        Block::Xor(vec![
            Block::Seq(Vec::new()),
            interactions(&[("order_special_transport", SPECIAL_CARRIER, MANUFACTURER)]),
        ]),
        2,
    ));
    c
}

/// Car manufacturer, injection molder and electro plater. Ordering new
/// parts is the last step at the car manufacturer, after the molder has
/// already shipped.
pub fn manufacturing() -> Choreography {
    let (p1, p2, p3) = ("Partner1", "Partner2", "Partner3");
    let mut c = with_public_views(
        &[p1, p2, p3],
        vec![
            (
                p1,
                Block::Seq(vec![
                    Activity::send("order_request", p2),
                    Activity::private("wait_for_order_completion"),
                    Activity::receive("plated_parts", p3),
                    Activity::private("check_electroplated_parts"),
                    Activity::private("put_parts_to_stock"),
                    Activity::private("place_order"),
                ]),
            ),
            (
                p2,
                Block::Seq(vec![
                    Activity::receive("order_request", p1),
                    Activity::private("prepare_for_manufacturing"),
                    Activity::private("manufacturing_of_parts"),
                    Activity::private("quality_control"),
                    Activity::send("molded_parts", p3),
                    Activity::private("resource_planning"),
                ]),
            ),
            (
                p3,
                Block::Seq(vec![
                    Activity::receive("molded_parts", p2),
                    Activity::private("electroplate_parts"),
                    Block::Xor(vec![Activity::private("bath_maintenance"), Block::Seq(Vec::new())]),
                    Activity::send("plated_parts", p1),
                ]),
            ),
        ],
    );
    c.choreography =
        Some(interactions(&[("order_request", p1, p2), ("molded_parts", p2, p3), ("plated_parts", p3, p1)]));
    c
}

fn node(partner: &str, label: &str, pattern: Pattern) -> RuleNode {
    RuleNode::activity(label, partner, label, pattern)
}

fn cons(from: &str, to: &str) -> RuleEdge {
    RuleEdge::new(from, to, Connector::Consequence)
}

/// Every `a` is eventually followed by `b`; node ids are the activity labels.
pub fn response(id: &str, a: (&str, &str), b: (&str, &str)) -> ComplianceRule {
    ComplianceRule {
        id: id.to_string(),
        nodes: vec![node(a.0, a.1, Pattern::AnteOcc), node(b.0, b.1, Pattern::ConsOcc)],
        edges: vec![cons(a.1, b.1)],
    }
}

/// If `a` and later `b` occur, `c` occurs in between.
pub fn between(id: &str, a: (&str, &str), b: (&str, &str), c: (&str, &str)) -> ComplianceRule {
    ComplianceRule {
        id: id.to_string(),
        nodes: vec![
            node(a.0, a.1, Pattern::AnteOcc),
            node(b.0, b.1, Pattern::AnteOcc),
            node(c.0, c.1, Pattern::ConsOcc),
        ],
        edges: vec![RuleEdge::new(a.1, b.1, Connector::Antecedence), cons(a.1, c.1), cons(c.1, b.1)],
    }
}

/// Production is followed by the final test.
pub fn c1() -> ComplianceRule {
    response("C1", (MANUFACTURER, "production"), (MANUFACTURER, "final_test"))
}

/// Packing precedes transport.
pub fn c2() -> ComplianceRule {
    ComplianceRule {
        id: "C2".to_string(),
        nodes: vec![
            node(SUPPLIER, "pack_intermediate", Pattern::ConsOcc),
            node(SPECIAL_CARRIER, "transport_intermediate", Pattern::AnteOcc),
        ],
        edges: vec![cons("pack_intermediate", "transport_intermediate")],
    }
}

/// Transport requires a prior permission of the authority and a prior safety check.
pub fn c3() -> ComplianceRule {
    ComplianceRule {
        id: "C3".to_string(),
        nodes: vec![
            node(SPECIAL_CARRIER, "transport_intermediate", Pattern::AnteOcc),
            node(MIDDLEMAN, "get_permission_of_authority", Pattern::ConsOcc),
            node(SPECIAL_CARRIER, "safety_check", Pattern::ConsOcc),
        ],
        edges: vec![
            cons("get_permission_of_authority", "transport_intermediate"),
            cons("safety_check", "transport_intermediate"),
        ],
    }
}

/// No transport before a quick test.
fn example4_rule() -> ComplianceRule {
    ComplianceRule {
        id: "E4".to_string(),
        nodes: vec![
            node(SPECIAL_CARRIER, "transport_intermediate", Pattern::ConsAbs),
            node(MANUFACTURER, "quick_test_intermediate", Pattern::AnteOcc),
        ],
        edges: vec![cons("transport_intermediate", "quick_test_intermediate")],
    }
}

fn example6_rule() -> ComplianceRule {
    ComplianceRule {
        id: "E6".to_string(),
        nodes: vec![
            node(MIDDLEMAN, "get_permission_of_authority", Pattern::AnteOcc),
            node(SUPPLIER, "prepare_transport", Pattern::AnteOcc),
            node(SPECIAL_CARRIER, "transport_intermediate", Pattern::ConsOcc),
            node(MANUFACTURER, "production", Pattern::ConsOcc),
        ],
        edges: vec![
            RuleEdge::new("get_permission_of_authority", "prepare_transport", Connector::Antecedence),
            cons("prepare_transport", "transport_intermediate"),
            cons("transport_intermediate", "production"),
        ],
    }
}

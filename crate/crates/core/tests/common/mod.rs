//! Independent reference computations shared by the integration tests.
//! Nothing here goes through the automata or the template search.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use comply_core::decomposition::templates::{build_assertion, match_shape, owner_of, template, Slot};
use comply_core::decomposition::{ChoreographyKnowledge, Decomposition, TemplateId};
use comply_core::process_model::{enumerate_traces, Choreography, LabelMode};
use comply_core::rule_model::{evaluate_rule, ComplianceRule, Pattern, Trace};

pub const ATOMIC: LabelMode = LabelMode::Atomic;

/// Whether `rule` holds on every run of the partner's private model, by
/// enumerating runs. Only sound for loop-free models shorter than the bound.
pub fn model_satisfies(chor: &Choreography, partner: &str, rule: &ComplianceRule) -> bool {
    let model = chor.private_model(partner).unwrap();
    enumerate_traces(model, partner, ATOMIC, 40).iter().all(|t| evaluate_rule(t, rule, ATOMIC).unwrap())
}

/// All words over `alphabet` up to `max_len`.
pub fn words(alphabet: &[String], max_len: usize) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::<String>::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &layer {
            for a in alphabet {
                let mut v = w.clone();
                v.push(a.clone());
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// Bounded implication check: no word up to `max_len` over the labels of
/// the rules satisfies every assertion and violates `gcr`.
pub fn implies_bounded(assertions: &[ComplianceRule], gcr: &ComplianceRule, max_len: usize) -> Option<Vec<String>> {
    let mut letters: BTreeSet<String> = gcr.labels(ATOMIC);
    for a in assertions {
        letters.extend(a.labels(ATOMIC));
    }
    let letters: Vec<String> = letters.into_iter().collect();
    words(&letters, max_len).into_iter().find(|w| {
        let t = Trace { events: w.clone() };
        assertions.iter().all(|a| evaluate_rule(&t, a, ATOMIC).unwrap()) && !evaluate_rule(&t, gcr, ATOMIC).unwrap()
    })
}

/// Every binding `(M1..Mk, intermediary)` of template `id` for `gcr` under
/// which each assertion holds on its owner's model, found by trying all
/// tuples of distinct message names.
pub fn brute_force_bindings(
    id: TemplateId,
    gcr: &ComplianceRule,
    chor: &Choreography,
) -> Vec<(Vec<String>, Option<String>)> {
    let t = template(id);
    let Some(vars) = match_shape(&t.shape, gcr) else { return Vec::new() };
    let k = ChoreographyKnowledge::new(chor.clone());
    let names: Vec<String> =
        chor.message_nodes().into_iter().map(|m| m.msg).collect::<BTreeSet<_>>().into_iter().collect();
    let involved = gcr.partners();
    let qs: Vec<Option<String>> = if t.assertions.iter().any(|a| owner_of(a, &vars, None).is_none()) {
        chor.private.keys().filter(|p| !involved.contains(*p)).cloned().map(Some).collect()
    } else {
        vec![None]
    };
    // messages exchanged between two partners, either direction
    let mut exchanged: BTreeSet<(String, String, String)> = BTreeSet::new();
    for g in &chor.gamma {
        exchanged.insert((g[0].clone(), g[2].clone(), g[1].clone()));
        exchanged.insert((g[2].clone(), g[0].clone(), g[1].clone()));
    }
    let mut cache: HashMap<(String, String), bool> = HashMap::new();
    let mut out = Vec::new();
    let mut tuple = Vec::new();
    tuples(&names, t.placeholders, &mut tuple, &mut |msgs| {
        for q in &qs {
            let binding: BTreeMap<usize, String> = msgs.iter().enumerate().map(|(i, m)| (i + 1, m.clone())).collect();
            let mut users: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
            let mut ok = true;
            for (j, a) in t.assertions.iter().enumerate() {
                let owner = owner_of(a, &vars, q.as_deref()).unwrap();
                for n in &a.nodes {
                    if let Slot::Msg(i) = n.slot {
                        users.entry(i).or_default().insert(owner.clone());
                    }
                }
                let Ok(rule) = build_assertion(&t, j, &vars, &binding, &owner, &k) else {
                    ok = false;
                    break;
                };
                let key = (owner.clone(), rule.to_json());
                let holds = *cache.entry(key).or_insert_with(|| model_satisfies(chor, &owner, &rule));
                if !holds {
                    ok = false;
                    break;
                }
            }
            // a message shared by two owners must travel between them
            ok = ok
                && users.iter().all(|(i, us)| {
                    let us: Vec<&String> = us.iter().collect();
                    us.len() != 2 || exchanged.contains(&(us[0].clone(), us[1].clone(), msgs[i - 1].clone()))
                });
            if ok {
                out.push((msgs.to_vec(), q.clone()));
            }
        }
    });
    out.sort();
    out
}

fn tuples(names: &[String], k: usize, acc: &mut Vec<String>, f: &mut dyn FnMut(&[String])) {
    if acc.len() == k {
        f(acc);
        return;
    }
    for n in names {
        if acc.contains(n) {
            continue;
        }
        acc.push(n.clone());
        tuples(names, k, acc, f);
        acc.pop();
    }
}

/// Compact rendering of one assertion: `partner: node node | from->to ...`
/// with `+` for consequence occurrence, `-` for consequence absence and `!`
/// for antecedence absence.
pub fn render(d: &Decomposition) -> Vec<String> {
    d.assertions
        .iter()
        .map(|a| {
            let nodes: Vec<String> = a
                .rule
                .nodes
                .iter()
                .map(|n| {
                    let mark = match n.pattern {
                        Pattern::AnteOcc => "",
                        Pattern::AnteAbs => "!",
                        Pattern::ConsOcc => "+",
                        Pattern::ConsAbs => "-",
                    };
                    format!("{mark}{}", n.activity)
                })
                .collect();
            let name = |id: &str| a.rule.node(id).unwrap().activity.clone();
            let edges: Vec<String> =
                a.rule.edges.iter().map(|e| format!("{}->{}", name(&e.from), name(&e.to))).collect();
            format!("{}: {} | {}", a.partner, nodes.join(" "), edges.join(" "))
        })
        .collect()
}

/// Message names a template decomposition bound, in placeholder order
/// recovered from the assertions (names not in `gcr`).
pub fn bound_messages(d: &Decomposition, gcr: &ComplianceRule) -> BTreeSet<String> {
    let own: BTreeSet<&String> = gcr.nodes.iter().map(|n| &n.activity).collect();
    d.assertions
        .iter()
        .flat_map(|a| a.rule.nodes.iter().map(|n| n.activity.clone()))
        .filter(|x| !own.contains(x))
        .collect()
}

/// Random well-formed rule over activities of one partner `P`: `nodes`
/// nodes labelled from `letters`, first node an antecedence occurrence,
/// edges only from lower to higher index so the graph is acyclic.
pub fn random_rule(rng: &mut impl rand::Rng, letters: &[&str], nodes: usize) -> ComplianceRule {
    use comply_core::rule_model::{Connector, RuleEdge, RuleNode};
    loop {
        let mut r = ComplianceRule::new("R");
        for i in 0..nodes {
            let pattern = if i == 0 {
                Pattern::AnteOcc
            } else {
                [Pattern::AnteOcc, Pattern::AnteAbs, Pattern::ConsOcc, Pattern::ConsAbs][rng.random_range(0..4)]
            };
            let act = letters[rng.random_range(0..letters.len())];
            r.nodes.push(RuleNode::activity(&format!("n{i}"), "P", act, pattern));
        }
        for j in 1..nodes {
            for i in 0..j {
                if rng.random_bool(0.5) {
                    let (a, b) = (r.nodes[i].pattern, r.nodes[j].pattern);
                    let c = if a.is_antecedence() && b.is_antecedence() && rng.random_bool(0.5) {
                        Connector::Antecedence
                    } else {
                        Connector::Consequence
                    };
                    let (from, to) = if rng.random_bool(0.5) { (i, j) } else { (j, i) };
                    let (from, to) = if from < to { (from, to) } else { (to, from) };
                    r.edges.push(RuleEdge::new(&format!("n{from}"), &format!("n{to}"), c));
                }
            }
        }
        if comply_core::rule_model::validate_rule(&r).is_empty() {
            return r;
        }
    }
}

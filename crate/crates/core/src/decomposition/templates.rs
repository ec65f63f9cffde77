//! Transitivity templates: rule shapes whose decomposition into assertions
//! glued by messages `M1..Mk` is known to be sound.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rule_model::{ComplianceRule, Connector, Pattern, RuleEdge, RuleNode};

use super::{from_template, message_names, Decomposition, LocalKnowledge};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TemplateId {
    /// Rightward response through one message.
    T1a,
    /// Leftward precedence through one message.
    T1b,
    /// Response through two messages and an intermediary partner.
    Cor1,
    /// Absence after, zig-zag.
    T2a,
    /// Absence before, zig-zag.
    T2b,
    /// Two-by-two chain.
    T3,
    /// `n` ordered antecedences followed by a chain of `m` consequences.
    T4 { n: usize, m: usize },
    /// `C` between `A` and `B`.
    T5,
    /// `C` between `A` and `B` using five messages.
    T6,
    /// `C` between `A` and `B`, loop-free models only.
    T7,
    /// `A` requires `B`, no order.
    T8,
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemplateId::T4 { n, m } => write!(f, "T4({n},{m})"),
            other => write!(f, "{other:?}"),
        }
    }
}

impl FromStr for TemplateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "T1a" => TemplateId::T1a,
            "T1b" => TemplateId::T1b,
            "Cor1" => TemplateId::Cor1,
            "T2a" => TemplateId::T2a,
            "T2b" => TemplateId::T2b,
            "T3" => TemplateId::T3,
            "T5" => TemplateId::T5,
            "T6" => TemplateId::T6,
            "T7" => TemplateId::T7,
            "T8" => TemplateId::T8,
            "T4" => TemplateId::T4 { n: 2, m: 2 },
            _ => {
                let inner = s
                    .strip_prefix("T4(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::input(format!("unknown template {s}")))?;
                let (n, m) = inner.split_once(',').ok_or_else(|| Error::input(format!("unknown template {s}")))?;
                let parse = |x: &str| {
                    x.trim().parse::<usize>().map_err(|_| Error::input(format!("bad template parameter in {s}")))
                };
                let (n, m) = (parse(n)?, parse(m)?);
                if n < 2 || m < 1 {
                    return Err(Error::input(format!("{s} needs n >= 2 and m >= 1")));
                }
                TemplateId::T4 { n, m }
            }
        })
    }
}

impl TryFrom<String> for TemplateId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TemplateId> for String {
    fn from(t: TemplateId) -> String {
        t.to_string()
    }
}

/// What a template node stands for.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Slot {
    /// A node of the rule being decomposed, by shape variable.
    Var(String),
    /// Message placeholder `M<i>`, 1-based.
    Msg(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemplateNode {
    pub id: String,
    pub slot: Slot,
    pub pattern: Pattern,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Owner {
    /// The partner of the rule node bound to this shape variable.
    Var(String),
    /// A partner not involved in the rule.
    Intermediary,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemplateAssertion {
    pub owner: Owner,
    pub nodes: Vec<TemplateNode>,
    pub edges: Vec<RuleEdge>,
}

impl TemplateAssertion {
    fn placeholders(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n.slot {
                Slot::Msg(i) => Some(i),
                Slot::Var(_) => None,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TheoremTemplate {
    pub id: TemplateId,
    /// Rule shape; node ids, activities and partners are the variable names.
    pub shape: ComplianceRule,
    pub assertions: Vec<TemplateAssertion>,
    pub placeholders: usize,
}

impl TheoremTemplate {
    pub fn has_intermediary(&self) -> bool {
        self.assertions.iter().any(|a| a.owner == Owner::Intermediary)
    }
}

fn v(id: &str, p: Pattern) -> TemplateNode {
    TemplateNode { id: id.to_string(), slot: Slot::Var(id.to_string()), pattern: p }
}

fn m(i: usize, p: Pattern) -> TemplateNode {
    TemplateNode { id: format!("M{i}"), slot: Slot::Msg(i), pattern: p }
}

fn c(from: &str, to: &str) -> RuleEdge {
    RuleEdge::new(from, to, Connector::Consequence)
}

fn a(from: &str, to: &str) -> RuleEdge {
    RuleEdge::new(from, to, Connector::Antecedence)
}

fn at(owner: &str, nodes: Vec<TemplateNode>, edges: Vec<RuleEdge>) -> TemplateAssertion {
    TemplateAssertion { owner: Owner::Var(owner.to_string()), nodes, edges }
}

fn shape(nodes: &[(&str, Pattern)], edges: Vec<RuleEdge>) -> ComplianceRule {
    ComplianceRule {
        id: "shape".to_string(),
        nodes: nodes.iter().map(|(id, p)| RuleNode::activity(id, id, id, *p)).collect(),
        edges,
    }
}

use Pattern::{AnteOcc as AO, ConsAbs as CA, ConsOcc as CO};

fn between_shape() -> ComplianceRule {
    shape(&[("A", AO), ("B", AO), ("C", CO)], vec![a("A", "B"), c("A", "C"), c("C", "B")])
}

/// `C` occurs between the two messages `M1` and `M3`.
fn between_c() -> TemplateAssertion {
    at("C", vec![m(1, AO), m(3, AO), v("C", CO)], vec![c("M1", "C"), c("C", "M3")])
}

/// The template with the given id.
pub fn template(id: TemplateId) -> TheoremTemplate {
    let (shape, assertions, k) = match id {
        TemplateId::T1a => (
            shape(&[("A", AO), ("C", CO)], vec![c("A", "C")]),
            vec![
                at("A", vec![v("A", AO), m(1, CO)], vec![c("A", "M1")]),
                at("C", vec![m(1, AO), v("C", CO)], vec![c("M1", "C")]),
            ],
            1,
        ),
        TemplateId::Cor1 => (
            shape(&[("A", AO), ("C", CO)], vec![c("A", "C")]),
            vec![
                at("A", vec![v("A", AO), m(1, CO)], vec![c("A", "M1")]),
                TemplateAssertion {
                    owner: Owner::Intermediary,
                    nodes: vec![m(1, AO), m(2, CO)],
                    edges: vec![c("M1", "M2")],
                },
                at("C", vec![m(2, AO), v("C", CO)], vec![c("M2", "C")]),
            ],
            2,
        ),
        TemplateId::T1b => (
            shape(&[("C", CO), ("A", AO)], vec![c("C", "A")]),
            vec![
                at("A", vec![v("A", AO), m(1, CO)], vec![c("M1", "A")]),
                at("C", vec![m(1, AO), v("C", CO)], vec![c("C", "M1")]),
            ],
            1,
        ),
        TemplateId::T2a => (
            shape(&[("A", AO), ("C", CA)], vec![c("A", "C")]),
            vec![
                at("A", vec![v("A", AO), m(1, CO)], vec![c("M1", "A")]),
                at("C", vec![m(1, AO), v("C", CA)], vec![c("M1", "C")]),
            ],
            1,
        ),
        TemplateId::T2b => (
            shape(&[("C", CA), ("A", AO)], vec![c("C", "A")]),
            vec![
                at("A", vec![v("A", AO), m(1, CO)], vec![c("A", "M1")]),
                at("C", vec![m(1, AO), v("C", CA)], vec![c("C", "M1")]),
            ],
            1,
        ),
        TemplateId::T8 => (
            shape(&[("A", AO), ("B", CO)], vec![]),
            vec![at("A", vec![v("A", AO), m(1, CO)], vec![c("A", "M1")]), at("B", vec![m(1, AO), v("B", CO)], vec![])],
            1,
        ),
        TemplateId::T5 => (
            between_shape(),
            vec![
                at("A", vec![v("A", AO), m(1, CO), m(2, CO)], vec![c("A", "M1"), c("M2", "M1")]),
                at("B", vec![v("B", AO), m(2, CO), m(3, CO)], vec![c("M2", "M3"), c("M3", "B")]),
                between_c(),
            ],
            3,
        ),
        TemplateId::T7 => (
            between_shape(),
            vec![
                at("A", vec![v("A", AO), m(1, CO), m(2, CO)], vec![c("A", "M1"), c("M1", "M2")]),
                at("B", vec![v("B", AO), m(2, CO), m(3, CO)], vec![c("M2", "M3"), c("M3", "B")]),
                between_c(),
            ],
            3,
        ),
        TemplateId::T6 => (
            between_shape(),
            vec![
                at(
                    "A",
                    vec![v("A", AO), m(1, CO), m(2, CO), m(3, CO), m(4, CO)],
                    vec![c("M1", "A"), c("A", "M2"), c("M2", "M3"), c("M3", "M4")],
                ),
                at(
                    "B",
                    vec![m(1, AO), v("B", AO), m(4, AO), m(3, CA)],
                    vec![a("M1", "B"), c("B", "M3"), c("M3", "M4")],
                ),
                at("B", vec![m(3, AO), v("B", AO), m(5, CO)], vec![c("M3", "M5"), c("M5", "B")]),
                at("C", vec![m(2, AO), m(5, AO), v("C", CO)], vec![c("M2", "C"), c("C", "M5")]),
            ],
            5,
        ),
        TemplateId::T3 => return chain(TemplateId::T3, 2, 2),
        TemplateId::T4 { n, m } => return chain(id, n, m),
    };
    TheoremTemplate { id, shape, assertions, placeholders: k }
}

/// Antecedences `A1 ⇒ .. ⇒ An` followed by consequences `C1 → .. → Cm`.
fn chain(id: TemplateId, n: usize, mm: usize) -> TheoremTemplate {
    let av = |i: usize| format!("A{i}");
    let cv = |j: usize| format!("C{j}");
    let mut nodes: Vec<(String, Pattern)> = (1..=n).map(|i| (av(i), AO)).collect();
    nodes.extend((1..=mm).map(|j| (cv(j), CO)));
    let mut edges: Vec<RuleEdge> = (1..n).map(|i| a(&av(i), &av(i + 1))).collect();
    edges.push(c(&av(n), &cv(1)));
    edges.extend((1..mm).map(|j| c(&cv(j), &cv(j + 1))));
    let shape = ComplianceRule {
        id: "shape".to_string(),
        nodes: nodes.iter().map(|(id, p)| RuleNode::activity(id, id, id, *p)).collect(),
        edges,
    };
    let mk = |i: usize| format!("M{i}");
    let mut out = vec![at(&av(1), vec![v(&av(1), AO), m(1, CO)], vec![c("M1", &av(1))])];
    for i in 2..n {
        out.push(at(
            &av(i),
            vec![m(i - 1, AO), v(&av(i), AO), m(i, CO)],
            vec![a(&mk(i - 1), &av(i)), c(&mk(i), &av(i))],
        ));
    }
    out.push(at(&av(n), vec![m(n - 1, AO), v(&av(n), AO), m(n, CO)], vec![a(&mk(n - 1), &av(n)), c(&av(n), &mk(n))]));
    for j in 1..mm {
        out.push(at(
            &cv(j),
            vec![m(n + j - 1, AO), v(&cv(j), CO), m(n + j, CO)],
            vec![c(&mk(n + j - 1), &cv(j)), c(&cv(j), &mk(n + j))],
        ));
    }
    out.push(at(&cv(mm), vec![m(n + mm - 1, AO), v(&cv(mm), CO)], vec![c(&mk(n + mm - 1), &cv(mm))]));
    TheoremTemplate { id, shape, assertions: out, placeholders: n + mm - 1 }
}

/// Exact structural match of `shape` onto `gcr`: a bijection on nodes
/// preserving patterns and every edge with its connector.
pub fn match_shape(shape: &ComplianceRule, gcr: &ComplianceRule) -> Option<BTreeMap<String, RuleNode>> {
    if shape.nodes.len() != gcr.nodes.len() || shape.edges.len() != gcr.edges.len() {
        return None;
    }
    let edge_of =
        |r: &ComplianceRule, x: &str, y: &str| r.edges.iter().find(|e| e.from == x && e.to == y).map(|e| e.connector);
    fn go(
        i: usize,
        shape: &ComplianceRule,
        gcr: &ComplianceRule,
        assign: &mut Vec<usize>,
        edge_of: &dyn Fn(&ComplianceRule, &str, &str) -> Option<Connector>,
    ) -> bool {
        if i == shape.nodes.len() {
            return true;
        }
        for j in 0..gcr.nodes.len() {
            if assign.contains(&j) || gcr.nodes[j].pattern != shape.nodes[i].pattern {
                continue;
            }
            let ok = (0..i).all(|p| {
                let (sx, sy) = (&shape.nodes[p].id, &shape.nodes[i].id);
                let (gx, gy) = (&gcr.nodes[assign[p]].id, &gcr.nodes[j].id);
                edge_of(shape, sx, sy) == edge_of(gcr, gx, gy) && edge_of(shape, sy, sx) == edge_of(gcr, gy, gx)
            });
            if ok {
                assign.push(j);
                if go(i + 1, shape, gcr, assign, edge_of) {
                    return true;
                }
                assign.pop();
            }
        }
        false
    }
    let mut assign = Vec::new();
    if !go(0, shape, gcr, &mut assign, &edge_of) {
        return None;
    }
    Some(shape.nodes.iter().zip(&assign).map(|(s, &j)| (s.id.clone(), gcr.nodes[j].clone())).collect())
}

/// Applicable templates for `gcr`, in the order they should be tried.
pub fn select_template(gcr: &ComplianceRule, k: &dyn LocalKnowledge) -> Vec<TemplateId> {
    if gcr.partners().len() < 2 {
        return Vec::new();
    }
    let fits = |id: TemplateId| match_shape(&template(id).shape, gcr).is_some();
    if fits(TemplateId::T5) {
        let loop_free = gcr.nodes.iter().all(|n| !k.in_loop(&n.partner, &n.activity));
        let mut out = Vec::new();
        if loop_free {
            out.push(TemplateId::T7);
        }
        out.extend([TemplateId::T5, TemplateId::T6]);
        return out;
    }
    let n = gcr.nodes_with(Pattern::AnteOcc).count();
    let mm = gcr.nodes_with(Pattern::ConsOcc).count();
    if n >= 2 && mm >= 1 && n + mm == gcr.nodes.len() && fits(TemplateId::T4 { n, m: mm }) {
        return if (n, mm) == (2, 2) {
            vec![TemplateId::T3, TemplateId::T4 { n, m: mm }]
        } else {
            vec![TemplateId::T4 { n, m: mm }]
        };
    }
    for (probe, ids) in [
        (TemplateId::T1a, vec![TemplateId::T1a, TemplateId::Cor1]),
        (TemplateId::T1b, vec![TemplateId::T1b]),
        (TemplateId::T2a, vec![TemplateId::T2a]),
        (TemplateId::T2b, vec![TemplateId::T2b]),
        (TemplateId::T8, vec![TemplateId::T8]),
    ] {
        if fits(probe) {
            return ids;
        }
    }
    Vec::new()
}

/// A placeholder binding, `M<i>` to message name.
pub type Binding = BTreeMap<usize, String>;

/// Partner owning template assertion `a` under the variable map and intermediary.
pub fn owner_of(a: &TemplateAssertion, vars: &BTreeMap<String, RuleNode>, q: Option<&str>) -> Option<String> {
    match &a.owner {
        Owner::Var(x) => vars.get(x).map(|n| n.partner.clone()),
        Owner::Intermediary => q.map(str::to_string),
    }
}

/// For each placeholder of assertion `j`: the partner it must be exchanged
/// with, `None` when only the owner uses it; `Err(())` when unsatisfiable.
fn peer_requirements(
    t: &TheoremTemplate,
    j: usize,
    vars: &BTreeMap<String, RuleNode>,
    q: Option<&str>,
) -> std::result::Result<BTreeMap<usize, Option<String>>, ()> {
    let me = owner_of(&t.assertions[j], vars, q).ok_or(())?;
    let mut out = BTreeMap::new();
    for i in t.assertions[j].placeholders() {
        let users: BTreeSet<String> = t
            .assertions
            .iter()
            .filter(|a| a.placeholders().contains(&i))
            .filter_map(|a| owner_of(a, vars, q))
            .filter(|p| *p != me)
            .collect();
        match users.len() {
            0 => out.insert(i, None),
            1 => out.insert(i, users.into_iter().next()),
            _ => return Err(()),
        };
    }
    Ok(out)
}

/// Concrete rule of assertion `j`; consequence placeholders missing from
/// `binding` are left out together with their edges.
pub fn build_assertion(
    t: &TheoremTemplate,
    j: usize,
    vars: &BTreeMap<String, RuleNode>,
    binding: &Binding,
    owner: &str,
    k: &dyn LocalKnowledge,
) -> Result<ComplianceRule> {
    let ta = &t.assertions[j];
    let msgs = k.messages(owner);
    let mut ids: BTreeMap<&str, String> = BTreeMap::new();
    let mut nodes = Vec::new();
    for n in &ta.nodes {
        let node = match &n.slot {
            Slot::Var(x) => {
                let mut g = vars[x].clone();
                g.pattern = n.pattern;
                g
            }
            Slot::Msg(i) => {
                let Some(name) = binding.get(i) else {
                    if n.pattern.is_antecedence() {
                        return Err(Error::input(format!("placeholder M{i} unbound")));
                    }
                    continue;
                };
                let mn = msgs
                    .iter()
                    .find(|m| m.msg == *name)
                    .ok_or_else(|| Error::input(format!("partner {owner} does not exchange message {name}")))?;
                mn.rule_node(name, n.pattern)
            }
        };
        ids.insert(n.id.as_str(), node.id.clone());
        nodes.push(node);
    }
    let mut seen = BTreeSet::new();
    for nd in &nodes {
        if !seen.insert(nd.id.clone()) {
            return Err(Error::input(format!("node id {} used twice in a template assertion", nd.id)));
        }
    }
    let edges = ta
        .edges
        .iter()
        .filter_map(|e| Some(RuleEdge::new(ids.get(e.from.as_str())?, ids.get(e.to.as_str())?, e.connector)))
        .collect();
    Ok(ComplianceRule { id: format!("{}.{}", t.id, j + 1), nodes, edges })
}

/// All bindings of assertion `j`'s placeholders to messages of its owner
/// that hold on the owner's model, in lexicographic order of the bound
/// names. Partial bindings are pruned as soon as every antecedence
/// placeholder is bound.
pub fn assertion_candidates(
    k: &mut dyn LocalKnowledge,
    t: &TheoremTemplate,
    j: usize,
    vars: &BTreeMap<String, RuleNode>,
    q: Option<&str>,
    evaluations: &mut u64,
) -> Result<Vec<Binding>> {
    let Some(owner) = owner_of(&t.assertions[j], vars, q) else { return Ok(Vec::new()) };
    let Ok(peers) = peer_requirements(t, j, vars, q) else { return Ok(Vec::new()) };
    let ta = &t.assertions[j];
    let msgs = k.messages(&owner);
    let mut order: Vec<(bool, usize)> = ta
        .nodes
        .iter()
        .filter_map(|n| match n.slot {
            Slot::Msg(i) => Some((!n.pattern.is_antecedence(), i)),
            Slot::Var(_) => None,
        })
        .collect();
    order.sort();
    let ante_count = order.iter().filter(|(cons, _)| !cons).count();
    let options: Vec<Vec<String>> = order
        .iter()
        .map(|(_, i)| {
            let ok: Vec<_> = msgs.iter().filter(|m| peers[i].as_ref().is_none_or(|p| m.peer == *p)).cloned().collect();
            message_names(&ok)
        })
        .collect();

    struct Search<'a> {
        t: &'a TheoremTemplate,
        j: usize,
        vars: &'a BTreeMap<String, RuleNode>,
        owner: String,
        order: Vec<(bool, usize)>,
        options: Vec<Vec<String>>,
        ante_count: usize,
        out: Vec<Binding>,
    }
    fn go(s: &mut Search, k: &mut dyn LocalKnowledge, depth: usize, b: &mut Binding, ev: &mut u64) -> Result<()> {
        if depth >= s.ante_count {
            *ev += 1;
            let rule = build_assertion(s.t, s.j, s.vars, b, &s.owner, k)?;
            if !k.holds(&s.owner, &rule)? {
                return Ok(());
            }
        }
        if depth == s.order.len() {
            s.out.push(b.clone());
            return Ok(());
        }
        let i = s.order[depth].1;
        for name in s.options[depth].clone() {
            if b.values().any(|x| *x == name) {
                continue;
            }
            b.insert(i, name);
            go(s, k, depth + 1, b, ev)?;
            b.remove(&i);
        }
        Ok(())
    }
    let mut s = Search { t, j, vars, owner, order, options, ante_count, out: Vec::new() };
    go(&mut s, k, 0, &mut Binding::new(), evaluations)?;
    let mut out = s.out;
    out.sort_by_key(|b| b.values().cloned().collect::<Vec<_>>());
    Ok(out)
}

/// Every joint binding consistent across all proposal lists (one list per
/// template assertion): shared placeholders agree and distinct placeholders
/// bind distinct messages. Sorted lexicographically by `M1..Mk`.
pub fn match_all(placeholders: usize, proposals: &[Vec<Binding>]) -> Vec<Vec<String>> {
    fn go(i: usize, proposals: &[Vec<Binding>], acc: &mut Binding, k: usize, out: &mut BTreeSet<Vec<String>>) {
        if i == proposals.len() {
            if acc.len() == k {
                out.insert(acc.values().cloned().collect());
            }
            return;
        }
        for cand in &proposals[i] {
            let fits = cand.iter().all(|(p, name)| match acc.get(p) {
                Some(x) => x == name,
                None => !acc.values().any(|x| x == name),
            });
            if !fits {
                continue;
            }
            let added: Vec<usize> = cand.keys().filter(|p| !acc.contains_key(p)).copied().collect();
            acc.extend(cand.clone());
            go(i + 1, proposals, acc, k, out);
            for p in added {
                acc.remove(&p);
            }
        }
    }
    let mut out = BTreeSet::new();
    go(0, proposals, &mut Binding::new(), placeholders, &mut out);
    out.into_iter().collect()
}

/// First joint binding in lexicographic order, if any.
pub fn match_candidates(placeholders: usize, proposals: &[Vec<Binding>]) -> Option<Vec<String>> {
    match_all(placeholders, proposals).into_iter().next()
}

/// Partners that may serve as intermediary: everyone outside the rule, sorted.
pub fn intermediaries(gcr: &ComplianceRule, k: &dyn LocalKnowledge) -> Vec<String> {
    let involved = gcr.partners();
    k.partners().into_iter().filter(|p| !involved.contains(p)).collect()
}

/// Instantiates template `id` for `gcr` with explicit messages `M1..Mk`
/// (and intermediary `q`), without checking local compliance.
pub fn instantiate(
    id: TemplateId,
    gcr: &ComplianceRule,
    k: &dyn LocalKnowledge,
    messages: &[String],
    q: Option<&str>,
) -> Result<Decomposition> {
    let t = template(id);
    let vars = match_shape(&t.shape, gcr).ok_or_else(|| Error::NoTemplate(format!("{} does not fit {id}", gcr.id)))?;
    if messages.len() != t.placeholders {
        return Err(Error::input(format!("{id} needs {} messages, got {}", t.placeholders, messages.len())));
    }
    let binding: Binding = messages.iter().enumerate().map(|(i, m)| (i + 1, m.clone())).collect();
    let mut rules = Vec::new();
    for (j, a) in t.assertions.iter().enumerate() {
        let owner = owner_of(a, &vars, q).ok_or_else(|| Error::input(format!("{id} needs an intermediary partner")))?;
        rules.push((owner.clone(), build_assertion(&t, j, &vars, &binding, &owner, k)?));
    }
    Ok(from_template(&gcr.id, &id.to_string(), rules))
}

/// Every locally compliant instantiation of template `id` for `gcr`,
/// ordered by `(M1..Mk, intermediary)`.
pub fn apply_theorem_template(
    id: &TemplateId,
    gcr: &ComplianceRule,
    k: &mut dyn LocalKnowledge,
) -> Result<Vec<Decomposition>> {
    let t = template(*id);
    let vars = match_shape(&t.shape, gcr).ok_or_else(|| Error::NoTemplate(format!("{} does not fit {id}", gcr.id)))?;
    for n in &gcr.nodes {
        if !k.has_node(n) {
            return Err(Error::input(format!("partner {} has no activity {}", n.partner, n.activity)));
        }
    }
    let qs: Vec<Option<String>> =
        if t.has_intermediary() { intermediaries(gcr, k).into_iter().map(Some).collect() } else { vec![None] };
    let mut found: Vec<(Vec<String>, Option<String>)> = Vec::new();
    let mut evaluations = 0;
    for q in &qs {
        let mut proposals = Vec::new();
        for j in 0..t.assertions.len() {
            let c = assertion_candidates(k, &t, j, &vars, q.as_deref(), &mut evaluations)?;
            if c.is_empty() {
                break;
            }
            proposals.push(c);
        }
        if proposals.len() < t.assertions.len() {
            continue;
        }
        found.extend(match_all(t.placeholders, &proposals).into_iter().map(|b| (b, q.clone())));
    }
    found.sort();
    found
        .into_iter()
        .map(|(msgs, q)| {
            let mut d = instantiate(*id, gcr, k, &msgs, q.as_deref())?;
            d.counters.candidate_evaluations = evaluations;
            Ok(d)
        })
        .collect()
}

//! Decomposition of a global compliance rule into per-partner assertions.
//!
//! Two routes exist: instantiating a transitivity template from the library
//! in [`templates`], or the general walk in [`decompose`] that splits the
//! rule along partner boundaries and glues the pieces with message chains,
//! inserting synchronization messages where no chain exists.

pub mod knowledge;
pub mod templates;
pub mod theorems;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process_model::{Activity, Block, Choreography, MessageNode, Placement};
use crate::rule_model::{ComplianceRule, Connector, Pattern, RuleEdge, RuleNode};

pub use knowledge::{ChoreographyKnowledge, LocalKnowledge};
pub use templates::{
    apply_theorem_template, instantiate, match_candidates, select_template, TemplateId, TheoremTemplate,
};
pub use theorems::{validate_theorem, TheoremResult};

/// Where an assertion came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Provenance {
    pub gcr_id: String,
    /// Template id, or `split` for the general walk.
    pub template: String,
    /// Message pair gluing this assertion to its neighbour, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<(String, String)>,
}

/// A rule one partner commits to; it only mentions that partner's own
/// activities and the messages it sends or receives.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assertion {
    pub partner: String,
    pub rule: ComplianceRule,
    pub provenance: Provenance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Transitive,
    RequiredSync,
    Failed,
}

/// Position of an inserted activity: next to `label`, or at the model
/// boundary when `label` is absent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub placement: String,
}

impl Anchor {
    fn next_to(label: &str, at: Placement) -> Self {
        Anchor { label: Some(label.to_string()), placement: placement_name(at).to_string() }
    }

    fn boundary(at: Placement) -> Self {
        Anchor { label: None, placement: placement_name(at).to_string() }
    }

    fn placement(&self) -> Placement {
        if self.placement == "before" {
            Placement::Before
        } else {
            Placement::After
        }
    }
}

fn placement_name(at: Placement) -> &'static str {
    match at {
        Placement::Before => "before",
        Placement::After => "after",
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SyncMessage {
    pub name: String,
    pub from_partner: String,
    pub to_partner: String,
    pub send: Anchor,
    pub receive: Anchor,
}

/// Operation counts of one decomposition run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OpCounters {
    pub neighbor_scans: u64,
    pub candidate_evaluations: u64,
    pub theta_pair_tests: u64,
    pub merge_comparisons: u64,
}

impl OpCounters {
    pub fn total(&self) -> u64 {
        self.neighbor_scans + self.candidate_evaluations + self.theta_pair_tests + self.merge_comparisons
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Decomposition {
    pub gcr_id: String,
    pub status: Status,
    pub assertions: Vec<Assertion>,
    pub sync_messages: Vec<SyncMessage>,
    #[serde(default)]
    pub counters: OpCounters,
    /// The choreography after sync insertion; absent when unchanged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choreography: Option<Choreography>,
}

impl Decomposition {
    pub fn rules(&self) -> Vec<ComplianceRule> {
        self.assertions.iter().map(|a| a.rule.clone()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("decomposition serializes")
    }

    fn failed(gcr_id: &str, counters: OpCounters) -> Self {
        Decomposition {
            gcr_id: gcr_id.to_string(),
            status: Status::Failed,
            assertions: Vec::new(),
            sync_messages: Vec::new(),
            counters,
            choreography: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DecomposeOptions {
    /// Report `Failed` instead of inserting synchronization messages.
    pub no_sync: bool,
}

/// How a severed cross-partner edge relates the visited node `n` to the new node `s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossCase {
    /// `n → s`, `s` must occur.
    OccAfter,
    /// `s → n`, `s` must occur.
    OccBefore,
    /// `n → s`, `s` must not occur.
    AbsAfter,
    /// `s → n`, `s` must not occur.
    AbsBefore,
    /// No edge: `s` must occur somewhere.
    Unordered,
}

/// Direction in which a message chain is followed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteDir {
    /// Each message is followed by the next.
    Forward,
    /// Each message is preceded by the next.
    Backward,
    /// Each message implies the next, in any order.
    Unordered,
}

impl CrossCase {
    fn route_dir(self) -> RouteDir {
        match self {
            CrossCase::OccAfter | CrossCase::AbsBefore => RouteDir::Forward,
            CrossCase::OccBefore | CrossCase::AbsAfter => RouteDir::Backward,
            CrossCase::Unordered => RouteDir::Unordered,
        }
    }
}

/// One local fact `partner ⊨ from ⇒ to` along a message chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteStep {
    pub partner: String,
    pub from: String,
    pub to: String,
}

/// A message pair connecting both sides of a severed edge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThetaPair {
    pub m_n: String,
    pub m_s: String,
    pub route: Vec<RouteStep>,
}

/// Two-node rule `a ⇒ b` in direction `dir`, with `a` as the antecedence.
pub fn fact_rule(a: &RuleNode, b: &RuleNode, dir: RouteDir) -> ComplianceRule {
    let mut x = a.clone();
    x.id = "a".to_string();
    x.pattern = Pattern::AnteOcc;
    let mut y = b.clone();
    y.id = "b".to_string();
    y.pattern = Pattern::ConsOcc;
    let edges = match dir {
        RouteDir::Forward => vec![RuleEdge::new("a", "b", Connector::Consequence)],
        RouteDir::Backward => vec![RuleEdge::new("b", "a", Connector::Consequence)],
        RouteDir::Unordered => Vec::new(),
    };
    ComplianceRule { id: "fact".to_string(), nodes: vec![x, y], edges }
}

/// Rule node for message `msg` as seen by `partner`.
fn message_node(k: &dyn LocalKnowledge, partner: &str, msg: &str, id: &str, pattern: Pattern) -> Result<RuleNode> {
    k.messages(partner)
        .into_iter()
        .find(|m| m.msg == msg)
        .map(|m| m.rule_node(id, pattern))
        .ok_or_else(|| Error::input(format!("partner {partner} does not exchange message {msg}")))
}

/// Messages of the partner of `n` related to `n` as the case requires.
fn n_side(k: &mut dyn LocalKnowledge, n: &RuleNode, case: CrossCase, c: &mut OpCounters) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for m in k.messages(&n.partner) {
        if n.is_message() && m.msg == n.activity {
            continue;
        }
        c.candidate_evaluations += 1;
        let node = m.rule_node("m", Pattern::ConsOcc);
        let dir = match case {
            CrossCase::OccAfter | CrossCase::AbsBefore => RouteDir::Forward,
            CrossCase::OccBefore | CrossCase::AbsAfter => RouteDir::Backward,
            CrossCase::Unordered => RouteDir::Unordered,
        };
        if k.holds(&n.partner, &fact_rule(n, &node, dir))? {
            out.push(m.msg);
        }
    }
    out.dedup();
    Ok(out)
}

/// The core assertion on the partner of `s`: anchored at message `m`.
fn s_core(m: &RuleNode, s: &RuleNode, case: CrossCase) -> ComplianceRule {
    let mut a = m.clone();
    a.pattern = Pattern::AnteOcc;
    let mut b = s.clone();
    b.pattern = match case {
        CrossCase::AbsAfter | CrossCase::AbsBefore => Pattern::ConsAbs,
        _ => Pattern::ConsOcc,
    };
    let edges = match case {
        CrossCase::OccAfter | CrossCase::AbsAfter => vec![RuleEdge::new(&a.id, &b.id, Connector::Consequence)],
        CrossCase::OccBefore | CrossCase::AbsBefore => vec![RuleEdge::new(&b.id, &a.id, Connector::Consequence)],
        CrossCase::Unordered => Vec::new(),
    };
    ComplianceRule { id: "core".to_string(), nodes: vec![a, b], edges }
}

fn s_side(k: &mut dyn LocalKnowledge, s: &RuleNode, case: CrossCase, c: &mut OpCounters) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for m in k.messages(&s.partner) {
        if s.is_message() && m.msg == s.activity {
            continue;
        }
        c.candidate_evaluations += 1;
        let mut sn = s.clone();
        sn.id = "s".to_string();
        let core = s_core(&m.rule_node("m", Pattern::AnteOcc), &sn, case);
        if k.holds(&s.partner, &core)? {
            out.push(m.msg);
        }
    }
    out.dedup();
    Ok(out)
}

/// Lazily built message graph: `x → y` when some partner exchanging both
/// guarantees `y` relative to `x` in direction `dir`.
struct RouteGraph {
    dir: RouteDir,
    adj: BTreeMap<String, Vec<(String, String)>>,
}

impl RouteGraph {
    fn new(dir: RouteDir) -> Self {
        RouteGraph { dir, adj: BTreeMap::new() }
    }

    fn neighbours(&mut self, k: &mut dyn LocalKnowledge, x: &str, c: &mut OpCounters) -> Result<Vec<(String, String)>> {
        if let Some(v) = self.adj.get(x) {
            return Ok(v.clone());
        }
        let mut out = Vec::new();
        for q in k.partners() {
            let msgs = k.messages(&q);
            let Some(xm) = msgs.iter().find(|m| m.msg == x) else { continue };
            let xn = xm.rule_node("x", Pattern::AnteOcc);
            for ym in &msgs {
                if ym.msg == x {
                    continue;
                }
                c.candidate_evaluations += 1;
                if k.holds(&q, &fact_rule(&xn, &ym.rule_node("y", Pattern::ConsOcc), self.dir))? {
                    out.push((ym.msg.clone(), q.clone()));
                }
            }
        }
        out.sort();
        out.dedup_by(|a, b| a.0 == b.0);
        self.adj.insert(x.to_string(), out.clone());
        Ok(out)
    }
}

/// Message pairs `(m_n, m_s)` joined by a chain of local facts, shortest
/// chains first, then by message names.
pub fn compute_theta(
    k: &mut dyn LocalKnowledge,
    n: &RuleNode,
    s: &RuleNode,
    case: CrossCase,
    counters: &mut OpCounters,
) -> Result<Vec<ThetaPair>> {
    let ns = n_side(k, n, case, counters)?;
    if ns.is_empty() {
        return Ok(Vec::new());
    }
    let ss: BTreeSet<String> = s_side(k, s, case, counters)?.into_iter().collect();
    if ss.is_empty() {
        return Ok(Vec::new());
    }
    let mut graph = RouteGraph::new(case.route_dir());
    let mut out = Vec::new();
    for m_n in &ns {
        // breadth-first search from m_n; parents give the chain back
        let mut parent: BTreeMap<String, Option<(String, String)>> = BTreeMap::new();
        parent.insert(m_n.clone(), None);
        let mut queue = VecDeque::from([m_n.clone()]);
        while let Some(x) = queue.pop_front() {
            counters.theta_pair_tests += 1;
            if ss.contains(&x) {
                let mut route = Vec::new();
                let mut cur = x.clone();
                while let Some(Some((prev, q))) = parent.get(&cur) {
                    route.push(RouteStep { partner: q.clone(), from: prev.clone(), to: cur.clone() });
                    cur = prev.clone();
                }
                route.reverse();
                out.push(ThetaPair { m_n: m_n.clone(), m_s: x.clone(), route });
            }
            for (y, q) in graph.neighbours(k, &x, counters)? {
                counters.neighbor_scans += 1;
                if !parent.contains_key(&y) {
                    parent.insert(y.clone(), Some((x.clone(), q)));
                    queue.push_back(y);
                }
            }
        }
    }
    out.sort_by(|a, b| (a.route.len(), &a.m_n, &a.m_s).cmp(&(b.route.len(), &b.m_n, &b.m_s)));
    Ok(out)
}

/// Sync message placement for a severed edge between `n` and `s`.
pub fn plan_sync(gcr_id: &str, n: &RuleNode, s: &RuleNode, case: CrossCase) -> SyncMessage {
    let name = format!("sync.{gcr_id}.{}.{}", n.id, s.id);
    let (from, to, send, receive) = match case {
        CrossCase::OccAfter | CrossCase::Unordered => (
            &n.partner,
            &s.partner,
            Anchor::next_to(&n.activity, Placement::After),
            Anchor::next_to(&s.activity, Placement::Before),
        ),
        CrossCase::OccBefore => (
            &s.partner,
            &n.partner,
            Anchor::next_to(&s.activity, Placement::After),
            Anchor::next_to(&n.activity, Placement::Before),
        ),
        CrossCase::AbsAfter => (
            &s.partner,
            &n.partner,
            Anchor::boundary(Placement::After),
            Anchor::next_to(&n.activity, Placement::Before),
        ),
        CrossCase::AbsBefore => (
            &n.partner,
            &s.partner,
            Anchor::next_to(&n.activity, Placement::After),
            Anchor::boundary(Placement::Before),
        ),
    };
    SyncMessage { name, from_partner: from.clone(), to_partner: to.clone(), send, receive }
}

fn place(model: &mut Block, new: Block, anchor: &Anchor) -> Result<()> {
    match &anchor.label {
        None => {
            model.insert_boundary(new, anchor.placement());
            Ok(())
        }
        Some(l) => {
            if model.insert_adjacent(l, new, anchor.placement()) {
                Ok(())
            } else {
                Err(Error::input(format!("anchor {l} not found")))
            }
        }
    }
}

/// Applies the part of `sync` that concerns `partner` to its private and
/// public models.
pub fn apply_sync_to_partner(private: &mut Block, public: &mut Block, partner: &str, sync: &SyncMessage) -> Result<()> {
    let mut sides = Vec::new();
    if partner == sync.from_partner {
        sides.push((Activity::send(&sync.name, &sync.to_partner), &sync.send));
    }
    if partner == sync.to_partner {
        sides.push((Activity::receive(&sync.name, &sync.from_partner), &sync.receive));
    }
    for (act, anchor) in sides {
        if private.find(&sync.name).is_some() {
            return Err(Error::input(format!("sync message {} already inserted", sync.name)));
        }
        let derived_public = *public == private.public_view();
        place(private, act.clone(), anchor)?;
        let in_public = anchor.label.as_ref().is_none_or(|l| public.find(l).is_some());
        if in_public {
            place(public, act, anchor)?;
        } else if derived_public {
            *public = private.public_view();
        } else {
            return Err(Error::input(format!(
                "cannot place {} in the public model of {partner}: anchor is private",
                sync.name
            )));
        }
    }
    Ok(())
}

/// Inserts `sync` into the private and public models of both partners and
/// links the new send and receive.
pub fn insert_sync_message(chor: &Choreography, sync: &SyncMessage) -> Result<Choreography> {
    let mut out = chor.clone();
    for p in [&sync.from_partner, &sync.to_partner] {
        let mut private = chor.private_model(p)?.clone();
        let mut public = chor.public.get(p.as_str()).cloned().unwrap_or_else(|| private.public_view());
        apply_sync_to_partner(&mut private, &mut public, p, sync)?;
        out.private.insert(p.clone(), private);
        out.public.insert(p.clone(), public);
    }
    out.gamma.push([sync.from_partner.clone(), sync.name.clone(), sync.to_partner.clone(), sync.name.clone()]);
    out.gamma.sort();
    debug_assert!(out.check_compatibility().is_empty() || !chor.check_compatibility().is_empty());
    Ok(out)
}

/// Assertion under construction.
#[derive(Clone, Debug)]
struct Draft {
    partner: String,
    nodes: Vec<RuleNode>,
    edges: Vec<RuleEdge>,
    theta: Option<(String, String)>,
}

impl Draft {
    fn new(partner: &str) -> Self {
        Draft { partner: partner.to_string(), nodes: Vec::new(), edges: Vec::new(), theta: None }
    }

    fn fresh_id(&self, base: &str) -> String {
        let mut id = base.to_string();
        let mut k = 2;
        while self.nodes.iter().any(|n| n.id == id) {
            id = format!("{base}#{k}");
            k += 1;
        }
        id
    }

    /// Adds a message node and returns its id.
    fn add_message(&mut self, k: &dyn LocalKnowledge, msg: &str, pattern: Pattern) -> Result<String> {
        let id = self.fresh_id(msg);
        let node = message_node(k, &self.partner, msg, &id, pattern)?;
        self.nodes.push(node);
        Ok(id)
    }

    fn node(&self, id: &str) -> &RuleNode {
        self.nodes.iter().find(|n| n.id == id).expect("draft node")
    }

    fn has_consequence(&self) -> bool {
        self.nodes.iter().any(|n| !n.pattern.is_antecedence())
    }
}

/// Splits rule nodes into same-partner connected components.
fn components(gcr: &ComplianceRule) -> Vec<usize> {
    let idx: BTreeMap<&str, usize> = gcr.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let mut parent: Vec<usize> = (0..gcr.nodes.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let next = p[y];
            p[y] = r;
            y = next;
        }
        r
    }
    for e in &gcr.edges {
        let (a, b) = (idx[e.from.as_str()], idx[e.to.as_str()]);
        if gcr.nodes[a].partner == gcr.nodes[b].partner {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    (0..gcr.nodes.len()).map(|i| find(&mut parent, i)).collect()
}

/// Splits `gcr` along partner boundaries using only local knowledge.
///
/// Each same-partner component becomes one assertion. Severed edges are
/// replaced by message pairs from [`compute_theta`]; when none exist a sync
/// message is inserted through `k` (or the result is `Failed` with
/// `no_sync`). Requires exactly one antecedence occurrence and a
/// tree-shaped component graph.
pub fn decompose_with(
    gcr: &ComplianceRule,
    k: &mut dyn LocalKnowledge,
    opts: DecomposeOptions,
) -> Result<Decomposition> {
    gcr.ensure_valid()?;
    let mut counters = OpCounters::default();
    let ante: Vec<&RuleNode> = gcr.nodes_with(Pattern::AnteOcc).collect();
    if ante.len() != 1 {
        return Err(Error::input(format!(
            "rule {} has {} antecedence occurrences; the split needs exactly one, use template T4 for chains",
            gcr.id,
            ante.len()
        )));
    }
    for n in &gcr.nodes {
        if !k.has_node(n) {
            return Err(Error::input(format!("partner {} has no activity {}", n.partner, n.activity)));
        }
    }
    let comp = components(gcr);
    let idx: BTreeMap<&str, usize> = gcr.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let start = comp[idx[ante[0].id.as_str()]];
    let roots: BTreeSet<usize> = comp.iter().copied().collect();

    // cross edges as (component a, component b, edge index)
    let cross: Vec<(usize, usize, usize)> = gcr
        .edges
        .iter()
        .enumerate()
        .filter_map(|(i, e)| {
            let (a, b) = (comp[idx[e.from.as_str()]], comp[idx[e.to.as_str()]]);
            (a != b).then_some((a, b, i))
        })
        .collect();

    {
        let mut joined: BTreeMap<usize, usize> = roots.iter().map(|&r| (r, r)).collect();
        fn top(j: &BTreeMap<usize, usize>, mut x: usize) -> usize {
            while j[&x] != x {
                x = j[&x];
            }
            x
        }
        for &(a, b, _) in &cross {
            let (ra, rb) = (top(&joined, a), top(&joined, b));
            if ra == rb {
                return Err(Error::input(format!(
                    "rule {} is not tree-shaped across partners; split each cycle first",
                    gcr.id
                )));
            }
            joined.insert(ra.max(rb), ra.min(rb));
        }
    }

    let mut drafts: Vec<Draft> = Vec::new();
    let mut comp_draft: BTreeMap<usize, usize> = BTreeMap::new();
    let open = |c: usize, drafts: &mut Vec<Draft>, comp_draft: &mut BTreeMap<usize, usize>| {
        let members: Vec<usize> = (0..gcr.nodes.len()).filter(|&i| comp[i] == c).collect();
        let mut d = Draft::new(&gcr.nodes[members[0]].partner);
        d.nodes = members.iter().map(|&i| gcr.nodes[i].clone()).collect();
        d.edges = gcr
            .edges
            .iter()
            .filter(|e| comp[idx[e.from.as_str()]] == c && comp[idx[e.to.as_str()]] == c)
            .cloned()
            .collect();
        drafts.push(d);
        comp_draft.insert(c, drafts.len() - 1);
    };
    open(start, &mut drafts, &mut comp_draft);

    let mut syncs: Vec<SyncMessage> = Vec::new();
    let mut visited: BTreeSet<usize> = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    loop {
        while let Some(c) = queue.pop_front() {
            for &(a, b, ei) in &cross {
                counters.neighbor_scans += 1;
                if a != c && b != c {
                    continue;
                }
                let other = if a == c { b } else { a };
                if visited.contains(&other) {
                    continue;
                }
                let e = &gcr.edges[ei];
                let (n_id, s_id, rightward) = if a == c { (&e.from, &e.to, true) } else { (&e.to, &e.from, false) };
                let n = &gcr.nodes[idx[n_id.as_str()]];
                let s = &gcr.nodes[idx[s_id.as_str()]];
                visited.insert(other);
                if s.pattern == Pattern::AnteAbs {
                    // dropping an antecedence absence only activates the rule more often
                    if n.pattern != Pattern::AnteOcc {
                        return Err(Error::input(format!(
                            "antecedence absence {} must attach to the antecedence",
                            s.id
                        )));
                    }
                    continue;
                }
                if !n.pattern.is_occurrence() {
                    return Err(Error::input(format!(
                        "edge {}→{} leaves absence node {} across partners; not supported by the split",
                        e.from, e.to, n.id
                    )));
                }
                let case = match (s.pattern, rightward) {
                    (Pattern::ConsOcc, true) => CrossCase::OccAfter,
                    (Pattern::ConsOcc, false) => CrossCase::OccBefore,
                    (_, true) => CrossCase::AbsAfter,
                    (_, false) => CrossCase::AbsBefore,
                };
                let dn = comp_draft[&c];
                if !splice(gcr, k, &mut drafts, dn, n, s, case, opts, &mut syncs, &mut counters)? {
                    return Ok(Decomposition::failed(&gcr.id, counters));
                }
                let ds = drafts.len() - 1;
                // the new component's nodes join the draft created by splice
                let members: Vec<usize> = (0..gcr.nodes.len()).filter(|&i| comp[i] == other).collect();
                for &i in &members {
                    if gcr.nodes[i].id != s.id {
                        drafts[ds].nodes.push(gcr.nodes[i].clone());
                    }
                }
                drafts[ds].edges.extend(
                    gcr.edges
                        .iter()
                        .filter(|e| comp[idx[e.from.as_str()]] == other && comp[idx[e.to.as_str()]] == other)
                        .cloned(),
                );
                comp_draft.insert(other, ds);
                queue.push_back(other);
            }
        }
        // components without any edge to the visited part are only required to occur
        let Some(&rest) = roots.iter().find(|r| !visited.contains(r)) else { break };
        let s = (0..gcr.nodes.len())
            .filter(|&i| comp[i] == rest && gcr.nodes[i].pattern == Pattern::ConsOcc)
            .map(|i| &gcr.nodes[i])
            .min_by(|a, b| a.id.cmp(&b.id));
        let Some(s) = s else {
            visited.insert(rest);
            continue;
        };
        let n = ante[0];
        let dn = comp_draft[&start];
        if !splice(gcr, k, &mut drafts, dn, n, s, CrossCase::Unordered, opts, &mut syncs, &mut counters)? {
            return Ok(Decomposition::failed(&gcr.id, counters));
        }
        let ds = drafts.len() - 1;
        for (node, &c) in gcr.nodes.iter().zip(&comp) {
            if c == rest && node.id != s.id {
                drafts[ds].nodes.push(node.clone());
            }
        }
        drafts[ds].edges.extend(
            gcr.edges
                .iter()
                .filter(|e| comp[idx[e.from.as_str()]] == rest && comp[idx[e.to.as_str()]] == rest)
                .cloned(),
        );
        comp_draft.insert(rest, ds);
        visited.insert(rest);
        queue.push_back(rest);
    }
    let drafts: Vec<Draft> = drafts.into_iter().filter(Draft::has_consequence).collect();
    let drafts = merge_drafts(drafts, &mut counters);
    let assertions = finish(&gcr.id, "split", drafts);
    Ok(Decomposition {
        gcr_id: gcr.id.clone(),
        status: if syncs.is_empty() { Status::Transitive } else { Status::RequiredSync },
        assertions,
        sync_messages: syncs,
        counters,
        choreography: None,
    })
}

/// Replaces the severed edge `n`–`s` by a message pair: extends draft `dn`,
/// pushes the glue assertions, and last the new draft anchored at `m_s`.
/// Returns false when no pair exists and sync insertion is disabled.
#[allow(clippy::too_many_arguments)]
fn splice(
    gcr: &ComplianceRule,
    k: &mut dyn LocalKnowledge,
    drafts: &mut Vec<Draft>,
    dn: usize,
    n: &RuleNode,
    s: &RuleNode,
    case: CrossCase,
    opts: DecomposeOptions,
    syncs: &mut Vec<SyncMessage>,
    counters: &mut OpCounters,
) -> Result<bool> {
    let mut theta = compute_theta(k, n, s, case, counters)?;
    if theta.is_empty() {
        if opts.no_sync {
            return Ok(false);
        }
        let sync = plan_sync(&gcr.id, n, s, case);
        if syncs.iter().any(|x| x.name == sync.name) {
            return Err(Error::input(format!("sync message {} already inserted", sync.name)));
        }
        k.insert_sync(&sync)?;
        syncs.push(sync);
        theta = compute_theta(k, n, s, case, counters)?;
        if theta.is_empty() {
            return Err(Error::input(format!("no message pair for {}–{} even after synchronization", n.id, s.id)));
        }
    }
    let pick = theta.swap_remove(0);

    // attach m_n as deep as local facts allow along n's chain
    let dir = case.route_dir();
    let m_id = drafts[dn].add_message(k, &pick.m_n, Pattern::ConsOcc)?;
    let target = attach_point(k, &drafts[dn], n, &pick.m_n, dir, counters)?;
    match dir {
        RouteDir::Forward => drafts[dn].edges.push(RuleEdge::new(&target, &m_id, Connector::Consequence)),
        RouteDir::Backward => drafts[dn].edges.push(RuleEdge::new(&m_id, &target, Connector::Consequence)),
        RouteDir::Unordered => {}
    }

    for step in &pick.route {
        let mut g = Draft::new(&step.partner);
        let x = g.add_message(k, &step.from, Pattern::AnteOcc)?;
        let y = g.add_message(k, &step.to, Pattern::ConsOcc)?;
        match dir {
            RouteDir::Forward => g.edges.push(RuleEdge::new(&x, &y, Connector::Consequence)),
            RouteDir::Backward => g.edges.push(RuleEdge::new(&y, &x, Connector::Consequence)),
            RouteDir::Unordered => {}
        }
        g.theta = Some((step.from.clone(), step.to.clone()));
        drafts.push(g);
    }

    let mut d = Draft::new(&s.partner);
    let m_s = d.add_message(k, &pick.m_s, Pattern::AnteOcc)?;
    let m_node = d.node(&m_s).clone();
    let core = s_core(&m_node, s, case);
    d.nodes.push(core.nodes[1].clone());
    d.edges = core.edges;
    d.theta = Some((pick.m_n.clone(), pick.m_s.clone()));
    drafts[dn].theta.get_or_insert((pick.m_n, pick.m_s));
    drafts.push(d);
    Ok(true)
}

/// Deepest occurrence node on `n`'s chain (successors for forward routes,
/// predecessors for backward ones) that locally guarantees the message.
fn attach_point(
    k: &mut dyn LocalKnowledge,
    d: &Draft,
    n: &RuleNode,
    msg: &str,
    dir: RouteDir,
    counters: &mut OpCounters,
) -> Result<String> {
    if dir == RouteDir::Unordered {
        return Ok(n.id.clone());
    }
    let mut depth: BTreeMap<String, usize> = BTreeMap::from([(n.id.clone(), 0)]);
    let mut queue = VecDeque::from([n.id.clone()]);
    while let Some(x) = queue.pop_front() {
        for e in &d.edges {
            counters.neighbor_scans += 1;
            let next = match dir {
                RouteDir::Forward if e.from == x => &e.to,
                RouteDir::Backward if e.to == x => &e.from,
                _ => continue,
            };
            let node = d.node(next);
            if node.is_message() || !node.pattern.is_occurrence() || depth.contains_key(next) {
                continue;
            }
            depth.insert(next.clone(), depth[&x] + 1);
            queue.push_back(next.clone());
        }
    }
    let mut order: Vec<(usize, String)> = depth.into_iter().filter(|(_, v)| *v > 0).map(|(k, v)| (v, k)).collect();
    order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let m = message_node(k, &d.partner, msg, "m", Pattern::ConsOcc)?;
    for (_, id) in order {
        counters.candidate_evaluations += 1;
        if k.holds(&d.partner, &fact_rule(d.node(&id), &m, dir))? {
            return Ok(id);
        }
    }
    Ok(n.id.clone())
}

/// Label-level key of a draft's antecedence part, or None when ambiguous.
fn antecedence_key(d: &Draft) -> Option<Vec<String>> {
    let desc = |n: &RuleNode| format!("{:?}|{:?}|{}", n.pattern, n.role, n.activity);
    let ante: Vec<&RuleNode> = d.nodes.iter().filter(|n| n.pattern.is_antecedence()).collect();
    let mut names: Vec<String> = ante.iter().map(|n| desc(n)).collect();
    names.sort();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    let by_id: BTreeMap<&str, String> = ante.iter().map(|n| (n.id.as_str(), desc(n))).collect();
    let mut edges: Vec<String> = d
        .edges
        .iter()
        .filter_map(|e| Some(format!("{}>{}", by_id.get(e.from.as_str())?, by_id.get(e.to.as_str())?)))
        .collect();
    edges.sort();
    names.push(String::new());
    names.extend(edges);
    names.insert(0, d.partner.clone());
    Some(names)
}

/// Merges drafts of one partner that share the same antecedence part.
fn merge_drafts(drafts: Vec<Draft>, counters: &mut OpCounters) -> Vec<Draft> {
    let mut out: Vec<(Option<Vec<String>>, Draft)> = Vec::new();
    'next: for d in drafts {
        let key = antecedence_key(&d);
        for (k2, target) in out.iter_mut() {
            counters.merge_comparisons += 1;
            if key.is_some() && *k2 == key {
                absorb(target, d);
                continue 'next;
            }
        }
        out.push((key, d));
    }
    out.into_iter().map(|(_, d)| d).collect()
}

/// Adds the consequence part of `src` to `dst`, identifying antecedence
/// nodes by label and renaming clashing consequence ids. A single
/// consequence node already present with the same edges adds nothing.
fn absorb(dst: &mut Draft, src: Draft) {
    let same = |a: &RuleNode, b: &RuleNode| a.pattern == b.pattern && a.role == b.role && a.activity == b.activity;
    let mut rename: BTreeMap<String, String> = BTreeMap::new();
    for n in src.nodes.iter().filter(|n| n.pattern.is_antecedence()) {
        let t = dst.nodes.iter().find(|m| same(m, n)).expect("matching antecedence");
        rename.insert(n.id.clone(), t.id.clone());
    }
    let cons: Vec<&RuleNode> = src.nodes.iter().filter(|n| !n.pattern.is_antecedence()).collect();
    let cons_edges: Vec<&RuleEdge> =
        src.edges.iter().filter(|e| !(rename.contains_key(&e.from) && rename.contains_key(&e.to))).collect();
    if let [c] = cons.as_slice() {
        let dup = dst.nodes.iter().any(|m| {
            same(m, c)
                && cons_edges.iter().all(|e| {
                    let map = |x: &str| if x == c.id { m.id.clone() } else { rename[x].clone() };
                    dst.edges.contains(&RuleEdge::new(&map(&e.from), &map(&e.to), e.connector))
                })
        });
        if dup {
            return;
        }
    }
    for n in cons {
        let id = dst.fresh_id(&n.id);
        rename.insert(n.id.clone(), id.clone());
        let mut m = n.clone();
        m.id = id;
        dst.nodes.push(m);
    }
    for e in cons_edges {
        dst.edges.push(RuleEdge::new(&rename[&e.from], &rename[&e.to], e.connector));
    }
}

fn finish(gcr_id: &str, template: &str, drafts: Vec<Draft>) -> Vec<Assertion> {
    drafts
        .into_iter()
        .enumerate()
        .map(|(i, d)| Assertion {
            rule: ComplianceRule { id: format!("{gcr_id}.A{}", i + 1), nodes: d.nodes, edges: d.edges },
            partner: d.partner,
            provenance: Provenance { gcr_id: gcr_id.to_string(), template: template.to_string(), theta: d.theta },
        })
        .collect()
}

/// The general split on a full choreography. When sync messages are
/// inserted the updated choreography is returned in the result.
pub fn decompose(gcr: &ComplianceRule, chor: &Choreography, opts: DecomposeOptions) -> Result<Decomposition> {
    let gcr = &chor.resolve_rule(gcr);
    let mut k = ChoreographyKnowledge::new(chor.clone());
    let mut d = decompose_with(gcr, &mut k, opts)?;
    if !d.sync_messages.is_empty() {
        d.choreography = Some(k.into_choreography());
    }
    Ok(d)
}

/// Tries the applicable templates in order and falls back to [`decompose`].
pub fn decompose_auto(gcr: &ComplianceRule, chor: &Choreography, opts: DecomposeOptions) -> Result<Decomposition> {
    let gcr = &chor.resolve_rule(gcr);
    let mut k = ChoreographyKnowledge::new(chor.clone());
    decompose_auto_with(gcr, &mut k, opts).map(|mut d| {
        if !d.sync_messages.is_empty() {
            d.choreography = Some(k.into_choreography());
        }
        d
    })
}

pub fn decompose_auto_with(
    gcr: &ComplianceRule,
    k: &mut dyn LocalKnowledge,
    opts: DecomposeOptions,
) -> Result<Decomposition> {
    for id in select_template(gcr, k) {
        let mut found = apply_theorem_template(&id, gcr, k)?;
        if !found.is_empty() {
            return Ok(found.swap_remove(0));
        }
    }
    decompose_with(gcr, k, opts)
}

/// Packages instantiated template assertions as a decomposition.
pub(crate) fn from_template(gcr_id: &str, template: &str, rules: Vec<(String, ComplianceRule)>) -> Decomposition {
    let drafts =
        rules.into_iter().map(|(p, r)| Draft { partner: p, nodes: r.nodes, edges: r.edges, theta: None }).collect();
    Decomposition {
        gcr_id: gcr_id.to_string(),
        status: Status::Transitive,
        assertions: finish(gcr_id, template, drafts),
        sync_messages: Vec::new(),
        counters: OpCounters::default(),
        choreography: None,
    }
}

/// Messages a partner exchanges, by name.
pub(crate) fn message_names(msgs: &[MessageNode]) -> Vec<String> {
    let mut v: Vec<String> = msgs.iter().map(|m| m.msg.clone()).collect();
    v.sort();
    v.dedup();
    v
}

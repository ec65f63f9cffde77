//! Compliance rule graphs and their trace semantics.
//!
//! A rule holds on a trace iff every activation (assignment of positions to
//! antecedence occurrence nodes that respects antecedence ordering and is not
//! blocked by an antecedence absence node) can be completed by an assignment
//! of the consequence occurrence nodes that respects every connector and
//! leaves no consequence absence node placeable.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process_model::{label, LabelMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    AnteOcc,
    AnteAbs,
    ConsOcc,
    ConsAbs,
}

impl Pattern {
    pub fn is_antecedence(self) -> bool {
        matches!(self, Pattern::AnteOcc | Pattern::AnteAbs)
    }

    pub fn is_occurrence(self) -> bool {
        matches!(self, Pattern::AnteOcc | Pattern::ConsOcc)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::AnteOcc => "ante_occ",
            Pattern::AnteAbs => "ante_abs",
            Pattern::ConsOcc => "cons_occ",
            Pattern::ConsAbs => "cons_abs",
        }
    }
}

/// Endpoint role of a message reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Send,
    Receive,
    Either,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connector {
    Antecedence,
    Consequence,
}

/// A rule node. When `role` is present the node references the message named
/// `activity`; otherwise it references an activity of `partner`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RuleNode {
    pub id: String,
    pub activity: String,
    pub partner: String,
    pub pattern: Pattern,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
}

impl RuleNode {
    pub fn activity(id: &str, partner: &str, activity: &str, pattern: Pattern) -> Self {
        RuleNode {
            id: id.to_string(),
            activity: activity.to_string(),
            partner: partner.to_string(),
            pattern,
            role: None,
        }
    }

    pub fn message(id: &str, partner: &str, msg: &str, role: Role, pattern: Pattern) -> Self {
        RuleNode {
            id: id.to_string(),
            activity: msg.to_string(),
            partner: partner.to_string(),
            pattern,
            role: Some(role),
        }
    }

    pub fn is_message(&self) -> bool {
        self.role.is_some()
    }

    /// Event labels this node matches under `mode`.
    pub fn labels(&self, mode: LabelMode) -> Vec<String> {
        match self.role {
            None => vec![label::activity(&self.partner, &self.activity, mode)],
            Some(Role::Send) => vec![label::send(&self.activity, &self.partner, mode)],
            Some(Role::Receive) => vec![label::receive(&self.activity, &self.partner, mode)],
            Some(Role::Either) => {
                let mut v = vec![
                    label::send(&self.activity, &self.partner, mode),
                    label::receive(&self.activity, &self.partner, mode),
                ];
                v.dedup();
                v
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RuleEdge {
    pub from: String,
    pub to: String,
    pub connector: Connector,
}

impl RuleEdge {
    pub fn new(from: &str, to: &str, connector: Connector) -> Self {
        RuleEdge { from: from.to_string(), to: to.to_string(), connector }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceRule {
    pub id: String,
    pub nodes: Vec<RuleNode>,
    #[serde(default)]
    pub edges: Vec<RuleEdge>,
}

impl ComplianceRule {
    pub fn new(id: &str) -> Self {
        ComplianceRule { id: id.to_string(), nodes: Vec::new(), edges: Vec::new() }
    }

    pub fn node(&self, id: &str) -> Option<&RuleNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn nodes_with(&self, pattern: Pattern) -> impl Iterator<Item = &RuleNode> {
        self.nodes.iter().filter(move |n| n.pattern == pattern)
    }

    /// All labels referenced by the rule under `mode`, sorted.
    pub fn labels(&self, mode: LabelMode) -> BTreeSet<String> {
        self.nodes.iter().flat_map(|n| n.labels(mode)).collect()
    }

    /// Partners referenced by the rule, sorted.
    pub fn partners(&self) -> BTreeSet<String> {
        self.nodes.iter().map(|n| n.partner.clone()).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::input(format!("rule: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rule serializes")
    }

    /// Fails with the joined findings of [`validate_rule`].
    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate_rule(self);
        if report.is_empty() {
            Ok(())
        } else {
            Err(Error::input(format!("rule {}: {}", self.id, report.join("; "))))
        }
    }
}

/// Finite sequence of event labels; positions are time points.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trace {
    pub events: Vec<String>,
}

impl Trace {
    pub fn new<S: AsRef<str>>(events: &[S]) -> Self {
        Trace { events: events.iter().map(|e| e.as_ref().to_string()).collect() }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Lists violated well-formedness invariants; empty means well-formed.
pub fn validate_rule(rule: &ComplianceRule) -> Vec<String> {
    let mut findings = Vec::new();
    let mut ids = BTreeSet::new();
    for n in &rule.nodes {
        if !ids.insert(n.id.as_str()) {
            findings.push(format!("duplicate node id {}", n.id));
        }
    }
    if rule.nodes_with(Pattern::AnteOcc).next().is_none() {
        findings.push("no antecedence occurrence".to_string());
    }
    let by_id: HashMap<&str, &RuleNode> = rule.nodes.iter().map(|n| (n.id.as_str(), n)).collect();
    let mut resolvable = Vec::new();
    for e in &rule.edges {
        if e.from == e.to {
            findings.push(format!("edge {}->{} joins a node to itself", e.from, e.to));
            continue;
        }
        let (Some(a), Some(b)) = (by_id.get(e.from.as_str()), by_id.get(e.to.as_str())) else {
            findings.push(format!("edge {}->{} references an unknown node", e.from, e.to));
            continue;
        };
        if e.connector == Connector::Antecedence && !(a.pattern.is_antecedence() && b.pattern.is_antecedence()) {
            findings.push(format!("antecedence connector {}->{} touches a consequence node", e.from, e.to));
        }
        resolvable.push((e.from.as_str(), e.to.as_str()));
    }
    if has_cycle(&rule.nodes, &resolvable) {
        findings.push("cyclic edges".to_string());
    }
    for n in &rule.nodes {
        if n.pattern.is_occurrence() {
            continue;
        }
        let anchored = resolvable.iter().any(|&(f, t)| {
            let other = if f == n.id {
                t
            } else if t == n.id {
                f
            } else {
                return false;
            };
            by_id[other].pattern.is_occurrence()
        });
        if !anchored {
            findings.push(format!("absence node {} has no edge to an occurrence node", n.id));
        }
    }
    findings
}

fn has_cycle(nodes: &[RuleNode], edges: &[(&str, &str)]) -> bool {
    let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let mut indeg = vec![0usize; nodes.len()];
    let mut succ = vec![Vec::new(); nodes.len()];
    for &(f, t) in edges {
        let (f, t) = (index[f], index[t]);
        succ[f].push(t);
        indeg[t] += 1;
    }
    let mut stack: Vec<usize> = (0..nodes.len()).filter(|&i| indeg[i] == 0).collect();
    let mut seen = 0;
    while let Some(v) = stack.pop() {
        seen += 1;
        for &w in &succ[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                stack.push(w);
            }
        }
    }
    seen != nodes.len()
}

/// Rule resolved against a symbol table: per node, the set of matching
/// symbol indices; edges as index pairs meaning "from strictly before to".
#[derive(Clone, Debug)]
pub struct CompiledRule {
    pub patterns: Vec<Pattern>,
    pub matches: Vec<Vec<bool>>,
    pub edges: Vec<(usize, usize)>,
    ante_occ: Vec<usize>,
    cons_occ: Vec<usize>,
    ante_abs: Vec<usize>,
    cons_abs: Vec<usize>,
}

impl CompiledRule {
    /// Resolves `rule` against `symbols` (labels indexed by position).
    pub fn new(rule: &ComplianceRule, symbols: &[String], mode: LabelMode) -> Result<Self> {
        rule.ensure_valid()?;
        let index: HashMap<&str, usize> = rule.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
        let sym_index: HashMap<&str, usize> = symbols.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut matches = Vec::with_capacity(rule.nodes.len());
        for n in &rule.nodes {
            let mut m = vec![false; symbols.len()];
            for l in n.labels(mode) {
                if let Some(&i) = sym_index.get(l.as_str()) {
                    m[i] = true;
                }
            }
            matches.push(m);
        }
        let edges = rule.edges.iter().map(|e| (index[e.from.as_str()], index[e.to.as_str()])).collect();
        let patterns: Vec<Pattern> = rule.nodes.iter().map(|n| n.pattern).collect();
        let pick = |p: Pattern| (0..patterns.len()).filter(|&i| patterns[i] == p).collect::<Vec<_>>();
        Ok(CompiledRule {
            ante_occ: pick(Pattern::AnteOcc),
            cons_occ: pick(Pattern::ConsOcc),
            ante_abs: pick(Pattern::AnteAbs),
            cons_abs: pick(Pattern::ConsAbs),
            patterns,
            matches,
            edges,
        })
    }

    pub fn node_count(&self) -> usize {
        self.patterns.len()
    }

    /// Evaluates the rule on a word of symbol indices.
    pub fn evaluate(&self, word: &[usize]) -> bool {
        let mut ok = true;
        self.for_each_activation(word, &mut |_, sat| {
            ok = sat;
            sat
        });
        ok
    }

    /// Calls `f(assignment, satisfied)` for every activation, in
    /// lexicographic order of the antecedence positions, until `f` returns
    /// false. Assignment entries for non-antecedence nodes are `usize::MAX`.
    pub fn for_each_activation(&self, word: &[usize], f: &mut dyn FnMut(&[usize], bool) -> bool) {
        let positions: Vec<Vec<usize>> =
            self.matches.iter().map(|m| (0..word.len()).filter(|&p| m[word[p]]).collect()).collect();
        let mut assign = vec![usize::MAX; self.patterns.len()];
        self.enum_alpha(0, &positions, &mut assign, f);
    }

    fn enum_alpha(
        &self,
        depth: usize,
        positions: &[Vec<usize>],
        assign: &mut [usize],
        f: &mut dyn FnMut(&[usize], bool) -> bool,
    ) -> bool {
        if depth == self.ante_occ.len() {
            if self.ante_abs.iter().any(|&x| self.placeable(x, positions, assign)) {
                return true;
            }
            let sat = self.search_beta(0, positions, assign);
            return f(assign, sat);
        }
        let v = self.ante_occ[depth];
        for &p in &positions[v] {
            assign[v] = p;
            if self.edges_hold_for(v, assign) && !self.enum_alpha(depth + 1, positions, assign, f) {
                assign[v] = usize::MAX;
                return false;
            }
        }
        assign[v] = usize::MAX;
        true
    }

    fn search_beta(&self, depth: usize, positions: &[Vec<usize>], assign: &mut [usize]) -> bool {
        if depth == self.cons_occ.len() {
            return !self.cons_abs.iter().any(|&x| self.placeable(x, positions, assign));
        }
        let v = self.cons_occ[depth];
        for &p in &positions[v] {
            assign[v] = p;
            if self.edges_hold_for(v, assign) && self.search_beta(depth + 1, positions, assign) {
                assign[v] = usize::MAX;
                return true;
            }
        }
        assign[v] = usize::MAX;
        false
    }

    /// Checks every edge between `v` and an already assigned node.
    fn edges_hold_for(&self, v: usize, assign: &[usize]) -> bool {
        self.edges.iter().all(|&(a, b)| {
            let touches = (a == v && assign[b] != usize::MAX) || (b == v && assign[a] != usize::MAX);
            !touches || assign[a] < assign[b]
        })
    }

    /// Whether absence node `x` fits some position consistent with its edges
    /// to assigned occurrence nodes.
    fn placeable(&self, x: usize, positions: &[Vec<usize>], assign: &[usize]) -> bool {
        positions[x].iter().any(|&p| {
            self.edges.iter().all(|&(a, b)| {
                if a == x && assign[b] != usize::MAX && self.patterns[b].is_occurrence() {
                    p < assign[b]
                } else if b == x && assign[a] != usize::MAX && self.patterns[a].is_occurrence() {
                    assign[a] < p
                } else {
                    true
                }
            })
        })
    }
}

/// Symbol table of a trace: its distinct labels, sorted.
fn trace_symbols(trace: &Trace) -> (Vec<String>, Vec<usize>) {
    let symbols: Vec<String> = trace.events.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let index: HashMap<&str, usize> = symbols.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let word = trace.events.iter().map(|e| index[e.as_str()]).collect();
    (symbols, word)
}

/// Ground-truth evaluation of `rule` on `trace`.
pub fn evaluate_rule(trace: &Trace, rule: &ComplianceRule, mode: LabelMode) -> Result<bool> {
    let (symbols, word) = trace_symbols(trace);
    Ok(CompiledRule::new(rule, &symbols, mode)?.evaluate(&word))
}

/// One activation of a rule on a trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activation {
    /// Antecedence occurrence node id to trace position.
    pub assignment: BTreeMap<String, usize>,
    pub satisfied: bool,
}

/// All activations of `rule` on `trace` with their satisfaction flags.
pub fn activations(trace: &Trace, rule: &ComplianceRule, mode: LabelMode) -> Result<Vec<Activation>> {
    let (symbols, word) = trace_symbols(trace);
    let compiled = CompiledRule::new(rule, &symbols, mode)?;
    let mut out = Vec::new();
    compiled.for_each_activation(&word, &mut |assign, sat| {
        let assignment = rule
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, n)| n.pattern == Pattern::AnteOcc && assign[*i] != usize::MAX)
            .map(|(i, n)| (n.id.clone(), assign[i]))
            .collect();
        out.push(Activation { assignment, satisfied: sat });
        true
    });
    Ok(out)
}

/// Convenience constructors for the common two-node rule shapes.
pub mod shapes {
    use super::*;

    fn two(id: &str, a: RuleNode, b: RuleNode, from: &str, to: &str) -> ComplianceRule {
        ComplianceRule {
            id: id.to_string(),
            edges: vec![RuleEdge::new(from, to, Connector::Consequence)],
            nodes: vec![a, b],
        }
    }

    /// Every `a` is eventually followed by `b`.
    pub fn response(id: &str, partner: &str, a: &str, b: &str) -> ComplianceRule {
        two(
            id,
            RuleNode::activity("a", partner, a, Pattern::AnteOcc),
            RuleNode::activity("b", partner, b, Pattern::ConsOcc),
            "a",
            "b",
        )
    }

    /// Every `b` is preceded by some `a`.
    pub fn precedence(id: &str, partner: &str, a: &str, b: &str) -> ComplianceRule {
        two(
            id,
            RuleNode::activity("a", partner, a, Pattern::ConsOcc),
            RuleNode::activity("b", partner, b, Pattern::AnteOcc),
            "a",
            "b",
        )
    }

    /// No `b` after any `a`.
    pub fn absence_after(id: &str, partner: &str, a: &str, b: &str) -> ComplianceRule {
        two(
            id,
            RuleNode::activity("a", partner, a, Pattern::AnteOcc),
            RuleNode::activity("b", partner, b, Pattern::ConsAbs),
            "a",
            "b",
        )
    }

    /// No `a` before any `b`.
    pub fn absence_before(id: &str, partner: &str, a: &str, b: &str) -> ComplianceRule {
        two(
            id,
            RuleNode::activity("a", partner, a, Pattern::ConsAbs),
            RuleNode::activity("b", partner, b, Pattern::AnteOcc),
            "a",
            "b",
        )
    }
}

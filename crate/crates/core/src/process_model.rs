//! Partner process models, the choreography that ties them together, and
//! their behaviour as traces and automata.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::automata::{self, FiniteAutomaton};
use crate::error::{Error, Result};
use crate::rule_model::{ComplianceRule, Pattern, Role, RuleNode, Trace};

/// How activities and message exchanges are rendered as event labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    /// Activity and message names verbatim; used for abstract rules.
    Bare,
    /// One `msg:<name>` event per message exchange.
    #[default]
    Atomic,
    /// Separate `msg:<name>!<sender>` and `msg:<name>?<receiver>` events.
    Async,
}

impl FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bare" => Ok(LabelMode::Bare),
            "atomic" => Ok(LabelMode::Atomic),
            "async" => Ok(LabelMode::Async),
            other => Err(Error::input(format!("unknown label mode {other}"))),
        }
    }
}

impl fmt::Display for LabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelMode::Bare => "bare",
            LabelMode::Atomic => "atomic",
            LabelMode::Async => "async",
        })
    }
}

/// Canonical event label strings.
pub mod label {
    use super::LabelMode;

    pub fn activity(partner: &str, label: &str, mode: LabelMode) -> String {
        match mode {
            LabelMode::Bare => label.to_string(),
            _ => format!("act:{partner}.{label}"),
        }
    }

    pub fn send(msg: &str, sender: &str, mode: LabelMode) -> String {
        match mode {
            LabelMode::Bare => msg.to_string(),
            LabelMode::Atomic => format!("msg:{msg}"),
            LabelMode::Async => format!("msg:{msg}!{sender}"),
        }
    }

    pub fn receive(msg: &str, receiver: &str, mode: LabelMode) -> String {
        match mode {
            LabelMode::Bare => msg.to_string(),
            LabelMode::Atomic => format!("msg:{msg}"),
            LabelMode::Async => format!("msg:{msg}?{receiver}"),
        }
    }

    /// Splits an async message label into (message, is_send, partner).
    pub fn parse_async(label: &str) -> Option<(&str, bool, &str)> {
        let body = label.strip_prefix("msg:")?;
        if let Some(i) = body.rfind('!') {
            Some((&body[..i], true, &body[i + 1..]))
        } else {
            body.rfind('?').map(|i| (&body[..i], false, &body[i + 1..]))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActivityKind {
    Private,
    Public,
    Send {
        msg: String,
        to: String,
    },
    Receive {
        msg: String,
        from: String,
    },
    /// Choreography-level exchange.
    Interaction {
        msg: String,
        from: String,
        to: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ActivityRaw", into = "ActivityRaw")]
pub struct Activity {
    pub label: String,
    pub kind: ActivityKind,
}

#[derive(Serialize, Deserialize)]
struct ActivityRaw {
    label: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    msg: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    peer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sender: Option<String>,
}

impl TryFrom<ActivityRaw> for Activity {
    type Error = String;

    fn try_from(r: ActivityRaw) -> std::result::Result<Self, String> {
        let msg = || r.msg.clone().unwrap_or_else(|| r.label.clone());
        let peer = || r.peer.clone().ok_or_else(|| format!("activity {} needs a peer", r.label));
        let kind = match r.kind.as_str() {
            "private" => ActivityKind::Private,
            "public" => ActivityKind::Public,
            "send" => ActivityKind::Send { msg: msg(), to: peer()? },
            "receive" => ActivityKind::Receive { msg: msg(), from: peer()? },
            "interaction" => ActivityKind::Interaction {
                msg: msg(),
                to: peer()?,
                from: r.sender.clone().ok_or_else(|| format!("interaction {} needs a sender", r.label))?,
            },
            other => return Err(format!("unknown activity kind {other}")),
        };
        Ok(Activity { label: r.label, kind })
    }
}

impl From<Activity> for ActivityRaw {
    fn from(a: Activity) -> Self {
        let (kind, msg, peer, sender) = match a.kind {
            ActivityKind::Private => ("private", None, None, None),
            ActivityKind::Public => ("public", None, None, None),
            ActivityKind::Send { msg, to } => ("send", Some(msg), Some(to), None),
            ActivityKind::Receive { msg, from } => ("receive", Some(msg), Some(from), None),
            ActivityKind::Interaction { msg, from, to } => ("interaction", Some(msg), Some(to), Some(from)),
        };
        ActivityRaw { label: a.label, kind: kind.to_string(), msg, peer, sender }
    }
}

impl Activity {
    pub fn private(label: &str) -> Block {
        Block::Act(Activity { label: label.to_string(), kind: ActivityKind::Private })
    }

    pub fn public(label: &str) -> Block {
        Block::Act(Activity { label: label.to_string(), kind: ActivityKind::Public })
    }

    /// Send of message `msg` (also the node label) to `to`.
    pub fn send(msg: &str, to: &str) -> Block {
        Block::Act(Activity {
            label: msg.to_string(),
            kind: ActivityKind::Send { msg: msg.to_string(), to: to.to_string() },
        })
    }

    /// Receive of message `msg` (also the node label) from `from`.
    pub fn receive(msg: &str, from: &str) -> Block {
        Block::Act(Activity {
            label: msg.to_string(),
            kind: ActivityKind::Receive { msg: msg.to_string(), from: from.to_string() },
        })
    }

    pub fn interaction(msg: &str, from: &str, to: &str) -> Block {
        Block::Act(Activity {
            label: msg.to_string(),
            kind: ActivityKind::Interaction { msg: msg.to_string(), from: from.to_string(), to: to.to_string() },
        })
    }

    pub fn message(&self) -> Option<&str> {
        match &self.kind {
            ActivityKind::Send { msg, .. }
            | ActivityKind::Receive { msg, .. }
            | ActivityKind::Interaction { msg, .. } => Some(msg),
            _ => None,
        }
    }

    pub fn is_interaction(&self) -> bool {
        self.message().is_some()
    }

    /// The rule node referencing this activity of `partner`.
    pub fn rule_node(&self, id: &str, partner: &str, pattern: Pattern) -> RuleNode {
        match &self.kind {
            ActivityKind::Send { msg, .. } => RuleNode::message(id, partner, msg, Role::Send, pattern),
            ActivityKind::Receive { msg, .. } => RuleNode::message(id, partner, msg, Role::Receive, pattern),
            ActivityKind::Interaction { msg, .. } => RuleNode::message(id, partner, msg, Role::Either, pattern),
            _ => RuleNode::activity(id, partner, &self.label, pattern),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LoopBlock {
    pub body: Box<Block>,
    #[serde(rename = "maxUnroll")]
    pub max_unroll: u32,
}

/// Block-structured process graph.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Seq(Vec<Block>),
    Xor(Vec<Block>),
    And(Vec<Block>),
    Loop(LoopBlock),
    Act(Activity),
}

/// Where to place an activity relative to an anchor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    Before,
    After,
}

impl Block {
    pub fn looped(body: Block, max_unroll: u32) -> Block {
        Block::Loop(LoopBlock { body: Box::new(body), max_unroll })
    }

    /// Visits every activity in document order.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Activity)) {
        match self {
            Block::Act(a) => f(a),
            Block::Loop(l) => l.body.visit(f),
            Block::Seq(c) | Block::Xor(c) | Block::And(c) => c.iter().for_each(|b| b.visit(f)),
        }
    }

    pub fn activities(&self) -> Vec<&Activity> {
        let mut out = Vec::new();
        self.visit(&mut |a| out.push(a));
        out
    }

    pub fn find(&self, label: &str) -> Option<&Activity> {
        self.activities().into_iter().find(|a| a.label == label)
    }

    /// Whether the activity sits inside a loop body.
    pub fn in_loop(&self, label: &str) -> bool {
        fn walk(b: &Block, label: &str, inside: bool) -> bool {
            match b {
                Block::Act(a) => inside && a.label == label,
                Block::Loop(l) => walk(&l.body, label, true),
                Block::Seq(c) | Block::Xor(c) | Block::And(c) => c.iter().any(|x| walk(x, label, inside)),
            }
        }
        walk(self, label, false)
    }

    /// Inserts `new` immediately before or after the activity `anchor`.
    pub fn insert_adjacent(&mut self, anchor: &str, new: Block, at: Placement) -> bool {
        match self {
            Block::Act(a) if a.label == anchor => {
                let old = std::mem::replace(self, Block::Seq(Vec::new()));
                *self = Block::Seq(match at {
                    Placement::Before => vec![new, old],
                    Placement::After => vec![old, new],
                });
                true
            }
            Block::Act(_) => false,
            Block::Seq(children) => {
                if let Some(i) = children.iter().position(|c| matches!(c, Block::Act(a) if a.label == anchor)) {
                    let pos = if at == Placement::Before { i } else { i + 1 };
                    children.insert(pos, new);
                    return true;
                }
                children.iter_mut().any(|c| c.insert_adjacent(anchor, new.clone(), at))
            }
            Block::Xor(children) | Block::And(children) => {
                children.iter_mut().any(|c| c.insert_adjacent(anchor, new.clone(), at))
            }
            Block::Loop(l) => l.body.insert_adjacent(anchor, new, at),
        }
    }

    /// Inserts `new` at the very start or end of the model.
    pub fn insert_boundary(&mut self, new: Block, at: Placement) {
        if let Block::Seq(children) = self {
            match at {
                Placement::Before => children.insert(0, new),
                Placement::After => children.push(new),
            }
            return;
        }
        let old = std::mem::replace(self, Block::Seq(Vec::new()));
        *self = Block::Seq(match at {
            Placement::Before => vec![new, old],
            Placement::After => vec![old, new],
        });
    }

    /// The model with private activities dropped: what other partners see.
    pub fn public_view(&self) -> Block {
        match self {
            Block::Act(a) if a.kind == ActivityKind::Private => Block::Seq(Vec::new()),
            Block::Act(_) => self.clone(),
            Block::Seq(c) => Block::Seq(c.iter().map(Block::public_view).filter(|b| !b.is_empty_seq()).collect()),
            // gateways without a visible activity show nothing either way
            Block::Xor(_) | Block::And(_) if self.activities().iter().all(|a| a.kind == ActivityKind::Private) => {
                Block::Seq(Vec::new())
            }
            Block::Xor(c) => Block::Xor(c.iter().map(Block::public_view).collect()),
            Block::And(c) => Block::And(c.iter().map(Block::public_view).collect()),
            Block::Loop(l) => {
                let body = l.body.public_view();
                if body.activities().is_empty() {
                    Block::Seq(Vec::new())
                } else {
                    Block::looped(body, l.max_unroll)
                }
            }
        }
    }

    fn is_empty_seq(&self) -> bool {
        matches!(self, Block::Seq(c) if c.is_empty())
    }

    /// Removes the activity `label`; returns whether it was found.
    pub fn remove(&mut self, label: &str) -> bool {
        match self {
            Block::Act(a) if a.label == label => {
                *self = Block::Seq(Vec::new());
                true
            }
            Block::Act(_) => false,
            Block::Seq(children) => {
                if let Some(i) = children.iter().position(|c| matches!(c, Block::Act(a) if a.label == label)) {
                    children.remove(i);
                    return true;
                }
                children.iter_mut().any(|c| c.remove(label))
            }
            Block::Xor(children) | Block::And(children) => children.iter_mut().any(|c| c.remove(label)),
            Block::Loop(l) => l.body.remove(label),
        }
    }

    /// Structural findings: duplicate labels and empty loop bodies.
    pub fn validate(&self) -> Vec<String> {
        let mut findings = Vec::new();
        let mut seen = BTreeSet::new();
        for a in self.activities() {
            if !seen.insert(a.label.as_str()) {
                findings.push(format!("duplicate activity label {}", a.label));
            }
        }
        fn loops(b: &Block, out: &mut Vec<String>) {
            match b {
                Block::Act(_) => {}
                Block::Loop(l) => {
                    if l.body.activities().is_empty() {
                        out.push("loop with empty body".to_string());
                    }
                    if l.max_unroll == 0 {
                        out.push("loop with maxUnroll 0".to_string());
                    }
                    loops(&l.body, out);
                }
                Block::Seq(c) | Block::Xor(c) | Block::And(c) => c.iter().for_each(|x| loops(x, out)),
            }
        }
        loops(self, &mut findings);
        findings
    }
}

/// Complete runs of `model` of length at most `max_len`, loops unrolled
/// 0..=maxUnroll times.
pub fn enumerate_traces(model: &Block, partner: &str, mode: LabelMode, max_len: usize) -> BTreeSet<Trace> {
    enum_block(model, partner, mode, max_len).into_iter().map(|events| Trace { events }).collect()
}

type Words = BTreeSet<Vec<String>>;

fn concat(left: &Words, right: &Words, max_len: usize) -> Words {
    let mut out = Words::new();
    for x in left {
        for y in right {
            if x.len() + y.len() <= max_len {
                let mut w = x.clone();
                w.extend(y.iter().cloned());
                out.insert(w);
            }
        }
    }
    out
}

fn shuffles(x: &[String], y: &[String], prefix: &mut Vec<String>, out: &mut Words) {
    if x.is_empty() || y.is_empty() {
        let mut w = prefix.clone();
        w.extend(x.iter().chain(y).cloned());
        out.insert(w);
        return;
    }
    prefix.push(x[0].clone());
    shuffles(&x[1..], y, prefix, out);
    prefix.pop();
    prefix.push(y[0].clone());
    shuffles(x, &y[1..], prefix, out);
    prefix.pop();
}

fn enum_block(b: &Block, partner: &str, mode: LabelMode, max_len: usize) -> Words {
    match b {
        Block::Act(a) => {
            let w = a.kind.labels(&a.label, partner, mode);
            if w.len() <= max_len {
                [w].into()
            } else {
                Words::new()
            }
        }
        Block::Seq(children) => {
            let mut cur: Words = [Vec::new()].into();
            for c in children {
                let part = enum_block(c, partner, mode, max_len);
                cur = concat(&cur, &part, max_len);
            }
            cur
        }
        Block::Xor(children) => children.iter().flat_map(|c| enum_block(c, partner, mode, max_len)).collect(),
        Block::And(children) => {
            let mut cur: Words = [Vec::new()].into();
            for c in children {
                let part = enum_block(c, partner, mode, max_len);
                let mut next = Words::new();
                for x in &cur {
                    for y in &part {
                        if x.len() + y.len() <= max_len {
                            shuffles(x, y, &mut Vec::new(), &mut next);
                        }
                    }
                }
                cur = next;
            }
            cur
        }
        Block::Loop(l) => {
            let body = enum_block(&l.body, partner, mode, max_len);
            let mut cur: Words = [Vec::new()].into();
            let mut all = cur.clone();
            for _ in 0..l.max_unroll {
                cur = concat(&cur, &body, max_len);
                all.extend(cur.iter().cloned());
            }
            all
        }
    }
}

/// Direction of a message endpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Send,
    Receive,
}

/// A send or receive node of a partner's private model.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MessageNode {
    pub partner: String,
    pub label: String,
    pub msg: String,
    pub direction: Direction,
    pub peer: String,
}

impl MessageNode {
    pub fn role(&self) -> Role {
        match self.direction {
            Direction::Send => Role::Send,
            Direction::Receive => Role::Receive,
        }
    }

    pub fn rule_node(&self, id: &str, pattern: Pattern) -> RuleNode {
        RuleNode::message(id, &self.partner, &self.msg, self.role(), pattern)
    }
}

/// Which way to look from an anchor node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    After,
    Before,
}

/// Partners, their private and public models, and the mappings between them.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choreography {
    pub partners: Vec<String>,
    #[serde(default)]
    pub private: BTreeMap<String, Block>,
    #[serde(default)]
    pub public: BTreeMap<String, Block>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choreography: Option<Block>,
    /// Per partner: public node label to private node label. Labels missing
    /// here map to the identical private label when one exists.
    #[serde(default)]
    pub psi: BTreeMap<String, BTreeMap<String, String>>,
    /// Send/receive links between public models: [sender, node, receiver, node].
    #[serde(default)]
    pub gamma: Vec<[String; 4]>,
    /// Choreography node to the public nodes realizing it; display only.
    #[serde(default)]
    pub xi: BTreeMap<String, Vec<String>>,
}

#[derive(Deserialize)]
struct ChoreographyRaw {
    partners: Vec<String>,
    #[serde(default)]
    private: BTreeMap<String, Block>,
    #[serde(default)]
    public: BTreeMap<String, Block>,
    #[serde(default)]
    choreography: Option<Block>,
    #[serde(default)]
    psi: BTreeMap<String, BTreeMap<String, String>>,
    #[serde(default)]
    gamma: Option<Vec<[String; 4]>>,
    #[serde(default)]
    xi: BTreeMap<String, Vec<String>>,
}

impl Choreography {
    /// Parses a choreography file. A missing `gamma` is derived by message name.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ChoreographyRaw =
            serde_json::from_str(text).map_err(|e| Error::input(format!("choreography: {e}")))?;
        let mut c = Choreography {
            partners: raw.partners,
            private: raw.private,
            public: raw.public,
            choreography: raw.choreography,
            psi: raw.psi,
            gamma: Vec::new(),
            xi: raw.xi,
        };
        c.gamma = match raw.gamma {
            Some(g) => g,
            None => c.derive_gamma(),
        };
        let findings = c.structural_findings();
        if !findings.is_empty() {
            return Err(Error::input(findings.join("; ")));
        }
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("choreography serializes")
    }

    /// Label uniqueness, loop bodies, and declared partner references.
    pub fn structural_findings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let declared: BTreeSet<&str> = self.partners.iter().map(String::as_str).collect();
        for (kind, models) in [("private", &self.private), ("public", &self.public)] {
            for (p, m) in models {
                if !declared.contains(p.as_str()) {
                    out.push(format!("{kind} model of undeclared partner {p}"));
                }
                out.extend(m.validate().into_iter().map(|f| format!("{kind} model of {p}: {f}")));
                for a in m.activities() {
                    let peer = match &a.kind {
                        ActivityKind::Send { to, .. } => Some(to),
                        ActivityKind::Receive { from, .. } => Some(from),
                        _ => None,
                    };
                    if let Some(q) = peer {
                        if !declared.contains(q.as_str()) {
                            out.push(format!("{kind} model of {p}: {} references undeclared partner {q}", a.label));
                        }
                    }
                }
            }
        }
        out
    }

    pub fn private_model(&self, partner: &str) -> Result<&Block> {
        self.private.get(partner).ok_or_else(|| Error::input(format!("no private model for partner {partner}")))
    }

    pub fn public_model(&self, partner: &str) -> Result<&Block> {
        self.public.get(partner).ok_or_else(|| Error::input(format!("no public model for partner {partner}")))
    }

    /// Private node mirrored by a public node, if any.
    pub fn psi_image(&self, partner: &str, public_label: &str) -> Option<String> {
        if let Some(l) = self.psi.get(partner).and_then(|m| m.get(public_label)) {
            return self.private.get(partner)?.find(l).map(|a| a.label.clone());
        }
        self.private.get(partner)?.find(public_label).map(|a| a.label.clone())
    }

    /// Links each public send to the receive of the same message at its peer.
    pub fn derive_gamma(&self) -> Vec<[String; 4]> {
        let mut out = Vec::new();
        for (p, model) in &self.public {
            for a in model.activities() {
                if let ActivityKind::Send { msg, to } = &a.kind {
                    let Some(peer) = self.public.get(to) else { continue };
                    let hit = peer
                        .activities()
                        .into_iter()
                        .find(|b| matches!(&b.kind, ActivityKind::Receive { msg: m, from } if m == msg && from == p));
                    if let Some(b) = hit {
                        out.push([p.clone(), a.label.clone(), to.clone(), b.label.clone()]);
                    }
                }
            }
        }
        out.sort();
        out
    }

    /// Public nodes lacking a private counterpart.
    pub fn check_consistency(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (p, model) in &self.public {
            if !self.private.contains_key(p) {
                out.push(format!("partner {p} has a public model but no private model"));
                continue;
            }
            for a in model.activities() {
                if self.psi_image(p, &a.label).is_none() {
                    out.push(format!("partner {p}: public node {} has no private counterpart", a.label));
                }
            }
        }
        out
    }

    /// Interaction nodes of public models not matched by a γ link.
    pub fn check_compatibility(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut linked: BTreeSet<(&str, &str)> = BTreeSet::new();
        for [p, n, q, m] in &self.gamma {
            let send = self.public.get(p).and_then(|b| b.find(n));
            let recv = self.public.get(q).and_then(|b| b.find(m));
            match (send.map(|a| &a.kind), recv.map(|a| &a.kind)) {
                (Some(ActivityKind::Send { msg: a, .. }), Some(ActivityKind::Receive { msg: b, .. }))
                    if a == b && p != q =>
                {
                    linked.insert((p, n));
                    linked.insert((q, m));
                }
                _ => out.push(format!("gamma link {p}.{n} -> {q}.{m} does not join a send to a matching receive")),
            }
        }
        for (p, model) in &self.public {
            for a in model.activities() {
                let what = match &a.kind {
                    ActivityKind::Send { .. } => "send",
                    ActivityKind::Receive { .. } => "receive",
                    _ => continue,
                };
                if !linked.contains(&(p.as_str(), a.label.as_str())) {
                    out.push(format!("partner {p}: unmatched {what} {}", a.label));
                }
            }
        }
        out
    }

    /// Send and receive nodes of the private models, sorted.
    pub fn message_nodes(&self) -> Vec<MessageNode> {
        let mut out: Vec<MessageNode> = self.private.keys().flat_map(|p| self.partner_messages(p)).collect();
        out.sort();
        out
    }

    /// Send and receive nodes of one partner's private model, sorted.
    pub fn partner_messages(&self, partner: &str) -> Vec<MessageNode> {
        let Some(model) = self.private.get(partner) else { return Vec::new() };
        let mut out: Vec<MessageNode> = model
            .activities()
            .into_iter()
            .filter_map(|a| {
                let (msg, direction, peer) = match &a.kind {
                    ActivityKind::Send { msg, to } => (msg, Direction::Send, to),
                    ActivityKind::Receive { msg, from } => (msg, Direction::Receive, from),
                    _ => return None,
                };
                Some(MessageNode {
                    partner: partner.to_string(),
                    label: a.label.clone(),
                    msg: msg.clone(),
                    direction,
                    peer: peer.clone(),
                })
            })
            .collect();
        out.sort();
        out
    }

    /// Rule node referencing activity `label` of `partner`'s private model.
    pub fn rule_node(&self, id: &str, partner: &str, label: &str, pattern: Pattern) -> Result<RuleNode> {
        let act = self
            .private_model(partner)?
            .find(label)
            .ok_or_else(|| Error::input(format!("partner {partner} has no activity {label}")))?;
        Ok(act.rule_node(id, partner, pattern))
    }

    /// `rule` with activity references to send or receive nodes turned into
    /// message references, so they match the labels the models emit.
    pub fn resolve_rule(&self, rule: &ComplianceRule) -> ComplianceRule {
        let mut out = rule.clone();
        for n in out.nodes.iter_mut().filter(|n| !n.is_message()) {
            if let Some(a) = self.private.get(&n.partner).and_then(|m| m.find(&n.activity)) {
                if a.message().is_some() {
                    *n = a.rule_node(&n.id, &n.partner, n.pattern);
                }
            }
        }
        out
    }

    /// Every label any private model can emit.
    pub fn alphabet(&self, mode: LabelMode) -> Vec<String> {
        let mut out = BTreeSet::new();
        for (p, m) in &self.private {
            out.extend(automata::block_alphabet(m, p, mode));
        }
        out.into_iter().collect()
    }

    /// Messages `m` of `partner` that always follow (`After`) or always
    /// precede (`Before`) the activity `node` on the partner's model.
    pub fn succeeding_messages(&self, partner: &str, node: &str, side: Side) -> Result<Vec<MessageNode>> {
        let model = self.private_model(partner)?;
        let anchor = self.rule_node("n", partner, node, Pattern::AnteOcc)?;
        let mut out = Vec::new();
        for m in self.partner_messages(partner) {
            if m.label == node {
                continue;
            }
            let rule = relation_rule(&anchor, &m.rule_node("m", Pattern::ConsOcc), side);
            let verdict = crate::verification::check_local_compliance(model, partner, &rule, LabelMode::Atomic)?;
            if verdict.is_ok() {
                out.push(m);
            }
        }
        Ok(out)
    }
}

/// `anchor →→ other` (After) or `other` precedes `anchor` (Before).
pub fn relation_rule(anchor: &RuleNode, other: &RuleNode, side: Side) -> ComplianceRule {
    let mut a = anchor.clone();
    a.pattern = Pattern::AnteOcc;
    let mut b = other.clone();
    b.pattern = Pattern::ConsOcc;
    let edge = match side {
        Side::After => crate::rule_model::RuleEdge::new(&a.id, &b.id, crate::rule_model::Connector::Consequence),
        Side::Before => crate::rule_model::RuleEdge::new(&b.id, &a.id, crate::rule_model::Connector::Consequence),
    };
    ComplianceRule { id: "relation".to_string(), nodes: vec![a, b], edges: vec![edge] }
}

/// Which partner models a composition is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelView {
    Private,
    Public,
}

/// Synchronized product of the partners' private models.
pub fn compose_global(chor: &Choreography, mode: LabelMode, channel_bound: u32) -> Result<FiniteAutomaton> {
    compose_view(chor, ModelView::Private, mode, channel_bound)
}

/// Synchronized product of one view of the partner models. Atomic mode
/// synchronizes sender and receiver on `msg:<name>`; async mode keeps at most
/// `channel_bound` messages of each name in flight and never lets a receive
/// overtake its send.
pub fn compose_view(
    chor: &Choreography,
    view: ModelView,
    mode: LabelMode,
    channel_bound: u32,
) -> Result<FiniteAutomaton> {
    if mode == LabelMode::Bare {
        return Err(Error::input("composition needs atomic or async labels"));
    }
    let problems = chor.check_compatibility();
    if !problems.is_empty() {
        return Err(Error::input(format!("incompatible choreography: {}", problems.join("; "))));
    }
    let models = match view {
        ModelView::Private => &chor.private,
        ModelView::Public => &chor.public,
    };
    let parts: Vec<FiniteAutomaton> =
        models.iter().map(|(p, m)| automata::model_to_automaton(m, p, mode)).collect::<Result<_>>()?;
    let mut alphabet = BTreeSet::new();
    for a in &parts {
        alphabet.extend(a.alphabet().iter().cloned());
    }
    let alphabet: Vec<String> = alphabet.into_iter().collect();
    let mut out = FiniteAutomaton::new(&alphabet);

    // Per global symbol: (part, local symbol) of every participant.
    let participants: Vec<Vec<(usize, u32)>> = alphabet
        .iter()
        .map(|l| parts.iter().enumerate().filter_map(|(i, a)| a.symbol(l).map(|s| (i, s))).collect())
        .collect();
    let live: Vec<Vec<bool>> = parts.iter().map(live_states).collect();
    // Async channel effects per symbol: (channel, +1 for send / -1 for receive).
    let mut channels: HashMap<String, usize> = HashMap::new();
    let effect: Vec<Option<(usize, bool)>> = alphabet
        .iter()
        .map(|l| match (mode, label::parse_async(l)) {
            (LabelMode::Async, Some((msg, is_send, _))) => {
                let n = channels.len();
                Some((*channels.entry(msg.to_string()).or_insert(n), is_send))
            }
            _ => None,
        })
        .collect();
    let nchan = channels.len();

    let start: Vec<u32> = parts.iter().map(|a| a.initial()).chain(std::iter::repeat_n(0, nchan)).collect();
    let k = parts.len();
    let accepting = |s: &[u32]| (0..k).all(|i| parts[i].is_accepting(s[i]));
    let mut index: HashMap<Vec<u32>, u32> = HashMap::new();
    out.set_accepting(0, accepting(&start));
    index.insert(start.clone(), 0);
    let mut queue = VecDeque::from([start]);
    while let Some(state) = queue.pop_front() {
        let from = index[&state];
        'sym: for (sym, who) in participants.iter().enumerate() {
            let mut next = state.clone();
            for &(i, local) in who {
                let Some(&(_, t)) = parts[i].transitions(state[i]).iter().find(|&&(x, _)| x == local) else {
                    continue 'sym;
                };
                if !live[i][t as usize] {
                    continue 'sym;
                }
                next[i] = t;
            }
            if let Some((c, is_send)) = effect[sym] {
                let slot = &mut next[k + c];
                if is_send {
                    if *slot >= channel_bound {
                        continue;
                    }
                    *slot += 1;
                } else {
                    if *slot == 0 {
                        continue;
                    }
                    *slot -= 1;
                }
            }
            let to = match index.get(&next) {
                Some(&t) => t,
                None => {
                    let t = out.add_state(accepting(&next));
                    if out.num_states() > automata::state_budget() {
                        return Err(Error::Budget { limit: automata::state_budget() });
                    }
                    index.insert(next.clone(), t);
                    queue.push_back(next);
                    t
                }
            };
            out.add_transition(from, sym as u32, to);
        }
    }
    Ok(out)
}

/// States from which an accepting state is reachable.
fn live_states(a: &FiniteAutomaton) -> Vec<bool> {
    let n = a.num_states();
    let mut rev: Vec<Vec<u32>> = vec![Vec::new(); n];
    for s in 0..n as u32 {
        for &(_, t) in a.transitions(s) {
            rev[t as usize].push(s);
        }
    }
    let mut live: Vec<bool> = (0..n as u32).map(|s| a.is_accepting(s)).collect();
    let mut stack: Vec<u32> = (0..n as u32).filter(|&s| live[s as usize]).collect();
    while let Some(s) = stack.pop() {
        for &p in &rev[s as usize] {
            if !live[p as usize] {
                live[p as usize] = true;
                stack.push(p);
            }
        }
    }
    live
}

/// Bounds for [`generate_random_choreography`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub partners: usize,
    /// Local activities per partner.
    pub activities: usize,
    /// Message exchanges in the choreography.
    pub messages: usize,
    /// Maximum nesting of gateways inside a local block.
    pub depth: usize,
    pub allow_loops: bool,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams { partners: 3, activities: 3, messages: 4, depth: 2, allow_loops: true }
    }
}

/// Random choreography built as a global sequence of message exchanges and
/// local blocks, projected onto the partners. Projection keeps every send
/// paired with its receive, so the result is consistent and compatible.
pub fn generate_random_choreography(params: &GeneratorParams, seed: u64) -> Result<Choreography> {
    if params.partners == 0 {
        return Err(Error::input("generator needs at least one partner"));
    }
    if params.partners == 1 && params.messages > 0 {
        return Err(Error::input("message exchanges need at least two partners"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let partners: Vec<String> = (1..=params.partners).map(|i| format!("P{i}")).collect();
    let mut remaining: Vec<usize> = vec![params.activities; params.partners];
    let mut counters = vec![0usize; params.partners];
    let mut steps: Vec<(usize, Block)> = Vec::new();
    let mut interactions = Vec::new();
    let mut msgs_left = params.messages;
    while msgs_left > 0 || remaining.iter().any(|&r| r > 0) {
        let local_pending: Vec<usize> = (0..params.partners).filter(|&p| remaining[p] > 0).collect();
        let exchange = msgs_left > 0 && (local_pending.is_empty() || rng.random_bool(0.5));
        if exchange {
            let s = rng.random_range(0..params.partners);
            let mut r = rng.random_range(0..params.partners - 1);
            if r >= s {
                r += 1;
            }
            let name = format!("m{}", params.messages - msgs_left + 1);
            msgs_left -= 1;
            steps.push((s, Activity::send(&name, &partners[r])));
            steps.push((r, Activity::receive(&name, &partners[s])));
            interactions.push((name, s, r));
        } else {
            let p = *local_pending.choose(&mut rng).expect("pending partner");
            let size = rng.random_range(1..=remaining[p]);
            remaining[p] -= size;
            let block = random_block(&mut rng, p, size, params.depth, params.allow_loops, &mut counters);
            steps.push((p, block));
        }
    }
    let mut chor = Choreography { partners: partners.clone(), ..Default::default() };
    for (i, p) in partners.iter().enumerate() {
        let private: Vec<Block> = steps.iter().filter(|(q, _)| *q == i).map(|(_, b)| b.clone()).collect();
        let public: Vec<Block> =
            private.iter().filter(|b| matches!(b, Block::Act(a) if a.is_interaction())).cloned().collect();
        chor.private.insert(p.clone(), Block::Seq(private));
        chor.public.insert(p.clone(), Block::Seq(public));
    }
    chor.choreography = Some(Block::Seq(
        interactions.iter().map(|(m, s, r)| Activity::interaction(m, &partners[*s], &partners[*r])).collect(),
    ));
    for (m, s, r) in &interactions {
        chor.xi.insert(m.clone(), vec![format!("{}.{m}", partners[*s]), format!("{}.{m}", partners[*r])]);
    }
    chor.gamma = chor.derive_gamma();
    Ok(chor)
}

fn random_block(
    rng: &mut ChaCha8Rng,
    p: usize,
    size: usize,
    depth: usize,
    loops: bool,
    counters: &mut [usize],
) -> Block {
    let fresh = |counters: &mut [usize]| {
        counters[p] += 1;
        Activity::private(&format!("a{}_{}", p + 1, counters[p]))
    };
    if size == 1 || depth == 0 {
        if size == 1 {
            return if depth > 0 && loops && rng.random_bool(0.15) {
                Block::looped(fresh(counters), 2)
            } else {
                fresh(counters)
            };
        }
        return Block::Seq((0..size).map(|_| fresh(counters)).collect());
    }
    let split = rng.random_range(1..size);
    let left = random_block(rng, p, split, depth - 1, loops, counters);
    let right = random_block(rng, p, size - split, depth - 1, loops, counters);
    match rng.random_range(0..3) {
        0 => Block::Seq(vec![left, right]),
        1 => Block::Xor(vec![left, right]),
        _ => Block::And(vec![left, right]),
    }
}

/// Binary rule shapes the generator can plant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantedShape {
    Response,
    Precedence,
    AbsenceAfter,
    AbsenceBefore,
}

/// Plants a binary rule between local activities of two different partners.
pub fn plant_rule(chor: &Choreography, shape: PlantedShape, seed: u64) -> Result<ComplianceRule> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let locals: Vec<(String, String)> = chor
        .private
        .iter()
        .flat_map(|(p, m)| {
            m.activities().into_iter().filter(|a| !a.is_interaction()).map(move |a| (p.clone(), a.label.clone()))
        })
        .collect();
    let mut pairs = Vec::new();
    for x in &locals {
        for y in &locals {
            if x.0 != y.0 {
                pairs.push((x.clone(), y.clone()));
            }
        }
    }
    let ((pa, a), (pb, b)) =
        pairs.choose(&mut rng).cloned().ok_or_else(|| Error::input("no local activities on two different partners"))?;
    let (pat_a, pat_b) = match shape {
        PlantedShape::Response => (Pattern::AnteOcc, Pattern::ConsOcc),
        PlantedShape::Precedence => (Pattern::ConsOcc, Pattern::AnteOcc),
        PlantedShape::AbsenceAfter => (Pattern::AnteOcc, Pattern::ConsAbs),
        PlantedShape::AbsenceBefore => (Pattern::ConsAbs, Pattern::AnteOcc),
    };
    Ok(ComplianceRule {
        id: "G".to_string(),
        nodes: vec![RuleNode::activity("a", &pa, &a, pat_a), RuleNode::activity("b", &pb, &b, pat_b)],
        edges: vec![crate::rule_model::RuleEdge::new("a", "b", crate::rule_model::Connector::Consequence)],
    })
}

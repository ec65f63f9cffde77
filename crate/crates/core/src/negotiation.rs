//! Simulated setup phase among partner agents: pattern identification,
//! template distribution, local candidate generation, matching, and the
//! fallback to the general split with sync messages.
//!
//! Agents only see their own models and the γ links touching them; every
//! question about a model is answered by the agent that owns it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::automata::{model_to_automaton, FiniteAutomaton};
use crate::decomposition::knowledge::{rule_key, LocalKnowledge};
use crate::decomposition::templates::{
    assertion_candidates, intermediaries, match_all, match_shape, owner_of, template, Binding,
};
use crate::decomposition::{
    apply_sync_to_partner, decompose_with, instantiate, select_template, DecomposeOptions, Decomposition, SyncMessage,
    TemplateId,
};
use crate::error::{Error, Result};
use crate::process_model::{Choreography, LabelMode, MessageNode};
use crate::rule_model::{ComplianceRule, RuleNode};
use crate::verification::model_automaton_satisfies;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Leader,
    Leaderless,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leader" => Ok(Strategy::Leader),
            "leaderless" => Ok(Strategy::Leaderless),
            other => Err(Error::input(format!("unknown strategy {other}"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Leader => "leader",
            Strategy::Leaderless => "leaderless",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageKind {
    LeaderAnnounce,
    TemplateAssign,
    CandidateProposal,
    MatchResult,
    SyncRequired,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolMessage {
    pub round: u32,
    pub kind: MessageKind,
    pub from: String,
    /// Recipient partner, or `*` for a broadcast.
    pub to: String,
    pub payload: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegotiationOutcome {
    pub decomposition: Decomposition,
    pub transcript: Vec<ProtocolMessage>,
    pub rounds: u32,
    pub strategy: Strategy,
}

impl NegotiationOutcome {
    /// One protocol message per line.
    pub fn transcript_jsonl(&self) -> String {
        self.transcript.iter().map(|m| serde_json::to_string(m).expect("message serializes") + "\n").collect()
    }
}

/// Reads a JSON-lines transcript.
pub fn parse_transcript(text: &str) -> Result<Vec<ProtocolMessage>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::input(format!("transcript: {e}"))))
        .collect()
}

/// The decomposition a transcript settled on: the payload of its last match result.
pub fn replay_transcript(transcript: &[ProtocolMessage]) -> Result<Decomposition> {
    let last = transcript
        .iter()
        .rev()
        .find(|m| m.kind == MessageKind::MatchResult && m.payload.get("decomposition").is_some())
        .ok_or_else(|| Error::input("transcript has no match result"))?;
    serde_json::from_value(last.payload["decomposition"].clone()).map_err(|e| Error::input(format!("transcript: {e}")))
}

/// One partner: its own private and public model and the γ links touching it.
#[derive(Clone, Debug)]
pub struct PartnerAgent {
    pub partner: String,
    view: Choreography,
    cache: BTreeMap<(String, String), bool>,
    model: Option<FiniteAutomaton>,
}

impl PartnerAgent {
    pub fn new(chor: &Choreography, partner: &str) -> Result<Self> {
        let mut view = Choreography { partners: vec![partner.to_string()], ..Default::default() };
        view.private.insert(partner.to_string(), chor.private_model(partner)?.clone());
        if let Some(p) = chor.public.get(partner) {
            view.public.insert(partner.to_string(), p.clone());
        }
        view.gamma = chor.gamma.iter().filter(|g| g[0] == partner || g[2] == partner).cloned().collect();
        Ok(PartnerAgent { partner: partner.to_string(), view, cache: BTreeMap::new(), model: None })
    }

    pub fn messages(&self) -> Vec<MessageNode> {
        self.view.partner_messages(&self.partner)
    }

    fn holds(&mut self, rule: &ComplianceRule) -> Result<bool> {
        let key = rule_key(&self.partner, rule);
        if let Some(&v) = self.cache.get(&key) {
            return Ok(v);
        }
        if self.model.is_none() {
            self.model =
                Some(model_to_automaton(self.view.private_model(&self.partner)?, &self.partner, LabelMode::Atomic)?);
        }
        let v = model_automaton_satisfies(self.model.as_ref().expect("just built"), rule, LabelMode::Atomic)?;
        self.cache.insert(key, v);
        Ok(v)
    }

    fn apply_sync(&mut self, sync: &SyncMessage) -> Result<()> {
        let p = self.partner.clone();
        let private = self.view.private.get_mut(&p).expect("own model");
        let mut public = self.view.public.get(&p).cloned().unwrap_or_else(|| private.public_view());
        apply_sync_to_partner(private, &mut public, &p, sync)?;
        self.view.public.insert(p, public);
        self.view.gamma.push([
            sync.from_partner.clone(),
            sync.name.clone(),
            sync.to_partner.clone(),
            sync.name.clone(),
        ]);
        self.view.gamma.sort();
        self.cache.clear();
        self.model = None;
        Ok(())
    }
}

/// Template assertion handed to its owner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateAssignment {
    pub template: TemplateId,
    pub assertion: usize,
    /// Shape variables bound to the rule's nodes.
    pub vars: BTreeMap<String, RuleNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intermediary: Option<String>,
}

/// Answers local questions for a single agent.
struct SelfKnowledge<'a>(&'a mut PartnerAgent);

impl LocalKnowledge for SelfKnowledge<'_> {
    fn partners(&self) -> Vec<String> {
        vec![self.0.partner.clone()]
    }

    fn messages(&self, partner: &str) -> Vec<MessageNode> {
        if partner == self.0.partner {
            self.0.messages()
        } else {
            Vec::new()
        }
    }

    fn has_node(&self, node: &RuleNode) -> bool {
        crate::decomposition::knowledge::has_node_in(&self.0.view, node)
    }

    fn holds(&mut self, partner: &str, rule: &ComplianceRule) -> Result<bool> {
        if partner != self.0.partner {
            return Err(Error::input(format!("agent {} cannot check a rule of {partner}", self.0.partner)));
        }
        self.0.holds(rule)
    }

    fn in_loop(&self, partner: &str, label: &str) -> bool {
        partner == self.0.partner && self.0.view.private.values().any(|m| m.in_loop(label))
    }

    fn insert_sync(&mut self, sync: &SyncMessage) -> Result<()> {
        self.0.apply_sync(sync)
    }
}

/// Every instantiation of the assigned template assertion over the agent's
/// own messages that holds on its private model, lexicographically ordered.
pub fn generate_candidates(agent: &mut PartnerAgent, assign: &TemplateAssignment) -> Result<Vec<Binding>> {
    let t = template(assign.template);
    let a = t
        .assertions
        .get(assign.assertion)
        .ok_or_else(|| Error::input(format!("{} has no assertion {}", assign.template, assign.assertion + 1)))?;
    if owner_of(a, &assign.vars, assign.intermediary.as_deref()).as_deref() != Some(agent.partner.as_str()) {
        return Err(Error::input(format!("assertion {} is not owned by {}", assign.assertion + 1, agent.partner)));
    }
    let mut ev = 0;
    assertion_candidates(
        &mut SelfKnowledge(agent),
        &t,
        assign.assertion,
        &assign.vars,
        assign.intermediary.as_deref(),
        &mut ev,
    )
}

/// All agents; each question is routed to the owner of the model it concerns.
struct Network {
    agents: BTreeMap<String, PartnerAgent>,
}

impl LocalKnowledge for Network {
    fn partners(&self) -> Vec<String> {
        self.agents.keys().cloned().collect()
    }

    fn messages(&self, partner: &str) -> Vec<MessageNode> {
        self.agents.get(partner).map(PartnerAgent::messages).unwrap_or_default()
    }

    fn has_node(&self, node: &RuleNode) -> bool {
        self.agents.get(&node.partner).is_some_and(|a| crate::decomposition::knowledge::has_node_in(&a.view, node))
    }

    fn holds(&mut self, partner: &str, rule: &ComplianceRule) -> Result<bool> {
        self.agents.get_mut(partner).ok_or_else(|| Error::input(format!("unknown partner {partner}")))?.holds(rule)
    }

    fn in_loop(&self, partner: &str, label: &str) -> bool {
        self.agents.get(partner).is_some_and(|a| a.view.private.values().any(|m| m.in_loop(label)))
    }

    fn insert_sync(&mut self, sync: &SyncMessage) -> Result<()> {
        for p in [&sync.from_partner, &sync.to_partner] {
            self.agents.get_mut(p).ok_or_else(|| Error::input(format!("unknown partner {p}")))?.apply_sync(sync)?;
        }
        Ok(())
    }
}

struct Log {
    transcript: Vec<ProtocolMessage>,
    round: u32,
}

impl Log {
    fn next_round(&mut self) {
        self.round += 1;
    }

    fn send(&mut self, kind: MessageKind, from: &str, to: &str, payload: Value) {
        self.transcript.push(ProtocolMessage {
            round: self.round,
            kind,
            from: from.to_string(),
            to: to.to_string(),
            payload,
        });
    }
}

/// Majority among `votes`; ties go to the lexicographically smallest value.
fn majority(votes: &[String]) -> Option<String> {
    let mut count: BTreeMap<&String, usize> = BTreeMap::new();
    for v in votes {
        *count.entry(v).or_default() += 1;
    }
    let best = count.values().copied().max()?;
    count.into_iter().find(|(_, c)| *c == best).map(|(v, _)| v.clone())
}

/// Runs the setup phase for `gcr` and returns the agreed decomposition with
/// its transcript. Outcomes equal the centralized
/// [`decompose_auto`](crate::decomposition::decompose_auto) for the same inputs.
pub fn run_negotiation(
    chor: &Choreography,
    gcr: &ComplianceRule,
    seed: u64,
    strategy: Strategy,
    opts: DecomposeOptions,
) -> Result<NegotiationOutcome> {
    let gcr = chor.resolve_rule(gcr);
    gcr.ensure_valid()?;
    let findings: Vec<String> = chor.check_consistency().into_iter().chain(chor.check_compatibility()).collect();
    if !findings.is_empty() {
        return Err(Error::input(format!("choreography is not sound: {}", findings.join("; "))));
    }
    let mut net = Network { agents: BTreeMap::new() };
    for p in chor.private.keys() {
        net.agents.insert(p.clone(), PartnerAgent::new(chor, p)?);
    }
    let involved: Vec<String> = gcr.partners().into_iter().collect();
    if let Some(p) = involved.iter().find(|p| !net.agents.contains_key(*p)) {
        return Err(Error::input(format!("rule {} names unknown partner {p}", gcr.id)));
    }
    let mut log = Log { transcript: Vec::new(), round: 0 };

    // pattern identification
    log.next_round();
    let templates: Vec<TemplateId> = match strategy {
        Strategy::Leader => {
            let leader = involved[0].clone();
            log.send(
                MessageKind::LeaderAnnounce,
                &leader,
                "*",
                json!({ "leader": leader, "gcr": gcr.id, "seed": seed }),
            );
            select_template(&gcr, &net)
        }
        Strategy::Leaderless => {
            let mut votes = Vec::new();
            for p in &involved {
                let mine = select_template(&gcr, &net);
                let names: Vec<String> = mine.iter().map(ToString::to_string).collect();
                log.send(MessageKind::TemplateAssign, p, "*", json!({ "vote": names, "gcr": gcr.id, "seed": seed }));
                votes.push(serde_json::to_string(&names).expect("json"));
            }
            let winner: Vec<String> = majority(&votes)
                .map_or(Ok(Vec::new()), |v| serde_json::from_str(&v))
                .map_err(|e| Error::input(format!("template vote: {e}")))?;
            winner.iter().map(|s| s.parse()).collect::<Result<_>>()?
        }
    };
    let coordinator = involved[0].clone();

    for id in templates {
        let t = template(id);
        let Some(vars) = match_shape(&t.shape, &gcr) else { continue };
        let qs: Vec<Option<String>> =
            if t.has_intermediary() { intermediaries(&gcr, &net).into_iter().map(Some).collect() } else { vec![None] };
        let mut found: Vec<(Vec<String>, Option<String>)> = Vec::new();
        for q in qs {
            log.next_round();
            let mut owners = Vec::new();
            for (j, a) in t.assertions.iter().enumerate() {
                let owner = owner_of(a, &vars, q.as_deref()).expect("owner resolves");
                let assign =
                    TemplateAssignment { template: id, assertion: j, vars: vars.clone(), intermediary: q.clone() };
                if strategy == Strategy::Leader {
                    log.send(
                        MessageKind::TemplateAssign,
                        &coordinator,
                        &owner,
                        serde_json::to_value(&assign).expect("json"),
                    );
                }
                owners.push((owner, assign));
            }
            log.next_round();
            let mut proposals = Vec::new();
            for (owner, assign) in &owners {
                let agent = net.agents.get_mut(owner).expect("agent exists");
                let cands = generate_candidates(agent, assign)?;
                let to = if strategy == Strategy::Leader { coordinator.as_str() } else { "*" };
                log.send(
                    MessageKind::CandidateProposal,
                    owner,
                    to,
                    json!({ "template": id, "assertion": assign.assertion, "candidates": cands }),
                );
                proposals.push(cands);
            }
            if proposals.iter().any(Vec::is_empty) {
                continue;
            }
            found.extend(match_all(t.placeholders, &proposals).into_iter().map(|b| (b, q.clone())));
        }
        found.sort();
        log.next_round();
        let choice = match strategy {
            Strategy::Leader => found.first().cloned(),
            Strategy::Leaderless => {
                // every involved agent computes the match and votes on it
                let votes: Vec<String> = involved
                    .iter()
                    .map(|p| {
                        let v = found.first().map(|c| serde_json::to_string(c).expect("json")).unwrap_or_default();
                        log.send(MessageKind::MatchResult, p, "*", json!({ "template": id, "vote": v }));
                        v
                    })
                    .collect();
                majority(&votes).filter(|v| !v.is_empty()).map(|v| serde_json::from_str(&v).expect("own json"))
            }
        };
        if let Some((msgs, q)) = choice {
            let d = instantiate(id, &gcr, &net, &msgs, q.as_deref())?;
            log.next_round();
            log.send(
                MessageKind::MatchResult,
                &coordinator,
                "*",
                json!({ "template": id, "messages": msgs, "intermediary": q, "decomposition": d }),
            );
            return Ok(NegotiationOutcome {
                decomposition: d,
                rounds: log.round,
                transcript: log.transcript,
                strategy,
            });
        }
    }

    // no template instance: split the rule, asking the agents
    let mut d = decompose_with(&gcr, &mut net, opts)?;
    if !d.sync_messages.is_empty() {
        log.next_round();
        for s in &d.sync_messages {
            for p in [&s.from_partner, &s.to_partner] {
                log.send(MessageKind::SyncRequired, &coordinator, p, serde_json::to_value(s).expect("json"));
            }
        }
        let mut updated = chor.clone();
        for (p, a) in &net.agents {
            updated.private.insert(p.clone(), a.view.private[p].clone());
            if let Some(m) = a.view.public.get(p) {
                updated.public.insert(p.clone(), m.clone());
            }
        }
        for s in &d.sync_messages {
            updated.gamma.push([s.from_partner.clone(), s.name.clone(), s.to_partner.clone(), s.name.clone()]);
        }
        updated.gamma.sort();
        d.choreography = Some(updated);
    }
    log.next_round();
    log.send(MessageKind::MatchResult, &coordinator, "*", json!({ "template": "split", "decomposition": d }));
    Ok(NegotiationOutcome { decomposition: d, rounds: log.round, transcript: log.transcript, strategy })
}

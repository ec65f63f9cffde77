//! What the decomposition may ask about partner models.
//!
//! The split and the template search only ever ask one partner at a time
//! whether a rule holds on its own model. [`ChoreographyKnowledge`] answers
//! from a full choreography; the negotiation answers through agents.

use std::collections::HashMap;

use crate::automata::{model_to_automaton, FiniteAutomaton};
use crate::error::{Error, Result};
use crate::process_model::{Choreography, LabelMode, MessageNode};
use crate::rule_model::{ComplianceRule, RuleNode};
use crate::verification::model_automaton_satisfies;

use super::SyncMessage;

pub trait LocalKnowledge {
    /// All partners, sorted.
    fn partners(&self) -> Vec<String>;
    /// Send and receive nodes of `partner`, sorted.
    fn messages(&self, partner: &str) -> Vec<MessageNode>;
    /// Whether the node's partner has the referenced activity or message.
    fn has_node(&self, node: &RuleNode) -> bool;
    /// Whether `rule` holds on every run of `partner`'s private model.
    fn holds(&mut self, partner: &str, rule: &ComplianceRule) -> Result<bool>;
    fn in_loop(&self, partner: &str, label: &str) -> bool;
    fn insert_sync(&mut self, sync: &SyncMessage) -> Result<()>;
}

/// Cache key of a local check: the rule with its id blanked.
pub(crate) fn rule_key(partner: &str, rule: &ComplianceRule) -> (String, String) {
    let mut r = rule.clone();
    r.id.clear();
    (partner.to_string(), r.to_json())
}

pub(crate) fn has_node_in(chor: &Choreography, node: &RuleNode) -> bool {
    let Some(model) = chor.private.get(&node.partner) else { return false };
    if node.is_message() {
        chor.partner_messages(&node.partner).iter().any(|m| m.msg == node.activity)
    } else {
        model.find(&node.activity).is_some()
    }
}

/// Answers from a complete choreography, caching local checks.
#[derive(Clone, Debug)]
pub struct ChoreographyKnowledge {
    chor: Choreography,
    cache: HashMap<(String, String), bool>,
    models: HashMap<String, FiniteAutomaton>,
    checks: u64,
}

impl ChoreographyKnowledge {
    pub fn new(chor: Choreography) -> Self {
        ChoreographyKnowledge { chor, cache: HashMap::new(), models: HashMap::new(), checks: 0 }
    }

    pub fn choreography(&self) -> &Choreography {
        &self.chor
    }

    pub fn into_choreography(self) -> Choreography {
        self.chor
    }

    /// Local compliance checks actually run (cache misses).
    pub fn checks(&self) -> u64 {
        self.checks
    }
}

impl LocalKnowledge for ChoreographyKnowledge {
    fn partners(&self) -> Vec<String> {
        let mut p: Vec<String> = self.chor.private.keys().cloned().collect();
        p.sort();
        p
    }

    fn messages(&self, partner: &str) -> Vec<MessageNode> {
        self.chor.partner_messages(partner)
    }

    fn has_node(&self, node: &RuleNode) -> bool {
        has_node_in(&self.chor, node)
    }

    fn holds(&mut self, partner: &str, rule: &ComplianceRule) -> Result<bool> {
        let key = rule_key(partner, rule);
        if let Some(&v) = self.cache.get(&key) {
            return Ok(v);
        }
        self.checks += 1;
        if !self.models.contains_key(partner) {
            let aut = model_to_automaton(self.chor.private_model(partner)?, partner, LabelMode::Atomic)?;
            self.models.insert(partner.to_string(), aut);
        }
        let v = model_automaton_satisfies(&self.models[partner], rule, LabelMode::Atomic)?;
        self.cache.insert(key, v);
        Ok(v)
    }

    fn in_loop(&self, partner: &str, label: &str) -> bool {
        self.chor.private.get(partner).is_some_and(|m| m.in_loop(label))
    }

    fn insert_sync(&mut self, sync: &SyncMessage) -> Result<()> {
        if !self.chor.private.contains_key(&sync.from_partner) || !self.chor.private.contains_key(&sync.to_partner) {
            return Err(Error::input(format!("sync message {} names an unknown partner", sync.name)));
        }
        self.chor = super::insert_sync_message(&self.chor, sync)?;
        let (a, b) = (&sync.from_partner, &sync.to_partner);
        self.cache.retain(|(p, _), _| p != a && p != b);
        self.models.remove(a);
        self.models.remove(b);
        Ok(())
    }
}

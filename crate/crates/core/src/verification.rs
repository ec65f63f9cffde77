//! Automaton-based checks: decomposition correctness, local compliance of a
//! partner model, and global compliance of a choreography.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::automata::{self, Emptiness, FiniteAutomaton};
use crate::error::{Error, Result};
use crate::process_model::{self, ActivityKind, Block, Choreography, LabelMode, ModelView};
use crate::rule_model::{ComplianceRule, Trace};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Correct,
    Compliant,
    Violated { witness: Trace },
    Inapplicable { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    #[serde(flatten)]
    pub outcome: Outcome,
    /// States of the automata involved, by role.
    pub automaton_sizes: BTreeMap<String, usize>,
    pub alphabet: Vec<String>,
    pub wall_ms: f64,
}

impl Verdict {
    fn new(outcome: Outcome, sizes: BTreeMap<String, usize>, alphabet: Vec<String>, start: Instant) -> Self {
        Verdict { outcome, automaton_sizes: sizes, alphabet, wall_ms: start.elapsed().as_secs_f64() * 1e3 }
    }

    /// Correct or compliant.
    pub fn is_ok(&self) -> bool {
        matches!(self.outcome, Outcome::Correct | Outcome::Compliant)
    }

    pub fn witness(&self) -> Option<&Trace> {
        match &self.outcome {
            Outcome::Violated { witness } => Some(witness),
            _ => None,
        }
    }
}

/// Checks that every trace satisfying all `assertions` satisfies `gcr`.
///
/// The universe defaults to the labels mentioned by the rules; the witness
/// for a violation is the shortest, lexicographically smallest trace.
pub fn verify_decomposition(
    assertions: &[ComplianceRule],
    gcr: &ComplianceRule,
    alphabet: Option<&[String]>,
    mode: LabelMode,
) -> Result<Verdict> {
    let start = Instant::now();
    let alphabet: Vec<String> = match alphabet {
        Some(a) => a.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect(),
        None => {
            let mut s = gcr.labels(mode);
            for a in assertions {
                s.extend(a.labels(mode));
            }
            s.into_iter().collect()
        }
    };
    let mut sizes = BTreeMap::new();
    let mut conj = FiniteAutomaton::universal(&alphabet);
    for a in assertions {
        let aut = automata::rule_to_automaton(a, &alphabet, mode)?;
        sizes.insert(format!("assertion {}", a.id), aut.num_states());
        conj = conj.intersect(&aut)?.minimize()?;
    }
    sizes.insert("assertions".to_string(), conj.num_states());
    let rule = automata::rule_to_automaton(gcr, &alphabet, mode)?;
    sizes.insert("gcr".to_string(), rule.num_states());
    let bad = conj.intersect(&rule.complement()?)?;
    sizes.insert("violations".to_string(), bad.num_states());
    let outcome = match bad.is_empty() {
        Emptiness::Empty => Outcome::Correct,
        Emptiness::Witness(witness) => Outcome::Violated { witness },
    };
    Ok(Verdict::new(outcome, sizes, alphabet, start))
}

/// Checks that every complete run of `model` satisfies `rule`.
pub fn check_local_compliance(model: &Block, partner: &str, rule: &ComplianceRule, mode: LabelMode) -> Result<Verdict> {
    let start = Instant::now();
    let model_aut = automata::model_to_automaton(model, partner, mode)?;
    check_against(&model_aut, rule, mode, start, "model")
}

/// Like [`check_local_compliance`] for a model already compiled with
/// [`automata::model_to_automaton`]; lets callers reuse it across rules.
pub fn check_model_automaton(model_aut: &FiniteAutomaton, rule: &ComplianceRule, mode: LabelMode) -> Result<Verdict> {
    check_against(model_aut, rule, mode, Instant::now(), "model")
}

/// Boolean form of [`check_model_automaton`]: skips the witness and the
/// materialized product.
pub fn model_automaton_satisfies(model_aut: &FiniteAutomaton, rule: &ComplianceRule, mode: LabelMode) -> Result<bool> {
    let labels = rule.labels(mode);
    let widened;
    let model_aut = if labels.iter().all(|l| model_aut.symbol(l).is_some()) {
        model_aut
    } else {
        let mut alphabet: BTreeSet<String> = model_aut.alphabet().iter().cloned().collect();
        alphabet.extend(labels);
        let alphabet: Vec<String> = alphabet.into_iter().collect();
        widened = model_aut.with_alphabet(&alphabet)?;
        &widened
    };
    let rule_aut = automata::rule_to_automaton(rule, model_aut.alphabet(), mode)?;
    model_aut.intersection_is_empty(&rule_aut.complement()?)
}

fn check_against(
    model_aut: &FiniteAutomaton,
    rule: &ComplianceRule,
    mode: LabelMode,
    start: Instant,
    role: &str,
) -> Result<Verdict> {
    let mut alphabet: BTreeSet<String> = model_aut.alphabet().iter().cloned().collect();
    alphabet.extend(rule.labels(mode));
    let alphabet: Vec<String> = alphabet.into_iter().collect();
    let model_aut = model_aut.with_alphabet(&alphabet)?;
    let rule_aut = automata::rule_to_automaton(rule, &alphabet, mode)?;
    let bad = model_aut.intersect(&rule_aut.complement()?)?;
    let mut sizes = BTreeMap::new();
    sizes.insert(role.to_string(), model_aut.num_states());
    sizes.insert("rule".to_string(), rule_aut.num_states());
    sizes.insert("violations".to_string(), bad.num_states());
    let outcome = match bad.is_empty() {
        Emptiness::Empty => Outcome::Compliant,
        Emptiness::Witness(witness) => Outcome::Violated { witness },
    };
    Ok(Verdict::new(outcome, sizes, alphabet, start))
}

/// Which models a global check may look at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlobalMode {
    /// Only the choreography model: interactions between partners.
    ChoreographyOnly,
    /// The composition of the partners' public models.
    Public,
    /// The composition of the private models. Test-only: no real party sees these.
    FullPrivate,
}

impl std::str::FromStr for GlobalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "choreography-only" | "choreography" => Ok(GlobalMode::ChoreographyOnly),
            "public" => Ok(GlobalMode::Public),
            "full-private" | "private" => Ok(GlobalMode::FullPrivate),
            other => Err(Error::input(format!("unknown global mode {other}"))),
        }
    }
}

/// Checks `gcr` against the behaviour of the whole choreography as far as
/// `view` allows; rules referring to activities outside the view are
/// reported as inapplicable.
pub fn check_global_compliance(
    chor: &Choreography,
    gcr: &ComplianceRule,
    view: GlobalMode,
    mode: LabelMode,
    channel_bound: u32,
) -> Result<Verdict> {
    let start = Instant::now();
    gcr.ensure_valid()?;
    let inapplicable = |reason: &str| {
        Ok(Verdict::new(Outcome::Inapplicable { reason: reason.to_string() }, BTreeMap::new(), Vec::new(), start))
    };
    let activity_nodes: Vec<_> = gcr.nodes.iter().filter(|n| !n.is_message()).collect();
    match view {
        GlobalMode::ChoreographyOnly => {
            if activity_nodes.iter().any(|n| !is_public(chor, &n.partner, &n.activity)) {
                return inapplicable("references private activities");
            }
            if !activity_nodes.is_empty() {
                return inapplicable("references non-interaction activities");
            }
            let Some(model) = &chor.choreography else {
                return inapplicable("no choreography model");
            };
            let aut = automata::model_to_automaton(model, "", mode)?;
            check_against(&aut, gcr, mode, start, "choreography")
        }
        GlobalMode::Public => {
            if activity_nodes.iter().any(|n| !is_public(chor, &n.partner, &n.activity)) {
                return inapplicable("references private activities");
            }
            let aut = process_model::compose_view(chor, ModelView::Public, mode, channel_bound)?;
            check_against(&aut, gcr, mode, start, "composition")
        }
        GlobalMode::FullPrivate => {
            let aut = process_model::compose_view(chor, ModelView::Private, mode, channel_bound)?;
            check_against(&aut, gcr, mode, start, "composition")
        }
    }
}

fn is_public(chor: &Choreography, partner: &str, label: &str) -> bool {
    chor.public.get(partner).and_then(|m| m.find(label)).is_some_and(|a| matches!(a.kind, ActivityKind::Public))
}

//! Bounded exhaustive validation of the templates: every trace satisfying
//! all instantiated assertions must satisfy the rule shape.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process_model::LabelMode;
use crate::rule_model::{CompiledRule, ComplianceRule, Connector, Pattern, RuleEdge, RuleNode, Trace};

use super::templates::{template, Slot, TemplateId};

pub const MAX_THEOREM_LEN: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum TheoremResult {
    Holds { traces_checked: u64 },
    Counterexample { trace: Trace },
}

/// Premises and conclusion of a named theorem over abstract activities.
/// Besides the template ids, `T1a-converse` states the converse of `T1a`
/// with the chain `A →→ B →→ C` as conclusion.
pub fn theorem_rules(id: &str) -> Result<(Vec<ComplianceRule>, ComplianceRule)> {
    if id == "T1a-converse" {
        let premise = template(TemplateId::T1a).shape;
        let conclusion = ComplianceRule {
            id: "chain".to_string(),
            nodes: vec![
                RuleNode::activity("A", "A", "A", Pattern::AnteOcc),
                RuleNode::activity("B", "B", "B", Pattern::ConsOcc),
                RuleNode::activity("C", "C", "C", Pattern::ConsOcc),
            ],
            edges: vec![
                RuleEdge::new("A", "B", Connector::Consequence),
                RuleEdge::new("B", "C", Connector::Consequence),
            ],
        };
        return Ok((vec![premise], conclusion));
    }
    let t = template(id.parse()?);
    let premises = t
        .assertions
        .iter()
        .enumerate()
        .map(|(j, a)| ComplianceRule {
            id: format!("{id}.{}", j + 1),
            nodes: a
                .nodes
                .iter()
                .map(|n| {
                    let name = match &n.slot {
                        Slot::Var(x) => x.clone(),
                        Slot::Msg(i) => format!("M{i}"),
                    };
                    RuleNode::activity(&n.id, &name, &name, n.pattern)
                })
                .collect(),
            edges: a.edges.clone(),
        })
        .collect();
    Ok((premises, t.shape))
}

/// The letters a theorem mentions, sorted.
pub fn theorem_alphabet(id: &str) -> Result<Vec<String>> {
    let (premises, conclusion) = theorem_rules(id)?;
    let mut letters = conclusion.labels(LabelMode::Bare);
    for p in &premises {
        letters.extend(p.labels(LabelMode::Bare));
    }
    Ok(letters.into_iter().collect())
}

/// Enumerates every trace over `alphabet` (default: the theorem's own
/// letters) up to `max_len`, shortest first and lexicographically within a
/// length, and returns the first one that satisfies all premises but
/// violates the conclusion.
pub fn validate_theorem(id: &str, alphabet: Option<&[String]>, max_len: usize) -> Result<TheoremResult> {
    if max_len > MAX_THEOREM_LEN {
        return Err(Error::input(format!("max length {max_len} exceeds {MAX_THEOREM_LEN}")));
    }
    let (premises, conclusion) = theorem_rules(id)?;
    // letters outside a given alphabet simply never occur
    let mut letters: Vec<String> = match alphabet {
        Some(a) => a.to_vec(),
        None => theorem_alphabet(id)?,
    };
    letters.sort();
    letters.dedup();
    let premises: Vec<CompiledRule> =
        premises.iter().map(|r| CompiledRule::new(r, &letters, LabelMode::Bare)).collect::<Result<_>>()?;
    let conclusion = CompiledRule::new(&conclusion, &letters, LabelMode::Bare)?;
    let is_counterexample = |w: &[usize]| premises.iter().all(|p| p.evaluate(w)) && !conclusion.evaluate(w);

    let s = letters.len();
    let mut checked: u64 = 0;
    for len in 0..=max_len {
        // split each length into prefix jobs; prefix order is lexicographic order
        let prefix_len = len.min(3);
        let jobs = s.pow(prefix_len as u32);
        let next = AtomicUsize::new(0);
        let hits: Mutex<Vec<(usize, Vec<usize>)>> = Mutex::new(Vec::new());
        let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.max(1));
        std::thread::scope(|scope| {
            for _ in 0..threads {
                scope.spawn(|| loop {
                    let job = next.fetch_add(1, Ordering::Relaxed);
                    if job >= jobs {
                        break;
                    }
                    if hits.lock().expect("lock").iter().any(|(j, _)| *j < job) {
                        continue;
                    }
                    let mut word = vec![0usize; len];
                    let mut x = job;
                    for p in (0..prefix_len).rev() {
                        word[p] = x % s;
                        x /= s;
                    }
                    if let Some(w) = search_suffix(&mut word, prefix_len, s, &is_counterexample) {
                        hits.lock().expect("lock").push((job, w));
                        break;
                    }
                });
            }
        });
        let mut hits = hits.into_inner().expect("lock");
        hits.sort();
        if let Some((_, w)) = hits.into_iter().next() {
            let trace = Trace { events: w.iter().map(|&i| letters[i].clone()).collect() };
            return Ok(TheoremResult::Counterexample { trace });
        }
        checked += (s as u64).pow(len as u32);
    }
    Ok(TheoremResult::Holds { traces_checked: checked })
}

/// Lexicographically first completion of `word[from..]` that is a counterexample.
fn search_suffix(word: &mut [usize], from: usize, s: usize, bad: &dyn Fn(&[usize]) -> bool) -> Option<Vec<usize>> {
    if s == 0 {
        return if bad(word) { Some(word.to_vec()) } else { None };
    }
    for x in word[from..].iter_mut() {
        *x = 0;
    }
    loop {
        if bad(word) {
            return Some(word.to_vec());
        }
        // odometer increment over the suffix
        let mut i = word.len();
        loop {
            if i == from {
                return None;
            }
            i -= 1;
            word[i] += 1;
            if word[i] < s {
                break;
            }
            word[i] = 0;
        }
    }
}

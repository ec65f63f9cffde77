//! Finite automata over event-label alphabets: compilation of rules and
//! process models, boolean operations, minimization and witness extraction.

use std::cell::Cell;
use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::process_model::{ActivityKind, Block, LabelMode};
use crate::rule_model::{CompiledRule, ComplianceRule, Pattern, Trace};

pub const DEFAULT_STATE_BUDGET: usize = 1_000_000;

thread_local! {
    static BUDGET_OVERRIDE: Cell<Option<usize>> = const { Cell::new(None) };
}

/// Maximum number of states any single construction may create. Read from
/// `COMPLY_STATE_BUDGET` (once per process) unless overridden for the
/// current thread.
pub fn state_budget() -> usize {
    static FROM_ENV: std::sync::OnceLock<usize> = std::sync::OnceLock::new();
    if let Some(b) = BUDGET_OVERRIDE.with(|c| c.get()) {
        return b;
    }
    *FROM_ENV.get_or_init(|| {
        std::env::var("COMPLY_STATE_BUDGET").ok().and_then(|v| v.trim().parse().ok()).unwrap_or(DEFAULT_STATE_BUDGET)
    })
}

/// Overrides the state budget for the current thread (`None` restores the default).
pub fn set_state_budget(limit: Option<usize>) {
    BUDGET_OVERRIDE.with(|c| c.set(limit));
}

fn check_budget(states: usize) -> Result<()> {
    let limit = state_budget();
    if states > limit {
        Err(Error::Budget { limit })
    } else {
        Ok(())
    }
}

/// State-pair numbering for products: dense when small, hashed otherwise.
enum PairIndex {
    Dense { width: usize, ids: Vec<u32> },
    Sparse(HashMap<(u32, u32), u32>),
}

impl PairIndex {
    const DENSE_LIMIT: usize = 1 << 22;

    fn new(left: usize, right: usize) -> Self {
        match left.checked_mul(right) {
            Some(cells) if cells <= Self::DENSE_LIMIT => PairIndex::Dense { width: right, ids: vec![u32::MAX; cells] },
            _ => PairIndex::Sparse(HashMap::new()),
        }
    }

    fn get(&self, p: u32, q: u32) -> Option<u32> {
        match self {
            PairIndex::Dense { width, ids } => Some(ids[p as usize * width + q as usize]).filter(|&t| t != u32::MAX),
            PairIndex::Sparse(m) => m.get(&(p, q)).copied(),
        }
    }

    fn insert(&mut self, (p, q): (u32, u32), id: u32) {
        match self {
            PairIndex::Dense { width, ids } => ids[p as usize * *width + q as usize] = id,
            PairIndex::Sparse(m) => {
                m.insert((p, q), id);
            }
        }
    }
}

/// Nondeterministic finite automaton. Transitions of each state are kept
/// sorted by (symbol, target); symbols index into the sorted alphabet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteAutomaton {
    alphabet: Vec<String>,
    initial: u32,
    accepting: Vec<bool>,
    trans: Vec<Vec<(u32, u32)>>,
}

/// Result of an emptiness test.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Emptiness {
    Empty,
    /// Shortest accepted trace, lexicographically smallest among those.
    Witness(Trace),
}

impl FiniteAutomaton {
    /// Automaton with a single non-accepting initial state.
    pub fn new<S: AsRef<str>>(alphabet: &[S]) -> Self {
        let alphabet: Vec<String> =
            alphabet.iter().map(|s| s.as_ref().to_string()).collect::<BTreeSet<_>>().into_iter().collect();
        FiniteAutomaton { alphabet, initial: 0, accepting: vec![false], trans: vec![Vec::new()] }
    }

    /// Accepts exactly the empty trace (with `accept`) or nothing.
    pub fn trivial<S: AsRef<str>>(alphabet: &[S], accept: bool) -> Self {
        let mut a = Self::new(alphabet);
        a.accepting[0] = accept;
        a
    }

    /// Accepts every trace over the alphabet.
    pub fn universal<S: AsRef<str>>(alphabet: &[S]) -> Self {
        let mut a = Self::trivial(alphabet, true);
        for s in 0..a.alphabet.len() as u32 {
            a.trans[0].push((s, 0));
        }
        a
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn symbol(&self, label: &str) -> Option<u32> {
        self.alphabet.binary_search_by(|s| s.as_str().cmp(label)).ok().map(|i| i as u32)
    }

    pub fn num_states(&self) -> usize {
        self.accepting.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.trans.iter().map(Vec::len).sum()
    }

    pub fn initial(&self) -> u32 {
        self.initial
    }

    pub fn is_accepting(&self, state: u32) -> bool {
        self.accepting[state as usize]
    }

    pub fn transitions(&self, state: u32) -> &[(u32, u32)] {
        &self.trans[state as usize]
    }

    pub fn add_state(&mut self, accepting: bool) -> u32 {
        self.accepting.push(accepting);
        self.trans.push(Vec::new());
        (self.accepting.len() - 1) as u32
    }

    pub fn set_initial(&mut self, state: u32) {
        self.initial = state;
    }

    pub fn set_accepting(&mut self, state: u32, accepting: bool) {
        self.accepting[state as usize] = accepting;
    }

    pub fn add_transition(&mut self, from: u32, symbol: u32, to: u32) {
        let list = &mut self.trans[from as usize];
        if let Err(pos) = list.binary_search(&(symbol, to)) {
            list.insert(pos, (symbol, to));
        }
    }

    pub fn add_transition_label(&mut self, from: u32, label: &str, to: u32) -> Result<()> {
        let s = self.symbol(label).ok_or_else(|| Error::AlphabetMismatch(format!("label {label} not in alphabet")))?;
        self.add_transition(from, s, to);
        Ok(())
    }

    pub fn is_deterministic(&self) -> bool {
        self.trans.iter().all(|t| t.windows(2).all(|w| w[0].0 != w[1].0))
    }

    pub fn accepts<S: AsRef<str>>(&self, trace: &[S]) -> bool {
        let mut current: BTreeSet<u32> = [self.initial].into();
        for label in trace {
            let Some(sym) = self.symbol(label.as_ref()) else { return false };
            let mut next = BTreeSet::new();
            for &s in &current {
                for &(x, t) in &self.trans[s as usize] {
                    if x == sym {
                        next.insert(t);
                    }
                }
            }
            if next.is_empty() {
                return false;
            }
            current = next;
        }
        current.iter().any(|&s| self.accepting[s as usize])
    }

    pub fn accepts_trace(&self, trace: &Trace) -> bool {
        self.accepts(&trace.events)
    }

    /// Same language over a larger alphabet.
    pub fn with_alphabet<S: AsRef<str>>(&self, alphabet: &[S]) -> Result<Self> {
        let mut out = FiniteAutomaton::new(alphabet);
        let map: Vec<u32> = self
            .alphabet
            .iter()
            .map(|l| {
                out.symbol(l)
                    .ok_or_else(|| Error::AlphabetMismatch(format!("label {l} missing from the extended alphabet")))
            })
            .collect::<Result<_>>()?;
        out.initial = self.initial;
        out.accepting = self.accepting.clone();
        out.trans = self
            .trans
            .iter()
            .map(|t| {
                let mut v: Vec<(u32, u32)> = t.iter().map(|&(s, q)| (map[s as usize], q)).collect();
                v.sort_unstable();
                v
            })
            .collect();
        Ok(out)
    }

    fn same_alphabet(&self, other: &Self) -> Result<()> {
        if self.alphabet == other.alphabet {
            Ok(())
        } else {
            let a: BTreeSet<_> = self.alphabet.iter().collect();
            let b: BTreeSet<_> = other.alphabet.iter().collect();
            let diff: Vec<String> = a.symmetric_difference(&b).map(|s| s.to_string()).collect();
            Err(Error::AlphabetMismatch(format!("labels not shared: {}", diff.join(", "))))
        }
    }

    /// Subset construction; the result is deterministic but may be partial.
    pub fn determinize(&self) -> Result<Self> {
        let mut out =
            FiniteAutomaton { alphabet: self.alphabet.clone(), initial: 0, accepting: Vec::new(), trans: Vec::new() };
        let mut index: HashMap<Vec<u32>, u32> = HashMap::new();
        let mut queue = VecDeque::new();
        let start = vec![self.initial];
        index.insert(start.clone(), 0);
        out.add_state_raw(self.accepting[self.initial as usize]);
        queue.push_back(start);
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        while let Some(set) = queue.pop_front() {
            let from = index[&set];
            pairs.clear();
            for &s in &set {
                pairs.extend_from_slice(&self.trans[s as usize]);
            }
            pairs.sort_unstable();
            pairs.dedup();
            let mut i = 0;
            while i < pairs.len() {
                let sym = pairs[i].0;
                let mut target = Vec::new();
                while i < pairs.len() && pairs[i].0 == sym {
                    target.push(pairs[i].1);
                    i += 1;
                }
                let to = match index.get(&target) {
                    Some(&t) => t,
                    None => {
                        let acc = target.iter().any(|&q| self.accepting[q as usize]);
                        let t = out.add_state_raw(acc);
                        check_budget(out.num_states())?;
                        index.insert(target.clone(), t);
                        queue.push_back(target);
                        t
                    }
                };
                out.trans[from as usize].push((sym, to));
            }
        }
        Ok(out)
    }

    fn add_state_raw(&mut self, accepting: bool) -> u32 {
        self.add_state(accepting)
    }

    /// Deterministic and complete (adds a sink state when needed).
    pub fn complete(&self) -> Result<Self> {
        let mut d = if self.is_deterministic() { self.clone() } else { self.determinize()? };
        let n = d.alphabet.len() as u32;
        let needs_sink = d.trans.iter().any(|t| t.len() < n as usize);
        if needs_sink {
            let sink = d.add_state(false);
            check_budget(d.num_states())?;
            for s in 0..d.num_states() {
                let have: BTreeSet<u32> = d.trans[s].iter().map(|&(x, _)| x).collect();
                for x in 0..n {
                    if !have.contains(&x) {
                        d.trans[s].push((x, sink));
                    }
                }
                d.trans[s].sort_unstable();
            }
        }
        Ok(d)
    }

    /// Accepts exactly the traces over the alphabet this automaton rejects.
    pub fn complement(&self) -> Result<Self> {
        let mut d = self.complete()?;
        for a in d.accepting.iter_mut() {
            *a = !*a;
        }
        Ok(d)
    }

    /// Product automaton accepting the intersection of both languages.
    pub fn intersect(&self, other: &Self) -> Result<Self> {
        self.same_alphabet(other)?;
        self.product(other, |a, b| a && b)
    }

    /// Whether the intersection is empty, exploring the product on the fly
    /// without building it or a witness.
    pub fn intersection_is_empty(&self, other: &Self) -> Result<bool> {
        self.same_alphabet(other)?;
        let mut index = PairIndex::new(self.num_states(), other.num_states());
        let limit = state_budget();
        let start = (self.initial, other.initial);
        index.insert(start, 0);
        let mut count = 1u32;
        let mut stack = vec![start];
        while let Some((p, q)) = stack.pop() {
            if self.is_accepting(p) && other.is_accepting(q) {
                return Ok(false);
            }
            let (tp, tq) = (&self.trans[p as usize], &other.trans[q as usize]);
            let mut j0 = 0;
            for &(sym, p2) in tp {
                while j0 < tq.len() && tq[j0].0 < sym {
                    j0 += 1;
                }
                let mut j = j0;
                while j < tq.len() && tq[j].0 == sym {
                    let key = (p2, tq[j].1);
                    if index.get(key.0, key.1).is_none() {
                        index.insert(key, count);
                        count += 1;
                        if count as usize > limit {
                            return Err(Error::Budget { limit });
                        }
                        stack.push(key);
                    }
                    j += 1;
                }
            }
        }
        Ok(true)
    }

    /// Accepts the union of both languages.
    pub fn union(&self, other: &Self) -> Result<Self> {
        self.same_alphabet(other)?;
        self.complete()?.product(&other.complete()?, |a, b| a || b)
    }

    fn product(&self, other: &Self, accept: impl Fn(bool, bool) -> bool) -> Result<Self> {
        let mut out =
            FiniteAutomaton { alphabet: self.alphabet.clone(), initial: 0, accepting: Vec::new(), trans: Vec::new() };
        let mut index = PairIndex::new(self.num_states(), other.num_states());
        let limit = state_budget();
        let mut queue = VecDeque::new();
        let start = (self.initial, other.initial);
        index.insert(start, 0);
        out.add_state(accept(self.is_accepting(start.0), other.is_accepting(start.1)));
        queue.push_back(start);
        while let Some((p, q)) = queue.pop_front() {
            let from = index.get(p, q).expect("queued pairs are indexed");
            let (tp, tq) = (&self.trans[p as usize], &other.trans[q as usize]);
            let mut j0 = 0;
            for &(sym, p2) in tp {
                while j0 < tq.len() && tq[j0].0 < sym {
                    j0 += 1;
                }
                let mut j = j0;
                while j < tq.len() && tq[j].0 == sym {
                    let key = (p2, tq[j].1);
                    let to = match index.get(key.0, key.1) {
                        Some(t) => t,
                        None => {
                            let t = out.add_state(accept(self.is_accepting(key.0), other.is_accepting(key.1)));
                            if out.num_states() > limit {
                                return Err(Error::Budget { limit });
                            }
                            index.insert(key, t);
                            queue.push_back(key);
                            t
                        }
                    };
                    out.trans[from as usize].push((sym, to));
                    j += 1;
                }
            }
            out.trans[from as usize].sort_unstable();
            out.trans[from as usize].dedup();
        }
        Ok(out)
    }

    /// Minimal complete deterministic automaton, states numbered in
    /// breadth-first order from the initial state (canonical form).
    pub fn minimize(&self) -> Result<Self> {
        let d = self.complete()?.trim_unreachable();
        let n = d.num_states();
        let k = d.alphabet.len();
        let delta: Vec<Vec<u32>> = d.trans.iter().map(|t| t.iter().map(|&(_, q)| q).collect()).collect();
        let mut class: Vec<u32> = d.accepting.iter().map(|&a| a as u32).collect();
        let mut count = class.iter().collect::<BTreeSet<_>>().len();
        loop {
            let mut sig_index: HashMap<Vec<u32>, u32> = HashMap::new();
            let mut next = vec![0u32; n];
            for s in 0..n {
                let mut sig = Vec::with_capacity(k + 1);
                sig.push(class[s]);
                sig.extend(delta[s].iter().map(|&q| class[q as usize]));
                let len = sig_index.len() as u32;
                next[s] = *sig_index.entry(sig).or_insert(len);
            }
            let new_count = sig_index.len();
            class = next;
            if new_count == count {
                break;
            }
            count = new_count;
        }
        // Renumber classes in BFS order from the initial state.
        let mut order: HashMap<u32, u32> = HashMap::new();
        let mut reps: Vec<usize> = Vec::new();
        let mut queue = VecDeque::new();
        order.insert(class[d.initial as usize], 0);
        reps.push(d.initial as usize);
        queue.push_back(d.initial as usize);
        while let Some(s) = queue.pop_front() {
            for &q in &delta[s] {
                let c = class[q as usize];
                if let std::collections::hash_map::Entry::Vacant(e) = order.entry(c) {
                    e.insert(reps.len() as u32);
                    reps.push(q as usize);
                    queue.push_back(q as usize);
                }
            }
        }
        let mut out = FiniteAutomaton {
            alphabet: d.alphabet.clone(),
            initial: 0,
            accepting: Vec::with_capacity(reps.len()),
            trans: Vec::with_capacity(reps.len()),
        };
        for &r in &reps {
            out.accepting.push(d.accepting[r]);
            out.trans.push(delta[r].iter().enumerate().map(|(x, &q)| (x as u32, order[&class[q as usize]])).collect());
        }
        Ok(out)
    }

    fn trim_unreachable(&self) -> Self {
        let mut seen = vec![u32::MAX; self.num_states()];
        let mut order = Vec::new();
        let mut queue = VecDeque::from([self.initial]);
        seen[self.initial as usize] = 0;
        order.push(self.initial);
        while let Some(s) = queue.pop_front() {
            for &(_, q) in &self.trans[s as usize] {
                if seen[q as usize] == u32::MAX {
                    seen[q as usize] = order.len() as u32;
                    order.push(q);
                    queue.push_back(q);
                }
            }
        }
        FiniteAutomaton {
            alphabet: self.alphabet.clone(),
            initial: 0,
            accepting: order.iter().map(|&s| self.accepting[s as usize]).collect(),
            trans: order
                .iter()
                .map(|&s| {
                    let mut v: Vec<(u32, u32)> =
                        self.trans[s as usize].iter().map(|&(x, q)| (x, seen[q as usize])).collect();
                    v.sort_unstable();
                    v
                })
                .collect(),
        }
    }

    /// Emptiness test with a shortest, lexicographically smallest witness.
    pub fn is_empty(&self) -> Emptiness {
        let n = self.num_states();
        let mut parent: Vec<Option<(u32, u32)>> = vec![None; n];
        let mut seen = vec![false; n];
        let mut rank = vec![0usize; n];
        let mut frontier = vec![self.initial];
        seen[self.initial as usize] = true;
        loop {
            if let Some(&hit) = frontier.iter().find(|&&s| self.accepting[s as usize]) {
                let mut word = Vec::new();
                let mut cur = hit;
                while let Some((p, sym)) = parent[cur as usize] {
                    word.push(self.alphabet[sym as usize].clone());
                    cur = p;
                }
                word.reverse();
                return Emptiness::Witness(Trace { events: word });
            }
            if frontier.is_empty() {
                return Emptiness::Empty;
            }
            // States are expanded in the order of their own lex-smallest
            // shortest words; symbols ascend within each state.
            let mut next_layer: Vec<(u32, u32, u32)> = Vec::new();
            for &s in &frontier {
                for &(sym, q) in &self.trans[s as usize] {
                    next_layer.push((sym, s, q));
                }
            }
            let mut next = Vec::new();
            for (i, &s) in frontier.iter().enumerate() {
                rank[s as usize] = i;
            }
            next_layer.sort_unstable_by_key(|&(sym, s, q)| (rank[s as usize], sym, q));
            for (sym, s, q) in next_layer {
                if !seen[q as usize] {
                    seen[q as usize] = true;
                    parent[q as usize] = Some((s, sym));
                    next.push(q);
                }
            }
            frontier = next;
        }
    }

    /// Text dump: `initial:` and `accepting:` headers, then one
    /// `state --label--> state` line per transition.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "initial: {}", self.initial);
        let acc: Vec<String> = (0..self.num_states()).filter(|&s| self.accepting[s]).map(|s| s.to_string()).collect();
        let _ = writeln!(out, "accepting: {}", acc.join(" "));
        for (s, t) in self.trans.iter().enumerate() {
            for &(x, q) in t {
                let _ = writeln!(out, "{s} --{}--> {q}", self.alphabet[x as usize]);
            }
        }
        out
    }

    /// Graph description in DOT syntax.
    pub fn to_dot(&self, name: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph \"{}\" {{", name.replace('"', "'"));
        let _ = writeln!(out, "  rankdir=LR;");
        let _ = writeln!(out, "  start [shape=point];");
        for s in 0..self.num_states() {
            let shape = if self.accepting[s] { "doublecircle" } else { "circle" };
            let _ = writeln!(out, "  s{s} [shape={shape}, label=\"{s}\"];");
        }
        let _ = writeln!(out, "  start -> s{};", self.initial);
        for (s, t) in self.trans.iter().enumerate() {
            for &(x, q) in t {
                let _ = writeln!(out, "  s{s} -> s{q} [label=\"{}\"];", self.alphabet[x as usize].replace('"', "'"));
            }
        }
        out.push_str("}\n");
        out
    }
}

// ===========================================================================
// Rule compilation
// ===========================================================================

/// Complete DFA over letters `class * 2^tracks + bits`; state 0 is initial.
#[derive(Clone, Debug)]
struct Dense {
    letters: usize,
    table: Vec<u32>,
    accept: Vec<bool>,
}

impl Dense {
    fn states(&self) -> usize {
        self.accept.len()
    }

    fn next(&self, s: u32, l: usize) -> u32 {
        self.table[s as usize * self.letters + l]
    }

    fn from_fn(letters: usize, accept: Vec<bool>, f: impl Fn(u32, usize) -> u32) -> Dense {
        let mut table = Vec::with_capacity(accept.len() * letters);
        for s in 0..accept.len() as u32 {
            for l in 0..letters {
                table.push(f(s, l));
            }
        }
        Dense { letters, table, accept }
    }

    fn complement(mut self) -> Dense {
        for a in self.accept.iter_mut() {
            *a = !*a;
        }
        self
    }

    fn product(&self, other: &Dense, and: bool) -> Result<Dense> {
        let letters = self.letters;
        let mut index: HashMap<(u32, u32), u32> = HashMap::new();
        let mut pairs = vec![(0u32, 0u32)];
        index.insert((0, 0), 0);
        let mut table = Vec::new();
        let mut i = 0;
        while i < pairs.len() {
            let (p, q) = pairs[i];
            for l in 0..letters {
                let key = (self.next(p, l), other.next(q, l));
                let t = match index.get(&key) {
                    Some(&t) => t,
                    None => {
                        let t = pairs.len() as u32;
                        pairs.push(key);
                        check_budget(pairs.len())?;
                        index.insert(key, t);
                        t
                    }
                };
                table.push(t);
            }
            i += 1;
        }
        let accept = pairs
            .iter()
            .map(|&(p, q)| {
                let (a, b) = (self.accept[p as usize], other.accept[q as usize]);
                if and {
                    a && b
                } else {
                    a || b
                }
            })
            .collect();
        Ok(Dense { letters, table, accept }.minimize())
    }

    /// Existential quantification of one track: the result ignores the bit.
    fn project(&self, bit: usize) -> Result<Dense> {
        let letters = self.letters;
        let mut index: HashMap<Vec<u32>, u32> = HashMap::new();
        let mut sets: Vec<Vec<u32>> = vec![vec![0]];
        index.insert(vec![0], 0);
        let mut table = Vec::new();
        let mut i = 0;
        while i < sets.len() {
            for l in 0..letters {
                let mut target: Vec<u32> = Vec::with_capacity(sets[i].len() * 2);
                for &s in &sets[i] {
                    target.push(self.next(s, l & !bit));
                    target.push(self.next(s, l | bit));
                }
                target.sort_unstable();
                target.dedup();
                let t = match index.get(&target) {
                    Some(&t) => t,
                    None => {
                        let t = sets.len() as u32;
                        index.insert(target.clone(), t);
                        sets.push(target);
                        check_budget(sets.len())?;
                        t
                    }
                };
                table.push(t);
            }
            i += 1;
        }
        let accept = sets.iter().map(|s| s.iter().any(|&q| self.accept[q as usize])).collect();
        Ok(Dense { letters, table, accept }.minimize())
    }

    fn minimize(&self) -> Dense {
        let n = self.states();
        let mut class: Vec<u32> = self.accept.iter().map(|&a| a as u32).collect();
        let mut count = class.iter().collect::<BTreeSet<_>>().len();
        loop {
            let mut sig_index: HashMap<Vec<u32>, u32> = HashMap::new();
            let mut next = vec![0u32; n];
            for s in 0..n {
                let mut sig = Vec::with_capacity(self.letters + 1);
                sig.push(class[s]);
                let row = &self.table[s * self.letters..(s + 1) * self.letters];
                sig.extend(row.iter().map(|&q| class[q as usize]));
                let len = sig_index.len() as u32;
                next[s] = *sig_index.entry(sig).or_insert(len);
            }
            let new_count = sig_index.len();
            class = next;
            if new_count == count {
                break;
            }
            count = new_count;
        }
        // Renumber so that the initial state's class becomes 0.
        let c0 = class[0];
        let remap = |c: u32| {
            if c == c0 {
                0
            } else if c == 0 {
                c0
            } else {
                c
            }
        };
        let mut rep = vec![usize::MAX; count];
        for (s, &cl) in class.iter().enumerate().take(n) {
            let c = remap(cl) as usize;
            if rep[c] == usize::MAX {
                rep[c] = s;
            }
        }
        Dense::from_fn(self.letters, rep.iter().map(|&r| self.accept[r]).collect(), |c, l| {
            remap(class[self.next(rep[c as usize] as u32, l) as usize])
        })
    }
}

struct TrackSpace {
    classes: usize,
    tracks: usize,
}

impl TrackSpace {
    fn letters(&self) -> usize {
        self.classes << self.tracks
    }

    fn class_of(&self, l: usize) -> usize {
        l >> self.tracks
    }

    fn bit(&self, l: usize, t: usize) -> bool {
        l & (1 << t) != 0
    }

    /// Marked positions of track `t` carry a class in `allowed`.
    fn label(&self, t: usize, allowed: &[bool]) -> Dense {
        Dense::from_fn(self.letters(), vec![true, false], |s, l| {
            if s == 1 || (self.bit(l, t) && !allowed[self.class_of(l)]) {
                1
            } else {
                0
            }
        })
    }

    /// Track `t` is marked exactly once.
    fn single(&self, t: usize) -> Dense {
        Dense::from_fn(self.letters(), vec![false, true, false], |s, l| match (s, self.bit(l, t)) {
            (0, false) => 0,
            (0, true) => 1,
            (1, false) => 1,
            _ => 2,
        })
    }

    /// The mark of track `a` lies strictly before the mark of track `b`.
    fn less(&self, a: usize, b: usize) -> Dense {
        Dense::from_fn(self.letters(), vec![false, false, true, false], |s, l| {
            match (s, self.bit(l, a), self.bit(l, b)) {
                (3, _, _) => 3,
                (_, true, true) => 3,
                (0, false, false) => 0,
                (0, true, false) => 1,
                (0, false, true) => 3,
                (1, false, false) => 1,
                (1, false, true) => 2,
                (1, true, false) => 3,
                (2, false, false) => 2,
                _ => 3,
            }
        })
    }

    fn all(&self) -> Dense {
        Dense::from_fn(self.letters(), vec![true], |_, _| 0)
    }
}

fn conj(space: &TrackSpace, parts: Vec<Dense>) -> Result<Dense> {
    let mut acc = space.all();
    for p in parts {
        acc = acc.product(&p, true)?;
    }
    Ok(acc)
}

/// Compiles `rule` into a minimal DFA accepting exactly the traces over
/// `alphabet` on which the rule holds.
///
/// Each occurrence and absence node becomes a marker track; the rule is built
/// as the formula "no activation lacks a completion" with conjunction as
/// product, negation as complement and quantifiers as track projection.
pub fn rule_to_automaton<S: AsRef<str>>(
    rule: &ComplianceRule,
    alphabet: &[S],
    mode: LabelMode,
) -> Result<FiniteAutomaton> {
    let skeleton = FiniteAutomaton::new(alphabet);
    let symbols = skeleton.alphabet().to_vec();
    for n in &rule.nodes {
        if !n.labels(mode).iter().any(|l| skeleton.symbol(l).is_some()) {
            return Err(Error::AlphabetMismatch(format!(
                "rule {} node {} has no label in the alphabet",
                rule.id, n.id
            )));
        }
    }
    let compiled = CompiledRule::new(rule, &symbols, mode)?;
    let n = compiled.node_count();

    // Symbols with identical node-membership behave identically.
    let mut class_index: HashMap<Vec<bool>, usize> = HashMap::new();
    let mut sym_class = Vec::with_capacity(symbols.len());
    for s in 0..symbols.len() {
        let sig: Vec<bool> = (0..n).map(|v| compiled.matches[v][s]).collect();
        let len = class_index.len();
        sym_class.push(*class_index.entry(sig).or_insert(len));
    }
    let mut class_sig = vec![Vec::new(); class_index.len().max(1)];
    for (sig, &c) in &class_index {
        class_sig[c] = sig.clone();
    }
    if class_index.is_empty() {
        class_sig[0] = vec![false; n];
    }
    let space = TrackSpace { classes: class_sig.len(), tracks: n };
    if space.letters() > 1 << 22 {
        return Err(Error::Budget { limit: state_budget() });
    }
    let allowed = |v: usize| -> Vec<bool> { class_sig.iter().map(|sig| sig[v]).collect() };
    let marked = |v: usize| -> Result<Dense> { space.single(v).product(&space.label(v, &allowed(v)), true) };
    let pat = &compiled.patterns;
    let nodes_with = |p: Pattern| (0..n).filter(|&v| pat[v] == p).collect::<Vec<_>>();
    let (ante_occ, cons_occ) = (nodes_with(Pattern::AnteOcc), nodes_with(Pattern::ConsOcc));

    // "Absence node x can be placed relative to the occurrence nodes in scope."
    let placeable = |x: usize, scope: &dyn Fn(usize) -> bool| -> Result<Dense> {
        let mut parts = vec![marked(x)?];
        for &(a, b) in &compiled.edges {
            if a == x && pat[b].is_occurrence() && scope(b) {
                parts.push(space.less(x, b));
            } else if b == x && pat[a].is_occurrence() && scope(a) {
                parts.push(space.less(a, x));
            }
        }
        conj(&space, parts)?.project(1 << x)
    };

    let mut beta = Vec::new();
    for &v in &cons_occ {
        beta.push(marked(v)?);
    }
    for &(a, b) in &compiled.edges {
        if pat[a].is_occurrence()
            && pat[b].is_occurrence()
            && (pat[a] == Pattern::ConsOcc || pat[b] == Pattern::ConsOcc)
        {
            beta.push(space.less(a, b));
        }
    }
    for x in nodes_with(Pattern::ConsAbs) {
        beta.push(placeable(x, &|_| true)?.complement());
    }
    let mut completion = conj(&space, beta)?;
    for &v in &cons_occ {
        completion = completion.project(1 << v)?;
    }

    let mut alpha = Vec::new();
    for &v in &ante_occ {
        alpha.push(marked(v)?);
    }
    for &(a, b) in &compiled.edges {
        if pat[a] == Pattern::AnteOcc && pat[b] == Pattern::AnteOcc {
            alpha.push(space.less(a, b));
        }
    }
    for x in nodes_with(Pattern::AnteAbs) {
        alpha.push(placeable(x, &|v| pat[v] == Pattern::AnteOcc)?.complement());
    }
    alpha.push(completion.complement());
    let mut violation = conj(&space, alpha)?;
    for &v in &ante_occ {
        violation = violation.project(1 << v)?;
    }
    let holds = violation.complement();

    let mut out = FiniteAutomaton {
        alphabet: symbols.clone(),
        initial: 0,
        accepting: holds.accept.clone(),
        trans: Vec::with_capacity(holds.states()),
    };
    for s in 0..holds.states() as u32 {
        out.trans.push((0..symbols.len()).map(|x| (x as u32, holds.next(s, sym_class[x] << space.tracks))).collect());
    }
    out.minimize()
}

// ===========================================================================
// Process model compilation
// ===========================================================================

/// Automaton used while composing block fragments; symbol indices refer to
/// a shared alphabet, `eps` holds silent moves.
struct Enfa {
    eps: Vec<Vec<u32>>,
    trans: Vec<Vec<(u32, u32)>>,
}

impl Enfa {
    fn state(&mut self) -> u32 {
        self.eps.push(Vec::new());
        self.trans.push(Vec::new());
        (self.eps.len() - 1) as u32
    }

    fn fragment(
        &mut self,
        block: &Block,
        partner: &str,
        mode: LabelMode,
        base: &FiniteAutomaton,
    ) -> Result<(u32, u32)> {
        match block {
            Block::Act(act) => {
                let labels = act.kind.labels(&act.label, partner, mode);
                let s = self.state();
                let mut cur = s;
                for l in labels {
                    let sym = base.symbol(&l).expect("label collected");
                    let t = self.state();
                    self.trans[cur as usize].push((sym, t));
                    cur = t;
                }
                Ok((s, cur))
            }
            Block::Seq(children) => {
                let s = self.state();
                let mut cur = s;
                for c in children {
                    let (cs, ce) = self.fragment(c, partner, mode, base)?;
                    self.eps[cur as usize].push(cs);
                    cur = ce;
                }
                Ok((s, cur))
            }
            Block::Xor(branches) => {
                let (s, e) = (self.state(), self.state());
                for b in branches {
                    let (bs, be) = self.fragment(b, partner, mode, base)?;
                    self.eps[s as usize].push(bs);
                    self.eps[be as usize].push(e);
                }
                Ok((s, e))
            }
            Block::Loop(lp) => {
                let (s, e) = (self.state(), self.state());
                let (bs, be) = self.fragment(&lp.body, partner, mode, base)?;
                self.eps[s as usize].push(e);
                self.eps[s as usize].push(bs);
                self.eps[be as usize].push(e);
                self.eps[be as usize].push(bs);
                Ok((s, e))
            }
            Block::And(branches) => {
                let mut acc: Option<FiniteAutomaton> = None;
                for b in branches {
                    let a = block_nfa(b, partner, mode, base)?;
                    acc = Some(match acc {
                        None => a,
                        Some(prev) => shuffle(&prev, &a)?,
                    });
                }
                let a = match acc {
                    Some(a) => a,
                    None => return self.fragment(&Block::Seq(Vec::new()), partner, mode, base),
                };
                let offset = self.eps.len() as u32;
                for _ in 0..a.num_states() {
                    self.state();
                }
                let e = self.state();
                for s in 0..a.num_states() as u32 {
                    for &(x, q) in a.transitions(s) {
                        self.trans[(s + offset) as usize].push((x, q + offset));
                    }
                    if a.is_accepting(s) {
                        self.eps[(s + offset) as usize].push(e);
                    }
                }
                Ok((a.initial() + offset, e))
            }
        }
    }

    fn into_nfa(self, start: u32, end: u32, base: &FiniteAutomaton) -> Result<FiniteAutomaton> {
        let n = self.eps.len();
        check_budget(n)?;
        let mut out = FiniteAutomaton::new(base.alphabet());
        out.accepting = vec![false; n];
        out.trans = vec![Vec::new(); n];
        out.initial = start;
        for s in 0..n {
            let mut closure = vec![s as u32];
            let mut seen = BTreeSet::from([s as u32]);
            let mut i = 0;
            while i < closure.len() {
                for &q in &self.eps[closure[i] as usize] {
                    if seen.insert(q) {
                        closure.push(q);
                    }
                }
                i += 1;
            }
            out.accepting[s] = seen.contains(&end);
            let mut t: Vec<(u32, u32)> = closure.iter().flat_map(|&c| self.trans[c as usize].iter().copied()).collect();
            t.sort_unstable();
            t.dedup();
            out.trans[s] = t;
        }
        Ok(out.trim_unreachable())
    }
}

fn block_nfa(block: &Block, partner: &str, mode: LabelMode, base: &FiniteAutomaton) -> Result<FiniteAutomaton> {
    let mut e = Enfa { eps: Vec::new(), trans: Vec::new() };
    let (s, t) = e.fragment(block, partner, mode, base)?;
    e.into_nfa(s, t, base)
}

/// Interleaving product: accepts every shuffle of a word of `a` with a word of `b`.
pub fn shuffle(a: &FiniteAutomaton, b: &FiniteAutomaton) -> Result<FiniteAutomaton> {
    a.same_alphabet(b)?;
    let mut out = FiniteAutomaton::new(a.alphabet());
    out.accepting.clear();
    out.trans.clear();
    let mut index: HashMap<(u32, u32), u32> = HashMap::new();
    let mut queue = VecDeque::new();
    let start = (a.initial, b.initial);
    index.insert(start, out.add_state(a.is_accepting(start.0) && b.is_accepting(start.1)));
    queue.push_back(start);
    while let Some((p, q)) = queue.pop_front() {
        let from = index[&(p, q)];
        let moves: Vec<(u32, (u32, u32))> = a.trans[p as usize]
            .iter()
            .map(|&(x, p2)| (x, (p2, q)))
            .chain(b.trans[q as usize].iter().map(|&(x, q2)| (x, (p, q2))))
            .collect();
        for (x, key) in moves {
            let to = match index.get(&key) {
                Some(&t) => t,
                None => {
                    let t = out.add_state(a.is_accepting(key.0) && b.is_accepting(key.1));
                    check_budget(out.num_states())?;
                    index.insert(key, t);
                    queue.push_back(key);
                    t
                }
            };
            out.add_transition(from, x, to);
        }
    }
    Ok(out)
}

/// Labels emitted by a block for `partner` under `mode`, sorted.
pub fn block_alphabet(block: &Block, partner: &str, mode: LabelMode) -> Vec<String> {
    let mut out = BTreeSet::new();
    block.visit(&mut |act| {
        out.extend(act.kind.labels(&act.label, partner, mode));
    });
    out.into_iter().collect()
}

/// Minimal DFA accepting exactly the complete runs of `model` (loops as
/// true cycles), over the model's own labels.
pub fn model_to_automaton(model: &Block, partner: &str, mode: LabelMode) -> Result<FiniteAutomaton> {
    let base = FiniteAutomaton::new(&block_alphabet(model, partner, mode));
    block_nfa(model, partner, mode, &base)?.minimize()
}

impl ActivityKind {
    /// Event labels emitted by one execution of an activity of this kind.
    pub fn labels(&self, label: &str, partner: &str, mode: LabelMode) -> Vec<String> {
        use crate::process_model::label as l;
        match self {
            ActivityKind::Private | ActivityKind::Public => vec![l::activity(partner, label, mode)],
            ActivityKind::Send { msg, .. } => vec![l::send(msg, partner, mode)],
            ActivityKind::Receive { msg, .. } => vec![l::receive(msg, partner, mode)],
            ActivityKind::Interaction { msg, from, to } => match mode {
                LabelMode::Async => vec![l::send(msg, from, mode), l::receive(msg, to, mode)],
                _ => vec![l::send(msg, from, mode)],
            },
        }
    }
}

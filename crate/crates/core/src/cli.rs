//! Command-line front end. Exit codes: 0 compliant/correct/holds,
//! 1 violation or counterexample, 2 input or configuration error,
//! 3 state budget exceeded.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::automata::{self, rule_to_automaton};
use crate::decomposition::{
    self, apply_theorem_template, decompose_auto, validate_theorem, DecomposeOptions, Decomposition, Status,
    TemplateId, TheoremResult,
};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::negotiation::{run_negotiation, Strategy};
use crate::process_model::{
    enumerate_traces, generate_random_choreography, Block, Choreography, GeneratorParams, LabelMode,
};
use crate::rule_model::{activations, evaluate_rule, ComplianceRule, Trace};
use crate::verification::{
    check_global_compliance, check_local_compliance, verify_decomposition, GlobalMode, Outcome, Verdict,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Dot,
}

#[derive(Debug, Parser)]
#[command(name = "comply", version, about = "Compliance checking and rule decomposition for process choreographies")]
pub struct Cli {
    #[arg(long, global = true, value_enum, default_value = "text")]
    pub format: Format,
    /// Leave the timestamp out of JSON reports.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
    /// Maximum states per automaton construction (overrides COMPLY_STATE_BUDGET).
    #[arg(long, global = true)]
    pub state_budget: Option<usize>,
    /// Event label mode: bare, atomic or async.
    #[arg(long, global = true, default_value = "atomic")]
    pub mode: LabelMode,
    /// Per-channel message bound in async compositions.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub channel_bound: u32,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Trace length bound for enumerations.
    #[arg(long, global = true, default_value_t = 7)]
    pub max_len: usize,
    /// Caps every loop's unroll bound when enumerating model traces.
    #[arg(long, global = true, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_unroll: u32,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check one partner's private model against a rule.
    CheckLocal {
        #[arg(long)]
        chor: PathBuf,
        #[arg(long)]
        partner: String,
        #[arg(long)]
        rule: PathBuf,
    },
    /// Check a rule against the choreography as far as the view allows.
    CheckGlobal {
        #[arg(long)]
        chor: PathBuf,
        #[arg(long)]
        rule: PathBuf,
        /// choreography-only, public or full-private.
        #[arg(long, default_value = "public")]
        view: GlobalMode,
    },
    /// Decompose a rule into per-partner assertions.
    Decompose {
        #[arg(long)]
        chor: PathBuf,
        #[arg(long)]
        rule: PathBuf,
        /// Use this template instead of trying them in order.
        #[arg(long)]
        template: Option<TemplateId>,
        /// Fail instead of inserting sync messages.
        #[arg(long)]
        no_sync: bool,
        /// Write the choreography with inserted sync messages here.
        #[arg(long)]
        write_chor: Option<PathBuf>,
    },
    /// Check that a set of assertions implies a rule.
    Verify {
        /// JSON list of rules, or a decomposition report.
        #[arg(long)]
        assertions: PathBuf,
        #[arg(long)]
        rule: PathBuf,
        /// Comma-separated universe; defaults to the labels the rules mention.
        #[arg(long, value_delimiter = ',')]
        alphabet: Option<Vec<String>>,
        /// Use the full alphabet of this choreography as universe.
        #[arg(long, conflicts_with = "alphabet")]
        chor: Option<PathBuf>,
    },
    /// Simulate the partners' setup phase for a rule.
    Negotiate {
        #[arg(long)]
        chor: PathBuf,
        #[arg(long)]
        rule: PathBuf,
        #[arg(long, default_value = "leader")]
        strategy: Strategy,
        #[arg(long)]
        no_sync: bool,
        /// Write the transcript as JSON lines here.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Validate templates by exhaustive enumeration.
    Theorems {
        /// Template id, `T1a-converse`, or `all`.
        #[arg(long, default_value = "all")]
        id: String,
        #[arg(long, value_delimiter = ',')]
        alphabet: Option<Vec<String>>,
    },
    /// Evaluate a rule on a trace, or on every bounded run of a partner model.
    Oracle {
        #[arg(long)]
        rule: PathBuf,
        /// Comma-separated events.
        #[arg(long, value_delimiter = ',', conflicts_with = "chor")]
        trace: Option<Vec<String>>,
        #[arg(long, requires = "partner")]
        chor: Option<PathBuf>,
        #[arg(long)]
        partner: Option<String>,
    },
    /// Write fixtures, or a random choreography with a planted rule.
    Gen {
        /// Fixture or rule name; `all` writes the whole corpus to --out.
        #[arg(long, conflicts_with = "random")]
        fixture: Option<String>,
        #[arg(long)]
        random: bool,
        #[arg(long, default_value_t = 3)]
        partners: usize,
        #[arg(long, default_value_t = 3)]
        activities: usize,
        #[arg(long, default_value_t = 4)]
        messages: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Captured result of one invocation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CliOutput {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Parses `args` (program name first) and runs the command.
pub fn execute<I, T>(args: I) -> CliOutput
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            return if code == 0 {
                CliOutput { code, stdout: text, stderr: String::new() }
            } else {
                CliOutput { code, stdout: String::new(), stderr: text }
            };
        }
    };
    automata::set_state_budget(cli.state_budget);
    let out = match run(&cli) {
        Ok((code, stdout)) => CliOutput { code, stdout, stderr: String::new() },
        Err(e) => CliOutput { code: e.exit_code(), stdout: String::new(), stderr: format!("error: {e}\n") },
    };
    automata::set_state_budget(None);
    out
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

fn load_chor(path: &Path) -> Result<Choreography> {
    Choreography::from_json(&read(path)?)
}

fn load_rule(path: &Path) -> Result<ComplianceRule> {
    let r = ComplianceRule::from_json(&read(path)?)?;
    r.ensure_valid()?;
    Ok(r)
}

/// A JSON list of rules, a single rule, or a decomposition report.
fn load_assertions(path: &Path) -> Result<Vec<ComplianceRule>> {
    let text = read(path)?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| Error::input(format!("{}: {e}", path.display()));
    match &v {
        Value::Array(_) => serde_json::from_value(v).map_err(bad),
        Value::Object(o) if o.contains_key("assertions") => {
            let d: Decomposition = serde_json::from_value(v).map_err(bad)?;
            Ok(d.rules())
        }
        _ => Ok(vec![serde_json::from_value(v).map_err(bad)?]),
    }
}

fn timestamp() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn json_report(cli: &Cli, command: &str, mut body: Value) -> String {
    if let Value::Object(o) = &mut body {
        o.insert("command".to_string(), json!(command));
        if !cli.no_timestamp {
            o.insert("timestamp".to_string(), json!(timestamp()));
        }
    }
    serde_json::to_string_pretty(&body).expect("report serializes") + "\n"
}

/// Verdict without wall-clock time, so reports are byte-stable.
fn verdict_json(v: &Verdict) -> Value {
    let mut j = serde_json::to_value(v).expect("verdict serializes");
    if let Value::Object(o) = &mut j {
        o.remove("wall_ms");
    }
    j
}

fn verdict_code(v: &Verdict) -> i32 {
    if v.is_ok() {
        0
    } else {
        1
    }
}

fn verdict_text(v: &Verdict) -> String {
    match &v.outcome {
        Outcome::Correct => "correct\n".to_string(),
        Outcome::Compliant => "compliant\n".to_string(),
        Outcome::Violated { witness } => format!("violated\nwitness: {}\n", witness.events.join(", ")),
        Outcome::Inapplicable { reason } => format!("inapplicable: {reason}\n"),
    }
}

fn run(cli: &Cli) -> Result<(i32, String)> {
    match &cli.command {
        Command::CheckLocal { chor, partner, rule } => {
            let chor = load_chor(chor)?;
            let rule = chor.resolve_rule(&load_rule(rule)?);
            let model = chor.private_model(partner)?;
            if cli.format == Format::Dot {
                let m = automata::model_to_automaton(model, partner, cli.mode)?;
                let mut alphabet: BTreeSet<String> = m.alphabet().iter().cloned().collect();
                alphabet.extend(rule.labels(cli.mode));
                let alphabet: Vec<String> = alphabet.into_iter().collect();
                let r = rule_to_automaton(&rule, &alphabet, cli.mode)?;
                return Ok((0, m.to_dot("model") + &r.to_dot("rule")));
            }
            let v = check_local_compliance(model, partner, &rule, cli.mode)?;
            Ok((verdict_code(&v), render_verdict(cli, "check-local", &v)))
        }
        Command::CheckGlobal { chor, rule, view } => {
            let chor = load_chor(chor)?;
            let rule = chor.resolve_rule(&load_rule(rule)?);
            let v = check_global_compliance(&chor, &rule, *view, cli.mode, cli.channel_bound)?;
            Ok((verdict_code(&v), render_verdict(cli, "check-global", &v)))
        }
        Command::Verify { assertions, rule, alphabet, chor } => {
            let rule = load_rule(rule)?;
            let assertions = load_assertions(assertions)?;
            let universe = match (alphabet, chor) {
                (Some(a), _) => Some(a.clone()),
                (None, Some(c)) => Some(load_chor(c)?.alphabet(cli.mode)),
                _ => None,
            };
            if cli.format == Format::Dot {
                let alphabet = match &universe {
                    Some(a) => a.clone(),
                    None => {
                        let mut s = rule.labels(cli.mode);
                        assertions.iter().for_each(|a| s.extend(a.labels(cli.mode)));
                        s.into_iter().collect()
                    }
                };
                let mut out = rule_to_automaton(&rule, &alphabet, cli.mode)?.to_dot(&rule.id);
                for a in &assertions {
                    out += &rule_to_automaton(a, &alphabet, cli.mode)?.to_dot(&a.id);
                }
                return Ok((0, out));
            }
            let v = verify_decomposition(&assertions, &rule, universe.as_deref(), cli.mode)?;
            Ok((verdict_code(&v), render_verdict(cli, "verify", &v)))
        }
        Command::Decompose { chor, rule, template, no_sync, write_chor } => {
            let chor = load_chor(chor)?;
            let rule = chor.resolve_rule(&load_rule(rule)?);
            let opts = DecomposeOptions { no_sync: *no_sync };
            let d = match template {
                Some(id) => {
                    let mut k = decomposition::ChoreographyKnowledge::new(chor.clone());
                    let mut all = apply_theorem_template(id, &rule, &mut k)?;
                    if all.is_empty() {
                        Decomposition {
                            gcr_id: rule.id.clone(),
                            status: Status::Failed,
                            assertions: Vec::new(),
                            sync_messages: Vec::new(),
                            counters: Default::default(),
                            choreography: None,
                        }
                    } else {
                        all.swap_remove(0)
                    }
                }
                None => decompose_auto(&rule, &chor, opts)?,
            };
            if let (Some(path), Some(c)) = (write_chor, &d.choreography) {
                std::fs::write(path, c.to_json()).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
            }
            let code = if d.status == Status::Failed { 1 } else { 0 };
            Ok((code, render_decomposition(cli, "decompose", &d, None)))
        }
        Command::Negotiate { chor, rule, strategy, no_sync, transcript } => {
            let chor = load_chor(chor)?;
            let rule = load_rule(rule)?;
            let o = run_negotiation(&chor, &rule, cli.seed, *strategy, DecomposeOptions { no_sync: *no_sync })?;
            if let Some(path) = transcript {
                std::fs::write(path, o.transcript_jsonl())
                    .map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
            }
            let code = if o.decomposition.status == Status::Failed { 1 } else { 0 };
            let extra = json!({ "strategy": o.strategy, "rounds": o.rounds, "messages": o.transcript.len() });
            Ok((code, render_decomposition(cli, "negotiate", &o.decomposition, Some(extra))))
        }
        Command::Theorems { id, alphabet } => {
            let ids: Vec<String> = if id == "all" {
                ["T1a", "T1b", "Cor1", "T2a", "T2b", "T3", "T4(2,2)", "T5", "T6", "T7", "T8"].map(String::from).to_vec()
            } else {
                vec![id.clone()]
            };
            let mut code = 0;
            let mut results = Vec::new();
            let mut text = String::new();
            for id in ids {
                let r = validate_theorem(&id, alphabet.as_deref(), cli.max_len)?;
                match &r {
                    TheoremResult::Holds { traces_checked } => {
                        let _ = writeln!(text, "{id}: Holds ({traces_checked} traces)");
                    }
                    TheoremResult::Counterexample { trace } => {
                        code = 1;
                        let _ = writeln!(text, "{id}: Counterexample [{}]", trace.events.join(", "));
                    }
                }
                results.push(json!({ "id": id, "maxLen": cli.max_len, "outcome": r }));
            }
            let out = match cli.format {
                Format::Json => json_report(cli, "theorems", json!({ "results": results })),
                _ => text,
            };
            Ok((code, out))
        }
        Command::Oracle { rule, trace, chor, partner } => {
            let rule = load_rule(rule)?;
            match (trace, chor, partner) {
                (Some(events), _, _) => {
                    let t = Trace { events: events.clone() };
                    let ok = evaluate_rule(&t, &rule, cli.mode)?;
                    let acts = activations(&t, &rule, cli.mode)?;
                    let out = match cli.format {
                        Format::Json => json_report(cli, "oracle", json!({ "satisfied": ok, "activations": acts })),
                        _ => {
                            let mut s = format!("{}\n", if ok { "satisfied" } else { "violated" });
                            for a in &acts {
                                let pos: Vec<String> = a.assignment.iter().map(|(k, v)| format!("{k}@{v}")).collect();
                                let _ = writeln!(
                                    s,
                                    "activation {}: {}",
                                    pos.join(" "),
                                    if a.satisfied { "ok" } else { "violated" }
                                );
                            }
                            s
                        }
                    };
                    Ok((if ok { 0 } else { 1 }, out))
                }
                (None, Some(c), Some(p)) => {
                    let c = load_chor(c)?;
                    let rule = c.resolve_rule(&rule);
                    let model = cap_unroll(c.private_model(p)?, cli.max_unroll);
                    let traces = enumerate_traces(&model, p, cli.mode, cli.max_len);
                    let mut violating = None;
                    for t in &traces {
                        if !evaluate_rule(t, &rule, cli.mode)? {
                            violating = Some(t.clone());
                            break;
                        }
                    }
                    let out = match cli.format {
                        Format::Json => json_report(
                            cli,
                            "oracle",
                            json!({ "traces": traces.len(), "satisfied": violating.is_none(), "witness": violating }),
                        ),
                        _ => match &violating {
                            None => format!("satisfied on all {} runs\n", traces.len()),
                            Some(t) => format!("violated\nwitness: {}\n", t.events.join(", ")),
                        },
                    };
                    Ok((if violating.is_none() { 0 } else { 1 }, out))
                }
                _ => Err(Error::input("oracle needs --trace or --chor with --partner")),
            }
        }
        Command::Gen { fixture, random, partners, activities, messages, out } => {
            if *random {
                let params = GeneratorParams {
                    partners: *partners,
                    activities: *activities,
                    messages: *messages,
                    ..Default::default()
                };
                let c = generate_random_choreography(&params, cli.seed)?;
                return write_or_print(out.as_deref(), "random.json", c.to_json());
            }
            let name = fixture.as_deref().ok_or_else(|| Error::input("gen needs --fixture or --random"))?;
            if name == "all" {
                let dir = out.as_deref().ok_or_else(|| Error::input("gen --fixture all needs --out"))?;
                std::fs::create_dir_all(dir).map_err(|e| Error::input(format!("{}: {e}", dir.display())))?;
                let mut listing = String::new();
                for (file, text) in fixture_files() {
                    std::fs::write(dir.join(&file), text).map_err(|e| Error::input(format!("{file}: {e}")))?;
                    let _ = writeln!(listing, "{}", dir.join(&file).display());
                }
                return Ok((0, listing));
            }
            if let Some(c) = fixtures::choreography(name) {
                return write_or_print(out.as_deref(), &format!("{name}.json"), c.to_json());
            }
            if let Some(r) = fixtures::rule(name) {
                return write_or_print(out.as_deref(), &format!("{name}.rule.json"), r.to_json());
            }
            Err(Error::input(format!("unknown fixture {name}")))
        }
    }
}

/// Every shipped fixture as (file name, JSON text).
pub fn fixture_files() -> Vec<(String, String)> {
    let mut out = Vec::new();
    for name in fixtures::CHOREOGRAPHIES {
        out.push((format!("{name}.json"), fixtures::choreography(name).expect("fixture").to_json() + "\n"));
    }
    for name in fixtures::RULES {
        out.push((format!("{name}.rule.json"), fixtures::rule(name).expect("rule").to_json() + "\n"));
    }
    out
}

fn write_or_print(dir: Option<&Path>, file: &str, text: String) -> Result<(i32, String)> {
    match dir {
        None => Ok((0, text + "\n")),
        Some(d) => {
            std::fs::create_dir_all(d).map_err(|e| Error::input(format!("{}: {e}", d.display())))?;
            let path = d.join(file);
            std::fs::write(&path, text + "\n").map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
            Ok((0, format!("{}\n", path.display())))
        }
    }
}

fn cap_unroll(b: &Block, cap: u32) -> Block {
    match b {
        Block::Act(_) => b.clone(),
        Block::Seq(c) => Block::Seq(c.iter().map(|x| cap_unroll(x, cap)).collect()),
        Block::Xor(c) => Block::Xor(c.iter().map(|x| cap_unroll(x, cap)).collect()),
        Block::And(c) => Block::And(c.iter().map(|x| cap_unroll(x, cap)).collect()),
        Block::Loop(l) => Block::looped(cap_unroll(&l.body, cap), l.max_unroll.min(cap)),
    }
}

fn render_verdict(cli: &Cli, command: &str, v: &Verdict) -> String {
    match cli.format {
        Format::Json => json_report(cli, command, verdict_json(v)),
        _ => verdict_text(v),
    }
}

fn render_decomposition(cli: &Cli, command: &str, d: &Decomposition, extra: Option<Value>) -> String {
    match cli.format {
        Format::Json => {
            let mut body = serde_json::to_value(d).expect("decomposition serializes");
            if let (Value::Object(o), Some(Value::Object(e))) = (&mut body, extra) {
                o.extend(e);
            }
            json_report(cli, command, body)
        }
        _ => {
            let mut s = format!("{}: {:?}\n", d.gcr_id, d.status);
            for sm in &d.sync_messages {
                let _ = writeln!(s, "sync {} {} -> {}", sm.name, sm.from_partner, sm.to_partner);
            }
            for a in &d.assertions {
                let _ =
                    writeln!(s, "{} [{}] via {}: {}", a.rule.id, a.partner, a.provenance.template, describe(&a.rule));
            }
            s
        }
    }
}

/// One-line rendering: nodes with pattern markers, then edges.
pub fn describe(rule: &ComplianceRule) -> String {
    use crate::rule_model::{Connector, Pattern};
    let nodes: Vec<String> = rule
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
    let name = |id: &str| rule.node(id).map_or(id.to_string(), |n| n.activity.clone());
    let edges: Vec<String> = rule
        .edges
        .iter()
        .map(|e| {
            let arrow = if e.connector == Connector::Antecedence { "=>" } else { "->" };
            format!("{} {arrow} {}", name(&e.from), name(&e.to))
        })
        .collect();
    format!("{} | {}", nodes.join(" "), edges.join(", "))
}

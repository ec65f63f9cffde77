//! Python bindings. Choreographies, rules and reports cross the boundary as
//! JSON strings in the same format the CLI reads and writes.

use comply_core::decomposition::{decompose_auto, validate_theorem as validate, DecomposeOptions};
use comply_core::error::Error;
use comply_core::fixtures;
use comply_core::negotiation::{run_negotiation, Strategy};
use comply_core::process_model::{Choreography, LabelMode};
use comply_core::rule_model::{evaluate_rule as eval, ComplianceRule, Trace};
use comply_core::verification::{check_global_compliance, check_local_compliance, verify_decomposition, GlobalMode};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Budget { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("report serializes")
}

fn chor(json: &str) -> PyResult<Choreography> {
    Choreography::from_json(json).map_err(py_err)
}

fn rule(json: &str) -> PyResult<ComplianceRule> {
    ComplianceRule::from_json(json).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (chor_json, partner, rule_json, mode="atomic"))]
fn check_local(chor_json: &str, partner: &str, rule_json: &str, mode: &str) -> PyResult<String> {
    let c = chor(chor_json)?;
    let r = c.resolve_rule(&rule(rule_json)?);
    let model = c.private_model(partner).map_err(py_err)?;
    let v = check_local_compliance(model, partner, &r, parse::<LabelMode>(mode)?).map_err(py_err)?;
    Ok(to_json(&v))
}

#[pyfunction]
#[pyo3(signature = (chor_json, rule_json, view="public", mode="atomic", channel_bound=1))]
fn check_global(chor_json: &str, rule_json: &str, view: &str, mode: &str, channel_bound: u32) -> PyResult<String> {
    let c = chor(chor_json)?;
    let r = c.resolve_rule(&rule(rule_json)?);
    let v = check_global_compliance(&c, &r, parse::<GlobalMode>(view)?, parse::<LabelMode>(mode)?, channel_bound)
        .map_err(py_err)?;
    Ok(to_json(&v))
}

#[pyfunction]
#[pyo3(signature = (chor_json, rule_json, no_sync=false))]
fn decompose(chor_json: &str, rule_json: &str, no_sync: bool) -> PyResult<String> {
    let d = decompose_auto(&rule(rule_json)?, &chor(chor_json)?, DecomposeOptions { no_sync }).map_err(py_err)?;
    Ok(to_json(&d))
}

/// `assertions_json` is a JSON list of rules.
#[pyfunction]
#[pyo3(signature = (assertions_json, rule_json, alphabet=None, mode="atomic"))]
fn verify(assertions_json: &str, rule_json: &str, alphabet: Option<Vec<String>>, mode: &str) -> PyResult<String> {
    let assertions: Vec<ComplianceRule> =
        serde_json::from_str(assertions_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let v = verify_decomposition(&assertions, &rule(rule_json)?, alphabet.as_deref(), parse::<LabelMode>(mode)?)
        .map_err(py_err)?;
    Ok(to_json(&v))
}

/// Returns `(report_json, transcript_jsonl)`.
#[pyfunction]
#[pyo3(signature = (chor_json, rule_json, strategy="leader", seed=0))]
fn negotiate(chor_json: &str, rule_json: &str, strategy: &str, seed: u64) -> PyResult<(String, String)> {
    let o = run_negotiation(
        &chor(chor_json)?,
        &rule(rule_json)?,
        seed,
        parse::<Strategy>(strategy)?,
        DecomposeOptions::default(),
    )
    .map_err(py_err)?;
    Ok((to_json(&o.decomposition), o.transcript_jsonl()))
}

#[pyfunction]
#[pyo3(signature = (id, max_len=7, alphabet=None))]
fn validate_theorem(id: &str, max_len: usize, alphabet: Option<Vec<String>>) -> PyResult<String> {
    Ok(to_json(&validate(id, alphabet.as_deref(), max_len).map_err(py_err)?))
}

#[pyfunction]
#[pyo3(signature = (events, rule_json, mode="atomic"))]
fn evaluate_rule(events: Vec<String>, rule_json: &str, mode: &str) -> PyResult<bool> {
    eval(&Trace { events }, &rule(rule_json)?, parse::<LabelMode>(mode)?).map_err(py_err)
}

/// A shipped choreography or rule by name.
#[pyfunction]
fn fixture(name: &str) -> PyResult<String> {
    if let Some(c) = fixtures::choreography(name) {
        return Ok(c.to_json());
    }
    fixtures::rule(name).map(|r| r.to_json()).ok_or_else(|| PyValueError::new_err(format!("unknown fixture {name}")))
}

#[pymodule]
fn comply(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(check_local, m)?)?;
    m.add_function(wrap_pyfunction!(check_global, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(negotiate, m)?)?;
    m.add_function(wrap_pyfunction!(validate_theorem, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_rule, m)?)?;
    m.add_function(wrap_pyfunction!(fixture, m)?)?;
    Ok(())
}

//! Decomposition of global compliance rules over multi-party process
//! choreographies into per-partner assertions, with trace-oracle and
//! finite-automata verification.

pub mod automata;
pub mod cli;
pub mod decomposition;
pub mod error;
pub mod fixtures;
pub mod negotiation;
pub mod process_model;
pub mod rule_model;
pub mod verification;

pub use error::{Error, Result};

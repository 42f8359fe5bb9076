//! Checks shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

pub mod formulas;
pub mod scheduling;

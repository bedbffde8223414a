//! Oracles and properties shared by the module suites and the acceptance run.
#![allow(dead_code)]

pub mod grad;
pub mod invariants;
pub mod scenes;
pub mod vocab;

//! Scenario files, run orchestration and CSV artifacts for the `diststeer`
//! command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod report;
pub mod run;
pub mod scenario;
pub mod verify;

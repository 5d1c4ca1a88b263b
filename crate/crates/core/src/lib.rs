//! Evaluation harness for single-agent versus sequential multi-agent LLM
//! incident-response pipelines.
//!
//! The crate runs seeded trials against a scripted or live completion
//! backend, scores each brief for decision quality, stores trial records as
//! JSONL and runs the statistical comparison between conditions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backend;
pub mod cli;
pub mod pipelines;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod scoring;
mod seeding;
pub mod stats;

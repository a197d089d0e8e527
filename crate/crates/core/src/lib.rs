//! Reasoning-data synthesis and evaluation toolkit.
//!
//! The crate covers each stage of a training-data foundry: closed-to-open
//! question rewriting and difficulty triage, a two-role reason/reflect loop
//! that produces rated reasoning traces, first-person narration into SFT
//! records, rejection-sampled preference pairs, a bandit scheduler for corpus
//! mixing, 21-option benchmark construction with tiered human review, and an
//! MCQ evaluation harness.

pub mod eval;
pub mod expert;
pub mod foundry;
pub mod gateway;
pub mod mixer;
pub mod model;
pub mod preference;
pub mod questions;

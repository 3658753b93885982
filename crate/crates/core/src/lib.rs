//! Bi-level synthesis of converter control laws.
//!
//! An upper-level proposer (rule table or chat model) edits the structure of
//! a control law; a lower-level particle swarm tunes its parameters against a
//! simulated boost converter; the evaluator turns each closed-loop run into a
//! weighted performance index and diagnostic flags that drive the next edit.

pub mod cli;
pub mod controller;
pub mod evaluator;
pub mod orchestrator;
pub mod plant;
pub mod proposer;
pub mod pso;

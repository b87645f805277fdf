//! Knowledge- and history-grounded response generation for threaded
//! discussion data.
//!
//! The pipeline runs corpus extraction ([`corpus`]), document store
//! construction ([`kb`]), retrieval ([`retrieve`]), budgeted input assembly
//! ([`assemble`]) and decoding/evaluation ([`lm`], [`metrics`]).
//! Data-parallel stages go through [`par`], which falls back to sequential
//! iteration when the `parallel` feature is off.

pub mod assemble;
pub mod corpus;
pub mod embedder;
pub mod http;
pub mod kb;
pub mod par;
pub mod retrieve;
pub mod tokenizer;
pub mod lm;
pub mod metrics;

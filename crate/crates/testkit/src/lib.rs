//! Test support for the linkground crates.
//!
//! Everything here is written against plain data (strings, ids, float
//! slices) and shares no code with the implementation it checks.

pub mod budget;
pub mod extract;
pub mod fixture;
pub mod fuzz;
pub mod knn;
pub mod stats;

//! Repeated assessment-matching markets.
//!
//! Workers with private productivity, cost and effort limits are matched to
//! tasks of public quality by a central mechanism, then paid by clients as a
//! function of observed output.

pub mod analysis;
pub mod engine;
pub mod io;
pub mod market;
pub mod matching;
pub mod mechanisms;
pub mod payments;
pub mod rng;
pub mod strategies;

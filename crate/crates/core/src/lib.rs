//! Deterministic simulation of ticketing regimes for BFT replicated logs
//! with out-of-order finality.
//!
//! The crate is organised bottom-up: [`log`] holds a node's view of the
//! replicated log, [`consensus`] arbitrates individual slots, [`ticketing`]
//! decides who may propose into which slot, [`sim`] drives everything in
//! virtual time, and [`oracle`] checks the resulting [`trace::Trace`].

pub mod campaign;
pub mod cli;
pub mod config;
pub mod consensus;
pub mod harness;
pub mod log;
pub mod oracle;
pub mod scenario;
pub mod sim;
pub mod ticketing;
pub mod trace;
pub mod types;

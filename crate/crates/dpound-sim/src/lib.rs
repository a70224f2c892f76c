//! Deterministic simulator of a digital-pound payment ecosystem.
//!
//! The crate models the CBDC core ledger, the commercial-bank-money rail
//! (RTGS, an FPS-like scheme and an enhanced payment system with deferred
//! net settlement), a privacy model based on sealed envelopes, and the
//! ecosystem participants that run three payment use cases over any
//! combination of design options. The [`engine`] drives a use case as a
//! sequence of messages, records a trace and checks postconditions and
//! invariants.

pub mod domain;
pub mod engine;
pub mod ids;
pub mod ledger;
pub mod money;
pub mod netting;
pub mod options;
pub mod participants;
pub mod privacy;
pub mod rail;

pub use money::Money;

//! Private counterfactual retrieval with immutable features.
//!
//! A user holding a rejected sample `x` asks `N` non-colluding replicas of a
//! database of accepted samples for the nearest row that agrees with `x` on
//! a private set of immutable features, without revealing `x` or the set.
//! This crate holds everything that needs no operating system: field
//! arithmetic, both retrieval schemes and their actionable variants, the
//! server state machine, the wire codec, an in-process cluster, the
//! plaintext oracle and the exact leakage analyzer.

#![no_std]

extern crate alloc;

pub mod client;
pub mod config;
pub mod cost;
pub mod field;
pub mod leakage;
pub mod model;
pub mod oracle;
pub mod server;
pub mod session;
pub mod sim;
pub mod wire;

pub use client::ProtocolError;
pub use config::ProtocolConfig;
pub use field::{Fe, FieldVector, PrimeModulus, VandermondeSystem};
pub use model::{
    ActionabilityWeights, CandidateSet, Database, FeatureVector, ImmutableSet, Phase, RetrievalResult, Scheme,
};
pub use oracle::brute_force;
pub use server::ServerNode;
pub use session::{run_retrieval, RetrievalOutcome, RetrievalRequest, SessionError, Transport, TransportError};
pub use sim::SimCluster;

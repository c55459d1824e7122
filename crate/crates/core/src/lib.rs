//! Decentralized clock synchronization as a hybrid system: graph spectra,
//! per-agent and ensemble models, Lyapunov certificates, simulation and
//! verification.

pub mod agent;
pub mod cli;
pub mod certificate;
pub mod config;
pub mod disturbance;
pub mod ensemble;
pub mod error;
pub mod export;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod seeds;
pub mod simulator;

pub use error::{Error, Result};

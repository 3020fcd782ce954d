//! Cell-based hierarchical fault management for wireless sensor networks.
//!
//! The deployment area is cut into a virtual grid of square cells. Each cell
//! elects a cell manager (plus a standby secondary), cells are grouped into
//! blocks, and every block elects a group manager (plus a backup). Managers
//! run active detection (get/update probing, reminders, base-station watch),
//! every node runs passive self-detection on its residual energy, and the
//! hierarchy repairs itself through secondary promotion, energy-based
//! elections, cell merging and backup takeover.
//!
//! The crate is `no_std` + `alloc`. Everything that touches files, the
//! command line or threads lives in the companion `wsnfm` crate.
//!
//! Layout:
//! - [`topology`]: grid, cell/group records, initial elections
//! - [`energy`]: batteries, first-order radio model, rank and health grading
//! - [`messaging`]: envelope, payloads and the two-stage message filter
//! - [`protocol`]: role state machines for detection, diagnosis and recovery
//! - [`baselines`]: the three comparison recovery schemes
//! - [`engine`]: the deterministic discrete-event loop, trace and metrics

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod baselines;
pub mod config;
pub mod energy;
pub mod engine;
pub mod error;
pub mod ids;
pub mod messaging;
pub mod protocol;
pub mod topology;

pub use config::{Algorithm, SimConfig};
pub use error::{Error, Result};
pub use ids::{CellId, GroupId, NodeId, Tick};

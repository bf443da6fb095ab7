//! Predicts how a cloud consumer would rank a set of services from the
//! response times other consumers observed, and simulates the
//! checkpointing, load-balancing scheduler those observations come from.
//!
//! - [`ranking`]: pair-agreement correlation, prefer/priority values and rank assembly.
//! - [`sim`]: deterministic discrete-event simulator of sub-clouds with automatic
//!   checkpoints, failures and checkpoint-carrying migration.
//! - [`dataio`]: CSV/JSON formats and the seeded synthetic dataset generator.
//! - [`cli`]: the `svcrank` subcommands.

mod ids;
pub mod ranking;
pub mod sim;
pub mod dataio;
pub mod cli;

pub use ids::{ConsumerId, JobId, ServiceId, SubCloudId};
pub use ranking::{ObservationSet, RankError, RankedList};

/// Version string written into generated files.
pub const GENERATED_BY: &str = concat!("svcrank ", env!("CARGO_PKG_VERSION"));

//! Optimal lump-sum contract schedules in continuous time.

pub mod bounds;
pub mod error;
pub mod export;
pub mod hamiltonian;
pub mod hjb;
pub mod model;
pub mod oracle;
pub mod payment;
pub mod pipeline;
pub mod simulate;

pub use error::{Error, Result};

//! Random walks whose edge conductances change over time: simulation on
//! truncated infinite graphs, exact electrical-network computations, and
//! checks of the identities and inequalities that govern recurrence and
//! transience of such walks.

pub mod cli;
pub mod config;
pub mod electrical;
pub mod environment;
pub mod error;
pub mod graph;
pub mod network;
pub mod report;
pub mod verify;
pub mod walker;

pub use error::{Error, Result};

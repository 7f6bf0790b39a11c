//! Formation control under broadcast spoofing.
//!
//! Agents on an undirected graph steer toward a desired formation using
//! neighbors' broadcast positions. Broadcasts can be spoofed; residual
//! monitoring flags inconsistent neighbors and a mitigation strategy decides
//! how readings enter the update. Lyapunov certificates bound the attacked
//! error dynamics, and a seeded Monte Carlo harness reports transient and
//! steady-state metrics.

pub mod attack;
pub mod detection;
pub mod dynamics;
pub mod eigen;
pub mod error;
pub mod experiment;
pub mod formation;
pub mod graph;
pub mod mitigation;
pub mod stability;

pub use error::{Error, Result};

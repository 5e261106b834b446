//! Cooperative multi-target sensing for cell-free MIMO ISAC deployments.
//!
//! The crate synthesizes per-AP OFDM echo tensors, evaluates closed-form
//! Cramér-Rao bounds, optimizes AP placement and antenna allocation, and
//! estimates target positions and absolute velocities by tensor
//! decomposition followed by symbol-level fusion.

pub mod baselines;
pub mod crb;
pub mod echo;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod optim;
pub mod placement;
pub mod scene;
pub mod sensing;

pub use error::{Error, Result};
pub use scene::{ApNode, Scene, TargetState, WaveformConfig};

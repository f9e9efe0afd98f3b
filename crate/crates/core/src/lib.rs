//! Planning with learned value functions on grid worlds.
//!
//! The pipeline generates exact cost-to-go datasets by backward prolonged
//! heuristic search ([`explore`]), encodes them as images ([`encode`]),
//! fits a dilated fully convolutional network with an asymmetric loss
//! ([`nn`]) and plugs the network into A* as a heuristic clamped between
//! the Manhattan distance and `epsilon` times it ([`heuristic`]), which keeps
//! every path within `epsilon` of optimal. [`bench`] runs the evaluation
//! sweeps.

pub mod bench;
mod codec;
pub mod encode;
pub mod error;
pub mod explore;
pub mod gridworld;
pub mod heuristic;
pub mod nn;
pub mod search;

pub use encode::{DataPoint, Dataset, EncodedSample, Split};
pub use error::{Error, Result};
pub use explore::{ExplorationConfig, Mode};
pub use gridworld::{manhattan, Cell, GridScenario, ScenarioParams};
pub use nn::{Architecture, Network, Tensor, TrainConfig};
pub use search::{SearchNode, SearchResult, TerminationRule};

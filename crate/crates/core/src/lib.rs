//! Hypothesis-set policy learning on a hidden-shape minesweeper board.
//!
//! The belief over the hidden shape is kept exactly, as the list of poses
//! consistent with every opened cell ([`hypothesis`]). An inverse distance
//! transform over that list ([`features`]) gives each cell a score, and 3×3
//! patches of those scores are what the action classifiers see ([`learning`],
//! [`agents`]). [`harness`] drives episodes, records demonstrations and runs
//! the paired-seed evaluation protocol.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix it to `f64`, which is what the CLI and service use.

pub mod agents;
pub mod features;
pub mod grid;
pub mod harness;
pub mod hypothesis;
pub mod learning;
mod scalar;
pub mod seed;

pub use scalar::Scalar;

pub use agents::{Agent, AgentError, AgentKind};
pub use grid::{
    ActionClass, Board, Direction, EpisodeState, EpisodeStatus, GridCell, GridError, OpenOutcome,
    Orientation, Pose, ShapeTemplate,
};
pub use hypothesis::{BeliefConfig, BeliefError, HypothesisSet};
pub use learning::{Hyperparameters, LearnError, ModelKind};

pub type FeatureMap = features::FeatureMap<f64>;
pub type Template = features::Template3x3<f64>;
pub type OccupancyMap = hypothesis::OccupancyMap<f64>;
pub type Model = learning::LinearModel<f64>;
pub type Demonstration = learning::Demonstration<f64>;
pub type Decision = agents::Decision<f64>;
pub type EpisodeResult = harness::EpisodeResult<f64>;

pub type FeatureMap32 = features::FeatureMap<f32>;
pub type Template32 = features::Template3x3<f32>;
pub type Model32 = learning::LinearModel<f32>;

//! Soft actor-critic learner: dense networks with analytic backprop, a ring
//! replay buffer, the agent itself, and the training loop that couples it to
//! the simulator.

pub mod agent;
pub mod buffer;
pub mod net;
pub mod train;

pub use agent::{SacAgent, SacConfig, SacError, UpdateStats};
pub use buffer::{ReplayBuffer, Transition};
pub use train::{
    train, CurriculumConfig, EpisodeRow, ScenarioSource, TrainConfig, TrainControl, TrainError,
    TrainEvent, TrainReport,
};

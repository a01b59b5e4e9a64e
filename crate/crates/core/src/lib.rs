//! Core library for the dead-end escape benchmark.
//!
//! A car-like robot is trapped inside a procedurally generated narrow
//! dead end and has to drive out through the single exit. The crate
//! provides the full pipeline: planar geometry, Ackermann kinematics,
//! the scenario generator with its feasibility guarantee, a discrete-time
//! simulator with ray-cast lidar, the observation/action/reward mapping,
//! a self-contained soft actor-critic learner, classical baselines
//! (hybrid A* with pure pursuit, follow-the-gap), and the benchmark
//! harness that scores controllers on scenario batches.

pub mod bench;
pub mod geometry;
pub mod kinematics;
pub mod mdp;
pub mod planners;
pub mod sac;
pub mod scenario;
pub mod sim;

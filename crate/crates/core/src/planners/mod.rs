//! Classical baselines and the shared controller seam: a hybrid A* lattice
//! planner tracked by pure pursuit, a follow-the-gap reactive controller
//! with a reversal macro, and a wrapper that drives the learned policy
//! through the same interface.

pub mod ftg;
pub mod hybrid_astar;
pub mod pursuit;

use crate::kinematics::{KinematicsError, VehicleState};
use crate::mdp::{build_observation, Action, MdpError};
use crate::sac::agent::{SacAgent, SacError};
use crate::scenario::GoalRegion;
use crate::sim::LidarScan;
use thiserror::Error;

pub use ftg::{FtgController, FtgParams};
pub use hybrid_astar::{
    plan as hybrid_astar_plan, Gear, HybridAstarController, HybridAstarParams, PathNode,
    PlannedPath,
};
pub use pursuit::{pure_pursuit, PursuitParams};

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error(transparent)]
    Sac(#[from] SacError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("no path: search exhausted after {expansions} expansions")]
    NoPath { expansions: usize },
    #[error("planner start pose is in collision")]
    StartBlocked,
    #[error("path exhausted")]
    PathExhausted,
    #[error("planner grid construction failed: {0}")]
    Grid(String),
}

/// Everything a controller may look at each control cycle.
pub struct ControlInput<'a> {
    pub scan: &'a LidarScan,
    pub state: &'a VehicleState,
    pub goal: &'a GoalRegion,
}

/// One decision per control cycle; the seam shared by the learned policy
/// and both classical baselines.
pub trait Controller {
    fn id(&self) -> &str;
    /// Forget episode-local state (paths, macros, cursors).
    fn reset(&mut self);
    fn act(&mut self, input: &ControlInput) -> Result<Action, ControllerError>;
}

/// Learned policy behind the controller seam, evaluated deterministically.
pub struct PolicyController {
    agent: SacAgent,
    id: String,
}

impl PolicyController {
    pub fn new(agent: SacAgent) -> Self {
        PolicyController {
            agent,
            id: "policy".into(),
        }
    }

    pub fn with_id(agent: SacAgent, id: impl Into<String>) -> Self {
        PolicyController {
            agent,
            id: id.into(),
        }
    }
}

impl Controller for PolicyController {
    fn id(&self) -> &str {
        &self.id
    }

    fn reset(&mut self) {}

    fn act(&mut self, input: &ControlInput) -> Result<Action, ControllerError> {
        let obs = build_observation(
            input.scan,
            &input.state.pose,
            input.goal,
            input.state.v,
            input.state.omega,
        )?;
        let (action, _) = self.agent.act(&obs, true)?;
        Ok(action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose2D, Vec2};
    use crate::sac::agent::SacConfig;

    #[test]
    fn policy_controller_is_deterministic_across_calls() {
        let agent = SacAgent::new(
            SacConfig {
                hidden: vec![16],
                ..SacConfig::default()
            },
            7,
        )
        .unwrap();
        let mut controller = PolicyController::new(agent);
        assert_eq!(controller.id(), "policy");
        let scan = LidarScan {
            ranges: vec![5.0; 360],
            max_range: 10.0,
        };
        let state = VehicleState {
            pose: Pose2D::new(0.0, 0.0, 0.0),
            v: 0.0,
            omega: 0.0,
        };
        let goal = GoalRegion {
            center: Vec2::new(2.0, 0.0),
            radius: 0.3,
        };
        let input = ControlInput {
            scan: &scan,
            state: &state,
            goal: &goal,
        };
        let first = controller.act(&input).unwrap();
        controller.reset();
        let second = controller.act(&input).unwrap();
        assert_eq!(first, second);
        assert!(first.v.abs() <= 1.0 && first.steer.abs() <= 1.0);
    }
}

//! Observation, action, and reward mapping between the simulator and the
//! learner.
//!
//! Observations are 45-dimensional: 40 sector minima pooled from the range
//! scan, goal distance, cosine and sine of the goal bearing, and the
//! previous step's realized body velocities. Actions are normalized
//! `[-1, 1]` speed and steering commands.

use crate::geometry::{normalize_angle, Pose2D};
use crate::kinematics::{steering_to_yaw_rate, VehicleSpec};
use crate::scenario::GoalRegion;
use crate::sim::{LidarScan, SimStatus};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const N_SECTORS: usize = 40;
pub const OBS_DIM: usize = N_SECTORS + 5;
pub const ACTION_DIM: usize = 2;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("scan has {0} beams, not a positive multiple of {N_SECTORS}")]
    BadScanLength(usize),
}

/// Flat observation vector fed to the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Serialize for Observation {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.0.iter())
    }
}

impl<'de> Deserialize<'de> for Observation {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        let len = values.len();
        values
            .try_into()
            .map(Observation)
            .map_err(|_| serde::de::Error::invalid_length(len, &"an observation of 45 values"))
    }
}

/// Normalized policy output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// Speed command in `[-1, 1]` (fraction of top speed).
    pub v: f64,
    /// Steering command in `[-1, 1]` (fraction of full lock).
    pub steer: f64,
}

impl Action {
    pub fn clamped(self) -> Action {
        Action {
            v: self.v.clamp(-1.0, 1.0),
            steer: self.steer.clamp(-1.0, 1.0),
        }
    }
}

/// Physical command derived from a normalized action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Command {
    /// Speed, m/s.
    pub v: f64,
    /// Steering angle, radians.
    pub steer: f64,
    /// Yaw rate implied by the bicycle model, rad/s.
    pub omega: f64,
}

/// Scale a normalized action to physical units for
/// [`crate::sim::Simulation::step`].
pub fn map_action(action: Action, spec: &VehicleSpec) -> Command {
    let a = action.clamped();
    let v = a.v * spec.v_max;
    // The clamp above keeps the normalized steering in range.
    let omega = steering_to_yaw_rate(v, a.steer, spec).expect("clamped steering");
    Command {
        v,
        steer: a.steer * spec.max_steer,
        omega,
    }
}

/// Bearing from the vehicle heading to the goal center, radians in
/// `(-pi, pi]`.
pub fn goal_bearing(pose: &Pose2D, goal: &GoalRegion) -> f64 {
    let rel = goal.center - pose.position();
    normalize_angle(rel.y.atan2(rel.x) - pose.theta)
}

/// Pool the scan into sector minima and assemble the observation.
pub fn build_observation(
    scan: &LidarScan,
    pose: &Pose2D,
    goal: &GoalRegion,
    prev_v: f64,
    prev_omega: f64,
) -> Result<Observation, MdpError> {
    let n = scan.ranges.len();
    if n == 0 || n % N_SECTORS != 0 {
        return Err(MdpError::BadScanLength(n));
    }
    let per = n / N_SECTORS;
    let mut values = [0.0; OBS_DIM];
    for (k, slot) in values.iter_mut().take(N_SECTORS).enumerate() {
        // Dropped (non-finite) beams read as max range; everything is
        // clipped there too.
        *slot = scan.ranges[k * per..(k + 1) * per]
            .iter()
            .map(|&r| {
                if r.is_finite() {
                    r.min(scan.max_range)
                } else {
                    scan.max_range
                }
            })
            .fold(f64::INFINITY, f64::min);
    }
    let rel = goal.center - pose.position();
    let bearing = goal_bearing(pose, goal);
    values[N_SECTORS] = rel.norm();
    values[N_SECTORS + 1] = bearing.cos();
    values[N_SECTORS + 2] = bearing.sin();
    values[N_SECTORS + 3] = prev_v;
    values[N_SECTORS + 4] = prev_omega;
    Ok(Observation(values))
}

/// Reward term weights; all positive, signs applied in [`compute_reward`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub goal: f64,
    pub collision: f64,
    pub crash: f64,
    pub speed: f64,
    pub yaw: f64,
    pub progress: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            goal: 500.0,
            collision: 100.0,
            crash: 500.0,
            speed: 1.0,
            yaw: 1.0,
            progress: 1.0,
        }
    }
}

/// Per-step outcome bits the reward depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSignal {
    pub reached_goal: bool,
    /// Slow contact held in place (mutually exclusive with `crashed`).
    pub contact: bool,
    pub crashed: bool,
    /// Realized speed after the step, m/s.
    pub v: f64,
    /// Realized yaw rate after the step, rad/s.
    pub omega: f64,
    /// Goal bearing at the post-step pose, radians.
    pub goal_bearing: f64,
    /// Whether a scan was available this step.
    pub scan_ok: bool,
}

/// Terminal bonus/penalties plus motion shaping. A step without a scan is
/// worth nothing so the learner never trains on blind transitions.
pub fn compute_reward(w: &RewardWeights, s: &StepSignal) -> f64 {
    if !s.scan_ok {
        return 0.0;
    }
    let mut r = 0.0;
    if s.reached_goal {
        r += w.goal;
    }
    if s.crashed {
        r -= w.crash;
    } else if s.contact {
        r -= w.collision;
    }
    r += w.speed * s.v.abs();
    r += w.yaw * s.omega.abs();
    r += w.progress * s.v * s.goal_bearing.cos();
    r
}

/// Bootstrap mask: only true endings stop the value recursion; running out
/// of time does not.
pub fn is_terminal(status: SimStatus) -> bool {
    matches!(status, SimStatus::Goal | SimStatus::Crashed)
}

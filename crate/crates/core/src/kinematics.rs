//! Ackermann bicycle model. The pose reference point is the rear-axle
//! center; constant-control motion is integrated exactly as a circular
//! arc (or a straight segment when the steering is numerically zero).

use crate::geometry::{FootprintRect, Pose2D};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Steering magnitudes with |tan(delta)| below this follow the straight-line
/// branch of the integrator.
pub const STRAIGHT_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("vehicle spec invalid: {0}")]
    InvalidSpec(String),
    #[error("normalized steering command {0} outside [-1, 1]")]
    SteeringOutOfRange(f64),
    #[error("steering angle {0} rad outside (-pi/2, pi/2)")]
    SteeringAngleOutOfRange(f64),
    #[error("time step must be finite and non-negative, got {0}")]
    InvalidTimeStep(f64),
    #[error("trajectory needs at least three samples with increasing timestamps")]
    DegenerateTrajectory,
}

/// Physical description of a car-like vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    /// Body length in meters.
    pub length: f64,
    /// Body width in meters.
    pub width: f64,
    /// Distance between axles in meters.
    pub wheelbase: f64,
    /// Maximum steering angle magnitude in radians.
    pub max_steer: f64,
    /// Maximum speed magnitude in m/s.
    pub v_max: f64,
}

impl VehicleSpec {
    pub fn new(
        length: f64,
        width: f64,
        wheelbase: f64,
        max_steer: f64,
        v_max: f64,
    ) -> Result<Self, KinematicsError> {
        let spec = VehicleSpec {
            length,
            width,
            wheelbase,
            max_steer,
            v_max,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), KinematicsError> {
        let all_finite = [
            self.length,
            self.width,
            self.wheelbase,
            self.max_steer,
            self.v_max,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return Err(KinematicsError::InvalidSpec("non-finite field".into()));
        }
        if self.length <= 0.0 || self.width <= 0.0 {
            return Err(KinematicsError::InvalidSpec(format!(
                "body dimensions must be positive, got {} x {}",
                self.length, self.width
            )));
        }
        if self.wheelbase <= 0.0 || self.wheelbase >= self.length {
            return Err(KinematicsError::InvalidSpec(format!(
                "wheelbase {} must lie in (0, length)",
                self.wheelbase
            )));
        }
        if self.max_steer <= 0.0 || self.max_steer >= std::f64::consts::FRAC_PI_2 {
            return Err(KinematicsError::InvalidSpec(format!(
                "max steer {} must lie in (0, pi/2)",
                self.max_steer
            )));
        }
        if self.v_max <= 0.0 {
            return Err(KinematicsError::InvalidSpec(format!(
                "v_max {} must be positive",
                self.v_max
            )));
        }
        Ok(())
    }

    /// Body rectangle relative to the rear axle, assuming equal overhangs.
    pub fn footprint(&self) -> FootprintRect {
        FootprintRect {
            length: self.length,
            width: self.width,
            ref_offset: self.wheelbase * 0.5,
        }
    }

    /// Turning radius of the rear axle at full steering lock.
    pub fn min_turning_radius(&self) -> f64 {
        self.wheelbase / self.max_steer.tan()
    }
}

impl Default for VehicleSpec {
    fn default() -> Self {
        VehicleSpec {
            length: 0.37,
            width: 0.36,
            wheelbase: 0.21,
            max_steer: 0.645,
            v_max: 1.0,
        }
    }
}

/// Instantaneous vehicle state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub pose: Pose2D,
    /// Longitudinal speed, m/s (negative when reversing).
    pub v: f64,
    /// Yaw rate, rad/s.
    pub omega: f64,
}

impl VehicleState {
    pub fn at_rest(pose: Pose2D) -> Self {
        VehicleState {
            pose,
            v: 0.0,
            omega: 0.0,
        }
    }
}

/// Yaw rate produced by a normalized steering command at speed `v`:
/// omega = (v / wheelbase) * tan(max_steer * cmd).
pub fn steering_to_yaw_rate(
    v: f64,
    steer_cmd: f64,
    spec: &VehicleSpec,
) -> Result<f64, KinematicsError> {
    if !(-1.0..=1.0).contains(&steer_cmd) || !steer_cmd.is_finite() {
        return Err(KinematicsError::SteeringOutOfRange(steer_cmd));
    }
    Ok(v / spec.wheelbase * (spec.max_steer * steer_cmd).tan())
}

/// Yaw rate at a raw steering angle in radians.
pub fn yaw_rate(v: f64, steer: f64, spec: &VehicleSpec) -> f64 {
    v / spec.wheelbase * steer.tan()
}

/// Propagate the state for `dt` seconds under constant speed and steering
/// angle. Exact for the bicycle model: a circular arc of radius
/// wheelbase / tan(steer), or a straight segment when tan(steer) vanishes.
pub fn step(
    state: &VehicleState,
    v: f64,
    steer: f64,
    dt: f64,
    spec: &VehicleSpec,
) -> Result<VehicleState, KinematicsError> {
    if !dt.is_finite() || dt < 0.0 {
        return Err(KinematicsError::InvalidTimeStep(dt));
    }
    if steer.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(KinematicsError::SteeringAngleOutOfRange(steer));
    }
    let tan_steer = steer.tan();
    let theta = state.pose.theta;
    let pose = if tan_steer.abs() < STRAIGHT_EPS {
        Pose2D::new(
            state.pose.x + v * dt * theta.cos(),
            state.pose.y + v * dt * theta.sin(),
            theta,
        )
    } else {
        let omega = v / spec.wheelbase * tan_steer;
        let radius = spec.wheelbase / tan_steer;
        let theta_next = theta + omega * dt;
        Pose2D::new(
            state.pose.x + radius * (theta_next.sin() - theta.sin()),
            state.pose.y - radius * (theta_next.cos() - theta.cos()),
            theta_next,
        )
    };
    Ok(VehicleState {
        pose,
        v,
        omega: v / spec.wheelbase * tan_steer,
    })
}

/// Largest |y_dot cos(theta) - x_dot sin(theta)| over the interior samples
/// of a timestamped trajectory, using central differences. Zero for motion
/// that satisfies the no-side-slip constraint.
pub fn nonholonomic_residual(samples: &[(f64, Pose2D)]) -> Result<f64, KinematicsError> {
    if samples.len() < 3 {
        return Err(KinematicsError::DegenerateTrajectory);
    }
    let mut worst: f64 = 0.0;
    for w in samples.windows(3) {
        let (t0, p0) = w[0];
        let (t1, p1) = w[1];
        let (t2, p2) = w[2];
        let dt = t2 - t0;
        if dt <= 0.0 || t1 <= t0 || t2 <= t1 {
            return Err(KinematicsError::DegenerateTrajectory);
        }
        let x_dot = (p2.x - p0.x) / dt;
        let y_dot = (p2.y - p0.y) / dt;
        worst = worst.max((y_dot * p1.theta.cos() - x_dot * p1.theta.sin()).abs());
    }
    Ok(worst)
}

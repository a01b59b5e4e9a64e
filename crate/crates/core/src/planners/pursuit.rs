//! Pure-pursuit tracking of a planned path with forward and reverse
//! segments. The lookahead point is chased along the current gear run only,
//! so cusps are approached and taken explicitly.

use super::hybrid_astar::{Gear, PlannedPath};
use super::ControllerError;
use crate::kinematics::{VehicleSpec, VehicleState};
use crate::mdp::Action;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PursuitParams {
    /// Lookahead arc distance, metres.
    pub lookahead: f64,
    /// Cruise speed as a fraction of the vehicle maximum.
    pub cruise: f64,
}

impl Default for PursuitParams {
    fn default() -> Self {
        PursuitParams {
            lookahead: 0.4,
            cruise: 0.5,
        }
    }
}

/// One tracking step. `cursor` is the caller's progress index into the
/// path; the advanced value is returned alongside the action so the
/// controller never snaps back onto an earlier self-intersecting loop.
pub fn pure_pursuit(
    path: &PlannedPath,
    cursor: usize,
    state: &VehicleState,
    spec: &VehicleSpec,
    params: &PursuitParams,
) -> Result<(Action, usize), ControllerError> {
    let nodes = &path.nodes;
    if nodes.is_empty() || cursor >= nodes.len() {
        return Err(ControllerError::PathExhausted);
    }
    let position = state.pose.position();

    // Advance the cursor to the nearest node in a short forward window.
    let window_end = (cursor + 20).min(nodes.len());
    let mut cursor = cursor;
    let mut best = f64::INFINITY;
    for (i, node) in nodes.iter().enumerate().take(window_end).skip(cursor) {
        let d = node.pose.position().dist(position);
        if d < best {
            best = d;
            cursor = i;
        }
    }
    if cursor + 1 >= nodes.len() {
        return Err(ControllerError::PathExhausted);
    }

    // The gear of the segment we are about to drive.
    let gear = nodes[cursor + 1].gear;

    // Walk ahead along this gear run until the lookahead distance is
    // covered; a cusp or the path end caps the target early.
    let mut target = nodes[cursor + 1].pose.position();
    let mut travelled = target.dist(position);
    let mut i = cursor + 1;
    while travelled < params.lookahead && i + 1 < nodes.len() && nodes[i + 1].gear == gear {
        let next = nodes[i + 1].pose.position();
        travelled += next.dist(target);
        target = next;
        i += 1;
    }

    let rel = target - position;
    let distance = rel.norm().max(1e-9);
    // Bearing of the target in the travel frame: the vehicle frame going
    // forward, the back-facing frame in reverse. Curvature flips with the
    // travel direction, hence the negated steering for reverse.
    let (alpha, sign) = match gear {
        Gear::Forward => (
            crate::geometry::normalize_angle(rel.angle() - state.pose.theta),
            1.0,
        ),
        Gear::Reverse => (
            crate::geometry::normalize_angle(
                rel.angle() - state.pose.theta - std::f64::consts::PI,
            ),
            -1.0,
        ),
    };
    let steer = sign * (2.0 * spec.wheelbase * alpha.sin() / distance).atan();
    let v = match gear {
        Gear::Forward => params.cruise,
        Gear::Reverse => -params.cruise,
    };
    Ok((
        Action {
            v,
            steer: (steer / spec.max_steer).clamp(-1.0, 1.0),
        }
        .clamped(),
        cursor,
    ))
}

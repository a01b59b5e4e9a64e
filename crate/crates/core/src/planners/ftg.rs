//! Follow-the-gap: bubble out the closest obstacle, steer for the midpoint
//! of the widest admissible gap, and fall back to a fixed reversal-turn
//! macro when forward clearance runs out.

use super::{ControlInput, Controller, ControllerError};
use crate::kinematics::VehicleSpec;
use crate::mdp::{goal_bearing, Action};
use crate::sim::LidarScan;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FtgParams {
    /// Radius around the closest obstacle endpoint zeroed out, metres.
    pub bubble_radius: f64,
    /// Minimum range for a beam to count as part of a gap, metres.
    pub threshold: f64,
    /// Forward clearance that triggers the reversal macro, metres.
    pub reverse_trigger: f64,
    /// Control cycles one reversal macro lasts.
    pub macro_cycles: usize,
    /// Half-angle of the forward clearance cone, radians.
    pub cone_half_angle: f64,
    /// Cruise speed as a fraction of the vehicle maximum.
    pub cruise: f64,
}

impl Default for FtgParams {
    fn default() -> Self {
        FtgParams {
            bubble_radius: 0.3,
            threshold: 1.0,
            reverse_trigger: 0.45,
            macro_cycles: 15,
            cone_half_angle: 15f64.to_radians(),
            cruise: 0.4,
        }
    }
}

/// Beam angle in the vehicle frame, wrapped to (−π, π].
fn beam_angle(k: usize, n: usize) -> f64 {
    crate::geometry::normalize_angle(2.0 * std::f64::consts::PI * k as f64 / n as f64)
}

fn finite_or_max(r: f64, max_range: f64) -> f64 {
    if r.is_finite() {
        r.min(max_range)
    } else {
        max_range
    }
}

/// A maximal run of beams all beyond the admissibility threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapSegment {
    /// First beam index of the run.
    pub start: usize,
    /// Last beam index of the run (inclusive, modulo beam count).
    pub end: usize,
    pub width: f64,
    /// Bearing of the run midpoint in the vehicle frame, radians.
    pub midpoint: f64,
    pub min_range: f64,
}

/// Gap segments of a scan after the safety bubble is applied; runs may wrap
/// around the array end since the scan covers the full circle.
pub fn gap_segments(ranges: &[f64], threshold: f64) -> Vec<GapSegment> {
    let n = ranges.len();
    if n == 0 {
        return Vec::new();
    }
    let beam_step = 2.0 * std::f64::consts::PI / n as f64;
    let admissible: Vec<bool> = ranges.iter().map(|&r| r > threshold).collect();
    if admissible.iter().all(|&a| a) {
        // One gap covering the whole circle; centre it on the front.
        return vec![GapSegment {
            start: 0,
            end: n - 1,
            width: 2.0 * std::f64::consts::PI,
            midpoint: 0.0,
            min_range: ranges.iter().cloned().fold(f64::INFINITY, f64::min),
        }];
    }
    let mut gaps = Vec::new();
    let mut k = 0;
    while k < n {
        if !admissible[k] {
            k += 1;
            continue;
        }
        // Start of a run; extend it, wrapping past the end if needed.
        let start = k;
        let mut len = 1;
        while len < n && admissible[(start + len) % n] {
            len += 1;
        }
        // A wrapped run beginning at 0 is the tail of a run that starts
        // later; skip it here and let the wrap extension cover it.
        if start == 0 && admissible[n - 1] {
            k += len;
            continue;
        }
        let end = (start + len - 1) % n;
        let mut min_range = f64::INFINITY;
        for j in 0..len {
            min_range = min_range.min(ranges[(start + j) % n]);
        }
        let mid_index = start as f64 + (len as f64 - 1.0) / 2.0;
        gaps.push(GapSegment {
            start,
            end,
            width: len as f64 * beam_step,
            midpoint: crate::geometry::normalize_angle(mid_index * beam_step),
            min_range,
        });
        k = start + len;
    }
    gaps
}

/// State of the in-flight reversal macro, if any.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MacroState {
    cycles_left: usize,
    steer: f64,
}

/// One follow-the-gap decision. Outside the reversal macro this is a pure
/// function of the scan and the goal bearing.
pub fn ftg_step(
    scan: &LidarScan,
    goal_bearing: f64,
    spec: &VehicleSpec,
    params: &FtgParams,
    macro_state: &mut MacroState,
) -> Action {
    if macro_state.cycles_left > 0 {
        macro_state.cycles_left -= 1;
        return Action {
            v: -params.cruise,
            steer: macro_state.steer,
        }
        .clamped();
    }

    let n = scan.ranges.len();
    let mut ranges: Vec<f64> = scan
        .ranges
        .iter()
        .map(|&r| finite_or_max(r, scan.max_range))
        .collect();
    if n == 0 {
        return Action { v: 0.0, steer: 0.0 };
    }

    // Safety bubble: zero every beam whose endpoint is near the closest
    // return. A beam saturated at max range saw nothing, so a fully clear
    // scan places no bubble.
    let closest = (0..n)
        .min_by(|&a, &b| ranges[a].total_cmp(&ranges[b]))
        .unwrap();
    if ranges[closest] < scan.max_range {
        let closest_point = endpoint(&ranges, closest, n);
        for k in 0..n {
            if endpoint(&ranges, k, n).dist(closest_point) <= params.bubble_radius {
                ranges[k] = 0.0;
            }
        }
    }

    // Widest admissible gap; ties go to the midpoint nearest the goal.
    let gaps = gap_segments(&ranges, params.threshold);
    let target_bearing = gaps
        .iter()
        .max_by(|a, b| {
            a.width.total_cmp(&b.width).then_with(|| {
                let da = (crate::geometry::normalize_angle(a.midpoint - goal_bearing)).abs();
                let db = (crate::geometry::normalize_angle(b.midpoint - goal_bearing)).abs();
                db.total_cmp(&da)
            })
        })
        .map(|g| g.midpoint)
        // No admissible gap at all: aim at the single longest beam.
        .unwrap_or_else(|| {
            let longest = (0..n)
                .max_by(|&a, &b| ranges[a].total_cmp(&ranges[b]))
                .unwrap();
            beam_angle(longest, n)
        });

    // Forward clearance check in a narrow cone ahead.
    let front = (0..n)
        .filter(|&k| beam_angle(k, n).abs() <= params.cone_half_angle)
        .map(|k| ranges[k])
        .fold(f64::INFINITY, f64::min);
    if front < params.reverse_trigger {
        // Reverse with full steering opposite the gap we were chasing.
        let steer = if target_bearing >= 0.0 { -1.0 } else { 1.0 };
        *macro_state = MacroState {
            cycles_left: params.macro_cycles - 1,
            steer,
        };
        return Action {
            v: -params.cruise,
            steer,
        }
        .clamped();
    }

    // Saturating proportional steering toward the gap midpoint; slow down
    // as the front closes in so grazing contact stays below crash speed.
    let steer = (target_bearing / spec.max_steer).clamp(-1.0, 1.0);
    let v = params.cruise * ((front - 0.2) / 1.0).clamp(0.3, 1.0);
    Action { v, steer }.clamped()
}

fn endpoint(ranges: &[f64], k: usize, n: usize) -> crate::geometry::Vec2 {
    let a = beam_angle(k, n);
    crate::geometry::Vec2::new(ranges[k] * a.cos(), ranges[k] * a.sin())
}

pub struct FtgController {
    spec: VehicleSpec,
    params: FtgParams,
    macro_state: MacroState,
}

impl FtgController {
    pub fn new(spec: VehicleSpec, params: FtgParams) -> Self {
        FtgController {
            spec,
            params,
            macro_state: MacroState::default(),
        }
    }
}

impl Controller for FtgController {
    fn id(&self) -> &str {
        "ftg"
    }

    fn reset(&mut self) {
        self.macro_state = MacroState::default();
    }

    fn act(&mut self, input: &ControlInput) -> Result<Action, ControllerError> {
        let bearing = goal_bearing(&input.state.pose, input.goal);
        Ok(ftg_step(
            input.scan,
            bearing,
            &self.spec,
            &self.params,
            &mut self.macro_state,
        ))
    }
}

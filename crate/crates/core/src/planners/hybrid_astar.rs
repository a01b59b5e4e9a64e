//! Hybrid A* over an (x, y, θ) lattice: motion primitives roll the Ackermann
//! kinematics forward and backward under sampled steering, collision checks
//! run against the full footprint analytically, and the heuristic is the
//! larger of the Euclidean distance and a deflated obstacle-aware Dijkstra
//! flood from the goal.

use super::{ControlInput, Controller, ControllerError};
use crate::geometry::{footprint_collides, normalize_angle, Obstacle, OccupancyGrid, Pose2D, Vec2};
use crate::kinematics::{step, VehicleSpec, VehicleState};
use crate::mdp::{goal_bearing, Action};
use crate::scenario::Scenario;
use std::collections::{BinaryHeap, HashMap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridAstarParams {
    /// Lattice cell size, metres.
    pub resolution: f64,
    /// Discrete headings over the full circle.
    pub headings: usize,
    /// Primitive arc length as a multiple of the cell diagonal.
    pub arc_factor: f64,
    /// Cost multiplier for reverse arcs.
    pub reverse_penalty: f64,
    /// Flat cost added when a primitive flips direction.
    pub gear_switch_penalty: f64,
    /// Maximum node expansions before certifying exhaustion.
    pub node_budget: usize,
    /// Goal position tolerance, metres.
    pub goal_tolerance: f64,
    /// Spacing of footprint collision checks along each primitive, metres.
    pub check_spacing: f64,
}

impl Default for HybridAstarParams {
    fn default() -> Self {
        HybridAstarParams {
            resolution: 0.05,
            headings: 32,
            arc_factor: 1.5,
            reverse_penalty: 1.5,
            gear_switch_penalty: 0.5,
            node_budget: 200_000,
            goal_tolerance: 0.2,
            check_spacing: 0.02,
        }
    }
}

impl HybridAstarParams {
    pub fn arc_length(&self) -> f64 {
        self.arc_factor * self.resolution * std::f64::consts::SQRT_2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gear {
    Forward,
    Reverse,
}

/// One pose along a planned path, annotated with the primitive that
/// reached it: gear and steering angle held over `arc` metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathNode {
    pub pose: Pose2D,
    pub gear: Gear,
    /// Steering angle in radians (zero for the start node).
    pub steer: f64,
    /// Arc length from the previous node (zero for the start node).
    pub arc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPath {
    pub nodes: Vec<PathNode>,
    /// Direction changes along the path.
    pub cusp_count: usize,
    /// Heuristic value at the start state, for a-posteriori admissibility
    /// auditing.
    pub start_heuristic: f64,
}

impl PlannedPath {
    /// Geometric length: the sum of primitive arc lengths.
    pub fn length(&self) -> f64 {
        self.nodes.iter().map(|n| n.arc).sum()
    }
}

/// Integer-weighted Dijkstra flood of grid distances from the goal cell.
/// Unreachable or occupied cells hold `u32::MAX`. Straight moves cost 5
/// units, diagonal 7, so distances convert at `resolution / 5`.
struct FloodField {
    grid: OccupancyGrid,
    units: Vec<u32>,
}

const FLOOD_STRAIGHT: u32 = 5;
const FLOOD_DIAGONAL: u32 = 7;
/// The 5/7 grid metric overestimates free-space shortest paths by at most
/// ~8%; deflating keeps the flood heuristic admissible.
const FLOOD_DEFLATION: f64 = 0.92;

impl FloodField {
    fn build(goal: Vec2, obstacles: &[Obstacle], bounds: (Vec2, Vec2), resolution: f64) -> Self {
        let (min, max) = bounds;
        let origin = Vec2::new(min.x, min.y);
        let width = ((max.x - min.x) / resolution).ceil().max(1.0) as usize + 1;
        let height = ((max.y - min.y) / resolution).ceil().max(1.0) as usize + 1;
        let mut grid = OccupancyGrid::new(origin, resolution, width, height)
            .expect("positive flood grid dimensions");
        for iy in 0..height as i64 {
            for ix in 0..width as i64 {
                let c = grid.cell_center(ix, iy);
                if point_in_any(c, obstacles) {
                    grid.set(ix, iy, true);
                }
            }
        }
        let mut units = vec![u32::MAX; width * height];
        let (gx, gy) = grid.cell_of(goal);
        let index = |ix: i64, iy: i64| (iy as usize) * width + ix as usize;
        let in_bounds =
            |ix: i64, iy: i64| ix >= 0 && iy >= 0 && (ix as usize) < width && (iy as usize) < height;
        if in_bounds(gx, gy) && !grid.occupied(gx, gy) {
            let mut heap = BinaryHeap::new();
            units[index(gx, gy)] = 0;
            heap.push(std::cmp::Reverse((0u32, gx, gy)));
            while let Some(std::cmp::Reverse((d, ix, iy))) = heap.pop() {
                if d > units[index(ix, iy)] {
                    continue;
                }
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (nx, ny) = (ix + dx, iy + dy);
                        if !in_bounds(nx, ny) || grid.occupied(nx, ny) {
                            continue;
                        }
                        let w = if dx != 0 && dy != 0 {
                            FLOOD_DIAGONAL
                        } else {
                            FLOOD_STRAIGHT
                        };
                        let nd = d + w;
                        if nd < units[index(nx, ny)] {
                            units[index(nx, ny)] = nd;
                            heap.push(std::cmp::Reverse((nd, nx, ny)));
                        }
                    }
                }
            }
        }
        FloodField { grid, units }
    }

    /// Deflated flood distance at a point; `None` when unreachable.
    fn distance(&self, p: Vec2) -> Option<f64> {
        let (ix, iy) = self.grid.cell_of(p);
        if ix < 0
            || iy < 0
            || ix as usize >= self.grid.width
            || iy as usize >= self.grid.height
        {
            return None;
        }
        let u = self.units[(iy as usize) * self.grid.width + ix as usize];
        if u == u32::MAX {
            return None;
        }
        Some(FLOOD_DEFLATION * u as f64 * self.grid.resolution / FLOOD_STRAIGHT as f64)
    }
}

fn point_in_any(p: Vec2, obstacles: &[Obstacle]) -> bool {
    obstacles.iter().any(|o| match o {
        Obstacle::Wall { p0, p1, thickness } => {
            let d = *p1 - *p0;
            let len_sq = d.dot(d);
            let t = if len_sq > 0.0 {
                ((p - *p0).dot(d) / len_sq).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let closest = *p0 + d * t;
            p.dist(closest) <= 0.5 * thickness
        }
        Obstacle::Cylinder { center, radius } => p.dist(*center) <= *radius,
    })
}

#[derive(Clone, Copy)]
struct NodeRec {
    pose: Pose2D,
    gear: Option<Gear>,
    steer: f64,
    arc: f64,
    parent: Option<usize>,
    g: f64,
}

type LatticeKey = (i64, i64, u16, u8);

fn lattice_key(pose: &Pose2D, params: &HybridAstarParams, gear: Option<Gear>) -> LatticeKey {
    let ix = (pose.x / params.resolution).floor() as i64;
    let iy = (pose.y / params.resolution).floor() as i64;
    let bin = heading_bin(pose.theta, params.headings);
    let dir = match gear {
        None | Some(Gear::Forward) => 0u8,
        Some(Gear::Reverse) => 1u8,
    };
    (ix, iy, bin, dir)
}

pub fn heading_bin(theta: f64, headings: usize) -> u16 {
    let step = 2.0 * std::f64::consts::PI / headings as f64;
    let b = (theta / step).round() as i64;
    b.rem_euclid(headings as i64) as u16
}

fn bins_apart(a: u16, b: u16, headings: usize) -> usize {
    let n = headings as i64;
    let d = (a as i64 - b as i64).rem_euclid(n);
    d.min(n - d) as usize
}

/// Plan a kinematically feasible path from `start` to `goal` (position
/// within tolerance, heading within one bin). Collision checks use the full
/// footprint against the analytic obstacle set; the node budget certifies
/// exhaustion on dead maps.
pub fn plan(
    obstacles: &[Obstacle],
    bounds: (Vec2, Vec2),
    start: Pose2D,
    goal: Pose2D,
    spec: &VehicleSpec,
    params: &HybridAstarParams,
) -> Result<PlannedPath, ControllerError> {
    let footprint = spec.footprint();
    if footprint_collides(&start, &footprint, obstacles) {
        return Err(ControllerError::StartBlocked);
    }
    let flood = FloodField::build(goal.position(), obstacles, bounds, params.resolution);
    let heuristic = |pose: &Pose2D| -> Option<f64> {
        let euclid = pose.position().dist(goal.position());
        flood.distance(pose.position()).map(|f| euclid.max(f))
    };
    let goal_bin = heading_bin(goal.theta, params.headings);
    let at_goal = |pose: &Pose2D| {
        pose.position().dist(goal.position()) <= params.goal_tolerance
            && bins_apart(heading_bin(pose.theta, params.headings), goal_bin, params.headings) <= 1
    };

    let start_h = match heuristic(&start) {
        Some(h) => h,
        None => return Err(ControllerError::NoPath { expansions: 0 }),
    };
    if at_goal(&start) {
        return Ok(PlannedPath {
            nodes: vec![PathNode {
                pose: start,
                gear: Gear::Forward,
                steer: 0.0,
                arc: 0.0,
            }],
            cusp_count: 0,
            start_heuristic: start_h,
        });
    }

    let arc = params.arc_length();
    let steers = [
        -spec.max_steer,
        -0.5 * spec.max_steer,
        0.0,
        0.5 * spec.max_steer,
        spec.max_steer,
    ];
    let n_checks = (arc / params.check_spacing).ceil().max(1.0) as usize;

    let mut nodes: Vec<NodeRec> = vec![NodeRec {
        pose: start,
        gear: None,
        steer: 0.0,
        arc: 0.0,
        parent: None,
        g: 0.0,
    }];
    let mut best_g: HashMap<LatticeKey, f64> = HashMap::new();
    best_g.insert(lattice_key(&start, params, None), 0.0);

    // Max-heap on Reverse of (f-bits, insertion seq): non-negative IEEE
    // floats order correctly as raw bits, and the sequence breaks ties
    // deterministically.
    let mut heap: BinaryHeap<std::cmp::Reverse<(u64, u64, usize)>> = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(std::cmp::Reverse((start_h.to_bits(), seq, 0)));

    let mut expansions = 0usize;
    while let Some(std::cmp::Reverse((_, _, id))) = heap.pop() {
        let node = nodes[id];
        let key = lattice_key(&node.pose, params, node.gear);
        if let Some(&g) = best_g.get(&key) {
            if node.g > g + 1e-9 {
                continue;
            }
        }
        if expansions >= params.node_budget {
            return Err(ControllerError::NoPath { expansions });
        }
        expansions += 1;

        for gear in [Gear::Forward, Gear::Reverse] {
            let v = match gear {
                Gear::Forward => 1.0,
                Gear::Reverse => -1.0,
            };
            for &steer in &steers {
                let state = VehicleState {
                    pose: node.pose,
                    v: 0.0,
                    omega: 0.0,
                };
                // Sweep the primitive, checking the footprint at fine steps.
                let mut pose = node.pose;
                let mut blocked = false;
                for k in 1..=n_checks {
                    let t = arc * k as f64 / n_checks as f64;
                    let s = match step(&state, v, steer, t, spec) {
                        Ok(s) => s,
                        Err(_) => {
                            blocked = true;
                            break;
                        }
                    };
                    if footprint_collides(&s.pose, &footprint, obstacles) {
                        blocked = true;
                        break;
                    }
                    pose = s.pose;
                }
                if blocked {
                    continue;
                }

                let mut cost = arc
                    * match gear {
                        Gear::Forward => 1.0,
                        Gear::Reverse => params.reverse_penalty,
                    };
                if let Some(prev) = node.gear {
                    if prev != gear {
                        cost += params.gear_switch_penalty;
                    }
                }
                let g = node.g + cost;
                let child_key = lattice_key(&pose, params, Some(gear));
                match best_g.get(&child_key) {
                    Some(&bg) if g >= bg - 1e-9 => continue,
                    _ => {}
                }
                let h = match heuristic(&pose) {
                    Some(h) => h,
                    None => continue,
                };
                best_g.insert(child_key, g);
                let child = NodeRec {
                    pose,
                    gear: Some(gear),
                    steer,
                    arc,
                    parent: Some(id),
                    g,
                };
                let child_id = nodes.len();
                nodes.push(child);

                if at_goal(&pose) {
                    return Ok(assemble(&nodes, child_id, start_h));
                }
                seq += 1;
                heap.push(std::cmp::Reverse(((g + h).to_bits(), seq, child_id)));
            }
        }
    }
    Err(ControllerError::NoPath { expansions })
}

fn assemble(nodes: &[NodeRec], goal_id: usize, start_heuristic: f64) -> PlannedPath {
    let mut chain = Vec::new();
    let mut cursor = Some(goal_id);
    while let Some(id) = cursor {
        let n = &nodes[id];
        chain.push(PathNode {
            pose: n.pose,
            gear: n.gear.unwrap_or(Gear::Forward),
            steer: n.steer,
            arc: n.arc,
        });
        cursor = n.parent;
    }
    chain.reverse();
    // The start node inherits the first segment's gear for display only.
    if chain.len() > 1 {
        chain[0].gear = chain[1].gear;
    }
    let cusp_count = chain
        .windows(2)
        .skip(1)
        .filter(|w| w[0].gear != w[1].gear)
        .count();
    PlannedPath {
        nodes: chain,
        cusp_count,
        start_heuristic,
    }
}

/// Hybrid A* behind the controller seam: plans on the scenario's full
/// obstacle map, tracks with pure pursuit, and replans from the current
/// pose when tracking error exceeds its threshold. A failed search parks
/// the vehicle for the rest of the episode.
pub struct HybridAstarController {
    obstacles: Vec<Obstacle>,
    bounds: (Vec2, Vec2),
    spec: VehicleSpec,
    params: HybridAstarParams,
    pursuit: super::pursuit::PursuitParams,
    goal_heading: f64,
    /// Replan when the nearest path point drifts farther than this.
    tracking_tolerance: f64,
    path: Option<PlannedPath>,
    cursor: usize,
    failed: bool,
}

impl HybridAstarController {
    pub fn new(
        scenario: &Scenario,
        params: HybridAstarParams,
        pursuit: super::pursuit::PursuitParams,
    ) -> Self {
        let (min, max) = scenario.bounds();
        let margin = Vec2::new(1.0, 1.0);
        let exit = scenario.seed.exit_direction();
        HybridAstarController {
            obstacles: scenario.obstacles.clone(),
            bounds: (min - margin, max + margin),
            spec: scenario.vehicle,
            params,
            pursuit,
            goal_heading: exit.angle(),
            tracking_tolerance: 0.3,
            path: None,
            cursor: 0,
            failed: false,
        }
    }

    fn replan(&mut self, from: Pose2D, goal: Vec2) {
        // Try the exit heading first, then its reverse: a path that backs
        // out arrives heading into the dead end.
        for heading in [self.goal_heading, self.goal_heading + std::f64::consts::PI] {
            let target = Pose2D::new(goal.x, goal.y, normalize_angle(heading));
            if let Ok(path) = plan(
                &self.obstacles,
                self.bounds,
                from,
                target,
                &self.spec,
                &self.params,
            ) {
                self.path = Some(path);
                self.cursor = 0;
                return;
            }
        }
        self.path = None;
        self.failed = true;
    }

    fn tracking_error(&self, position: Vec2) -> f64 {
        match &self.path {
            Some(path) => path
                .nodes
                .iter()
                .skip(self.cursor)
                .take(20)
                .map(|n| n.pose.position().dist(position))
                .fold(f64::INFINITY, f64::min),
            None => f64::INFINITY,
        }
    }
}

impl Controller for HybridAstarController {
    fn id(&self) -> &str {
        "hybrid-astar"
    }

    fn reset(&mut self) {
        self.path = None;
        self.cursor = 0;
        self.failed = false;
    }

    fn act(&mut self, input: &ControlInput) -> Result<Action, ControllerError> {
        let pose = input.state.pose;
        if self.path.is_none() && !self.failed {
            self.replan(pose, input.goal.center);
        }
        if self.path.is_some() && self.tracking_error(pose.position()) > self.tracking_tolerance {
            self.replan(pose, input.goal.center);
        }
        let Some(path) = &self.path else {
            return Ok(Action { v: 0.0, steer: 0.0 });
        };
        match super::pursuit::pure_pursuit(path, self.cursor, input.state, &self.spec, &self.pursuit)
        {
            Ok((action, cursor)) => {
                self.cursor = cursor;
                Ok(action)
            }
            Err(ControllerError::PathExhausted) => {
                // Planner tolerance can leave us a hair outside the goal
                // disk; creep toward the centre.
                let bearing = goal_bearing(&pose, input.goal);
                let forward = bearing.abs() < std::f64::consts::FRAC_PI_2;
                let steer = if forward {
                    (bearing / self.spec.max_steer).clamp(-1.0, 1.0)
                } else {
                    (-normalize_angle(bearing - std::f64::consts::PI) / self.spec.max_steer)
                        .clamp(-1.0, 1.0)
                };
                Ok(Action {
                    v: if forward { 0.2 } else { -0.2 },
                    steer,
                })
            }
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::map_action;
    use crate::scenario::{
        ControlPhase, GoalRegion, ManeuverStyle, ObstacleVariant, Scenario, SeedTrajectory,
    };
    use crate::sim::{SimConfig, SimStatus, Simulation};
    use std::f64::consts::PI;

    fn empty_bounds() -> (Vec2, Vec2) {
        (Vec2::new(-1.0, -1.5), Vec2::new(3.0, 1.5))
    }

    #[test]
    fn heading_bins_partition_the_circle() {
        let step = 2.0 * PI / 32.0;
        assert_eq!(heading_bin(0.0, 32), 0);
        assert_eq!(heading_bin(5.0 * step, 32), 5);
        assert_eq!(heading_bin(-step, 32), 31);
        assert_eq!(heading_bin(0.49 * step, 32), 0);
        assert_eq!(heading_bin(0.51 * step, 32), 1);
        assert_eq!(heading_bin(2.0 * PI, 32), 0);
    }

    #[test]
    fn full_lock_primitives_cross_heading_bins() {
        // An arc at minimum turning radius must sweep at least one heading
        // bin, otherwise full-lock expansions alias to their parent cell.
        let spec = VehicleSpec::default();
        let params = HybridAstarParams::default();
        let r_min = spec.wheelbase / spec.max_steer.tan();
        let bin_width = 2.0 * PI / params.headings as f64;
        assert!(params.arc_length() / r_min >= bin_width);
    }

    #[test]
    fn start_inside_goal_yields_a_single_node() {
        let start = Pose2D::new(0.0, 0.0, 0.0);
        let goal = Pose2D::new(0.1, 0.0, 0.05);
        let path = plan(
            &[],
            empty_bounds(),
            start,
            goal,
            &VehicleSpec::default(),
            &HybridAstarParams::default(),
        )
        .unwrap();
        assert_eq!(path.nodes.len(), 1);
        assert_eq!(path.cusp_count, 0);
        assert_eq!(path.length(), 0.0);
        assert_eq!(path.nodes[0].pose, start);
    }

    #[test]
    fn colliding_start_is_rejected() {
        let obstacles = vec![Obstacle::Cylinder {
            center: Vec2::new(0.0, 0.0),
            radius: 0.2,
        }];
        let err = plan(
            &obstacles,
            empty_bounds(),
            Pose2D::new(0.0, 0.0, 0.0),
            Pose2D::new(2.0, 0.0, 0.0),
            &VehicleSpec::default(),
            &HybridAstarParams::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ControllerError::StartBlocked));
    }

    #[test]
    fn open_world_straight_run_has_no_cusps() {
        let params = HybridAstarParams::default();
        let goal = Pose2D::new(2.0, 0.0, 0.0);
        let path = plan(
            &[],
            empty_bounds(),
            Pose2D::new(0.0, 0.0, 0.0),
            goal,
            &VehicleSpec::default(),
            &params,
        )
        .unwrap();
        assert_eq!(path.cusp_count, 0);
        assert!(path.nodes.iter().skip(1).all(|n| n.gear == Gear::Forward));
        let len = path.length();
        assert!((1.7..2.3).contains(&len), "length {len}");
        let final_pose = path.nodes.last().unwrap().pose;
        assert!(final_pose.position().dist(goal.position()) <= params.goal_tolerance + 1e-9);
        // The heuristic targets the goal point while the search stops on a
        // tolerance disk, so admissibility holds up to that tolerance.
        assert!(path.start_heuristic <= len + params.goal_tolerance + 1e-6);
    }

    #[test]
    fn planned_paths_replay_exactly_and_stay_clear() {
        // A wall across most of the corridor forces a genuine curve.
        let obstacles = vec![Obstacle::Wall {
            p0: Vec2::new(1.0, -1.5),
            p1: Vec2::new(1.0, 0.1),
            thickness: 0.05,
        }];
        let spec = VehicleSpec::default();
        let params = HybridAstarParams::default();
        let path = plan(
            &obstacles,
            empty_bounds(),
            Pose2D::new(0.0, 0.0, 0.0),
            Pose2D::new(2.0, 0.0, 0.0),
            &spec,
            &params,
        )
        .unwrap();
        assert!(path.nodes.len() > 2);
        let footprint = spec.footprint();
        for w in path.nodes.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let v = match b.gear {
                Gear::Forward => 1.0,
                Gear::Reverse => -1.0,
            };
            let state = VehicleState {
                pose: a.pose,
                v: 0.0,
                omega: 0.0,
            };
            // Replaying the stored primitive reproduces the stored pose.
            let replayed = step(&state, v, b.steer, b.arc, &spec).unwrap();
            assert!(replayed.pose.position().dist(b.pose.position()) < 1e-9);
            assert!(normalize_angle(replayed.pose.theta - b.pose.theta).abs() < 1e-9);
            // The densified sweep stays collision free.
            let n = (b.arc / 0.02).ceil() as usize;
            for k in 1..=n {
                let t = b.arc * k as f64 / n as f64;
                let s = step(&state, v, b.steer, t, &spec).unwrap();
                assert!(!footprint_collides(&s.pose, &footprint, &obstacles));
            }
        }
        let recount = path
            .nodes
            .windows(2)
            .skip(1)
            .filter(|w| w[0].gear != w[1].gear)
            .count();
        assert_eq!(path.cusp_count, recount);
    }

    #[test]
    fn unreachable_goal_fails_before_searching() {
        // Goal sealed inside a box two flood cells thick on every side;
        // the extra thickness keeps cell centres strictly inside the walls.
        let t = 0.08;
        let obstacles = vec![
            Obstacle::Wall {
                p0: Vec2::new(1.5, -0.3),
                p1: Vec2::new(2.1, -0.3),
                thickness: t,
            },
            Obstacle::Wall {
                p0: Vec2::new(1.5, 0.3),
                p1: Vec2::new(2.1, 0.3),
                thickness: t,
            },
            Obstacle::Wall {
                p0: Vec2::new(1.5, -0.3),
                p1: Vec2::new(1.5, 0.3),
                thickness: t,
            },
            Obstacle::Wall {
                p0: Vec2::new(2.1, -0.3),
                p1: Vec2::new(2.1, 0.3),
                thickness: t,
            },
        ];
        let err = plan(
            &obstacles,
            empty_bounds(),
            Pose2D::new(0.0, 0.0, 0.0),
            Pose2D::new(1.8, 0.0, 0.0),
            &VehicleSpec::default(),
            &HybridAstarParams::default(),
        )
        .unwrap_err();
        match err {
            ControllerError::NoPath { expansions } => assert_eq!(expansions, 0),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn impassable_gap_exhausts_the_node_budget() {
        // A 0.15 m slot leaks the point flood but never fits the footprint,
        // so the search burns its whole budget before certifying failure.
        let t = 0.05;
        let obstacles = vec![
            Obstacle::Wall {
                p0: Vec2::new(-0.5, -0.5),
                p1: Vec2::new(0.5, -0.5),
                thickness: t,
            },
            Obstacle::Wall {
                p0: Vec2::new(-0.5, 0.5),
                p1: Vec2::new(0.5, 0.5),
                thickness: t,
            },
            Obstacle::Wall {
                p0: Vec2::new(-0.5, -0.5),
                p1: Vec2::new(-0.5, 0.5),
                thickness: t,
            },
            Obstacle::Wall {
                p0: Vec2::new(0.5, -0.5),
                p1: Vec2::new(0.5, -0.075),
                thickness: t,
            },
            Obstacle::Wall {
                p0: Vec2::new(0.5, 0.075),
                p1: Vec2::new(0.5, 0.5),
                thickness: t,
            },
        ];
        let params = HybridAstarParams {
            node_budget: 50,
            ..HybridAstarParams::default()
        };
        let err = plan(
            &obstacles,
            (Vec2::new(-1.0, -1.0), Vec2::new(2.5, 1.0)),
            Pose2D::new(0.0, 0.0, 0.0),
            Pose2D::new(1.5, 0.0, 0.0),
            &VehicleSpec::default(),
            &params,
        )
        .unwrap_err();
        match err {
            ControllerError::NoPath { expansions } => assert_eq!(expansions, 50),
            other => panic!("unexpected error {other:?}"),
        }
    }

    fn open_scenario(goal_dist: f64) -> Scenario {
        let spec = VehicleSpec::default();
        let start = Pose2D::new(0.0, 0.0, 0.0);
        let phases = vec![ControlPhase {
            v: 0.5,
            steer: 0.0,
            duration: 0.2,
            t_start: 0.0,
        }];
        let seed = SeedTrajectory::from_phases(start, phases, &spec, 0.02).unwrap();
        Scenario {
            id: "open".into(),
            vehicle: spec,
            variant: ObstacleVariant::Walls,
            style: ManeuverStyle::Corridor,
            start,
            goal: GoalRegion {
                center: Vec2::new(goal_dist, 0.0),
                radius: 0.2,
            },
            obstacles: Vec::new(),
            seed,
        }
    }

    #[test]
    fn controller_drives_an_open_scenario_to_the_goal() {
        let scenario = open_scenario(2.0);
        let mut sim = Simulation::new(scenario.clone(), SimConfig::default()).unwrap();
        let mut controller = HybridAstarController::new(
            &scenario,
            HybridAstarParams::default(),
            super::super::pursuit::PursuitParams::default(),
        );
        assert_eq!(controller.id(), "hybrid-astar");
        while sim.status() == SimStatus::Running {
            let scan = sim.lidar();
            let state = *sim.state();
            let goal = sim.goal();
            let input = super::super::ControlInput {
                scan: &scan,
                state: &state,
                goal: &goal,
            };
            let action = controller.act(&input).unwrap();
            let cmd = map_action(action, &scenario.vehicle);
            sim.step(cmd.v, cmd.steer).unwrap();
        }
        assert_eq!(sim.status(), SimStatus::Goal);
        assert_eq!(sim.collisions(), 0);
    }
}

//! Fixed-step episode simulator: exact-arc vehicle integration with
//! substepped contact checks, a 360-beam range scanner, and control replay.

use crate::geometry::{footprint_penetration, raycast, FootprintRect, Pose2D, Vec2};
use crate::kinematics::{self, KinematicsError, VehicleState};
use crate::scenario::{ControlPhase, GoalRegion, Scenario};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("step called after episode ended with status {0:?}")]
    EpisodeOver(SimStatus),
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Control period, seconds.
    pub dt: f64,
    /// Episode step budget.
    pub max_steps: usize,
    /// Contact checks per control period.
    pub substeps: usize,
    /// Scanner beam count over the full circle.
    pub lidar_beams: usize,
    /// Scanner saturation range, meters.
    pub lidar_max_range: f64,
    /// Contact at or above this fraction of top speed destroys the vehicle.
    pub crash_speed_frac: f64,
    /// Contact deeper than this destroys the vehicle regardless of speed.
    pub max_penetration: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.1,
            max_steps: 500,
            substeps: 10,
            lidar_beams: 360,
            lidar_max_range: 10.0,
            crash_speed_frac: 0.5,
            max_penetration: 0.02,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0) {
            return Err(SimError::InvalidConfig("dt must be positive"));
        }
        if self.substeps == 0 {
            return Err(SimError::InvalidConfig("substeps must be positive"));
        }
        if self.lidar_beams == 0 {
            return Err(SimError::InvalidConfig("lidar_beams must be positive"));
        }
        if !(self.lidar_max_range > 0.0) {
            return Err(SimError::InvalidConfig("lidar_max_range must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimStatus {
    Running,
    Goal,
    Crashed,
    TimedOut,
}

/// What happened during one control period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub status: SimStatus,
    /// The vehicle touched an obstacle this step (crash or held stop).
    pub contact: bool,
    pub crashed: bool,
    pub reached_goal: bool,
}

/// One full-circle range scan. Beam `k` points at vehicle-frame bearing
/// `2*pi*k/len` (beam 0 straight ahead), measured from the reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    pub ranges: Vec<f64>,
    pub max_range: f64,
}

#[derive(Debug)]
pub struct Simulation {
    pub scenario: Scenario,
    pub config: SimConfig,
    footprint: FootprintRect,
    goal: GoalRegion,
    state: VehicleState,
    steps: usize,
    collisions: usize,
    status: SimStatus,
}

impl Simulation {
    pub fn new(scenario: Scenario, config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let footprint = scenario.vehicle.footprint();
        let goal = scenario.goal;
        let start = scenario.start;
        Ok(Simulation {
            scenario,
            config,
            footprint,
            goal,
            state: VehicleState::at_rest(start),
            steps: 0,
            collisions: 0,
            status: SimStatus::Running,
        })
    }

    pub fn reset(&mut self) {
        self.reset_with_pose(self.scenario.start);
    }

    pub fn reset_with_pose(&mut self, pose: Pose2D) {
        self.state = VehicleState::at_rest(pose);
        self.steps = 0;
        self.collisions = 0;
        self.status = SimStatus::Running;
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn status(&self) -> SimStatus {
        self.status
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn collisions(&self) -> usize {
        self.collisions
    }

    pub fn goal(&self) -> GoalRegion {
        self.goal
    }

    /// Override the goal disk (used for staged goal placement in training).
    pub fn set_goal(&mut self, goal: GoalRegion) {
        self.goal = goal;
    }

    pub fn elapsed(&self) -> f64 {
        self.steps as f64 * self.config.dt
    }

    /// Whether a footprint at `pose` touches any obstacle.
    pub fn pose_collides(&self, pose: &Pose2D) -> bool {
        footprint_penetration(pose, &self.footprint, &self.scenario.obstacles) > 0.0
    }

    /// Advance one control period under constant commands. Speed and
    /// steering are clamped to the vehicle limits. Slow contact freezes the
    /// vehicle at its pre-step pose; fast or deep contact ends the episode.
    pub fn step(&mut self, v_cmd: f64, steer_cmd: f64) -> Result<StepReport, SimError> {
        if self.status != SimStatus::Running {
            return Err(SimError::EpisodeOver(self.status));
        }
        let spec = &self.scenario.vehicle;
        let v = v_cmd.clamp(-spec.v_max, spec.v_max);
        let steer = steer_cmd.clamp(-spec.max_steer, spec.max_steer);
        let dt_sub = self.config.dt / self.config.substeps as f64;
        let pre = self.state;
        let mut contact = false;
        let mut crashed = false;
        let mut state = pre;
        for _ in 0..self.config.substeps {
            state = kinematics::step(&state, v, steer, dt_sub, spec)?;
            let depth =
                footprint_penetration(&state.pose, &self.footprint, &self.scenario.obstacles);
            if depth > 0.0 {
                contact = true;
                crashed =
                    v.abs() >= self.config.crash_speed_frac * spec.v_max
                        || depth > self.config.max_penetration;
                break;
            }
        }
        self.steps += 1;
        if crashed {
            self.state = state;
            self.status = SimStatus::Crashed;
        } else if contact {
            // Gentle nudge: hold the last safe pose with the vehicle stopped.
            self.collisions += 1;
            self.state = VehicleState::at_rest(pre.pose);
        } else {
            self.state = state;
        }
        let mut reached_goal = false;
        if self.status == SimStatus::Running && !contact {
            let dist = self.state.pose.position().dist(self.goal.center);
            if dist < self.goal.radius {
                reached_goal = true;
                self.status = SimStatus::Goal;
            }
        }
        if self.status == SimStatus::Running && self.steps >= self.config.max_steps {
            self.status = SimStatus::TimedOut;
        }
        Ok(StepReport {
            status: self.status,
            contact,
            crashed,
            reached_goal,
        })
    }

    /// Scan the surroundings from the vehicle reference point.
    pub fn lidar(&self) -> LidarScan {
        let origin = self.state.pose.position();
        let n = self.config.lidar_beams;
        let ranges = (0..n)
            .map(|k| {
                let bearing = std::f64::consts::TAU * k as f64 / n as f64;
                raycast(
                    origin,
                    self.state.pose.theta + bearing,
                    &self.scenario.obstacles,
                    self.config.lidar_max_range,
                )
            })
            .collect();
        LidarScan {
            ranges,
            max_range: self.config.lidar_max_range,
        }
    }

    /// Last realized body velocities (zero after a held contact).
    pub fn odometry(&self) -> (f64, f64) {
        (self.state.v, self.state.omega)
    }
}

/// One row of an exported trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
    pub contact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub status: SimStatus,
    pub collisions: usize,
    pub steps: usize,
    pub trace: Vec<TrajectorySample>,
}

/// Feed a recorded control schedule through the simulator.
pub fn replay(
    scenario: &Scenario,
    phases: &[ControlPhase],
    config: &SimConfig,
) -> Result<ReplayOutcome, SimError> {
    let mut sim = Simulation::new(scenario.clone(), config.clone())?;
    let mut trace = vec![sample_of(&sim, false)];
    'phases: for phase in phases {
        for _ in 0..phase.steps() {
            let report = sim.step(phase.v, phase.steer)?;
            trace.push(sample_of(&sim, report.contact));
            if report.status != SimStatus::Running {
                break 'phases;
            }
        }
    }
    Ok(ReplayOutcome {
        status: sim.status(),
        collisions: sim.collisions(),
        steps: sim.steps(),
        trace,
    })
}

fn sample_of(sim: &Simulation, contact: bool) -> TrajectorySample {
    let s = sim.state();
    TrajectorySample {
        t: sim.elapsed(),
        x: s.pose.x,
        y: s.pose.y,
        theta: s.pose.theta,
        v: s.v,
        omega: s.omega,
        contact,
    }
}

/// Write a trajectory as CSV with a fixed header.
pub fn write_trajectory_csv(
    path: &std::path::Path,
    trace: &[TrajectorySample],
) -> Result<(), SimError> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in trace {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_trajectory_csv(path: &std::path::Path) -> Result<Vec<TrajectorySample>, SimError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

/// Convenience used by debris-free viewers: positions swept by the seed.
pub fn seed_world_path(scenario: &Scenario) -> Vec<Vec2> {
    scenario.seed.poses.iter().map(|p| p.position()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Obstacle;
    use crate::kinematics::VehicleSpec;
    use crate::scenario::{
        ControlPhase, GoalRegion, ManeuverStyle, ObstacleVariant, Scenario, SeedTrajectory,
        CONTROL_DT,
    };

    fn corridor_scenario(extra: Vec<Obstacle>) -> Scenario {
        let spec = VehicleSpec::default();
        let mut obstacles = vec![
            Obstacle::Wall {
                p0: Vec2::new(-1.0, 0.55),
                p1: Vec2::new(4.0, 0.55),
                thickness: 0.1,
            },
            Obstacle::Wall {
                p0: Vec2::new(-1.0, -0.55),
                p1: Vec2::new(4.0, -0.55),
                thickness: 0.1,
            },
        ];
        obstacles.extend(extra);
        let start = Pose2D::new(0.0, 0.0, 0.0);
        let seed = SeedTrajectory::from_phases(
            start,
            vec![ControlPhase {
                v: 0.5,
                steer: 0.0,
                duration: 6.0,
                t_start: 0.0,
            }],
            &spec,
            0.02,
        )
        .unwrap();
        Scenario {
            id: "sim-test".into(),
            vehicle: spec,
            variant: ObstacleVariant::Walls,
            style: ManeuverStyle::Corridor,
            start,
            goal: GoalRegion {
                center: Vec2::new(3.0, 0.0),
                radius: 0.2,
            },
            obstacles,
            seed,
        }
    }

    fn blocking_wall() -> Obstacle {
        Obstacle::Wall {
            p0: Vec2::new(1.0, -0.6),
            p1: Vec2::new(1.0, 0.6),
            thickness: 0.05,
        }
    }

    #[test]
    fn drives_to_goal_in_expected_steps() {
        let mut sim = Simulation::new(corridor_scenario(vec![]), SimConfig::default()).unwrap();
        let mut last = None;
        for _ in 0..100 {
            let report = sim.step(1.0, 0.0).unwrap();
            last = Some(report);
            if report.status != SimStatus::Running {
                break;
            }
        }
        let report = last.unwrap();
        assert_eq!(report.status, SimStatus::Goal);
        assert!(report.reached_goal);
        // 3 m at 1 m/s with a 0.2 m goal disk triggers on step 29.
        assert_eq!(sim.steps(), 29);
        assert_eq!(sim.collisions(), 0);
    }

    #[test]
    fn slow_contact_holds_pose_and_counts() {
        let mut sim =
            Simulation::new(corridor_scenario(vec![blocking_wall()]), SimConfig::default())
                .unwrap();
        let mut contact_pose = None;
        for _ in 0..60 {
            let report = sim.step(0.4, 0.0).unwrap();
            assert_eq!(report.status, SimStatus::Running);
            assert!(!report.crashed);
            if report.contact {
                contact_pose = Some(sim.state().pose);
                break;
            }
        }
        let held = contact_pose.expect("vehicle should reach the wall");
        // The nose stops short of the wall face at x = 0.975.
        assert!(held.x + 0.29 <= 0.975 + 1e-9);
        let collisions_before = sim.collisions();
        assert_eq!(collisions_before, 1);
        // Keep pushing: the pose stays pinned, the counter keeps rising.
        for _ in 0..3 {
            let report = sim.step(0.4, 0.0).unwrap();
            assert!(report.contact);
            assert_eq!(sim.state().pose, held);
            assert_eq!(sim.odometry(), (0.0, 0.0));
        }
        assert_eq!(sim.collisions(), 4);
    }

    #[test]
    fn fast_contact_crashes_and_ends_episode() {
        let mut sim =
            Simulation::new(corridor_scenario(vec![blocking_wall()]), SimConfig::default())
                .unwrap();
        let mut crashed = false;
        for _ in 0..60 {
            let report = sim.step(1.0, 0.0).unwrap();
            if report.status == SimStatus::Crashed {
                assert!(report.contact && report.crashed);
                crashed = true;
                break;
            }
        }
        assert!(crashed);
        assert!(matches!(
            sim.step(1.0, 0.0),
            Err(SimError::EpisodeOver(SimStatus::Crashed))
        ));
    }

    #[test]
    fn episode_times_out() {
        let config = SimConfig {
            max_steps: 5,
            ..SimConfig::default()
        };
        let mut sim = Simulation::new(corridor_scenario(vec![]), config).unwrap();
        for _ in 0..4 {
            assert_eq!(sim.step(0.0, 0.0).unwrap().status, SimStatus::Running);
        }
        assert_eq!(sim.step(0.0, 0.0).unwrap().status, SimStatus::TimedOut);
    }

    #[test]
    fn lidar_reads_box_walls_in_vehicle_frame() {
        let walls = vec![
            Obstacle::Wall {
                p0: Vec2::new(2.0, -1.0),
                p1: Vec2::new(2.0, 1.0),
                thickness: 0.05,
            },
            Obstacle::Wall {
                p0: Vec2::new(-2.0, -1.0),
                p1: Vec2::new(-2.0, 1.0),
                thickness: 0.05,
            },
            Obstacle::Wall {
                p0: Vec2::new(-2.0, 1.0),
                p1: Vec2::new(2.0, 1.0),
                thickness: 0.05,
            },
            Obstacle::Wall {
                p0: Vec2::new(-2.0, -1.0),
                p1: Vec2::new(2.0, -1.0),
                thickness: 0.05,
            },
        ];
        let mut scenario = corridor_scenario(vec![]);
        scenario.obstacles = walls;
        let mut sim = Simulation::new(scenario, SimConfig::default()).unwrap();
        let scan = sim.lidar();
        assert_eq!(scan.ranges.len(), 360);
        assert!((scan.ranges[0] - 1.975).abs() < 1e-9);
        assert!((scan.ranges[90] - 0.975).abs() < 1e-9);
        assert!((scan.ranges[180] - 1.975).abs() < 1e-9);
        assert!((scan.ranges[270] - 0.975).abs() < 1e-9);
        // Rotate the vehicle: beam 0 now faces the nearer y wall.
        sim.reset_with_pose(Pose2D::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        let scan = sim.lidar();
        assert!((scan.ranges[0] - 0.975).abs() < 1e-9);
        assert!((scan.ranges[90] - 1.975).abs() < 1e-9);
    }

    #[test]
    fn lidar_saturates_at_max_range() {
        let mut scenario = corridor_scenario(vec![]);
        scenario.obstacles.clear();
        let sim = Simulation::new(scenario, SimConfig::default()).unwrap();
        let scan = sim.lidar();
        assert!(scan.ranges.iter().all(|&r| (r - 10.0).abs() < 1e-12));
    }

    #[test]
    fn replay_reaches_goal_and_traces() {
        let scenario = corridor_scenario(vec![]);
        let phases = vec![ControlPhase {
            v: 0.5,
            steer: 0.0,
            duration: 6.0,
            t_start: 0.0,
        }];
        let outcome = replay(&scenario, &phases, &SimConfig::default()).unwrap();
        assert_eq!(outcome.status, SimStatus::Goal);
        assert_eq!(outcome.collisions, 0);
        assert_eq!(outcome.trace.len(), outcome.steps + 1);
        let last = outcome.trace.last().unwrap();
        assert!((last.t - outcome.steps as f64 * CONTROL_DT).abs() < 1e-12);
    }

    #[test]
    fn trajectory_csv_round_trips() {
        let scenario = corridor_scenario(vec![]);
        let phases = vec![ControlPhase {
            v: 0.5,
            steer: 0.1,
            duration: 2.0,
            t_start: 0.0,
        }];
        let outcome = replay(&scenario, &phases, &SimConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        write_trajectory_csv(&path, &outcome.trace).unwrap();
        let back = read_trajectory_csv(&path).unwrap();
        assert_eq!(back, outcome.trace);
    }

    #[test]
    fn goal_override_changes_termination() {
        let mut sim = Simulation::new(corridor_scenario(vec![]), SimConfig::default()).unwrap();
        sim.set_goal(GoalRegion {
            center: Vec2::new(0.45, 0.0),
            radius: 0.2,
        });
        let mut reached = false;
        for _ in 0..20 {
            if sim.step(1.0, 0.0).unwrap().reached_goal {
                reached = true;
                break;
            }
        }
        assert!(reached);
        assert_eq!(sim.steps(), 3);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let config = SimConfig {
            substeps: 0,
            ..SimConfig::default()
        };
        assert!(Simulation::new(corridor_scenario(vec![]), config).is_err());
    }
}

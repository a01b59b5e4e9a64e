//! Benchmark harness: run controllers over scenario batches in parallel,
//! aggregate success, step, and collision metrics with confidence
//! intervals, and render layouts and trajectories to SVG.

use crate::geometry::{Obstacle, Pose2D};
use crate::kinematics::VehicleSpec;
use crate::mdp::map_action;
use crate::planners::{ControlInput, Controller};
use crate::scenario::Scenario;
use crate::sim::{SimConfig, SimStatus, Simulation, TrajectorySample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("benchmark needs at least one repetition")]
    NoRepetitions,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Outcome of one benchmark episode. The wall time is the only field not
/// reproduced by reruns with the same seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub scenario: String,
    pub controller: String,
    pub rep: usize,
    pub success: bool,
    pub steps: usize,
    pub collisions: usize,
    pub wall_time: f64,
}

impl EpisodeRecord {
    /// The seed-determined fields, i.e. everything but the wall clock.
    pub fn semantic(&self) -> (&str, &str, usize, bool, usize, usize) {
        (
            &self.scenario,
            &self.controller,
            self.rep,
            self.success,
            self.steps,
            self.collisions,
        )
    }
}

/// Aggregated metrics for one controller. Step statistics cover successful
/// episodes only and are absent when nothing succeeded; the success rate is
/// in percent and collision counts average over every episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub controller: String,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub success_rate_std: f64,
    pub success_rate_ci95: f64,
    pub mean_steps: Option<f64>,
    pub steps_std: Option<f64>,
    pub steps_ci95: Option<f64>,
    pub mean_collisions: f64,
    pub collisions_std: f64,
    pub collisions_ci95: f64,
}

/// A named controller factory. Every episode builds a fresh instance, so
/// parallel episodes never share mutable controller state.
pub struct BenchController<'a> {
    pub id: String,
    #[allow(clippy::type_complexity)]
    pub build: Box<dyn Fn(&Scenario) -> Box<dyn Controller> + Sync + 'a>,
}

impl<'a> BenchController<'a> {
    pub fn new(
        id: impl Into<String>,
        build: impl Fn(&Scenario) -> Box<dyn Controller> + Sync + 'a,
    ) -> Self {
        BenchController {
            id: id.into(),
            build: Box::new(build),
        }
    }
}

fn episode_seed(base: u64, controller: usize, scenario: usize, rep: usize) -> u64 {
    // SplitMix64 over a combined counter; decorrelates nearby indices.
    let mut z = base
        .wrapping_add((controller as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((scenario as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add((rep as u64).wrapping_mul(0x94D0_49BB_1331_11EB));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Start heading perturbed by a draw from U(-pi/6, pi/6). The draw is
/// halved until the footprint is free, so a tight pocket cannot strand the
/// episode in collision before it begins; the unperturbed start is always
/// free in a valid scenario.
fn perturbed_start(sim: &Simulation, start: Pose2D, seed: u64) -> Pose2D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut delta: f64 =
        rng.gen_range(-std::f64::consts::FRAC_PI_6..std::f64::consts::FRAC_PI_6);
    for _ in 0..8 {
        let pose = Pose2D::new(start.x, start.y, start.theta + delta);
        if !sim.pose_collides(&pose) {
            return pose;
        }
        delta *= 0.5;
    }
    start
}

fn drive(
    controller: &mut dyn Controller,
    sim: &mut Simulation,
    vehicle: &VehicleSpec,
) -> (bool, usize, usize) {
    while sim.status() == SimStatus::Running {
        let scan = sim.lidar();
        let state = *sim.state();
        let goal = sim.goal();
        let input = ControlInput {
            scan: &scan,
            state: &state,
            goal: &goal,
        };
        // A controller error ends the episode; it is recorded as a plain
        // failure rather than aborting the suite.
        let Ok(action) = controller.act(&input) else {
            break;
        };
        let cmd = map_action(action, vehicle);
        if sim.step(cmd.v, cmd.steer).is_err() {
            break;
        }
    }
    (sim.status() == SimStatus::Goal, sim.steps(), sim.collisions())
}

fn run_one(
    spec: &BenchController,
    scenario: &Scenario,
    rep: usize,
    seed: u64,
    config: &SimConfig,
) -> EpisodeRecord {
    let clock = Instant::now();
    let mut controller = (spec.build)(scenario);
    controller.reset();
    let (success, steps, collisions) = match Simulation::new(scenario.clone(), *config) {
        Ok(mut sim) => {
            let start = perturbed_start(&sim, scenario.start, seed);
            sim.reset_with_pose(start);
            drive(controller.as_mut(), &mut sim, &scenario.vehicle)
        }
        Err(_) => (false, 0, 0),
    };
    EpisodeRecord {
        scenario: scenario.id.clone(),
        controller: spec.id.clone(),
        rep,
        success,
        steps,
        collisions,
        wall_time: clock.elapsed().as_secs_f64(),
    }
}

/// Run every controller over every scenario for `repetitions` episodes
/// each, in parallel. Records come back in (controller, scenario, rep)
/// order and, apart from wall times, depend only on `base_seed`.
pub fn run_suite(
    controllers: &[BenchController],
    scenarios: &[Scenario],
    repetitions: usize,
    base_seed: u64,
    config: &SimConfig,
) -> Result<Vec<EpisodeRecord>, BenchError> {
    if repetitions == 0 {
        return Err(BenchError::NoRepetitions);
    }
    let jobs: Vec<(usize, usize, usize)> = (0..controllers.len())
        .flat_map(|c| {
            (0..scenarios.len())
                .flat_map(move |s| (0..repetitions).map(move |r| (c, s, r)))
        })
        .collect();
    // Indexed parallel collect preserves job order, so the merge is
    // deterministic regardless of scheduling.
    Ok(jobs
        .par_iter()
        .map(|&(c, s, r)| {
            run_one(
                &controllers[c],
                &scenarios[s],
                r,
                episode_seed(base_seed, c, s, r),
                config,
            )
        })
        .collect())
}

/// Mean, sample standard deviation, and 1.96-sigma confidence half-width.
fn stats(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, 0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let std = var.sqrt();
    (mean, std, 1.96 * std / (n as f64).sqrt())
}

/// One metrics row per controller id, sorted by id. Empty input aggregates
/// to an empty table.
pub fn aggregate(records: &[EpisodeRecord]) -> Vec<MetricsRow> {
    let mut ids: Vec<&str> = records.iter().map(|r| r.controller.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|id| {
            let group: Vec<&EpisodeRecord> =
                records.iter().filter(|r| r.controller == id).collect();
            let successes = group.iter().filter(|r| r.success).count();
            let rate_samples: Vec<f64> = group
                .iter()
                .map(|r| if r.success { 100.0 } else { 0.0 })
                .collect();
            let (success_rate, success_rate_std, success_rate_ci95) = stats(&rate_samples);
            let step_samples: Vec<f64> = group
                .iter()
                .filter(|r| r.success)
                .map(|r| r.steps as f64)
                .collect();
            let (mean_steps, steps_std, steps_ci95) = if step_samples.is_empty() {
                (None, None, None)
            } else {
                let (m, s, c) = stats(&step_samples);
                (Some(m), Some(s), Some(c))
            };
            let collision_samples: Vec<f64> =
                group.iter().map(|r| r.collisions as f64).collect();
            let (mean_collisions, collisions_std, collisions_ci95) =
                stats(&collision_samples);
            MetricsRow {
                controller: id.to_string(),
                episodes: group.len(),
                successes,
                success_rate,
                success_rate_std,
                success_rate_ci95,
                mean_steps,
                steps_std,
                steps_ci95,
                mean_collisions,
                collisions_std,
                collisions_ci95,
            }
        })
        .collect()
}

/// Fixed-width text table of aggregated metrics.
pub fn format_table(rows: &[MetricsRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<14} {:>5} {:>20} {:>20} {:>20}",
        "controller", "n", "success % (ci95)", "steps (ci95)", "collisions (ci95)"
    );
    for row in rows {
        let steps = match (row.mean_steps, row.steps_ci95) {
            (Some(m), Some(c)) => format!("{m:.1} ({c:.1})"),
            _ => "-".to_string(),
        };
        let _ = writeln!(
            out,
            "{:<14} {:>5} {:>20} {:>20} {:>20}",
            row.controller,
            row.episodes,
            format!("{:.1} ({:.1})", row.success_rate, row.success_rate_ci95),
            steps,
            format!("{:.2} ({:.2})", row.mean_collisions, row.collisions_ci95),
        );
    }
    out
}

const RECORD_HEADER: [&str; 7] = [
    "scenario",
    "controller",
    "rep",
    "success",
    "steps",
    "collisions",
    "wall_time",
];

const METRICS_HEADER: [&str; 12] = [
    "controller",
    "episodes",
    "successes",
    "success_rate",
    "success_rate_std",
    "success_rate_ci95",
    "mean_steps",
    "steps_std",
    "steps_ci95",
    "mean_collisions",
    "collisions_std",
    "collisions_ci95",
];

/// Write episode records as CSV. Empty inputs still produce the header.
pub fn write_records_csv(path: &Path, records: &[EpisodeRecord]) -> Result<(), BenchError> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    writer.write_record(RECORD_HEADER)?;
    for record in records {
        writer.serialize(record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_records_csv(path: &Path) -> Result<Vec<EpisodeRecord>, BenchError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut records = Vec::new();
    for row in reader.deserialize() {
        records.push(row?);
    }
    Ok(records)
}

/// Write aggregated metrics as CSV; absent step statistics become empty
/// cells.
pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<(), BenchError> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    writer.write_record(METRICS_HEADER)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>, BenchError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

/// Render a scenario, and optionally a driven trajectory, as a standalone
/// SVG string. Walls are round-capped strokes matching their collision
/// capsules, cylinders are filled circles, the goal is a translucent disk,
/// the start pose is an outlined footprint with a heading arrow, and
/// trajectory cusps are marked where the velocity changes sign.
pub fn render_svg(scenario: &Scenario, trajectory: Option<&[TrajectorySample]>) -> String {
    let (mut min, mut max) = scenario.bounds();
    if let Some(trace) = trajectory {
        for s in trace {
            min.x = min.x.min(s.x);
            min.y = min.y.min(s.y);
            max.x = max.x.max(s.x);
            max.y = max.y.max(s.y);
        }
    }
    let margin = 0.4;
    min.x -= margin;
    min.y -= margin;
    max.x += margin;
    max.y += margin;
    let scale = 160.0;
    let width = ((max.x - min.x) * scale).ceil();
    let height = ((max.y - min.y) * scale).ceil();

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">"
    );
    let _ = writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>");
    // World coordinates inside this group: metres, y up.
    let _ = writeln!(
        svg,
        "<g transform=\"matrix({scale},0,0,{},{},{})\">",
        -scale,
        -min.x * scale,
        max.y * scale
    );

    for obstacle in &scenario.obstacles {
        match obstacle {
            Obstacle::Wall { p0, p1, thickness } => {
                let _ = writeln!(
                    svg,
                    "<line class=\"wall\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" \
                     stroke=\"#444\" stroke-width=\"{thickness}\" stroke-linecap=\"round\"/>",
                    p0.x, p0.y, p1.x, p1.y
                );
            }
            Obstacle::Cylinder { center, radius } => {
                let _ = writeln!(
                    svg,
                    "<circle class=\"cylinder\" cx=\"{}\" cy=\"{}\" r=\"{radius}\" \
                     fill=\"#666\"/>",
                    center.x, center.y
                );
            }
        }
    }

    let goal = &scenario.goal;
    let _ = writeln!(
        svg,
        "<circle class=\"goal\" cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"#2a9d3a\" \
         fill-opacity=\"0.35\"/>",
        goal.center.x, goal.center.y, goal.radius
    );

    let _ = write_footprint(
        &mut svg,
        &scenario.vehicle,
        &scenario.start,
        "start",
        "#1a7a2a",
    );
    // Heading arrow out of the start marker.
    let tip = 0.3;
    let _ = writeln!(
        svg,
        "<g class=\"start-arrow\" transform=\"translate({},{}) rotate({})\">\
         <line x1=\"0\" y1=\"0\" x2=\"{tip}\" y2=\"0\" stroke=\"#1a7a2a\" stroke-width=\"0.03\"/>\
         <path d=\"M {tip} 0 L {} 0.05 L {} -0.05 Z\" fill=\"#1a7a2a\"/></g>",
        scenario.start.x,
        scenario.start.y,
        scenario.start.theta.to_degrees(),
        tip - 0.08,
        tip - 0.08,
    );

    if let Some(trace) = trajectory {
        if !trace.is_empty() {
            let points: Vec<String> =
                trace.iter().map(|s| format!("{},{}", s.x, s.y)).collect();
            let _ = writeln!(
                svg,
                "<polyline class=\"trajectory\" points=\"{}\" fill=\"none\" \
                 stroke=\"#d62828\" stroke-width=\"0.02\"/>",
                points.join(" ")
            );
            for w in trace.windows(2) {
                if w[0].v * w[1].v < 0.0 {
                    let _ = writeln!(
                        svg,
                        "<circle class=\"cusp\" cx=\"{}\" cy=\"{}\" r=\"0.04\" \
                         fill=\"none\" stroke=\"#d62828\" stroke-width=\"0.015\"/>",
                        w[1].x, w[1].y
                    );
                }
            }
            let last = trace.last().unwrap();
            let terminal = Pose2D::new(last.x, last.y, last.theta);
            let _ =
                write_footprint(&mut svg, &scenario.vehicle, &terminal, "terminal", "#d62828");
        }
    }

    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, "</svg>");
    svg
}

fn write_footprint(
    svg: &mut String,
    vehicle: &VehicleSpec,
    pose: &Pose2D,
    class: &str,
    color: &str,
) -> std::fmt::Result {
    let footprint = vehicle.footprint();
    writeln!(
        svg,
        "<g class=\"{class}\" transform=\"translate({},{}) rotate({})\">\
         <rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" \
         stroke=\"{color}\" stroke-width=\"0.02\"/></g>",
        pose.x,
        pose.y,
        pose.theta.to_degrees(),
        footprint.ref_offset - 0.5 * footprint.length,
        -0.5 * footprint.width,
        footprint.length,
        footprint.width,
    )
}

/// Render straight to a file.
pub fn save_svg(
    path: &Path,
    scenario: &Scenario,
    trajectory: Option<&[TrajectorySample]>,
) -> Result<(), BenchError> {
    std::fs::write(path, render_svg(scenario, trajectory))?;
    Ok(())
}

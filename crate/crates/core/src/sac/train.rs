//! Training loop: rolls episodes in the simulator, fills the replay buffer,
//! and schedules agent updates. Supports goal extension on success, a
//! clearance curriculum over regenerated scenarios, warm starts from a saved
//! buffer, and an observer hook for logging, checkpoints, and early stops.

use super::agent::{SacAgent, SacError};
use super::buffer::{ReplayBuffer, Transition};
use crate::geometry::Vec2;
use crate::kinematics::VehicleSpec;
use crate::mdp::{
    build_observation, compute_reward, goal_bearing, is_terminal, map_action, MdpError,
    RewardWeights, StepSignal,
};
use crate::scenario::{generate_batch, GenParams, GoalRegion, Scenario, ScenarioError};
use crate::sim::{SimConfig, SimError, SimStatus, Simulation};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Sac(#[from] SacError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("bad training config: {0}")]
    BadConfig(&'static str),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Where episodes come from.
#[derive(Debug, Clone)]
pub enum ScenarioSource {
    /// A fixed roster, cycled in order.
    Fixed(Vec<Scenario>),
    /// Regenerable roster; required when a curriculum is active so each
    /// stage can re-sweep the world with its own clearance.
    Generated {
        params: GenParams,
        count: usize,
        seed: u64,
    },
}

/// Stage-wise shrink of the generation body back to the real vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumConfig {
    pub stages: usize,
    /// Epoch success rate that advances to the next stage.
    pub trigger: f64,
    /// Body inflation at stage 0, metres per side; decays linearly to zero
    /// at the final stage.
    pub start_inflation: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            stages: 5,
            trigger: 0.6,
            start_inflation: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Episodes to roll in this call.
    pub episodes: usize,
    pub max_steps: usize,
    /// Episodes between update rounds.
    pub update_every: usize,
    /// Gradient iterations per round.
    pub updates_per_round: usize,
    /// Gradient iterations before the first lifetime episode when the
    /// buffer is already warm (at least one batch deep).
    pub pretrain_iters: usize,
    /// Episodes per epoch; epochs drive curriculum advancement.
    pub epoch_episodes: usize,
    pub curriculum: Option<CurriculumConfig>,
    /// Goal pushed this much further along the exit on each success.
    pub goal_extension_increment: f64,
    /// The extended goal never ends up farther than this from the start.
    pub goal_extension_cap: f64,
    pub rewards: RewardWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 0,
            max_steps: 500,
            update_every: 2,
            updates_per_round: 500,
            pretrain_iters: 100,
            epoch_episodes: 70,
            curriculum: None,
            goal_extension_increment: 0.5,
            goal_extension_cap: 8.0,
            rewards: RewardWeights::default(),
        }
    }
}

/// One finished episode, as logged and handed to the observer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    /// Cumulative episode counter over the agent's lifetime.
    pub episode: usize,
    pub scenario_index: usize,
    pub stage: usize,
    pub status: SimStatus,
    pub steps: usize,
    pub collisions: usize,
    pub reward_sum: f64,
    /// Goal extension in effect during this episode, metres.
    pub goal_extension: f64,
}

pub enum TrainEvent<'a> {
    EpisodeEnd(&'a EpisodeRow),
    /// Fired at each epoch boundary with the trainee lent out, so callers
    /// can checkpoint without interrupting the run.
    EpochEnd {
        epoch: usize,
        success_rate: f64,
        stage: usize,
        agent: &'a SacAgent,
        buffer: &'a ReplayBuffer,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainControl {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub episodes_run: usize,
    pub updates_run: usize,
    pub final_stage: usize,
    pub stopped_early: bool,
    pub rows: Vec<EpisodeRow>,
}

/// Body grown by `margin` on every side, kinematics untouched.
pub fn inflate_vehicle(spec: &VehicleSpec, margin: f64) -> VehicleSpec {
    VehicleSpec {
        length: spec.length + 2.0 * margin,
        width: spec.width + 2.0 * margin,
        ..*spec
    }
}

/// Inflation for a given curriculum stage: linear from `start_inflation`
/// down to zero at the last stage.
pub fn stage_inflation(config: &CurriculumConfig, stage: usize) -> f64 {
    if config.stages <= 1 {
        return 0.0;
    }
    let last = (config.stages - 1) as f64;
    let k = stage.min(config.stages - 1) as f64;
    config.start_inflation * (1.0 - k / last)
}

/// Largest extra distance the goal can move along `dir` while keeping the
/// goal center within `budget` of the start position.
pub fn goal_extension_cap(start: Vec2, goal: Vec2, dir: Vec2, budget: f64) -> f64 {
    let w = goal - start;
    let along = w.dot(dir);
    let disc = along * along + budget * budget - w.dot(w);
    if w.norm() >= budget || disc <= 0.0 {
        return 0.0;
    }
    (disc.sqrt() - along).max(0.0)
}

fn extended_goal(scenario: &Scenario, extension: f64) -> GoalRegion {
    GoalRegion {
        center: scenario.goal.center + scenario.seed.exit_direction() * extension,
        radius: scenario.goal.radius,
    }
}

/// Roll one episode with the stochastic policy, pushing every transition.
fn run_episode(
    agent: &mut SacAgent,
    buffer: &mut ReplayBuffer,
    scenario: &Scenario,
    goal_extension: f64,
    config: &TrainConfig,
) -> Result<(SimStatus, usize, usize, f64), TrainError> {
    let sim_config = SimConfig {
        max_steps: config.max_steps,
        ..SimConfig::default()
    };
    let mut sim = Simulation::new(scenario.clone(), sim_config)?;
    if goal_extension > 0.0 {
        sim.set_goal(extended_goal(scenario, goal_extension));
    }
    let goal = sim.goal();
    let spec = scenario.vehicle;

    let scan = sim.lidar();
    let mut obs = build_observation(&scan, &sim.state().pose, &goal, 0.0, 0.0)?;
    let mut reward_sum = 0.0;

    while sim.status() == SimStatus::Running {
        let (action, _) = agent.act(&obs, false)?;
        let command = map_action(action, &spec);
        let report = sim.step(command.v, command.steer)?;
        let (v, omega) = sim.odometry();
        let scan = sim.lidar();
        let pose = sim.state().pose;
        let next_obs = build_observation(&scan, &pose, &goal, v, omega)?;
        let signal = StepSignal {
            reached_goal: report.reached_goal,
            contact: report.contact && !report.crashed,
            crashed: report.crashed,
            v,
            omega,
            goal_bearing: goal_bearing(&pose, &goal),
            scan_ok: true,
        };
        let reward = compute_reward(&config.rewards, &signal);
        reward_sum += reward;
        buffer.push(Transition {
            obs,
            action,
            reward,
            next_obs: next_obs.clone(),
            done: is_terminal(report.status),
        });
        obs = next_obs;
    }
    Ok((sim.status(), sim.steps(), sim.collisions(), reward_sum))
}

fn update_round(
    agent: &mut SacAgent,
    buffer: &ReplayBuffer,
    iters: usize,
) -> Result<usize, TrainError> {
    if buffer.len() < agent.config.batch_size {
        return Ok(0);
    }
    for _ in 0..iters {
        agent.update(buffer)?;
    }
    Ok(iters)
}

fn build_roster(
    source: &ScenarioSource,
    curriculum: Option<&CurriculumConfig>,
    stage: usize,
) -> Result<Vec<Scenario>, TrainError> {
    match source {
        ScenarioSource::Fixed(list) => {
            if curriculum.is_some() {
                return Err(TrainError::BadConfig(
                    "curriculum needs a generated scenario source",
                ));
            }
            if list.is_empty() {
                return Err(TrainError::BadConfig("no scenarios to train on"));
            }
            Ok(list.clone())
        }
        ScenarioSource::Generated {
            params,
            count,
            seed,
        } => {
            if *count == 0 {
                return Err(TrainError::BadConfig("no scenarios to train on"));
            }
            let mut params = params.clone();
            if let Some(c) = curriculum {
                let margin = stage_inflation(c, stage);
                params.gen_vehicle = if margin > 0.0 {
                    Some(inflate_vehicle(&params.vehicle, margin))
                } else {
                    None
                };
            }
            Ok(generate_batch(&params, *count, *seed)?)
        }
    }
}

/// Run the training schedule: episodes cycle the roster in order; after
/// every `update_every` episodes the agent takes `updates_per_round`
/// gradient steps. A warm buffer earns `pretrain_iters` steps up front.
/// The observer sees every episode and epoch and may stop the run.
pub fn train(
    agent: &mut SacAgent,
    buffer: &mut ReplayBuffer,
    source: &ScenarioSource,
    config: &TrainConfig,
    mut observer: impl FnMut(TrainEvent) -> TrainControl,
) -> Result<TrainReport, TrainError> {
    if config.update_every == 0 {
        return Err(TrainError::BadConfig("update_every must be positive"));
    }
    if config.epoch_episodes == 0 {
        return Err(TrainError::BadConfig("epoch_episodes must be positive"));
    }

    let mut stage = 0usize;
    let mut roster = build_roster(source, config.curriculum.as_ref(), stage)?;
    let mut extensions = vec![0.0f64; roster.len()];

    let mut report = TrainReport {
        episodes_run: 0,
        updates_run: 0,
        final_stage: stage,
        stopped_early: false,
        rows: Vec::with_capacity(config.episodes),
    };

    // Warm-start on a pre-loaded (demonstration) buffer, but only for a
    // fresh agent: a resumed one has already consumed its warm start.
    if config.pretrain_iters > 0
        && agent.episodes_done == 0
        && buffer.len() >= agent.config.batch_size
    {
        report.updates_run += update_round(agent, buffer, config.pretrain_iters)?;
    }

    let mut epoch_successes = 0usize;
    let mut epoch = 0usize;

    for ep in 0..config.episodes {
        let idx = ep % roster.len();
        let scenario = &roster[idx];
        let extension = extensions[idx];
        let (status, steps, collisions, reward_sum) =
            run_episode(agent, buffer, scenario, extension, config)?;
        agent.episodes_done += 1;
        report.episodes_run += 1;

        if status == SimStatus::Goal {
            epoch_successes += 1;
            let cap = goal_extension_cap(
                scenario.start.position(),
                scenario.goal.center,
                scenario.seed.exit_direction(),
                config.goal_extension_cap,
            );
            extensions[idx] = (extension + config.goal_extension_increment).min(cap);
        }

        let row = EpisodeRow {
            episode: agent.episodes_done,
            scenario_index: idx,
            stage,
            status,
            steps,
            collisions,
            reward_sum,
            goal_extension: extension,
        };
        let control = observer(TrainEvent::EpisodeEnd(&row));
        report.rows.push(row);
        if control == TrainControl::Stop {
            report.stopped_early = true;
            break;
        }

        if (ep + 1) % config.update_every == 0 {
            report.updates_run += update_round(agent, buffer, config.updates_per_round)?;
        }

        if (ep + 1) % config.epoch_episodes == 0 {
            epoch += 1;
            let rate = epoch_successes as f64 / config.epoch_episodes as f64;
            epoch_successes = 0;
            let mut advanced = false;
            if let Some(c) = &config.curriculum {
                if rate >= c.trigger && stage + 1 < c.stages {
                    stage += 1;
                    advanced = true;
                }
            }
            let control = observer(TrainEvent::EpochEnd {
                epoch,
                success_rate: rate,
                stage,
                agent,
                buffer,
            });
            if control == TrainControl::Stop {
                report.stopped_early = true;
                break;
            }
            if advanced {
                roster = build_roster(source, config.curriculum.as_ref(), stage)?;
                extensions = vec![0.0; roster.len()];
            }
        }
    }

    report.final_stage = stage;
    Ok(report)
}

pub fn write_train_log(path: &std::path::Path, rows: &[EpisodeRow]) -> Result<(), TrainError> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_train_log(path: &std::path::Path) -> Result<Vec<EpisodeRow>, TrainError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

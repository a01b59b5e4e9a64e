//! One function per subcommand. Every run echoes its effective config next
//! to its outputs, refuses to clobber existing files without `--force`, and
//! distinguishes wrong invocations (exit 2) from failed runs (exit 1).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use deadend_core::bench::{
    aggregate, format_table, render_svg, run_suite, save_svg, write_metrics_csv,
    write_records_csv, BenchController,
};
use deadend_core::mdp::{
    build_observation, compute_reward, goal_bearing, is_terminal, map_action, Action, StepSignal,
};
use deadend_core::planners::{
    Controller, FtgController, FtgParams, HybridAstarController, HybridAstarParams,
    PolicyController, PursuitParams,
};
use deadend_core::sac::{
    train as train_loop, EpisodeRow, ReplayBuffer, SacAgent, ScenarioSource, TrainControl,
    TrainEvent, Transition,
};
use deadend_core::scenario::{
    generate_batch, validate_scenario, ObstacleVariant, Scenario, ScenarioBatch,
};
use deadend_core::sim::{self, read_trajectory_csv, SimConfig, SimStatus, Simulation};

use crate::config::{substream, RunConfig};
use crate::{usage, GenArgs, GenDemosArgs, EvalArgs, RenderArgs, ReplayArgs, TrainArgs};

fn refuse_overwrite(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        bail!("{} already exists; pass --force to overwrite", path.display());
    }
    Ok(())
}

fn find_scenario<'a>(batch: &'a ScenarioBatch, id: &str, origin: &Path) -> Result<&'a Scenario> {
    batch
        .scenarios
        .iter()
        .find(|s| s.id == id)
        .ok_or_else(|| anyhow!("scenario {:?} not found in {}", id, origin.display()))
}

pub fn gen(args: &GenArgs) -> Result<()> {
    let mut config = RunConfig::load(args.config.as_deref())?;
    if let Some(count) = args.count {
        config.gen.count = count;
    }
    if let Some(variant) = &args.variant {
        config.gen.params.variant = match variant.as_str() {
            "walls" => Some(ObstacleVariant::Walls),
            "cylinders" => Some(ObstacleVariant::Cylinders),
            "mixed" => None,
            other => return Err(usage(format!("unknown variant {other:?}"))),
        };
    }
    if let Some(style) = &args.style {
        config.gen.params.corridor_prob = match style.as_str() {
            "corridor" => 1.0,
            "tight-turn" => 0.0,
            "mixed" => 0.5,
            other => return Err(usage(format!("unknown style {other:?}"))),
        };
    }
    if config.gen.count == 0 {
        return Err(usage("scenario count must be positive"));
    }

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let batch_path = args.out.join("batch.json");
    refuse_overwrite(&batch_path, args.force)?;

    let started = Instant::now();
    let scenarios = generate_batch(&config.gen.params, config.gen.count, substream(args.seed, "gen"))?;
    // Generation already replays each escape; check once more against the
    // stored batch so nothing infeasible can reach disk.
    let mut infeasible = Vec::new();
    for scenario in &scenarios {
        if !validate_scenario(scenario)?.feasible {
            infeasible.push(scenario.id.clone());
        }
    }
    if !infeasible.is_empty() {
        bail!(
            "refusing to write batch: {} infeasible scenario(s): {}",
            infeasible.len(),
            infeasible.join(", ")
        );
    }

    let batch = ScenarioBatch::new(scenarios);
    batch.save(&batch_path)?;
    for scenario in &batch.scenarios {
        let path = args.out.join(format!("{}.svg", scenario.id));
        fs::write(&path, render_svg(scenario, None))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    config.echo(&args.out.join("config.toml"))?;
    println!(
        "wrote {} scenarios to {} in {:.1}s",
        batch.scenarios.len(),
        batch_path.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

pub fn replay(args: &ReplayArgs) -> Result<()> {
    let batch = ScenarioBatch::load(&args.batch)?;
    let scenario = find_scenario(&batch, &args.id, &args.batch)?;
    let report = validate_scenario(scenario)?;
    println!("scenario: {}", scenario.id);
    println!("steps: {}", report.steps);
    println!(
        "collisions: {}, goal: {}",
        report.collisions,
        if report.reached_goal { "reached" } else { "not reached" }
    );
    if let Some(svg_path) = &args.svg {
        refuse_overwrite(svg_path, args.force)?;
        let config = SimConfig {
            max_steps: scenario.seed.total_steps() + 50,
            ..SimConfig::default()
        };
        let outcome = sim::replay(scenario, &scenario.seed.phases, &config)?;
        save_svg(svg_path, scenario, Some(&outcome.trace))?;
        println!("wrote {}", svg_path.display());
    }
    if !report.feasible {
        bail!("scenario {} failed its recorded escape", scenario.id);
    }
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let mut config = RunConfig::load(args.config.as_deref())?;
    if let Some(v) = args.episodes {
        config.train.run.episodes = v;
    }
    if let Some(v) = args.update_every {
        config.train.run.update_every = v;
    }
    if let Some(v) = args.updates_per_round {
        config.train.run.updates_per_round = v;
    }
    if let Some(v) = args.epoch_episodes {
        config.train.run.epoch_episodes = v;
    }
    if let Some(v) = args.pretrain_iters {
        config.train.run.pretrain_iters = v;
    }
    if config.train.run.episodes == 0 {
        return Err(usage("episode budget must be positive (pass --episodes)"));
    }

    let source = if let Some(batch_path) = &args.batch {
        let batch = ScenarioBatch::load(batch_path)?;
        if batch.scenarios.is_empty() {
            bail!("batch {} has no scenarios", batch_path.display());
        }
        ScenarioSource::Fixed(batch.scenarios)
    } else if config.train.generate_count > 0 {
        ScenarioSource::Generated {
            params: config.gen.params.clone(),
            count: config.train.generate_count,
            seed: substream(args.seed, "train-scenarios"),
        }
    } else {
        return Err(usage(
            "no scenarios: pass --batch or set train.generate_count in the config",
        ));
    };

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let checkpoint_path = args.out.join("checkpoint.json");
    let buffer_path = args.out.join("buffer.jsonl");
    let log_path = args.out.join("train_log.csv");
    if args.resume.is_none() {
        refuse_overwrite(&checkpoint_path, args.force)?;
    }

    let mut agent = match &args.resume {
        Some(checkpoint) => SacAgent::load(checkpoint)
            .with_context(|| format!("resuming from {}", checkpoint.display()))?,
        None => SacAgent::new(config.sac.clone(), substream(args.seed, "train"))?,
    };
    let mut buffer = if let Some(demos) = &args.pretrain_buffer {
        ReplayBuffer::load(demos)
            .with_context(|| format!("loading demonstrations {}", demos.display()))?
    } else if let Some(checkpoint) = &args.resume {
        let sibling = checkpoint.parent().unwrap_or(Path::new(".")).join("buffer.jsonl");
        if sibling.exists() {
            ReplayBuffer::load(&sibling)
                .with_context(|| format!("restoring buffer {}", sibling.display()))?
        } else {
            ReplayBuffer::new(config.train.buffer_capacity)
        }
    } else {
        ReplayBuffer::new(config.train.buffer_capacity)
    };

    config.echo(&args.out.join("config.toml"))?;

    let started = Instant::now();
    let resumed_at = agent.episodes_done;
    let mut rows: Vec<EpisodeRow> = Vec::new();
    let mut checkpoint_failure: Option<anyhow::Error> = None;
    let report = train_loop(
        &mut agent,
        &mut buffer,
        &source,
        &config.train.run,
        |event| match event {
            TrainEvent::EpisodeEnd(row) => {
                rows.push(row.clone());
                TrainControl::Continue
            }
            TrainEvent::EpochEnd {
                epoch,
                success_rate,
                stage,
                agent,
                buffer,
            } => {
                println!(
                    "epoch {epoch}: stage {stage}, success rate {:.2}, {} episodes, {:.1}s",
                    success_rate,
                    rows.len(),
                    started.elapsed().as_secs_f64()
                );
                let saved = agent
                    .save(&checkpoint_path)
                    .map_err(anyhow::Error::new)
                    .and_then(|()| buffer.save(&buffer_path).map_err(anyhow::Error::new))
                    .and_then(|()| write_train_log(&log_path, &rows));
                match saved {
                    Ok(()) => TrainControl::Continue,
                    Err(e) => {
                        checkpoint_failure = Some(e);
                        TrainControl::Stop
                    }
                }
            }
        },
    )?;
    if let Some(e) = checkpoint_failure {
        return Err(e.context("checkpointing failed mid-run"));
    }

    agent.save(&checkpoint_path)?;
    buffer.save(&buffer_path)?;
    write_train_log(&log_path, &report.rows)?;

    let goals = report
        .rows
        .iter()
        .filter(|r| r.status == SimStatus::Goal)
        .count();
    println!(
        "trained {} episodes (lifetime {}, resumed at {}) in {:.1}s",
        report.episodes_run,
        agent.episodes_done,
        resumed_at,
        started.elapsed().as_secs_f64()
    );
    println!(
        "updates: {} ({} rounds), goals: {goals}/{}, final stage: {}{}",
        report.updates_run,
        report.updates_run / config.train.run.updates_per_round.max(1),
        report.rows.len(),
        report.final_stage,
        if report.stopped_early { ", stopped early" } else { "" }
    );
    println!("checkpoint: {}", checkpoint_path.display());
    Ok(())
}

fn write_train_log(path: &Path, rows: &[EpisodeRow]) -> Result<()> {
    let mut text =
        String::from("episode,scenario_index,stage,status,steps,collisions,reward_sum,goal_extension\n");
    for row in rows {
        text.push_str(&format!(
            "{},{},{},{:?},{},{},{},{}\n",
            row.episode,
            row.scenario_index,
            row.stage,
            row.status,
            row.steps,
            row.collisions,
            row.reward_sum,
            row.goal_extension
        ));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let mut config = RunConfig::load(args.config.as_deref())?;
    if let Some(reps) = args.reps {
        config.eval.repetitions = reps;
    }
    if let Some(maps) = args.maps {
        config.eval.maps = maps;
    }
    if let Some(tokens) = &args.controllers {
        config.eval.controllers = tokens
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect();
    }
    if config.eval.controllers.is_empty() {
        return Err(usage("no controllers selected (pass --controllers)"));
    }
    if config.eval.repetitions == 0 {
        return Err(usage("repetitions must be positive (pass --reps)"));
    }

    let batch = ScenarioBatch::load(&args.batch)?;
    let mut scenarios = batch.scenarios;
    if config.eval.maps > 0 {
        scenarios.truncate(config.eval.maps);
    }
    if scenarios.is_empty() {
        bail!("batch {} has no scenarios", args.batch.display());
    }

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let records_path = args.out.join("records.csv");
    let metrics_path = args.out.join("metrics.csv");
    refuse_overwrite(&records_path, args.force)?;
    refuse_overwrite(&metrics_path, args.force)?;

    let controllers = config
        .eval
        .controllers
        .iter()
        .map(|token| build_controller(token))
        .collect::<Result<Vec<_>>>()?;

    let started = Instant::now();
    let records = run_suite(
        &controllers,
        &scenarios,
        config.eval.repetitions,
        substream(args.seed, "eval"),
        &config.sim,
    )?;
    let table = aggregate(&records);
    write_records_csv(&records_path, &records)?;
    write_metrics_csv(&metrics_path, &table)?;
    config.echo(&args.out.join("config.toml"))?;

    print!("{}", format_table(&table));
    println!(
        "{} episodes ({} controllers x {} scenarios x {} reps) in {:.1}s",
        records.len(),
        controllers.len(),
        scenarios.len(),
        config.eval.repetitions,
        started.elapsed().as_secs_f64()
    );
    println!("records: {}", records_path.display());
    Ok(())
}

/// `ftg` and `hybrid-astar` are built in; anything path-shaped is loaded as
/// a policy checkpoint and labeled by its file stem.
fn build_controller(token: &str) -> Result<BenchController<'static>> {
    match token {
        "ftg" => Ok(BenchController::new("ftg", |s: &Scenario| {
            Box::new(FtgController::new(s.vehicle, FtgParams::default())) as Box<dyn Controller>
        })),
        "hybrid-astar" => Ok(BenchController::new("hybrid-astar", |s: &Scenario| {
            Box::new(HybridAstarController::new(
                s,
                HybridAstarParams::default(),
                PursuitParams::default(),
            )) as Box<dyn Controller>
        })),
        path if path.contains('/') || path.contains('.') => {
            let path = PathBuf::from(path);
            let agent = SacAgent::load(&path)
                .with_context(|| format!("loading checkpoint {}", path.display()))?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "policy".into());
            Ok(BenchController::new(id, move |_: &Scenario| {
                Box::new(PolicyController::new(agent.clone())) as Box<dyn Controller>
            }))
        }
        other => Err(usage(format!(
            "unknown controller {other:?} (expected ftg, hybrid-astar, or a checkpoint path)"
        ))),
    }
}

pub fn render(args: &RenderArgs) -> Result<()> {
    let batch = ScenarioBatch::load(&args.batch)?;
    let scenario = find_scenario(&batch, &args.id, &args.batch)?;
    let trace = match &args.trajectory {
        Some(path) => Some(
            read_trajectory_csv(path)
                .with_context(|| format!("reading trajectory {}", path.display()))?,
        ),
        None => None,
    };
    refuse_overwrite(&args.out, args.force)?;
    save_svg(&args.out, scenario, trace.as_deref())?;
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn gen_demos(args: &GenDemosArgs) -> Result<()> {
    let config = RunConfig::load(args.config.as_deref())?;
    let batch = ScenarioBatch::load(&args.batch)?;
    if batch.scenarios.is_empty() {
        bail!("batch {} has no scenarios", args.batch.display());
    }
    refuse_overwrite(&args.out, args.force)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }

    let mut buffer = ReplayBuffer::new(config.train.buffer_capacity);
    let mut goals = 0;
    for scenario in &batch.scenarios {
        if push_seed_demo(&mut buffer, scenario, &config)? {
            goals += 1;
        }
    }
    buffer.save(&args.out)?;
    println!(
        "wrote {} transitions from {} escapes ({} reached the goal) to {}",
        buffer.len(),
        batch.scenarios.len(),
        goals,
        args.out.display()
    );
    Ok(())
}

/// Drive one recorded escape through the simulator, storing each step as a
/// normalized transition exactly as the training loop would see it.
fn push_seed_demo(
    buffer: &mut ReplayBuffer,
    scenario: &Scenario,
    config: &RunConfig,
) -> Result<bool> {
    let sim_config = SimConfig {
        max_steps: scenario.seed.total_steps() + 50,
        ..SimConfig::default()
    };
    let mut sim = Simulation::new(scenario.clone(), sim_config)?;
    let goal = sim.goal();
    let spec = scenario.vehicle;
    let scan = sim.lidar();
    let mut obs = build_observation(&scan, &sim.state().pose, &goal, 0.0, 0.0)?;

    'phases: for phase in &scenario.seed.phases {
        for _ in 0..phase.steps() {
            let action = Action {
                v: phase.v / spec.v_max,
                steer: phase.steer / spec.max_steer,
            };
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
            buffer.push(Transition {
                obs,
                action,
                reward: compute_reward(&config.train.run.rewards, &signal),
                next_obs: next_obs.clone(),
                done: is_terminal(report.status),
            });
            obs = next_obs;
            if report.status != SimStatus::Running {
                break 'phases;
            }
        }
    }
    Ok(sim.status() == SimStatus::Goal)
}

//! End-to-end runs of the `deadend` binary: every subcommand against real
//! generated batches, plus the exit-code contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn deadend(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deadend"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn assert_status(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        stdout(out),
        stderr(out)
    );
}

/// Generate a small batch once per test that needs one.
fn gen_batch(dir: &Path, count: usize, seed: &str) -> PathBuf {
    let out = deadend(&[
        "gen",
        "--out",
        dir.to_str().unwrap(),
        "--count",
        &count.to_string(),
        "--seed",
        seed,
    ]);
    assert_status(&out, 0);
    dir.join("batch.json")
}

#[test]
fn gen_writes_batch_svgs_and_config_deterministically() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = deadend(&[
            "gen",
            "--out",
            dir.to_str().unwrap(),
            "--count",
            "3",
            "--variant",
            "walls",
            "--style",
            "corridor",
            "--seed",
            "7",
        ]);
        assert_status(&out, 0);
        assert!(stdout(&out).contains("wrote 3 scenarios"));
    }
    let batch_a = fs::read(a.join("batch.json")).unwrap();
    let batch_b = fs::read(b.join("batch.json")).unwrap();
    assert_eq!(batch_a, batch_b, "same seed must reproduce the batch");
    assert!(a.join("config.toml").exists());
    let svgs = fs::read_dir(&a)
        .unwrap()
        .filter(|e| {
            e.as_ref().unwrap().path().extension().map(|x| x == "svg") == Some(true)
        })
        .count();
    assert_eq!(svgs, 3, "one drawing per scenario");

    // A rerun into the same directory must refuse without --force.
    let refused = deadend(&["gen", "--out", a.to_str().unwrap(), "--count", "3", "--seed", "7"]);
    assert_status(&refused, 1);
    assert!(stderr(&refused).contains("--force"));
    let forced = deadend(&[
        "gen", "--out", a.to_str().unwrap(), "--count", "3", "--seed", "7", "--force",
    ]);
    assert_status(&forced, 0);
}

#[test]
fn replay_reports_the_witness_and_flags_sabotage() {
    let tmp = TempDir::new().unwrap();
    let batch_path = gen_batch(tmp.path(), 2, "21");
    let batch: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&batch_path).unwrap()).unwrap();
    let id = batch["scenarios"][0]["id"].as_str().unwrap().to_owned();

    let svg_path = tmp.path().join("replay.svg");
    let out = deadend(&[
        "replay",
        "--batch",
        batch_path.to_str().unwrap(),
        "--id",
        &id,
        "--svg",
        svg_path.to_str().unwrap(),
    ]);
    assert_status(&out, 0);
    let text = stdout(&out);
    assert!(text.contains("collisions: 0, goal: reached"), "got:\n{text}");
    let svg = fs::read_to_string(&svg_path).unwrap();
    assert!(svg.contains("class=\"trajectory\""));

    // Unknown ids are runtime failures.
    let missing = deadend(&[
        "replay",
        "--batch",
        batch_path.to_str().unwrap(),
        "--id",
        "nope",
    ]);
    assert_status(&missing, 1);

    // Sabotage the stored goal so the witness no longer reaches it.
    let mut doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&batch_path).unwrap()).unwrap();
    doc["scenarios"][0]["goal"]["center"]["x"] = serde_json::json!(999.0);
    fs::write(&batch_path, serde_json::to_string(&doc).unwrap()).unwrap();
    let bad = deadend(&[
        "replay",
        "--batch",
        batch_path.to_str().unwrap(),
        "--id",
        &id,
    ]);
    assert_status(&bad, 1);
    assert!(stdout(&bad).contains("goal: not reached"));
}

#[test]
fn train_checkpoints_and_resume_continues_the_episode_counter() {
    let tmp = TempDir::new().unwrap();
    let batch_path = gen_batch(&tmp.path().join("maps"), 2, "33");
    let run = tmp.path().join("run");
    // A tiny batch size guarantees every update round actually runs (the
    // default of 40 can leave the first rounds skipped on a cold buffer).
    let cfg = tmp.path().join("small.toml");
    fs::write(&cfg, "[sac]\nbatch_size = 2\nhidden = [16]\n").unwrap();
    let out = deadend(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--batch",
        batch_path.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--episodes",
        "4",
        "--update-every",
        "2",
        "--updates-per-round",
        "2",
        "--epoch-episodes",
        "2",
        "--seed",
        "5",
    ]);
    assert_status(&out, 0);
    let text = stdout(&out);
    assert!(text.contains("updates: 4 (2 rounds)"), "got:\n{text}");
    assert!(run.join("checkpoint.json").exists());
    assert!(run.join("buffer.jsonl").exists());
    assert!(run.join("config.toml").exists());
    let log = fs::read_to_string(run.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 5, "header plus one row per episode");

    // Restarting without --resume or --force must refuse.
    let refused = deadend(&[
        "train",
        "--batch",
        batch_path.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--episodes",
        "2",
    ]);
    assert_status(&refused, 1);

    let resumed = deadend(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--batch",
        batch_path.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--episodes",
        "2",
        "--update-every",
        "2",
        "--updates-per-round",
        "2",
        "--resume",
        run.join("checkpoint.json").to_str().unwrap(),
        "--seed",
        "5",
    ]);
    assert_status(&resumed, 0);
    let text = stdout(&resumed);
    assert!(
        text.contains("lifetime 6, resumed at 4"),
        "episode counter must carry on: {text}"
    );
}

#[test]
fn train_without_scenarios_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = deadend(&[
        "train",
        "--out",
        tmp.path().join("run").to_str().unwrap(),
        "--episodes",
        "1",
    ]);
    assert_status(&out, 2);
    let zero = deadend(&[
        "train",
        "--out",
        tmp.path().join("run2").to_str().unwrap(),
        "--episodes",
        "0",
    ]);
    assert_status(&zero, 2);
}

#[test]
fn eval_runs_the_full_grid_and_writes_both_csvs() {
    let tmp = TempDir::new().unwrap();
    let batch_path = gen_batch(&tmp.path().join("maps"), 3, "44");
    let out_dir = tmp.path().join("eval");
    let out = deadend(&[
        "eval",
        "--batch",
        batch_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--controllers",
        "ftg",
        "--maps",
        "2",
        "--reps",
        "3",
        "--seed",
        "9",
    ]);
    assert_status(&out, 0);
    let text = stdout(&out);
    assert!(
        text.contains("6 episodes (1 controllers x 2 scenarios x 3 reps)"),
        "got:\n{text}"
    );
    assert!(text.contains("ftg"), "table row for the controller:\n{text}");
    let records = fs::read_to_string(out_dir.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 7, "header plus one row per episode");
    let metrics = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 2, "header plus one controller row");

    let unknown = deadend(&[
        "eval",
        "--batch",
        batch_path.to_str().unwrap(),
        "--out",
        tmp.path().join("eval2").to_str().unwrap(),
        "--controllers",
        "bogus",
    ]);
    assert_status(&unknown, 2);

    let missing = deadend(&[
        "eval",
        "--batch",
        batch_path.to_str().unwrap(),
        "--out",
        tmp.path().join("eval3").to_str().unwrap(),
        "--controllers",
        "no/such/checkpoint.json",
    ]);
    assert_status(&missing, 1);
}

#[test]
fn eval_scores_a_trained_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let batch_path = gen_batch(&tmp.path().join("maps"), 1, "55");
    let run = tmp.path().join("run");
    let trained = deadend(&[
        "train",
        "--batch",
        batch_path.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--episodes",
        "1",
        "--updates-per-round",
        "1",
        "--seed",
        "2",
    ]);
    assert_status(&trained, 0);
    let out = deadend(&[
        "eval",
        "--batch",
        batch_path.to_str().unwrap(),
        "--out",
        tmp.path().join("eval").to_str().unwrap(),
        "--controllers",
        run.join("checkpoint.json").to_str().unwrap(),
        "--reps",
        "1",
    ]);
    assert_status(&out, 0);
    assert!(stdout(&out).contains("checkpoint"), "row labeled by file stem");
}

#[test]
fn render_overlays_a_replayed_trajectory() {
    let tmp = TempDir::new().unwrap();
    let batch_path = gen_batch(tmp.path(), 1, "66");
    let batch: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&batch_path).unwrap()).unwrap();
    let id = batch["scenarios"][0]["id"].as_str().unwrap().to_owned();
    let svg_path = tmp.path().join("plain.svg");
    let out = deadend(&[
        "render",
        "--batch",
        batch_path.to_str().unwrap(),
        "--id",
        &id,
        "--out",
        svg_path.to_str().unwrap(),
    ]);
    assert_status(&out, 0);
    let svg = fs::read_to_string(&svg_path).unwrap();
    assert!(svg.contains("class=\"start\""));
    assert!(!svg.contains("class=\"trajectory\""));
}

#[test]
fn gen_demos_fills_a_loadable_buffer() {
    let tmp = TempDir::new().unwrap();
    let batch_path = gen_batch(tmp.path(), 2, "77");
    let demos = tmp.path().join("demos.jsonl");
    let out = deadend(&[
        "gen-demos",
        "--batch",
        batch_path.to_str().unwrap(),
        "--out",
        demos.to_str().unwrap(),
    ]);
    assert_status(&out, 0);
    let text = stdout(&out);
    assert!(text.contains("2 escapes (2 reached the goal)"), "got:\n{text}");

    // The buffer must feed straight back into training as a warm start.
    let run = tmp.path().join("run");
    let trained = deadend(&[
        "train",
        "--batch",
        batch_path.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--episodes",
        "1",
        "--update-every",
        "1",
        "--updates-per-round",
        "1",
        "--pretrain-buffer",
        demos.to_str().unwrap(),
        "--pretrain-iters",
        "3",
        "--seed",
        "4",
    ]);
    assert_status(&trained, 0);
    assert!(stdout(&trained).contains("updates: 4"), "3 pretrain + 1 round");
}

#[test]
fn config_file_drives_runs_and_bad_configs_exit_two() {
    let tmp = TempDir::new().unwrap();
    let config_path = tmp.path().join("run.toml");
    fs::write(
        &config_path,
        "schema_version = 1\n[gen]\ncount = 2\n[gen.params]\nn_phases = 8\n",
    )
    .unwrap();
    let dir = tmp.path().join("g");
    let out = deadend(&[
        "gen",
        "--out",
        dir.to_str().unwrap(),
        "--config",
        config_path.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert_status(&out, 0);
    assert!(stdout(&out).contains("wrote 2 scenarios"));
    let echoed = fs::read_to_string(dir.join("config.toml")).unwrap();
    assert!(echoed.contains("n_phases = 8"), "echo keeps overrides:\n{echoed}");

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "schema_version = 99\n").unwrap();
    let out = deadend(&[
        "gen",
        "--out",
        tmp.path().join("g2").to_str().unwrap(),
        "--config",
        bad.to_str().unwrap(),
    ]);
    assert_status(&out, 2);

    let malformed = tmp.path().join("broken.toml");
    fs::write(&malformed, "this is not toml = = =\n").unwrap();
    let out = deadend(&[
        "gen",
        "--out",
        tmp.path().join("g3").to_str().unwrap(),
        "--config",
        malformed.to_str().unwrap(),
    ]);
    assert_status(&out, 2);
}

#[test]
fn bad_flags_exit_two() {
    let out = deadend(&["gen", "--no-such-flag"]);
    assert_status(&out, 2);
    let out = deadend(&["frobnicate"]);
    assert_status(&out, 2);
}

//! Command implementations behind the `pursuit` binary.
//!
//! Exit-code contract: 0 success, 2 usage/config/data problems, 3 numeric
//! divergence during training. Every run directory carries a manifest with
//! the resolved config snapshot; re-running the same command reproduces the
//! metrics files bitwise.

use crate::approximator::checkpoint::{load_checkpoint, save_checkpoint};
use crate::arena::{load_scenario_file, serialize_scenario, Scenario};
use crate::engine::{self, EpisodeRecord, Metrics};
use crate::error::{Error, Result};
use crate::learner::AgentNets;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

pub const METRICS_SCHEMA: u32 = 1;

#[derive(Clone, Debug)]
pub struct TrainArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub ablate_proficiency: bool,
}

#[derive(Clone, Debug)]
pub struct EvalArgs {
    pub config: PathBuf,
    pub checkpoint: PathBuf,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub ablate_proficiency: bool,
    pub out: PathBuf,
}

#[derive(Clone, Debug)]
pub struct PlotdataArgs {
    pub runs: Vec<PathBuf>,
    pub window: usize,
    pub out: PathBuf,
}

#[derive(Clone, Debug)]
pub struct InspectArgs {
    pub config: PathBuf,
}

/// Run metadata written into every output directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub command: String,
    pub config_path: String,
    /// Resolved scenario snapshot (TOML); loading it reproduces the run.
    pub config_toml: String,
    pub seed: u64,
    pub git_describe: String,
    pub out_dir: String,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_USAGE,
    }
}

fn report(e: &Error) -> i32 {
    eprintln!("error: {e}");
    exit_code(e)
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

/// The "without proficiency awareness" baseline: zero every position-reward
/// magnitude and homogenize observation ranges to the roster mean. Returns
/// human-readable config-diff lines.
pub fn ablate_proficiency(scenario: &mut Scenario) -> Vec<String> {
    let mut diff = Vec::new();
    let mean_radius = scenario
        .roster
        .iter()
        .map(|r| r.perception_radius)
        .sum::<f64>()
        / scenario.roster.len() as f64;
    for spec in &mut scenario.roster {
        if spec.perception_radius != mean_radius {
            diff.push(format!(
                "robots[{}].perception_radius: {} -> {}",
                spec.id, spec.perception_radius, mean_radius
            ));
            spec.perception_radius = mean_radius;
        }
    }
    for (key, slot) in [
        ("reward.lawn_penalty", &mut scenario.reward.lawn_penalty),
        ("reward.edge_penalty", &mut scenario.reward.edge_penalty),
        ("reward.safety_penalty", &mut scenario.reward.safety_penalty),
    ] {
        if *slot != 0.0 {
            diff.push(format!("{key}: {} -> 0", *slot));
            *slot = 0.0;
        }
    }
    diff
}

fn load_for_run(config: &Path, seed: Option<u64>, ablate: bool) -> Result<Scenario> {
    let mut scenario = load_scenario_file(config)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    if ablate {
        println!("ablation config diff:");
        for line in ablate_proficiency(&mut scenario) {
            println!("  {line}");
        }
    }
    Ok(scenario)
}

fn write_manifest(
    command: &str,
    config_path: &Path,
    scenario: &Scenario,
    out_dir: &Path,
) -> Result<()> {
    let manifest = RunManifest {
        schema: METRICS_SCHEMA,
        command: command.to_string(),
        config_path: config_path.display().to_string(),
        config_toml: serialize_scenario(scenario),
        seed: scenario.seed,
        git_describe: git_describe(),
        out_dir: out_dir.display().to_string(),
    };
    let path = out_dir.join("manifest.json");
    let file = File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &manifest)
        .map_err(|e| Error::validation(format!("manifest serialization: {e}")))?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct MetricsRow {
    schema: u32,
    #[serde(flatten)]
    record: EpisodeRecordOwned,
}

/// Deserializable twin of `engine::EpisodeRecord` for round-tripping the
/// JSON-lines log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecordOwned {
    pub episode: u32,
    pub returns: Vec<f64>,
    pub mean_reward: f64,
    pub success: bool,
    pub captures: usize,
    pub arrivals: usize,
    pub steps_used: u32,
    pub noise: f64,
}

impl From<&EpisodeRecord> for EpisodeRecordOwned {
    fn from(r: &EpisodeRecord) -> Self {
        EpisodeRecordOwned {
            episode: r.episode,
            returns: r.returns.clone(),
            mean_reward: r.mean_reward,
            success: r.success,
            captures: r.captures,
            arrivals: r.arrivals,
            steps_used: r.steps_used,
            noise: r.noise,
        }
    }
}

/// Read the per-episode mean rewards out of a run directory.
pub fn read_run_mean_rewards(run_dir: &Path) -> Result<Vec<f64>> {
    let path = run_dir.join("metrics.jsonl");
    let file = File::open(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: MetricsRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
            key: format!("{}:{}", path.display(), i + 1),
            message: e.to_string(),
        })?;
        out.push(row.record.mean_reward);
    }
    Ok(out)
}

fn train_inner(args: &TrainArgs) -> Result<()> {
    let scenario = load_for_run(&args.config, args.seed, args.ablate_proficiency)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::io(args.out.display().to_string(), e))?;
    write_manifest("train", &args.config, &scenario, &args.out)?;

    let jsonl_path = args.out.join("metrics.jsonl");
    let csv_path = args.out.join("metrics.csv");
    let mut jsonl = BufWriter::new(
        File::create(&jsonl_path).map_err(|e| Error::io(jsonl_path.display().to_string(), e))?,
    );
    let mut csv = csv::Writer::from_writer(BufWriter::new(
        File::create(&csv_path).map_err(|e| Error::io(csv_path.display().to_string(), e))?,
    ));
    csv.write_record(["episode", "mean_reward", "success", "captures"])
        .map_err(|e| Error::validation(format!("csv: {e}")))?;

    let out_dir = args.out.clone();
    let scenario = Arc::new(scenario);
    let report = engine::train(
        &scenario,
        |record| {
            let row = MetricsRow {
                schema: METRICS_SCHEMA,
                record: record.into(),
            };
            let line = serde_json::to_string(&row)
                .map_err(|e| Error::validation(format!("jsonl serialization: {e}")))?;
            writeln!(jsonl, "{line}").map_err(|e| Error::io("metrics.jsonl", e))?;
            csv.write_record([
                record.episode.to_string(),
                record.mean_reward.to_string(),
                record.success.to_string(),
                record.captures.to_string(),
            ])
            .map_err(|e| Error::validation(format!("csv: {e}")))?;
            Ok(())
        },
        |episode, nets| {
            let entries = nets.to_checkpoint_entries();
            save_checkpoint(&entries, &out_dir.join(format!("ckpt_ep{episode:06}.bin")))?;
            // Refreshed alias for the most recent checkpoint.
            save_checkpoint(&entries, &out_dir.join("checkpoint.bin"))?;
            Ok(())
        },
    )?;

    jsonl.flush().map_err(|e| Error::io("metrics.jsonl", e))?;
    csv.flush().map_err(|e| Error::io("metrics.csv", e))?;
    let final_reward = report.records.last().map(|r| r.mean_reward);
    println!(
        "trained {} episodes in {:.1}s (final mean reward: {})",
        report.records.len(),
        report.wall_clock.as_secs_f64(),
        final_reward.map_or("n/a".into(), |r| format!("{r:.3}")),
    );
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> i32 {
    match train_inner(args) {
        Ok(()) => EXIT_OK,
        Err(e) => report(&e),
    }
}

fn print_metrics_table(scenario: &Scenario, m: &Metrics) {
    println!("{:<28} {:>12}", "metric", "value");
    println!("{:<28} {:>12}", "episodes", m.episodes);
    println!("{:<28} {:>12.4}", "task_success_rate", m.task_success_rate);
    println!("{:<28} {:>12.4}", "mean_episode_reward", m.mean_episode_reward);
    println!("{:<28} {:>12.4}", "police_mean_reward", m.police_mean_reward);
    println!("{:<28} {:>12.4}", "criminal_mean_reward", m.criminal_mean_reward);
    println!("{:<28} {:>12.4}", "ci_half_width", m.ci_half_width);
    for (id, rate) in &m.capture_engagement_rate {
        println!("{:<28} {:>12.4}", format!("engagement_rate.{id}"), rate);
    }
    if m.no_capture_events {
        println!("note: no capture events occurred; engagement rates are 0 by convention");
    }
    let _ = scenario;
}

/// Serialize metrics as long-format CSV (`metric,value`).
pub fn write_metrics_csv(m: &Metrics, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?,
    ));
    let mut put = |k: &str, v: String| {
        w.write_record([k, &v])
            .map_err(|e| Error::validation(format!("csv: {e}")))
    };
    put("schema", METRICS_SCHEMA.to_string())?;
    put("episodes", m.episodes.to_string())?;
    put("task_success_rate", m.task_success_rate.to_string())?;
    put("mean_episode_reward", m.mean_episode_reward.to_string())?;
    put("police_mean_reward", m.police_mean_reward.to_string())?;
    put("criminal_mean_reward", m.criminal_mean_reward.to_string())?;
    put("ci_half_width", m.ci_half_width.to_string())?;
    put("no_capture_events", m.no_capture_events.to_string())?;
    for (id, rate) in &m.capture_engagement_rate {
        put(&format!("engagement_rate.{id}"), rate.to_string())?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Parse the long-format metrics CSV back into key/value pairs.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<(String, String)>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::validation(format!("csv read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| Error::validation(format!("csv: {e}")))?;
        out.push((record[0].to_string(), record[1].to_string()));
    }
    Ok(out)
}

fn eval_inner(args: &EvalArgs) -> Result<Metrics> {
    if args.episodes == 0 {
        return Err(Error::Usage("--episodes must be >= 1".into()));
    }
    if args.seeds.is_empty() {
        return Err(Error::Usage("--seeds must list at least one seed".into()));
    }
    let scenario = load_for_run(&args.config, None, args.ablate_proficiency)?;
    let entries = load_checkpoint(&args.checkpoint)?;
    let nets = AgentNets::from_checkpoint_entries(entries, &scenario)?;
    let scenario = Arc::new(scenario);
    let metrics = engine::evaluate(&scenario, &nets, args.episodes, &args.seeds)?;
    print_metrics_table(&scenario, &metrics);
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::io(args.out.display().to_string(), e))?;
    write_metrics_csv(&metrics, &args.out.join("eval.csv"))?;
    write_manifest("eval", &args.config, &scenario, &args.out)?;
    Ok(metrics)
}

pub fn cmd_eval(args: &EvalArgs) -> i32 {
    match eval_inner(args) {
        Ok(_) => EXIT_OK,
        Err(e) => report(&e),
    }
}

/// Trailing moving average with window `w`.
fn smooth(values: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for t in 0..values.len() {
        acc += values[t];
        if t >= w {
            acc -= values[t - w];
        }
        let span = (t + 1).min(w);
        out.push(acc / span as f64);
    }
    out
}

/// Learning-curve data: per-episode smoothed means with a 95% band across
/// runs, as `episode,mean,lo,hi` rows.
pub fn plotdata_rows(runs: &[Vec<f64>], window: usize) -> Result<Vec<(u32, f64, f64, f64)>> {
    let Some(first) = runs.first() else {
        return Err(Error::Usage("plotdata needs at least one run".into()));
    };
    if runs.iter().any(|r| r.len() != first.len()) {
        return Err(Error::validation(format!(
            "episode counts differ across runs: {:?}",
            runs.iter().map(|r| r.len()).collect::<Vec<_>>()
        )));
    }
    let smoothed: Vec<Vec<f64>> = runs.iter().map(|r| smooth(r, window)).collect();
    let mut rows = Vec::with_capacity(first.len());
    for t in 0..first.len() {
        let at_t: Vec<f64> = smoothed.iter().map(|r| r[t]).collect();
        let (mean, half) = engine::mean_and_ci(&at_t);
        rows.push((t as u32, mean, mean - half, mean + half));
    }
    Ok(rows)
}

fn plotdata_inner(args: &PlotdataArgs) -> Result<()> {
    if args.window == 0 {
        return Err(Error::Usage("--window must be >= 1".into()));
    }
    let runs: Vec<Vec<f64>> = args
        .runs
        .iter()
        .map(|dir| read_run_mean_rewards(dir))
        .collect::<Result<_>>()?;
    let rows = plotdata_rows(&runs, args.window)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(
        File::create(&args.out).map_err(|e| Error::io(args.out.display().to_string(), e))?,
    ));
    w.write_record(["episode", "mean", "lo", "hi"])
        .map_err(|e| Error::validation(format!("csv: {e}")))?;
    for (episode, mean, lo, hi) in rows {
        w.write_record([
            episode.to_string(),
            mean.to_string(),
            lo.to_string(),
            hi.to_string(),
        ])
        .map_err(|e| Error::validation(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::io(args.out.display().to_string(), e))?;
    println!(
        "wrote {} ({} runs, window {})",
        args.out.display(),
        args.runs.len(),
        args.window
    );
    Ok(())
}

pub fn cmd_plotdata(args: &PlotdataArgs) -> i32 {
    match plotdata_inner(args) {
        Ok(()) => EXIT_OK,
        Err(e) => report(&e),
    }
}

fn inspect_inner(args: &InspectArgs) -> Result<()> {
    let s = load_scenario_file(&args.config)?;
    println!(
        "arena: {}×{} m (origin {}, {})",
        s.map.width, s.map.height, s.map.origin.x, s.map.origin.y
    );
    println!(
        "regions: {} | sois: {} | stations: {}",
        s.map.regions.len(),
        s.map.sois.len(),
        s.map.stations.len()
    );
    for r in &s.map.regions {
        println!("  {:?} with {} vertices", r.kind, r.polygon.len());
    }
    println!(
        "episode: horizon {}, dt {}, capture {} m (min {} police), sticky {}",
        s.horizon, s.dt, s.capture_distance, s.min_capturers, s.sticky_capture
    );
    println!("roster ({}):", s.roster.len());
    for r in &s.roster {
        println!(
            "  {:<12} {:?}/{:?} v_max {} a_max {} radius {}",
            r.id, r.team, r.kind, r.v_max, r.a_max, r.perception_radius
        );
    }
    println!(
        "train: {} episodes, batch {}, gamma {}, seed {}",
        s.train.episodes, s.train.batch, s.gamma, s.seed
    );
    Ok(())
}

pub fn cmd_inspect(args: &InspectArgs) -> i32 {
    match inspect_inner(args) {
        Ok(()) => EXIT_OK,
        Err(e) => report(&e),
    }
}

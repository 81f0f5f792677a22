//! Episode rollouts, metric aggregation and the training loop.
//!
//! One `Simulation` is a single-threaded episode stepper; evaluation fans
//! episodes out across a thread pool with per-episode seeds derived up
//! front, so results are independent of scheduling. `PURSUIT_ARENA_THREADS`
//! caps the pool.

use crate::arena::{sample_criminal_start, RegionKind, Scenario};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::learner::{train_step, AgentNets, ReplayBuffer, Transition, ACTION_DIM};
use crate::motion::{
    clamp_ugv_command, integrate_uav, integrate_ugv, resolve_position, RobotKind, Team, UavState,
    UgvState,
};
use crate::objective::{check_capture, check_soi_arrival, step_rewards, CaptureEvent, StepOutcome};
use crate::objective::{ArrivalEvent, RewardBreakdown};
use crate::perception::build_observation_idx;
use crate::state::{RobotBody, RobotState, WorldState};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::sync::Arc;
use std::time::{Duration, Instant};

/// Capture of one criminal with the step (1-based) it happened at.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaptureRecord {
    pub step: u32,
    pub criminal_id: String,
    pub capturer_ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArrivalRecord {
    pub step: u32,
    pub criminal_id: String,
    pub soi_index: usize,
}

/// Outcome of one episode. `returns` are undiscounted per-robot reward sums
/// in roster order; success means every criminal was captured with no SoI
/// arrival inside the horizon.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeResult {
    pub returns: Vec<f64>,
    pub capture_events: Vec<CaptureRecord>,
    pub arrival_events: Vec<ArrivalRecord>,
    pub success: bool,
    pub steps_used: u32,
}

/// What one call to `Simulation::step` produced.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub rewards: Vec<RewardBreakdown>,
    pub outcome: StepOutcome,
}

/// Single-episode stepper. State advances only through `step`, which is a
/// pure function of the current state, the joint action and the scenario —
/// randomness enters at `reset` alone.
pub struct Simulation {
    scenario: Arc<Scenario>,
    world: WorldState,
    step_count: u32,
    done: bool,
    returns: Vec<f64>,
    captured: Vec<bool>,
    capture_events: Vec<CaptureRecord>,
    arrival_events: Vec<ArrivalRecord>,
}

impl Simulation {
    pub fn new(scenario: Arc<Scenario>, seed: u64) -> Result<Self> {
        let n = scenario.roster.len();
        let mut sim = Simulation {
            scenario,
            world: WorldState { robots: Vec::new() },
            step_count: 0,
            done: false,
            returns: vec![0.0; n],
            captured: vec![false; n],
            capture_events: Vec::new(),
            arrival_events: Vec::new(),
        };
        sim.reset(seed)?;
        Ok(sim)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn done(&self) -> bool {
        self.done
    }

    pub fn steps_used(&self) -> u32 {
        self.step_count
    }

    /// Reinitialize: police on a fresh random station assignment, criminals
    /// at random valid ground starts.
    pub fn reset(&mut self, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scenario = Arc::clone(&self.scenario);
        let stations = &scenario.map.stations;
        let mut order: Vec<usize> = (0..stations.len()).collect();
        order.shuffle(&mut rng);

        let mut robots = Vec::with_capacity(scenario.roster.len());
        let mut police_seen = 0usize;
        for spec in &scenario.roster {
            let position = match spec.team {
                Team::Police => {
                    let slot = order[police_seen % order.len()];
                    police_seen += 1;
                    stations[slot]
                }
                Team::Criminal => sample_criminal_start(&scenario.map, &mut rng)?,
            };
            let body = match spec.kind {
                RobotKind::Uav => RobotBody::Uav(UavState {
                    position,
                    velocity: Vec2::ZERO,
                }),
                RobotKind::Ugv => RobotBody::Ugv(UgvState {
                    position,
                    heading: 0.0,
                    v_lin: 0.0,
                    v_ang: 0.0,
                }),
            };
            robots.push(RobotState { body, active: true });
        }
        self.world = WorldState { robots };
        self.step_count = 0;
        self.done = false;
        self.returns = vec![0.0; scenario.roster.len()];
        self.captured = vec![false; scenario.roster.len()];
        self.capture_events.clear();
        self.arrival_events.clear();
        Ok(())
    }

    /// Raw observations for every roster slot (zeros for inactive robots).
    pub fn observe_all(&self) -> Vec<Vec<f64>> {
        (0..self.scenario.roster.len())
            .map(|i| {
                if self.world.robots[i].active {
                    build_observation_idx(&self.scenario, &self.world, i)
                } else {
                    vec![0.0; crate::perception::observation_dim_idx(&self.scenario, i)]
                }
            })
            .collect()
    }

    /// Advance one step from normalized per-robot actions in [−1, 1]².
    pub fn step(&mut self, actions: &[Vec<f64>]) -> Result<StepRecord> {
        if self.done {
            return Err(Error::validation("episode already terminal"));
        }
        let scenario = Arc::clone(&self.scenario);
        if actions.len() != scenario.roster.len() {
            return Err(Error::Shape(format!(
                "joint action has {} entries, roster has {}",
                actions.len(),
                scenario.roster.len()
            )));
        }

        // Integrate motion; blocked moves keep the previous position.
        for (i, spec) in scenario.roster.iter().enumerate() {
            let slot = &mut self.world.robots[i];
            if !slot.active {
                continue;
            }
            let a = &actions[i];
            if a.len() != ACTION_DIM {
                return Err(Error::Shape(format!(
                    "action for `{}` has {} entries, expected {ACTION_DIM}",
                    spec.id,
                    a.len()
                )));
            }
            let (a0, a1) = (a[0].clamp(-1.0, 1.0), a[1].clamp(-1.0, 1.0));
            match &mut slot.body {
                RobotBody::Uav(state) => {
                    let accel = Vec2::new(a0, a1) * spec.a_max;
                    let mut next = integrate_uav(state, accel, scenario.dt, spec)?;
                    next.position =
                        resolve_position(&scenario.map, spec.kind, next.position, state.position);
                    *state = next;
                }
                RobotBody::Ugv(state) => {
                    let requested = (a0 * spec.v_max, a1 * spec.ang_max);
                    let cmd = clamp_ugv_command(state, requested, spec);
                    let on_lawn = scenario
                        .map
                        .point_in_kind(state.position, RegionKind::Lawn);
                    let factor = if on_lawn {
                        scenario.lawn_speed_factor
                    } else {
                        1.0
                    };
                    let mut next = integrate_ugv(state, cmd, scenario.dt, factor)?;
                    next.position =
                        resolve_position(&scenario.map, spec.kind, next.position, state.position);
                    *state = next;
                }
            }
        }
        self.step_count += 1;

        // Post-move outcomes over active robots.
        let police: Vec<(String, Vec2)> = scenario
            .roster
            .iter()
            .zip(&self.world.robots)
            .filter(|(spec, st)| spec.team == Team::Police && st.active)
            .map(|(spec, st)| (spec.id.clone(), st.body.position()))
            .collect();
        let mut outcome = StepOutcome::default();
        for (i, spec) in scenario.roster.iter().enumerate() {
            if spec.team != Team::Criminal || !self.world.robots[i].active {
                continue;
            }
            let pos = self.world.robots[i].body.position();
            if let Some(capturers) =
                check_capture(pos, &police, scenario.capture_distance, scenario.min_capturers)
            {
                outcome.captures.push(CaptureEvent {
                    criminal_id: spec.id.clone(),
                    capturers,
                });
            }
            // Arrival shares the capture proximity radius (one maximum
            // distance judges both kinds of closeness).
            if let Some(soi_index) =
                check_soi_arrival(pos, &scenario.map.sois, scenario.capture_distance)
            {
                outcome.arrivals.push(ArrivalEvent {
                    criminal_id: spec.id.clone(),
                    soi_index,
                });
            }
        }

        // Rewards see pre-removal active flags.
        let rewards = step_rewards(&self.world, &outcome, &scenario)?;
        for (acc, r) in self.returns.iter_mut().zip(&rewards) {
            *acc += r.total;
        }

        for e in &outcome.captures {
            let idx = scenario.robot_index(&e.criminal_id)?;
            self.captured[idx] = true;
            if !scenario.sticky_capture {
                self.world.robots[idx].active = false;
            }
            self.capture_events.push(CaptureRecord {
                step: self.step_count,
                criminal_id: e.criminal_id.clone(),
                capturer_ids: e.capturers.iter().cloned().collect(),
            });
        }
        for e in &outcome.arrivals {
            self.arrival_events.push(ArrivalRecord {
                step: self.step_count,
                criminal_id: e.criminal_id.clone(),
                soi_index: e.soi_index,
            });
        }

        let all_captured = scenario
            .roster
            .iter()
            .enumerate()
            .filter(|(_, s)| s.team == Team::Criminal)
            .all(|(i, _)| self.captured[i]);
        let everyone_out = !scenario.sticky_capture && all_captured;
        outcome.terminal = !outcome.arrivals.is_empty()
            || everyone_out
            || self.step_count >= scenario.horizon;
        self.done = outcome.terminal;

        Ok(StepRecord { rewards, outcome })
    }

    pub fn result(&self) -> EpisodeResult {
        let all_captured = self
            .scenario
            .roster
            .iter()
            .enumerate()
            .filter(|(_, s)| s.team == Team::Criminal)
            .all(|(i, _)| self.captured[i]);
        EpisodeResult {
            returns: self.returns.clone(),
            capture_events: self.capture_events.clone(),
            arrival_events: self.arrival_events.clone(),
            success: all_captured && self.arrival_events.is_empty(),
            steps_used: self.step_count,
        }
    }
}

/// Roll one episode with the given policies. The environment seed comes off
/// `rng` first, then exploration noise consumes the stream step by step;
/// passing a buffer stores every transition.
pub fn run_episode(
    scenario: &Arc<Scenario>,
    nets: &AgentNets,
    rng: &mut ChaCha8Rng,
    noise_scale: f64,
    mut buffer: Option<&mut ReplayBuffer>,
) -> Result<EpisodeResult> {
    let env_seed: u64 = rng.random();
    let mut sim = Simulation::new(Arc::clone(scenario), env_seed)?;
    let mut obs = sim.observe_all();
    while !sim.done() {
        let mut actions = Vec::with_capacity(nets.len());
        for i in 0..nets.len() {
            if sim.world.robots[i].active {
                actions.push(nets.act_for(i, &obs[i], noise_scale, rng)?);
            } else {
                actions.push(vec![0.0; ACTION_DIM]);
            }
        }
        let step_index = sim.steps_used();
        let record = sim.step(&actions).map_err(|e| match e {
            Error::NumericInput(what) => {
                Error::NumericInput(format!("{what} at step {step_index}"))
            }
            other => other,
        })?;
        let next_obs = sim.observe_all();
        if let Some(buf) = buffer.as_deref_mut() {
            buf.store(Transition {
                obs: obs.clone(),
                actions,
                rewards: record.rewards.iter().map(|r| r.total).collect(),
                next_obs: next_obs.clone(),
                terminal: record.outcome.terminal,
            });
        }
        obs = next_obs;
    }
    Ok(sim.result())
}

/// Aggregate evaluation metrics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub mean_episode_reward: f64,
    pub police_mean_reward: f64,
    pub criminal_mean_reward: f64,
    pub task_success_rate: f64,
    /// (robot id, fraction of capture events it participated in).
    pub capture_engagement_rate: Vec<(String, f64)>,
    pub episodes: usize,
    /// 95% half-width over per-seed mean episode rewards.
    pub ci_half_width: f64,
    /// True when no capture events occurred anywhere (engagements are then
    /// reported as 0, not a division error).
    pub no_capture_events: bool,
}

/// Thread cap: `PURSUIT_ARENA_THREADS`, else the machine's parallelism.
pub fn max_threads() -> usize {
    std::env::var("PURSUIT_ARENA_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(max_threads().min(jobs.max(1)))
        .build()
        .expect("thread pool")
}

fn t_quantile_975(df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("valid dof")
        .inverse_cdf(0.975)
}

/// Mean and 95% half-width (Student-t) over independent values.
pub fn mean_and_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let half = t_quantile_975((n - 1) as f64) * (var / n as f64).sqrt();
    (mean, half)
}

/// Noise-free evaluation: `episodes` rollouts per seed, all fanned out in
/// parallel with pre-derived seeds and merged in order.
pub fn evaluate(
    scenario: &Arc<Scenario>,
    nets: &AgentNets,
    episodes: usize,
    seeds: &[u64],
) -> Result<Metrics> {
    let per_seed = evaluate_detailed(scenario, nets, episodes, seeds)?;
    Ok(aggregate_metrics(scenario, &per_seed))
}

/// Evaluation rollouts grouped by seed.
pub fn evaluate_detailed(
    scenario: &Arc<Scenario>,
    nets: &AgentNets,
    episodes: usize,
    seeds: &[u64],
) -> Result<Vec<Vec<EpisodeResult>>> {
    use rayon::prelude::*;
    let mut jobs = Vec::new();
    for (si, &seed) in seeds.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..episodes {
            jobs.push((si, rng.random::<u64>()));
        }
    }
    let results: Vec<(usize, Result<EpisodeResult>)> = pool(jobs.len()).install(|| {
        jobs.par_iter()
            .map(|&(si, ep_seed)| {
                let mut rng = ChaCha8Rng::seed_from_u64(ep_seed);
                (si, run_episode(scenario, nets, &mut rng, 0.0, None))
            })
            .collect()
    });
    let mut per_seed: Vec<Vec<EpisodeResult>> = vec![Vec::new(); seeds.len()];
    for (si, r) in results {
        per_seed[si].push(r?);
    }
    Ok(per_seed)
}

/// Fold episode results into `Metrics`; a second, independent pass over the
/// same results must reproduce these numbers exactly.
pub fn aggregate_metrics(scenario: &Scenario, per_seed: &[Vec<EpisodeResult>]) -> Metrics {
    let all: Vec<&EpisodeResult> = per_seed.iter().flatten().collect();
    let episodes = all.len();
    let n_robots = scenario.roster.len();

    let episode_mean = |r: &EpisodeResult| r.returns.iter().sum::<f64>() / n_robots as f64;
    let team_mean = |r: &EpisodeResult, team: Team| {
        let idx = scenario.team_indices(team);
        idx.iter().map(|&i| r.returns[i]).sum::<f64>() / idx.len() as f64
    };

    let mean_of = |f: &dyn Fn(&EpisodeResult) -> f64| {
        if episodes == 0 {
            0.0
        } else {
            all.iter().map(|r| f(r)).sum::<f64>() / episodes as f64
        }
    };
    let mean_episode_reward = mean_of(&episode_mean);
    let police_mean_reward = mean_of(&|r| team_mean(r, Team::Police));
    let criminal_mean_reward = mean_of(&|r| team_mean(r, Team::Criminal));
    let successes = all.iter().filter(|r| r.success).count();

    let total_captures: usize = all.iter().map(|r| r.capture_events.len()).sum();
    let engagement: Vec<(String, f64)> = scenario
        .roster
        .iter()
        .map(|spec| {
            let count = all
                .iter()
                .flat_map(|r| &r.capture_events)
                .filter(|e| e.capturer_ids.iter().any(|id| id == &spec.id))
                .count();
            let rate = if total_captures == 0 {
                0.0
            } else {
                count as f64 / total_captures as f64
            };
            (spec.id.clone(), rate)
        })
        .collect();

    let seed_means: Vec<f64> = per_seed
        .iter()
        .filter(|rs| !rs.is_empty())
        .map(|rs| rs.iter().map(|r| episode_mean(r)).sum::<f64>() / rs.len() as f64)
        .collect();
    let (_, ci_half_width) = mean_and_ci(&seed_means);

    Metrics {
        mean_episode_reward,
        police_mean_reward,
        criminal_mean_reward,
        task_success_rate: if episodes == 0 {
            0.0
        } else {
            successes as f64 / episodes as f64
        },
        capture_engagement_rate: engagement,
        episodes,
        ci_half_width,
        no_capture_events: total_captures == 0,
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub episode: u32,
    pub returns: Vec<f64>,
    pub mean_reward: f64,
    pub success: bool,
    pub captures: usize,
    pub arrivals: usize,
    pub steps_used: u32,
    pub noise: f64,
}

#[derive(Debug)]
pub struct TrainingReport {
    pub records: Vec<EpisodeRecord>,
    pub nets: AgentNets,
    pub wall_clock: Duration,
}

/// Linear anneal from `start` to `end` across the run.
pub fn noise_at(episode: u32, episodes: u32, start: f64, end: f64) -> f64 {
    if episodes <= 1 {
        return start;
    }
    let t = episode as f64 / (episodes - 1) as f64;
    start + (end - start) * t
}

/// Full training loop: roll an episode with annealed exploration noise,
/// store transitions, then run the configured number of gradient steps.
/// `on_episode` streams rows out; `on_checkpoint` fires at the configured
/// cadence and once at the end. Divergence aborts with the error, leaving
/// previously written checkpoints in place.
pub fn train(
    scenario: &Arc<Scenario>,
    mut on_episode: impl FnMut(&EpisodeRecord) -> Result<()>,
    mut on_checkpoint: impl FnMut(u32, &AgentNets) -> Result<()>,
) -> Result<TrainingReport> {
    let start = Instant::now();
    let t = scenario.train.clone();
    let mut master = ChaCha8Rng::seed_from_u64(scenario.seed);
    let init_seed: u64 = master.random();
    let mut nets = AgentNets::new(scenario, &mut ChaCha8Rng::seed_from_u64(init_seed));
    let mut buffer = ReplayBuffer::new(t.capacity);
    let mut records = Vec::with_capacity(t.episodes as usize);

    for episode in 0..t.episodes {
        let noise = noise_at(episode, t.episodes, t.noise_start, t.noise_end);
        let result = run_episode(scenario, &nets, &mut master, noise, Some(&mut buffer))?;
        if buffer.len() >= t.batch {
            for _ in 0..t.updates_per_episode {
                train_step(&mut nets, &buffer, scenario, &mut master).map_err(|e| match e {
                    Error::Divergence { context, what } => Error::Divergence {
                        context: format!("episode {episode}, {context}"),
                        what,
                    },
                    other => other,
                })?;
            }
        }
        let record = EpisodeRecord {
            episode,
            mean_reward: result.returns.iter().sum::<f64>() / result.returns.len() as f64,
            returns: result.returns,
            success: result.success,
            captures: result.capture_events.len(),
            arrivals: result.arrival_events.len(),
            steps_used: result.steps_used,
            noise,
        };
        on_episode(&record)?;
        records.push(record);
        if t.checkpoint_every > 0 && (episode + 1) % t.checkpoint_every == 0 {
            on_checkpoint(episode + 1, &nets)?;
        }
    }
    on_checkpoint(t.episodes, &nets)?;

    Ok(TrainingReport {
        records,
        nets,
        wall_clock: start.elapsed(),
    })
}

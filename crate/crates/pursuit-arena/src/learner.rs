//! Centralized-training / decentralized-execution learner.
//!
//! Each robot owns a deterministic policy μ_i(o_i) and a centralized critic
//! Q_i(s, a) whose input concatenates every robot's observation and action,
//! plus target copies of both. Execution touches only the robot's own
//! observation; the joint information exists at training time only, which
//! is what keeps the regression targets stationary while all policies keep
//! changing.
//!
//! Updates are plain gradient steps: the critic regresses onto
//! y = r_i + γ·(1−terminal)·Q'_i(s', μ'(o')), the actor ascends the
//! deterministic policy gradient obtained by chaining ∂Q/∂a_i through μ_i.

use crate::approximator::checkpoint::CheckpointEntry;
use crate::approximator::{
    adam_step, apply_gradient, backward_traced, forward, forward_traced, soft_update, Activation,
    AdamState, GradientSet, MlpParams, Scratch,
};
use crate::arena::{Optimizer, Scenario};
use crate::error::{Error, Result};
use crate::motion::Team;
use crate::perception::{observation_dim_idx, observation_scales};
use rand::Rng;
use rand_distr::StandardNormal;

/// Both platform kinds steer with two normalized channels
/// (UAV: planar acceleration; UGV: linear/angular velocity request).
pub const ACTION_DIM: usize = 2;

/// One joint step: everything the centralized critic conditions on.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<Vec<f64>>,
    pub terminal: bool,
}

/// FIFO ring buffer of transitions.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            data: Vec::with_capacity(capacity.min(4096)),
            capacity,
            cursor: 0,
        }
    }

    pub fn store(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.cursor] = t;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.data[idx]
    }

    /// Uniform sample of `batch` indices (with replacement).
    pub fn sample_indices<R: Rng>(&self, rng: &mut R, batch: usize) -> Vec<usize> {
        (0..batch)
            .map(|_| rng.random_range(0..self.data.len()))
            .collect()
    }
}

/// Policy + critic (and their targets) for every roster slot.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentNets {
    pub robots: Vec<RobotNets>,
    pub obs_dims: Vec<usize>,
    pub act_dims: Vec<usize>,
    /// Per-robot, per-entry divisors applied to raw observations at the
    /// network boundary.
    pub obs_scales: Vec<Vec<f64>>,
    pub optimizer: Optimizer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobotNets {
    pub id: String,
    pub policy: MlpParams,
    pub policy_target: MlpParams,
    pub critic: MlpParams,
    pub critic_target: MlpParams,
    pub policy_opt: AdamState,
    pub critic_opt: AdamState,
}

impl AgentNets {
    /// Fresh nets sized from the scenario, seeded initialization.
    pub fn new<R: Rng>(scenario: &Scenario, rng: &mut R) -> Self {
        let n = scenario.roster.len();
        let obs_dims: Vec<usize> = (0..n).map(|i| observation_dim_idx(scenario, i)).collect();
        let act_dims = vec![ACTION_DIM; n];
        let critic_in: usize = obs_dims.iter().sum::<usize>() + act_dims.iter().sum::<usize>();
        let hidden = scenario.train.hidden;

        let robots = scenario
            .roster
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let policy = MlpParams::new(
                    &[obs_dims[i], hidden, hidden, act_dims[i]],
                    Activation::Relu,
                    Activation::Tanh,
                    rng,
                );
                let critic = MlpParams::new(
                    &[critic_in, hidden, hidden, 1],
                    Activation::Relu,
                    Activation::Linear,
                    rng,
                );
                RobotNets {
                    id: spec.id.clone(),
                    policy_target: policy.clone(),
                    critic_target: critic.clone(),
                    policy_opt: AdamState::zeros_like(&policy),
                    critic_opt: AdamState::zeros_like(&critic),
                    policy,
                    critic,
                }
            })
            .collect();

        AgentNets {
            robots,
            obs_dims,
            act_dims,
            obs_scales: obs_scales_for(scenario),
            optimizer: scenario.train.optimizer,
        }
    }

    pub fn len(&self) -> usize {
        self.robots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.robots.is_empty()
    }

    pub fn scale_obs(&self, robot: usize, obs: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        self.scale_obs_into(robot, obs, &mut out);
        out
    }

    fn scale_obs_into(&self, robot: usize, obs: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            obs.iter()
                .zip(&self.obs_scales[robot])
                .map(|(x, s)| x / s),
        );
    }

    /// Action for robot `i` from its raw observation.
    pub fn act_for<R: Rng>(
        &self,
        i: usize,
        raw_obs: &[f64],
        noise_scale: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        act(&self.robots[i].policy, &self.scale_obs(i, raw_obs), noise_scale, rng)
    }

    fn critic_input(&self, obs: &[Vec<f64>], actions: &[Vec<f64>]) -> Vec<f64> {
        let mut input = Vec::new();
        self.critic_input_into(obs, actions, &mut input);
        input
    }

    fn critic_input_into(&self, obs: &[Vec<f64>], actions: &[Vec<f64>], input: &mut Vec<f64>) {
        input.clear();
        for (j, o) in obs.iter().enumerate() {
            input.extend(o.iter().zip(&self.obs_scales[j]).map(|(x, s)| x / s));
        }
        for a in actions {
            input.extend_from_slice(a);
        }
    }

    fn action_offset(&self, i: usize) -> usize {
        self.obs_dims.iter().sum::<usize>() + self.act_dims[..i].iter().sum::<usize>()
    }

    pub fn to_checkpoint_entries(&self) -> Vec<CheckpointEntry> {
        self.robots
            .iter()
            .map(|r| CheckpointEntry {
                robot_id: r.id.clone(),
                policy: r.policy.clone(),
                policy_target: r.policy_target.clone(),
                critic: r.critic.clone(),
                critic_target: r.critic_target.clone(),
            })
            .collect()
    }

    /// Rebuild nets from checkpoint entries, validating ids and shapes
    /// against the scenario.
    pub fn from_checkpoint_entries(
        entries: Vec<CheckpointEntry>,
        scenario: &Scenario,
    ) -> Result<Self> {
        if entries.len() != scenario.roster.len() {
            return Err(Error::RosterMismatch(format!(
                "checkpoint has {} robots, scenario has {}",
                entries.len(),
                scenario.roster.len()
            )));
        }
        let n = scenario.roster.len();
        let obs_dims: Vec<usize> = (0..n).map(|i| observation_dim_idx(scenario, i)).collect();
        let act_dims = vec![ACTION_DIM; n];
        let critic_in: usize = obs_dims.iter().sum::<usize>() + act_dims.iter().sum::<usize>();

        let mut robots = Vec::with_capacity(n);
        for (i, e) in entries.into_iter().enumerate() {
            let expect = &scenario.roster[i].id;
            if &e.robot_id != expect {
                return Err(Error::RosterMismatch(format!(
                    "slot {i}: checkpoint robot `{}` vs scenario `{expect}`",
                    e.robot_id
                )));
            }
            for (net, input, output, name) in [
                (&e.policy, obs_dims[i], act_dims[i], "policy"),
                (&e.policy_target, obs_dims[i], act_dims[i], "policy target"),
                (&e.critic, critic_in, 1, "critic"),
                (&e.critic_target, critic_in, 1, "critic target"),
            ] {
                if net.input_dim() != input || net.output_dim() != output {
                    return Err(Error::Shape(format!(
                        "{name} for `{}` is {}→{}, scenario expects {}→{}",
                        e.robot_id,
                        net.input_dim(),
                        net.output_dim(),
                        input,
                        output
                    )));
                }
            }
            robots.push(RobotNets {
                policy_opt: AdamState::zeros_like(&e.policy),
                critic_opt: AdamState::zeros_like(&e.critic),
                id: e.robot_id,
                policy: e.policy,
                policy_target: e.policy_target,
                critic: e.critic,
                critic_target: e.critic_target,
            });
        }
        Ok(AgentNets {
            robots,
            obs_dims,
            act_dims,
            obs_scales: obs_scales_for(scenario),
            optimizer: scenario.train.optimizer,
        })
    }
}

/// Scale vectors for every roster slot; `train.obs_scale > 0` replaces the
/// per-feature scheme with one uniform divisor.
fn obs_scales_for(scenario: &Scenario) -> Vec<Vec<f64>> {
    let n = scenario.roster.len();
    if scenario.train.obs_scale > 0.0 {
        (0..n)
            .map(|i| vec![scenario.train.obs_scale; observation_dim_idx(scenario, i)])
            .collect()
    } else {
        (0..n).map(|i| observation_scales(scenario, i)).collect()
    }
}

/// μ(o) plus Gaussian exploration noise, clamped to [−1, 1] per component.
/// The downstream command mapping rescales to physical units.
pub fn act<R: Rng>(
    policy: &MlpParams,
    obs: &[f64],
    noise_scale: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut a = forward(policy, obs)?;
    if noise_scale > 0.0 {
        for x in &mut a {
            let z: f64 = rng.sample(StandardNormal);
            *x += noise_scale * z;
        }
    }
    for x in &mut a {
        *x = x.clamp(-1.0, 1.0);
    }
    Ok(a)
}

/// Target-policy actions a'_j = μ'_j(o'_j) for every transition of a batch.
/// They are the same for every robot's targets, so `train_step` computes
/// them once per batch.
pub fn target_next_actions(
    batch: &[&Transition],
    nets: &AgentNets,
) -> Result<Vec<Option<Vec<Vec<f64>>>>> {
    batch
        .iter()
        .map(|t| {
            if t.terminal {
                return Ok(None);
            }
            nets.robots
                .iter()
                .zip(&t.next_obs)
                .enumerate()
                .map(|(j, (rn, o))| forward(&rn.policy_target, &nets.scale_obs(j, o)))
                .collect::<Result<Vec<_>>>()
                .map(Some)
        })
        .collect()
}

fn critic_targets_from(
    batch: &[&Transition],
    nets: &AgentNets,
    robot: usize,
    gamma: f64,
    next_actions: &[Option<Vec<Vec<f64>>>],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(batch.len());
    for (t, acts) in batch.iter().zip(next_actions) {
        let r = t.rewards[robot];
        match acts {
            None => out.push(r),
            Some(next) => {
                let input = nets.critic_input(&t.next_obs, next);
                let q = forward(&nets.robots[robot].critic_target, &input)?[0];
                out.push(r + gamma * q);
            }
        }
    }
    Ok(out)
}

/// Regression targets y = r_i + γ·(1−terminal)·Q'_i(s', a') with every
/// next action drawn from the target policies.
pub fn critic_targets(
    batch: &[&Transition],
    nets: &AgentNets,
    robot: usize,
    gamma: f64,
) -> Result<Vec<f64>> {
    let next_actions = target_next_actions(batch, nets)?;
    critic_targets_from(batch, nets, robot, gamma, &next_actions)
}

/// Mean-squared-error loss and its exact gradient for robot `robot`'s
/// critic against fixed targets.
pub fn critic_loss_and_grads(
    nets: &AgentNets,
    robot: usize,
    batch: &[&Transition],
    targets: &[f64],
) -> Result<(f64, GradientSet)> {
    let critic = &nets.robots[robot].critic;
    let mut grads = GradientSet::zeros_like(critic);
    let mut scratch = Scratch::default();
    let mut input = Vec::new();
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for (t, y) in batch.iter().zip(targets) {
        nets.critic_input_into(&t.obs, &t.actions, &mut input);
        forward_traced(critic, &input, &mut scratch)?;
        let err = scratch.output()[0] - y;
        loss += err * err * scale;
        backward_traced(critic, &mut scratch, &[2.0 * err], Some(&mut grads), scale)?;
    }
    Ok((loss, grads))
}

/// Mean joint-critic value at a_i = μ_i(o_i) and its exact gradient with
/// respect to the policy parameters (other robots' actions from the batch).
pub fn actor_objective_and_grads(
    nets: &AgentNets,
    robot: usize,
    batch: &[&Transition],
) -> Result<(f64, GradientSet)> {
    let rn = &nets.robots[robot];
    let mut grads = GradientSet::zeros_like(&rn.policy);
    let mut policy_scratch = Scratch::default();
    let mut critic_scratch = Scratch::default();
    let mut scaled_obs = Vec::new();
    let mut input = Vec::new();
    let mut mean_q = 0.0;
    let scale = 1.0 / batch.len() as f64;
    let offset = nets.action_offset(robot);
    let act_dim = nets.act_dims[robot];
    for t in batch {
        nets.scale_obs_into(robot, &t.obs[robot], &mut scaled_obs);
        forward_traced(&rn.policy, &scaled_obs, &mut policy_scratch)?;
        // Joint critic input with this robot's slot replaced by μ(o).
        input.clear();
        for (j, o) in t.obs.iter().enumerate() {
            input.extend(o.iter().zip(&nets.obs_scales[j]).map(|(x, s)| x / s));
        }
        for (j, a) in t.actions.iter().enumerate() {
            if j == robot {
                input.extend_from_slice(policy_scratch.output());
            } else {
                input.extend_from_slice(a);
            }
        }
        forward_traced(&rn.critic, &input, &mut critic_scratch)?;
        mean_q += critic_scratch.output()[0] * scale;
        // ∂(mean Q)/∂input restricted to this robot's action slots, then
        // chained through the policy.
        backward_traced(&rn.critic, &mut critic_scratch, &[1.0], None, scale)?;
        let da = &critic_scratch.input_gradient()[offset..offset + act_dim];
        backward_traced(&rn.policy, &mut policy_scratch, da, Some(&mut grads), 1.0)?;
    }
    Ok((mean_q, grads))
}

fn clip(grads: &mut GradientSet, grad_clip: f64) {
    if grad_clip > 0.0 {
        let n = grads.norm();
        if n > grad_clip {
            grads.scale(grad_clip / n);
        }
    }
}

/// One critic regression step; returns the pre-step loss.
pub fn update_critic(
    nets: &mut AgentNets,
    robot: usize,
    batch: &[&Transition],
    gamma: f64,
    lr: f64,
    grad_clip: f64,
) -> Result<f64> {
    let targets = critic_targets(batch, nets, robot, gamma)?;
    update_critic_with_targets(nets, robot, batch, &targets, lr, grad_clip)
}

fn update_critic_with_targets(
    nets: &mut AgentNets,
    robot: usize,
    batch: &[&Transition],
    targets: &[f64],
    lr: f64,
    grad_clip: f64,
) -> Result<f64> {
    let (loss, mut grads) = critic_loss_and_grads(nets, robot, batch, targets)?;
    if !loss.is_finite() || !grads.is_finite() {
        return Err(Error::Divergence {
            context: format!("critic update for robot {robot}"),
            what: format!("loss = {loss}"),
        });
    }
    clip(&mut grads, grad_clip);
    let rn = &mut nets.robots[robot];
    match nets.optimizer {
        Optimizer::Adam => adam_step(&mut rn.critic, &grads, &mut rn.critic_opt, -lr),
        Optimizer::Sgd => apply_gradient(&mut rn.critic, &grads, -lr),
    }
    Ok(loss)
}

/// One policy ascent step; returns the pre-step mean Q estimate.
pub fn update_actor(
    nets: &mut AgentNets,
    robot: usize,
    batch: &[&Transition],
    lr: f64,
    grad_clip: f64,
) -> Result<f64> {
    let (objective, mut grads) = actor_objective_and_grads(nets, robot, batch)?;
    if !objective.is_finite() || !grads.is_finite() {
        return Err(Error::Divergence {
            context: format!("actor update for robot {robot}"),
            what: format!("objective = {objective}"),
        });
    }
    clip(&mut grads, grad_clip);
    let rn = &mut nets.robots[robot];
    match nets.optimizer {
        Optimizer::Adam => adam_step(&mut rn.policy, &grads, &mut rn.policy_opt, lr),
        Optimizer::Sgd => apply_gradient(&mut rn.policy, &grads, lr),
    }
    Ok(objective)
}

/// Per-robot losses from one `train_step` (None for frozen teams).
#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub critic_loss: Vec<Option<f64>>,
    pub actor_objective: Vec<Option<f64>>,
}

/// Sample one batch, update every learning robot's critic then actor, and
/// blend both target nets with τ.
pub fn train_step<R: Rng>(
    nets: &mut AgentNets,
    buffer: &ReplayBuffer,
    scenario: &Scenario,
    rng: &mut R,
) -> Result<StepDiagnostics> {
    let t = &scenario.train;
    if buffer.len() < t.batch {
        return Err(Error::BufferTooSmall {
            size: buffer.len(),
            batch: t.batch,
        });
    }
    let indices = buffer.sample_indices(rng, t.batch);
    let batch: Vec<&Transition> = indices.iter().map(|&i| buffer.get(i)).collect();
    // The target policies' next actions are shared by every robot's
    // regression targets; compute them once per batch.
    let next_actions = target_next_actions(&batch, nets)?;

    let mut diag = StepDiagnostics {
        critic_loss: vec![None; nets.len()],
        actor_objective: vec![None; nets.len()],
    };
    for i in 0..nets.len() {
        let learns = match scenario.roster[i].team {
            Team::Police => t.learn_police,
            Team::Criminal => t.learn_criminal,
        };
        if !learns {
            continue;
        }
        let targets = critic_targets_from(&batch, nets, i, scenario.gamma, &next_actions)?;
        diag.critic_loss[i] =
            Some(update_critic_with_targets(nets, i, &batch, &targets, t.lr_critic, t.grad_clip)?);
        diag.actor_objective[i] = Some(update_actor(nets, i, &batch, t.lr_policy, t.grad_clip)?);
    }
    for rn in &mut nets.robots {
        rn.policy_target = soft_update(&rn.policy_target, &rn.policy, t.tau)?;
        rn.critic_target = soft_update(&rn.critic_target, &rn.critic, t.tau)?;
    }
    Ok(diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximator::Layer;
    use crate::arena::load_scenario;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_scenario() -> Scenario {
        load_scenario(
            r#"
            [map]
            width = 20.0
            height = 20.0
            stations = [[1.0, 1.0]]

            [train]
            batch = 4
            capacity = 64
            hidden = 8

            [[robots]]
            id = "p1"
            team = "police"
            kind = "uav"
            v_max = 5.0
            a_max = 1.0
            perception_radius = 30.0

            [[robots]]
            id = "c1"
            team = "criminal"
            kind = "ugv"
            v_max = 2.0
            a_max = 0.2
            perception_radius = 15.0
            "#,
        )
        .unwrap()
    }

    fn transition(nets: &AgentNets, rng: &mut ChaCha8Rng, terminal: bool) -> Transition {
        let obs: Vec<Vec<f64>> = nets
            .obs_dims
            .iter()
            .map(|&d| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let next_obs: Vec<Vec<f64>> = nets
            .obs_dims
            .iter()
            .map(|&d| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let actions: Vec<Vec<f64>> = nets
            .act_dims
            .iter()
            .map(|&d| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        Transition {
            obs,
            actions,
            rewards: (0..nets.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            next_obs,
            terminal,
        }
    }

    #[test]
    fn ring_buffer_evicts_fifo() {
        let mut buf = ReplayBuffer::new(3);
        let s = tiny_scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let nets = AgentNets::new(&s, &mut rng);
        let items: Vec<Transition> = (0..4).map(|_| transition(&nets, &mut rng, false)).collect();
        buf.store(items[0].clone());
        assert_eq!(buf.len(), 1);
        for t in &items[1..] {
            buf.store(t.clone());
        }
        assert_eq!(buf.len(), 3);
        // Oldest gone, newest present, stored items bit-identical.
        assert!(!buf.data.iter().any(|t| t == &items[0]));
        assert_eq!(buf.get(0), &items[3]);
        assert_eq!(buf.get(1), &items[1]);
        assert_eq!(buf.get(2), &items[2]);
    }

    #[test]
    fn act_is_deterministic_without_noise() {
        let s = tiny_scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let nets = AgentNets::new(&s, &mut rng);
        let obs = vec![0.5; nets.obs_dims[0]];
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(10);
        let a = nets.act_for(0, &obs, 0.0, &mut r1).unwrap();
        let b = nets.act_for(0, &obs, 0.0, &mut r2).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a,
            forward(&nets.robots[0].policy, &nets.scale_obs(0, &obs)).unwrap()
        );
    }

    #[test]
    fn act_noise_is_seeded_and_clamped() {
        let s = tiny_scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let nets = AgentNets::new(&s, &mut rng);
        let obs = vec![1.0; nets.obs_dims[0]];
        let mut r1 = ChaCha8Rng::seed_from_u64(33);
        let mut r2 = ChaCha8Rng::seed_from_u64(33);
        let a = nets.act_for(0, &obs, 0.3, &mut r1).unwrap();
        let b = nets.act_for(0, &obs, 0.3, &mut r2).unwrap();
        assert_eq!(a, b);

        // Enormous noise still lands inside the box.
        let mut r3 = ChaCha8Rng::seed_from_u64(34);
        let huge = nets.act_for(0, &obs, 1e6, &mut r3).unwrap();
        assert!(huge.iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn critic_targets_degenerate_cases() {
        let s = tiny_scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let nets = AgentNets::new(&s, &mut rng);
        let t_terminal = transition(&nets, &mut rng, true);
        let t_running = transition(&nets, &mut rng, false);

        // γ = 0 → y = r exactly.
        let ys = critic_targets(&[&t_running], &nets, 0, 0.0).unwrap();
        assert_eq!(ys, vec![t_running.rewards[0]]);

        // Terminal → y = r regardless of γ.
        let ys = critic_targets(&[&t_terminal], &nets, 1, 0.97).unwrap();
        assert_eq!(ys, vec![t_terminal.rewards[1]]);
    }

    #[test]
    fn constant_critic_target_shifts_reward() {
        let s = tiny_scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut nets = AgentNets::new(&s, &mut rng);
        // Replace the target critic with a constant net: zero weights, bias c.
        let c = 2.5;
        let in_dim = nets.robots[0].critic_target.input_dim();
        nets.robots[0].critic_target = MlpParams {
            layers: vec![Layer {
                in_dim,
                out_dim: 1,
                weights: vec![0.0; in_dim],
                bias: vec![c],
                activation: Activation::Linear,
            }],
        };
        let t = transition(&nets, &mut rng, false);
        let ys = critic_targets(&[&t], &nets, 0, 1.0).unwrap();
        assert!((ys[0] - (t.rewards[0] + c)).abs() < 1e-12);
    }

    #[test]
    fn zero_error_means_zero_gradient() {
        let s = tiny_scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nets = AgentNets::new(&s, &mut rng);
        let t = transition(&nets, &mut rng, false);
        let batch = [&t];
        // Make the target equal the current prediction.
        let input = nets.critic_input(&t.obs, &t.actions);
        let q = forward(&nets.robots[0].critic, &input).unwrap()[0];
        let (loss, grads) = critic_loss_and_grads(&nets, 0, &batch, &[q]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grads.norm(), 0.0);
    }

    #[test]
    fn zero_critic_means_zero_policy_gradient() {
        let s = tiny_scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut nets = AgentNets::new(&s, &mut rng);
        for l in &mut nets.robots[0].critic.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        let t = transition(&nets, &mut rng, false);
        let (obj, grads) = actor_objective_and_grads(&nets, 0, &[&t]).unwrap();
        assert_eq!(obj, 0.0);
        assert_eq!(grads.norm(), 0.0);
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let s = tiny_scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let nets = AgentNets::new(&s, &mut rng);
        let ts: Vec<Transition> = (0..3).map(|_| transition(&nets, &mut rng, false)).collect();
        let batch: Vec<&Transition> = ts.iter().collect();
        let targets = critic_targets(&batch, &nets, 0, 0.9).unwrap();
        let (_, grads) = critic_loss_and_grads(&nets, 0, &batch, &targets).unwrap();

        let loss_of = |n: &AgentNets| -> f64 {
            let mut acc = 0.0;
            for (t, y) in batch.iter().zip(&targets) {
                let input = n.critic_input(&t.obs, &t.actions);
                let q = forward(&n.robots[0].critic, &input).unwrap()[0];
                acc += (q - y) * (q - y);
            }
            acc / batch.len() as f64
        };

        let eps = 1e-5;
        let mut checked = 0;
        for (k, layer) in nets.robots[0].critic.layers.iter().enumerate() {
            for idx in (0..layer.weights.len()).step_by(17) {
                let mut plus = nets.clone();
                let mut minus = nets.clone();
                plus.robots[0].critic.layers[k].weights[idx] += eps;
                minus.robots[0].critic.layers[k].weights[idx] -= eps;
                let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * eps);
                let analytic = grads.layers[k].weights[idx];
                let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
                assert!(rel < 1e-4, "layer {k} w[{idx}]: {analytic} vs {numeric}");
                checked += 1;
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let s = tiny_scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let nets = AgentNets::new(&s, &mut rng);
        let ts: Vec<Transition> = (0..3).map(|_| transition(&nets, &mut rng, false)).collect();
        let batch: Vec<&Transition> = ts.iter().collect();
        let (_, grads) = actor_objective_and_grads(&nets, 1, &batch).unwrap();

        let objective_of = |n: &AgentNets| -> f64 {
            let mut acc = 0.0;
            for t in &batch {
                let my = forward(&n.robots[1].policy, &n.scale_obs(1, &t.obs[1])).unwrap();
                let mut actions = t.actions.clone();
                actions[1] = my;
                let input = n.critic_input(&t.obs, &actions);
                acc += forward(&n.robots[1].critic, &input).unwrap()[0];
            }
            acc / batch.len() as f64
        };

        let eps = 1e-5;
        let mut checked = 0;
        for (k, layer) in nets.robots[1].policy.layers.iter().enumerate() {
            for idx in (0..layer.weights.len()).step_by(13) {
                let mut plus = nets.clone();
                let mut minus = nets.clone();
                plus.robots[1].policy.layers[k].weights[idx] += eps;
                minus.robots[1].policy.layers[k].weights[idx] -= eps;
                let numeric = (objective_of(&plus) - objective_of(&minus)) / (2.0 * eps);
                let analytic = grads.layers[k].weights[idx];
                let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
                assert!(rel < 1e-4, "layer {k} w[{idx}]: {analytic} vs {numeric}");
                checked += 1;
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn train_step_requires_warm_buffer() {
        let s = tiny_scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut nets = AgentNets::new(&s, &mut rng);
        let buf = ReplayBuffer::new(s.train.capacity);
        assert!(matches!(
            train_step(&mut nets, &buf, &s, &mut rng),
            Err(Error::BufferTooSmall { .. })
        ));
    }

    #[test]
    fn train_step_is_deterministic_and_tau_zero_freezes_targets() {
        let mut s = tiny_scenario();
        s.train.tau = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut nets = AgentNets::new(&s, &mut rng);
        let mut buf = ReplayBuffer::new(s.train.capacity);
        for _ in 0..8 {
            buf.store(transition(&nets, &mut rng, false));
        }
        let before_targets: Vec<MlpParams> = nets
            .robots
            .iter()
            .map(|r| r.policy_target.clone())
            .collect();

        let mut nets2 = nets.clone();
        let mut r1 = ChaCha8Rng::seed_from_u64(50);
        let mut r2 = ChaCha8Rng::seed_from_u64(50);
        let d1 = train_step(&mut nets, &buf, &s, &mut r1).unwrap();
        let d2 = train_step(&mut nets2, &buf, &s, &mut r2).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(nets, nets2);
        for (rn, before) in nets.robots.iter().zip(&before_targets) {
            assert_eq!(&rn.policy_target, before);
        }
    }

    #[test]
    fn target_distance_shrinks_geometrically() {
        let s = tiny_scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let nets = AgentNets::new(&s, &mut rng);
        let online = &nets.robots[0].policy;
        let mut target =
            MlpParams::new(&[online.input_dim(), 8, 8, 2], Activation::Relu, Activation::Tanh, &mut rng);
        let tau = 0.25;
        let dist = |a: &MlpParams, b: &MlpParams| -> f64 {
            let mut sq = 0.0;
            for (la, lb) in a.layers.iter().zip(&b.layers) {
                for (x, y) in la.weights.iter().zip(&lb.weights) {
                    sq += (x - y) * (x - y);
                }
                for (x, y) in la.bias.iter().zip(&lb.bias) {
                    sq += (x - y) * (x - y);
                }
            }
            sq.sqrt()
        };
        let mut prev = dist(&target, online);
        for _ in 0..10 {
            target = soft_update(&target, online, tau).unwrap();
            let cur = dist(&target, online);
            assert!((cur - (1.0 - tau) * prev).abs() < 1e-9 * prev.max(1.0));
            prev = cur;
        }
    }

    #[test]
    fn frozen_team_is_skipped() {
        let mut s = tiny_scenario();
        s.train.learn_criminal = false;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut nets = AgentNets::new(&s, &mut rng);
        let mut buf = ReplayBuffer::new(s.train.capacity);
        for _ in 0..8 {
            buf.store(transition(&nets, &mut rng, false));
        }
        let criminal_policy = nets.robots[1].policy.clone();
        let diag = train_step(&mut nets, &buf, &s, &mut rng).unwrap();
        assert!(diag.critic_loss[0].is_some());
        assert!(diag.critic_loss[1].is_none());
        assert_eq!(nets.robots[1].policy, criminal_policy);
    }
}

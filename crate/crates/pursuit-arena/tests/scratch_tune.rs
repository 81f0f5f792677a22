// Temporary tuning harness; removed before finalizing.

use pursuit_arena::engine;
use pursuit_arena::load_scenario;
use std::sync::Arc;
use std::time::Instant;

const DESK: &str = r#"
[map]
width = 40.0
height = 40.0
origin = [0.0, 0.0]
sois = [[37.0, 37.0], [3.0, 33.0]]
stations = [[3.0, 3.0], [37.0, 3.0], [20.0, 35.0]]

[[map.regions]]
kind = "lawn"
polygon = [[12.0, 12.0], [28.0, 12.0], [28.0, 20.0], [12.0, 20.0]]

[[map.regions]]
kind = "building"
polygon = [[8.0, 24.0], [14.0, 24.0], [14.0, 30.0], [8.0, 30.0]]

[[map.regions]]
kind = "hidden"
polygon = [[24.0, 24.0], [32.0, 24.0], [32.0, 32.0], [24.0, 32.0]]

[[map.regions]]
kind = "nofly"
polygon = [[18.0, 2.0], [22.0, 2.0], [22.0, 8.0], [18.0, 8.0]]

[episode]
horizon = 60
dt = 0.5
capture_distance = 3.0
min_capturers = 2

[train]
gamma = 0.95
lambda = 0.1
seed = 1
batch = 128
capacity = 20000
tau = 0.01
lr_critic = 0.001
lr_policy = 0.0005
noise_start = 0.4
noise_end = 0.1
episodes = 2000
hidden = 32
updates_per_episode = 20
grad_clip = 10.0
checkpoint_every = 0

[[robots]]
id = "wide"
team = "police"
kind = "uav"
v_max = 2.5
a_max = 1.0
perception_radius = 30.0

[[robots]]
id = "fast"
team = "police"
kind = "uav"
v_max = 3.5
a_max = 2.0
perception_radius = 20.0

[[robots]]
id = "ground"
team = "police"
kind = "ugv"
v_max = 0.5
a_max = 0.1
perception_radius = 5.0

[[robots]]
id = "crim"
team = "criminal"
kind = "ugv"
v_max = 1.0
a_max = 0.2
perception_radius = 15.0
"#;

#[test]
#[ignore]
fn toy_actor_convergence() {
    use pursuit_arena::learner::{
        update_actor, update_critic, AgentNets, ReplayBuffer, Transition,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // 1 police + 1 criminal, tiny nets. We fabricate transitions where robot
    // 0's reward is a known quadratic of its first action channel,
    // r = -(a - 0.3)^2, terminal so y = r, and check that alternating
    // critic/actor updates drive mu_0(obs)[0] toward 0.3.
    let scenario = load_scenario(
        r#"
        [map]
        width = 20.0
        height = 20.0
        stations = [[1.0, 1.0]]

        [train]
        batch = 64
        capacity = 4096
        hidden = 64
        lr_critic = 0.01
        lr_policy = 0.002
        tau = 0.01

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
    .unwrap();
    for seed in [1234u64, 7, 99, 2024, 0xACC6, 31415] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nets = AgentNets::new(&scenario, &mut rng);
    let fixed_obs: Vec<Vec<f64>> = nets
        .obs_dims
        .iter()
        .map(|&d| (0..d).map(|k| 0.1 * (k as f64 + 1.0)).collect())
        .collect();
    let mut buffer = ReplayBuffer::new(4096);
    // DDPG-style rounds: explore around the current policy, refit the
    // critic, take actor steps. 500 actor updates total.
    let mut actor_steps = 0;
    for _round in 0..10 {
        let mu = nets.act_for(0, &fixed_obs[0], 0.0, &mut rng).unwrap();
        for _ in 0..200 {
            let a0 = (mu[0] + 0.2 * rng.sample::<f64, _>(rand_distr::StandardNormal))
                .clamp(-1.0, 1.0);
            let a1: f64 = rng.random_range(-1.0..1.0);
            let b: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            buffer.store(Transition {
                obs: fixed_obs.clone(),
                actions: vec![vec![a0, a1], b],
                rewards: vec![-(a0 - 0.3) * (a0 - 0.3), 0.0],
                next_obs: fixed_obs.clone(),
                terminal: true,
            });
        }
        for _ in 0..200 {
            let idx = buffer.sample_indices(&mut rng, 128);
            let batch: Vec<&Transition> = idx.iter().map(|i| buffer.get(*i)).collect();
            update_critic(&mut nets, 0, &batch, 0.0, 0.01, 0.0).unwrap();
        }
        for _ in 0..50 {
            let idx = buffer.sample_indices(&mut rng, 128);
            let batch: Vec<&Transition> = idx.iter().map(|i| buffer.get(*i)).collect();
            update_critic(&mut nets, 0, &batch, 0.0, 0.01, 0.0).unwrap();
            update_actor(&mut nets, 0, &batch, 0.005, 0.0).unwrap();
            actor_steps += 1;
        }
    }
    let mu = nets.act_for(0, &fixed_obs[0], 0.0, &mut rng).unwrap();
    eprintln!("seed {seed}: mu = {:.4} ({actor_steps} actor steps)", mu[0]);
    }
}

#[test]
#[ignore]
fn sweep() {
    use pursuit_arena::engine::Simulation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let configs: Vec<(&str, Box<dyn Fn(&mut pursuit_arena::Scenario)>)> = vec![
        (
            "G b64 u24 t.02",
            Box::new(|s| {
                s.train.batch = 64;
                s.train.updates_per_episode = 24;
                s.train.tau = 0.02;
                s.train.lr_policy = 5e-4;
            }),
        ),
        (
            "H b64 u16 t.02",
            Box::new(|s| {
                s.train.batch = 64;
                s.train.updates_per_episode = 16;
                s.train.tau = 0.02;
                s.train.lr_policy = 5e-4;
            }),
        ),
        (
            "I b128 u12 t.02",
            Box::new(|s| {
                s.train.batch = 128;
                s.train.updates_per_episode = 12;
                s.train.tau = 0.02;
                s.train.lr_policy = 5e-4;
            }),
        ),
        (
            "J b64 u24 t.02 g.9",
            Box::new(|s| {
                s.gamma = 0.9;
                s.train.batch = 64;
                s.train.updates_per_episode = 24;
                s.train.tau = 0.02;
                s.train.lr_policy = 5e-4;
            }),
        ),
    ];

    for (name, tweak) in configs {
        let mut s = load_scenario(DESK).unwrap();
        s.train.episodes = 700;
        tweak(&mut s);
        let scenario = Arc::new(s);
        let t0 = Instant::now();
        let report = engine::train(&scenario, |_| Ok(()), |_, _| Ok(())).unwrap();
        let wall = t0.elapsed().as_secs_f64();
        let train_caps: usize = report.records.iter().map(|r| r.captures).sum();
        let m = engine::evaluate(&scenario, &report.nets, 50, &[101, 102]).unwrap();

        // Mean best-second-closest over 10 deterministic episodes.
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        let mut second_sum = 0.0;
        for _ in 0..10 {
            let mut sim = Simulation::new(Arc::clone(&scenario), rng.random()).unwrap();
            let mut best = f64::INFINITY;
            while !sim.done() {
                let obs = sim.observe_all();
                let acts: Vec<Vec<f64>> = (0..4)
                    .map(|i| report.nets.act_for(i, &obs[i], 0.0, &mut rng).unwrap())
                    .collect();
                sim.step(&acts).unwrap();
                let cpos = sim.world().robots[3].body.position();
                let mut d: Vec<f64> = (0..3)
                    .map(|i| sim.world().robots[i].body.position().dist(cpos))
                    .collect();
                d.sort_by(f64::total_cmp);
                best = best.min(d[1]);
            }
            second_sum += best;
        }
        eprintln!(
            "{name:<32} wall={wall:>5.0}s train_caps={train_caps:>3} eval_succ={:.2} eval_caps={} mean2nd={:.1}",
            m.task_success_rate,
            (m.episodes as f64 * m.task_success_rate) as usize,
            second_sum / 10.0
        );
    }
}

#[test]
#[ignore]
fn timing_probe() {
    let scenario = Arc::new(load_scenario(DESK).unwrap());
    let t0 = Instant::now();
    let report = engine::train(&scenario, |_| Ok(()), |_, _| Ok(())).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    let n = report.records.len();
    let mean_last: f64 = report.records[n - 100..]
        .iter()
        .map(|r| r.mean_reward)
        .sum::<f64>()
        / 100.0;
    let captures: usize = report.records.iter().map(|r| r.captures).sum();
    let successes = report.records.iter().filter(|r| r.success).count();
    eprintln!(
        "episodes={n} wall={dt:.1}s per_episode={:.1}ms last20_mean={mean_last:.2} captures={captures} successes={successes}",
        1000.0 * dt / n as f64
    );
    let m = engine::evaluate(&scenario, &report.nets, 20, &[101, 102]).unwrap();
    eprintln!(
        "eval: success={:.2} mean_reward={:.2} engagement={:?}",
        m.task_success_rate, m.mean_episode_reward, m.capture_engagement_rate
    );

    // How close do the two nearest police get to the criminal?
    use pursuit_arena::engine::Simulation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for ep in 0..5 {
        let mut sim = Simulation::new(Arc::clone(&scenario), rng.random()).unwrap();
        let mut best_second = f64::INFINITY;
        let mut final_dists = vec![];
        while !sim.done() {
            let obs = sim.observe_all();
            let mut actions = Vec::new();
            for i in 0..4 {
                actions.push(report.nets.act_for(i, &obs[i], 0.0, &mut rng).unwrap());
            }
            sim.step(&actions).unwrap();
            let cpos = sim.world().robots[3].body.position();
            let mut dists: Vec<f64> = (0..3)
                .map(|i| sim.world().robots[i].body.position().dist(cpos))
                .collect();
            dists.sort_by(f64::total_cmp);
            best_second = best_second.min(dists[1]);
            final_dists = dists;
        }
        eprintln!("ep {ep}: best 2nd-closest = {best_second:.2} m, final dists = {final_dists:.2?}");
    }

    // Are the learned policies saturated?
    let mut rng2 = ChaCha8Rng::seed_from_u64(999);
    let mut sim = Simulation::new(Arc::clone(&scenario), 777).unwrap();
    for t in 0..6 {
        let obs = sim.observe_all();
        let acts: Vec<Vec<f64>> = (0..4)
            .map(|i| report.nets.act_for(i, &obs[i], 0.0, &mut rng2).unwrap())
            .collect();
        eprintln!("t={t} actions: {acts:.3?}");
        sim.step(&acts).unwrap();
    }
}

#[test]
#[ignore]
fn critic_anatomy() {
    use pursuit_arena::approximator::{backward, forward};
    use pursuit_arena::engine::Simulation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let scenario = Arc::new(load_scenario(DESK).unwrap());
    let report = engine::train(&scenario, |_| Ok(()), |_, _| Ok(())).unwrap();
    let nets = report.nets;

    // Sample a mid-episode state and inspect dQ/dinput for the wide UAV.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut sim = Simulation::new(Arc::clone(&scenario), rng.random()).unwrap();
    for _ in 0..10 {
        let obs = sim.observe_all();
        let acts: Vec<Vec<f64>> = (0..4)
            .map(|i| nets.act_for(i, &obs[i], 0.3, &mut rng).unwrap())
            .collect();
        sim.step(&acts).unwrap();
    }
    let obs = sim.observe_all();
    let actions: Vec<Vec<f64>> = (0..4)
        .map(|i| nets.act_for(i, &obs[i], 0.0, &mut rng).unwrap())
        .collect();
    // Critic input layout: scaled obs blocks then action blocks.
    let mut input = Vec::new();
    for (j, o) in obs.iter().enumerate() {
        input.extend(nets.scale_obs(j, o));
    }
    for a in &actions {
        input.extend_from_slice(a);
    }
    let critic = &nets.robots[0].critic;
    let q = forward(critic, &input).unwrap()[0];
    let (_, dinput) = backward(critic, &input, &[1.0]).unwrap();
    let obs_total: usize = nets.obs_dims.iter().sum();
    let norm = |sl: &[f64]| sl.iter().map(|x| x * x).sum::<f64>().sqrt();
    eprintln!("Q = {q:.3}");
    eprintln!("|dQ/d own_pos+vel (wide)| = {:.4}", norm(&dinput[0..4]));
    eprintln!("|dQ/d other slots (wide)| = {:.4}", norm(&dinput[4..19]));
    eprintln!("|dQ/d a_wide| = {:.4}", norm(&dinput[obs_total..obs_total + 2]));
    eprintln!("|dQ/d a_fast| = {:.4}", norm(&dinput[obs_total + 2..obs_total + 4]));
    eprintln!("|dQ/d all obs| = {:.4}", norm(&dinput[0..obs_total]));

    // Does Q prefer the scripted pursuit action over the policy's?
    let cpos = sim.world().robots[3].body.position();
    let me = sim.world().robots[0].body.position();
    let v = sim.world().robots[0].body.velocity();
    let want_v = ((cpos - me) * 0.6).clamp_norm(5.0);
    let cmd = (want_v - v) * 2.0;
    let scripted = [cmd.x.clamp(-1.0, 1.0), cmd.y.clamp(-1.0, 1.0)];
    let mut input2 = input.clone();
    input2[obs_total] = scripted[0];
    input2[obs_total + 1] = scripted[1];
    let q2 = forward(critic, &input2).unwrap()[0];
    eprintln!("Q(policy action) = {q:.3}, Q(scripted pursuit action) = {q2:.3}");

    // Frozen critic, actor-only ascent: does mean Q climb?
    use pursuit_arena::learner::{actor_objective_and_grads, update_actor, ReplayBuffer};
    let mut nets = nets;
    let mut buffer = ReplayBuffer::new(20000);
    let mut rng = ChaCha8Rng::seed_from_u64(4141);
    for _ in 0..200 {
        pursuit_arena::engine::run_episode(&scenario, &nets, &mut rng, 0.4, Some(&mut buffer))
            .unwrap();
    }
    let idx = buffer.sample_indices(&mut rng, 512);
    let fixed: Vec<_> = idx.iter().map(|i| buffer.get(*i).clone()).collect();
    let fixed_refs: Vec<&_> = fixed.iter().collect();
    let (q_before, _) = actor_objective_and_grads(&nets, 0, &fixed_refs).unwrap();
    for step in 0..2000 {
        let idx = buffer.sample_indices(&mut rng, 128);
        let batch: Vec<&_> = idx.iter().map(|i| buffer.get(*i)).collect();
        update_actor(&mut nets, 0, &batch, 0.001, 0.0).unwrap();
        if step % 500 == 499 {
            let (q_now, _) = actor_objective_and_grads(&nets, 0, &fixed_refs).unwrap();
            eprintln!("actor-only step {}: fixed-batch mean Q = {q_now:.4}", step + 1);
        }
    }
    let (q_after, _) = actor_objective_and_grads(&nets, 0, &fixed_refs).unwrap();
    eprintln!("actor-only ascent: {q_before:.4} -> {q_after:.4}");
}

#[test]
#[ignore]
fn scripted_baseline() {
    use pursuit_arena::engine::Simulation;
    use pursuit_arena::{RobotKind, Team, Vec2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let scenario = Arc::new(load_scenario(DESK).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    let mut successes = 0;
    let mut captures = 0;
    let episodes = 50;
    for _ in 0..episodes {
        let mut sim = Simulation::new(Arc::clone(&scenario), rng.random()).unwrap();
        while !sim.done() {
            let cpos = sim.world().robots[3].body.position();
            let mut actions: Vec<Vec<f64>> = Vec::new();
            for (i, spec) in scenario.roster.iter().enumerate() {
                if spec.team == Team::Criminal {
                    actions.push(vec![0.9, 0.13]); // wander in arcs
                    continue;
                }
                let me = sim.world().robots[i].body.position();
                let v = sim.world().robots[i].body.velocity();
                match spec.kind {
                    RobotKind::Uav => {
                        // P-D pursuit: accel toward target, braking on speed.
                        let want_v = (cpos - me) * 0.6;
                        let want_v = want_v.clamp_norm(spec.v_max);
                        let cmd = (want_v - v) * (2.0 / spec.a_max);
                        actions.push(vec![cmd.x.clamp(-1.0, 1.0), cmd.y.clamp(-1.0, 1.0)]);
                    }
                    RobotKind::Ugv => {
                        let to = cpos - me;
                        let desired = to.y.atan2(to.x);
                        let heading = match &sim.world().robots[i].body {
                            pursuit_arena::state::RobotBody::Ugv(s) => s.heading,
                            _ => 0.0,
                        };
                        let err = pursuit_arena::geom::wrap_angle(desired - heading);
                        actions.push(vec![1.0, (err * 2.0).clamp(-1.0, 1.0)]);
                    }
                }
            }
            let rec = sim.step(&actions).unwrap();
            captures += rec.outcome.captures.len();
        }
        if sim.result().success {
            successes += 1;
        }
    }
    eprintln!(
        "scripted baseline: {successes}/{episodes} success, {captures} capture events"
    );
}

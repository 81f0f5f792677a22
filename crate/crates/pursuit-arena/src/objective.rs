//! Capability-aware reward decomposition, capture and arrival predicates,
//! and discounted returns.
//!
//! Every robot's per-step reward splits exactly into an objective part
//! (distance shaping toward/away from visible opponents plus event bonuses)
//! and a position part (penalties for operating where the platform is
//! impeded: lawn for UGVs, forbidden-region margins, teammate-safety
//! violations).

use crate::arena::{RegionKind, Scenario, WorldMap};
use crate::error::Result;
use crate::geom::{point_in_polygon, polygon_boundary_distance, Vec2};
use crate::motion::{pairwise_safety, RobotKind, RobotSpec, Team};
use crate::perception::visible;
use crate::state::WorldState;
use serde::Serialize;
use std::collections::BTreeSet;

/// Exact two-way split of one robot's step reward.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct RewardBreakdown {
    pub objective_part: f64,
    pub position_part: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(objective_part: f64, position_part: f64) -> Self {
        RewardBreakdown {
            objective_part,
            position_part,
            total: objective_part + position_part,
        }
    }

    pub const ZERO: RewardBreakdown = RewardBreakdown {
        objective_part: 0.0,
        position_part: 0.0,
        total: 0.0,
    };
}

/// Capture of one criminal by a quorum of police at a single step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaptureEvent {
    pub criminal_id: String,
    pub capturers: BTreeSet<String>,
}

/// A criminal reaching a spot of interest.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArrivalEvent {
    pub criminal_id: String,
    pub soi_index: usize,
}

/// What happened at one step, as consumed by `step_rewards`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StepOutcome {
    pub captures: Vec<CaptureEvent>,
    pub arrivals: Vec<ArrivalEvent>,
    pub terminal: bool,
}

/// λ-scaled distance to the nearest visible opponent. The sign of λ encodes
/// the role: negative penalizes distance (police), positive rewards it
/// (criminal). With nothing visible the fallback distance (arena diagonal)
/// stands in — pessimal for police, optimal for the criminal.
pub fn shaping_reward(
    self_position: Vec2,
    visible_opponents: &[Vec2],
    lambda: f64,
    fallback_distance: f64,
) -> f64 {
    let nearest = visible_opponents
        .iter()
        .map(|p| p.dist(self_position))
        .min_by(|a, b| a.total_cmp(b))
        .unwrap_or(fallback_distance);
    lambda * nearest
}

/// Penalty for operating in an impeding spot: −lawn_penalty for a UGV on
/// lawn, −edge_penalty within edge_margin of a region the platform may not
/// enter. Zero in fully capable conditions.
pub fn position_reward(
    map: &WorldMap,
    spec: &RobotSpec,
    position: Vec2,
    params: &crate::arena::RewardParams,
) -> f64 {
    let mut reward = 0.0;
    let forbidden = match spec.kind {
        RobotKind::Uav => RegionKind::Nofly,
        RobotKind::Ugv => RegionKind::Building,
    };
    if spec.kind == RobotKind::Ugv && map.point_in_kind(position, RegionKind::Lawn) {
        reward -= params.lawn_penalty;
    }
    let near_forbidden = map.regions_of(forbidden).any(|r| {
        point_in_polygon(position, &r.polygon)
            || polygon_boundary_distance(position, &r.polygon) < params.edge_margin
    });
    if near_forbidden {
        reward -= params.edge_penalty;
    }
    reward
}

/// Police within the closed capture ball around a criminal, if they reach
/// the quorum.
pub fn check_capture(
    criminal: Vec2,
    police: &[(String, Vec2)],
    capture_distance: f64,
    min_capturers: usize,
) -> Option<BTreeSet<String>> {
    let set: BTreeSet<String> = police
        .iter()
        .filter(|(_, p)| p.dist(criminal) <= capture_distance)
        .map(|(id, _)| id.clone())
        .collect();
    (set.len() >= min_capturers).then_some(set)
}

/// Smallest index of a spot of interest within the closed arrival ball.
pub fn check_soi_arrival(criminal: Vec2, sois: &[Vec2], arrival_distance: f64) -> Option<usize> {
    sois.iter().position(|s| s.dist(criminal) <= arrival_distance)
}

/// Σ_t γ^t r_t.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut acc = 0.0;
    let mut weight = 1.0;
    for r in rewards {
        acc += weight * r;
        weight *= gamma;
    }
    acc
}

/// Per-robot reward breakdowns for one step. The joint state is the
/// post-move state; `outcome` must come from the same step, with active
/// flags not yet updated for this step's captures.
pub fn step_rewards(
    world: &WorldState,
    outcome: &StepOutcome,
    scenario: &Scenario,
) -> Result<Vec<RewardBreakdown>> {
    let params = &scenario.reward;
    let fallback = scenario.map.diagonal();
    let n = scenario.roster.len();

    // Safety margins per team over active members. One penalty per offender
    // per step, however many pairs it violates. The paper sets one safe
    // radius per group; the group's largest configured radius is used.
    let mut offenders: BTreeSet<&str> = BTreeSet::new();
    for team in [Team::Police, Team::Criminal] {
        let members: Vec<(String, Vec2)> = scenario
            .roster
            .iter()
            .zip(&world.robots)
            .filter(|(spec, st)| spec.team == team && st.active)
            .map(|(spec, st)| (spec.id.clone(), st.body.position()))
            .collect();
        let rho = scenario
            .roster
            .iter()
            .filter(|s| s.team == team)
            .map(|s| s.safe_radius)
            .fold(0.0, f64::max);
        let report = pairwise_safety(&members, rho);
        for (a, b, h) in &report.pairs {
            if *h <= 0.0 {
                for id in [a, b] {
                    if let Some(spec) = scenario.roster.iter().find(|s| &s.id == id) {
                        offenders.insert(spec.id.as_str());
                    }
                }
            }
        }
    }

    let arrival_happened = !outcome.arrivals.is_empty();
    let mut out = Vec::with_capacity(n);
    for (idx, spec) in scenario.roster.iter().enumerate() {
        let st = &world.robots[idx];
        if !st.active {
            out.push(RewardBreakdown::ZERO);
            continue;
        }
        let my_pos = st.body.position();

        let lambda = match spec.team {
            Team::Police => params.lambda_police,
            Team::Criminal => params.lambda_criminal,
        };
        let opponents: Vec<Vec2> = scenario
            .roster
            .iter()
            .zip(&world.robots)
            .filter(|(other, ost)| {
                other.team != spec.team
                    && ost.active
                    && visible(
                        spec,
                        my_pos,
                        ost.body.position(),
                        &scenario.map,
                        scenario.perception.hidden_mode,
                    )
            })
            .map(|(_, ost)| ost.body.position())
            .collect();
        let mut objective = shaping_reward(my_pos, &opponents, lambda, fallback);

        for capture in &outcome.captures {
            if capture.capturers.contains(&spec.id) {
                objective += params.capture_bonus;
            }
            if capture.criminal_id == spec.id {
                objective -= params.capture_bonus;
            }
        }
        if arrival_happened {
            match spec.team {
                Team::Police => objective -= params.soi_bonus,
                Team::Criminal => {
                    if outcome.arrivals.iter().any(|a| a.criminal_id == spec.id) {
                        objective += params.soi_bonus;
                    }
                }
            }
        }

        let mut position = position_reward(&scenario.map, spec, my_pos, params);
        if offenders.contains(spec.id.as_str()) {
            position -= params.safety_penalty;
        }

        out.push(RewardBreakdown::new(objective, position));
    }
    Ok(out)
}

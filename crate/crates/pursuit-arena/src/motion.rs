//! Robot kinematics and pairwise safety.
//!
//! UAVs integrate an RL-chosen planar acceleration (clamped to the spec's
//! bound) through the constant-acceleration position update; UGVs follow a
//! unicycle model whose per-step velocity changes are bounded by the spec's
//! acceleration value. Safety between teammates is the squared-distance
//! margin h = ‖x_i − x_j‖² − ρ², safe only while strictly positive.

use crate::arena::{classify_point, QueryMode, RegionKind, WorldMap};
use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Vec2};
use serde::{Deserialize, Serialize};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Team {
    Police,
    Criminal,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobotKind {
    Uav,
    Ugv,
}

/// Per-robot capability profile. For UAVs `a_max` is an acceleration in
/// m/s²; for UGVs it bounds the per-step velocity delta of both command
/// channels. `ang_max` caps UGV angular rate (no UAV meaning).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    pub id: String,
    pub team: Team,
    pub kind: RobotKind,
    pub v_max: f64,
    pub a_max: f64,
    pub perception_radius: f64,
    #[serde(default = "default_safe_radius")]
    pub safe_radius: f64,
    #[serde(default = "default_ang_max")]
    pub ang_max: f64,
}

fn default_safe_radius() -> f64 {
    0.5
}

fn default_ang_max() -> f64 {
    1.0
}

impl RobotSpec {
    fn preset(id: &str, team: Team, kind: RobotKind, v: f64, a: f64, radius: f64) -> Self {
        RobotSpec {
            id: id.to_string(),
            team,
            kind,
            v_max: v,
            a_max: a,
            perception_radius: radius,
            safe_radius: default_safe_radius(),
            ang_max: default_ang_max(),
        }
    }

    /// Hex-rotor UAV: stable, wide perception, moderate speed.
    pub fn firefly(id: &str, team: Team) -> Self {
        Self::preset(id, team, RobotKind::Uav, 5.0, 1.0, 30.0)
    }

    /// Quad-copter UAV: fastest platform, wide perception.
    pub fn iris(id: &str, team: Team) -> Self {
        Self::preset(id, team, RobotKind::Uav, 7.0, 2.0, 30.0)
    }

    /// Ground platform: slow, short perception.
    pub fn husky(id: &str, team: Team) -> Self {
        Self::preset(id, team, RobotKind::Ugv, 1.0, 0.1, 15.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_max > 0.0) {
            return Err(Error::validation(format!("robot `{}`: v_max must be > 0", self.id)));
        }
        if !(self.a_max > 0.0) {
            return Err(Error::validation(format!("robot `{}`: a_max must be > 0", self.id)));
        }
        if !(self.perception_radius > 0.0) {
            return Err(Error::validation(format!(
                "robot `{}`: perception_radius must be > 0",
                self.id
            )));
        }
        if self.safe_radius < 0.0 {
            return Err(Error::validation(format!(
                "robot `{}`: safe_radius must be >= 0",
                self.id
            )));
        }
        if !(self.ang_max > 0.0) {
            return Err(Error::validation(format!("robot `{}`: ang_max must be > 0", self.id)));
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct UavState {
    pub position: Vec2,
    pub velocity: Vec2,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct UgvState {
    pub position: Vec2,
    /// Radians in (−π, π].
    pub heading: f64,
    pub v_lin: f64,
    pub v_ang: f64,
}

/// Same-team proximity report: one entry per unordered pair with the margin
/// h = ‖x_i − x_j‖² − ρ². Safe requires h > 0 for every pair.
#[derive(Clone, Debug, PartialEq)]
pub struct SafetyReport {
    pub pairs: Vec<(String, String, f64)>,
    pub all_safe: bool,
}

impl SafetyReport {
    /// Ids appearing in at least one violating pair.
    pub fn offenders(&self) -> std::collections::BTreeSet<&str> {
        let mut out = std::collections::BTreeSet::new();
        for (a, b, h) in &self.pairs {
            if *h <= 0.0 {
                out.insert(a.as_str());
                out.insert(b.as_str());
            }
        }
        out
    }
}

/// Constant-acceleration step: position advances by V·Δt + (a/2)·Δt² per
/// axis; velocity advances by a·Δt and is capped at v_max. The commanded
/// acceleration is clamped to magnitude a_max first.
pub fn integrate_uav(state: &UavState, accel: Vec2, dt: f64, spec: &RobotSpec) -> Result<UavState> {
    if !accel.is_finite() || !state.position.is_finite() || !state.velocity.is_finite() {
        return Err(Error::NumericInput("integrate_uav".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::NumericInput(format!("integrate_uav: dt = {dt}")));
    }
    let a = accel.clamp_norm(spec.a_max);
    let position = state.position + state.velocity * dt + a * (0.5 * dt * dt);
    let velocity = (state.velocity + a * dt).clamp_norm(spec.v_max);
    Ok(UavState { position, velocity })
}

/// Clamp a requested (v_lin, v_ang) to the reachable interval around the
/// current command: ±a_max per step on both channels, then the absolute
/// bounds ±v_max / ±ang_max.
pub fn clamp_ugv_command(current: &UgvState, requested: (f64, f64), spec: &RobotSpec) -> (f64, f64) {
    let v_lin = requested
        .0
        .clamp(current.v_lin - spec.a_max, current.v_lin + spec.a_max)
        .clamp(-spec.v_max, spec.v_max);
    let v_ang = requested
        .1
        .clamp(current.v_ang - spec.a_max, current.v_ang + spec.a_max)
        .clamp(-spec.ang_max, spec.ang_max);
    (v_lin, v_ang)
}

/// Unicycle step with the heading updated before displacement. The terrain
/// factor scales displacement only (lawn slowdown), not the stored command.
pub fn integrate_ugv(
    state: &UgvState,
    cmd: (f64, f64),
    dt: f64,
    terrain_factor: f64,
) -> Result<UgvState> {
    if !cmd.0.is_finite() || !cmd.1.is_finite() || !state.position.is_finite() {
        return Err(Error::NumericInput("integrate_ugv".into()));
    }
    if !(dt > 0.0) || !(terrain_factor > 0.0 && terrain_factor <= 1.0) {
        return Err(Error::NumericInput(format!(
            "integrate_ugv: dt = {dt}, terrain_factor = {terrain_factor}"
        )));
    }
    let heading = wrap_angle(state.heading + cmd.1 * dt);
    let step = terrain_factor * cmd.0 * dt;
    let position = state.position + Vec2::new(heading.cos(), heading.sin()) * step;
    Ok(UgvState {
        position,
        heading,
        v_lin: cmd.0,
        v_ang: cmd.1,
    })
}

/// All-pairs safety margins for one group. Single-robot (or empty) input is
/// vacuously safe.
pub fn pairwise_safety(positions: &[(String, Vec2)], rho: f64) -> SafetyReport {
    let mut pairs = Vec::new();
    let mut all_safe = true;
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            let h = positions[i].1.dist_sq(positions[j].1) - rho * rho;
            if h <= 0.0 {
                all_safe = false;
            }
            pairs.push((positions[i].0.clone(), positions[j].0.clone(), h));
        }
    }
    SafetyReport { pairs, all_safe }
}

/// Block invalid motion: a UAV may not enter NOFLY, a UGV may not enter
/// BUILDING, and neither may leave the arena. Blocked moves keep the
/// previous position.
pub fn resolve_position(map: &WorldMap, kind: RobotKind, proposed: Vec2, previous: Vec2) -> Vec2 {
    if !map.contains(proposed) {
        return previous;
    }
    let blocked = match kind {
        RobotKind::Uav => classify_point(map, proposed, QueryMode::Air).contains(&RegionKind::Nofly),
        RobotKind::Ugv => {
            classify_point(map, proposed, QueryMode::Ground).contains(&RegionKind::Building)
        }
    };
    if blocked {
        previous
    } else {
        proposed
    }
}

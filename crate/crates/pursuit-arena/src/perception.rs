//! Masked local observations.
//!
//! Each robot sees its own position and velocity, a slot per other robot
//! (visibility flag, relative displacement and relative velocity — zeroed
//! when the target is out of range or hidden), and, on the criminal team
//! only, the distance to every spot of interest. Criminal SoI entries are
//! team-private intentions and are never masked.
//!
//! Visibility needs ‖s_i − s_j‖ ≤ 𝒫_i and the target outside every hidden
//! region (or, with `perception.hidden_mode = "observer"`, the observer
//! outside them). `perception.scalar_distances` swaps the displacement
//! 2-vector for the bare distance scalar.

use crate::arena::{HiddenMode, RegionKind, Scenario, WorldMap};
use crate::error::Result;
use crate::geom::Vec2;
use crate::motion::{RobotSpec, Team};
use crate::state::WorldState;

/// Entries per other-robot slot: flag + displacement (2 or 1) + rel. velocity (2).
fn slot_width(scalar: bool) -> usize {
    if scalar {
        4
    } else {
        5
    }
}

/// True iff the observer at `observer_pos` with spec `observer` perceives a
/// target at `target_pos`.
pub fn visible(
    observer: &RobotSpec,
    observer_pos: Vec2,
    target_pos: Vec2,
    map: &WorldMap,
    mode: HiddenMode,
) -> bool {
    if observer_pos.dist(target_pos) > observer.perception_radius {
        return false;
    }
    let masked_pos = match mode {
        HiddenMode::Target => target_pos,
        HiddenMode::Observer => observer_pos,
    };
    !map.point_in_kind(masked_pos, RegionKind::Hidden)
}

/// Fixed observation length for one robot in a given scenario.
pub fn observation_dim(scenario: &Scenario, robot_id: &str) -> Result<usize> {
    let idx = scenario.robot_index(robot_id)?;
    Ok(observation_dim_idx(scenario, idx))
}

pub fn observation_dim_idx(scenario: &Scenario, idx: usize) -> usize {
    let n = scenario.roster.len();
    let base = 4 + slot_width(scenario.perception.scalar_distances) * (n - 1);
    if scenario.roster[idx].team == Team::Criminal {
        base + scenario.map.sois.len()
    } else {
        base
    }
}

/// Per-entry divisors that bring every observation feature to order one at
/// the network boundary: positions by arena size, velocities by the speeds
/// involved, displacements by the observer's perception radius (visibility
/// already bounds them by it), SoI distances by the arena diagonal. Mirrors
/// the `build_observation` layout exactly.
pub fn observation_scales(scenario: &Scenario, idx: usize) -> Vec<f64> {
    let scalar = scenario.perception.scalar_distances;
    let me = &scenario.roster[idx];
    let mut out = Vec::with_capacity(observation_dim_idx(scenario, idx));
    out.extend_from_slice(&[
        scenario.map.width,
        scenario.map.height,
        me.v_max,
        me.v_max,
    ]);
    for (j, other) in scenario.roster.iter().enumerate() {
        if j == idx {
            continue;
        }
        out.push(1.0); // visibility flag
        let disp = me.perception_radius;
        if scalar {
            out.push(disp);
        } else {
            out.push(disp);
            out.push(disp);
        }
        let rel_v = me.v_max + other.v_max;
        out.push(rel_v);
        out.push(rel_v);
    }
    if me.team == Team::Criminal {
        for _ in &scenario.map.sois {
            out.push(scenario.map.diagonal());
        }
    }
    out
}

/// Build the masked observation for `robot_id` from the joint state.
pub fn build_observation(
    scenario: &Scenario,
    world: &WorldState,
    robot_id: &str,
) -> Result<Vec<f64>> {
    let idx = scenario.robot_index(robot_id)?;
    Ok(build_observation_idx(scenario, world, idx))
}

/// Index variant used in the engine's hot loop. Other-robot slots follow
/// roster order with self skipped; inactive targets read as invisible.
pub fn build_observation_idx(scenario: &Scenario, world: &WorldState, idx: usize) -> Vec<f64> {
    let scalar = scenario.perception.scalar_distances;
    let mut out = Vec::with_capacity(observation_dim_idx(scenario, idx));
    let me = &world.robots[idx];
    let my_spec = &scenario.roster[idx];
    let my_pos = me.body.position();
    let my_vel = me.body.velocity();
    out.extend_from_slice(&[my_pos.x, my_pos.y, my_vel.x, my_vel.y]);

    for (j, other) in world.robots.iter().enumerate() {
        if j == idx {
            continue;
        }
        let seen = other.active
            && visible(
                my_spec,
                my_pos,
                other.body.position(),
                &scenario.map,
                scenario.perception.hidden_mode,
            );
        if seen {
            let d = other.body.position() - my_pos;
            let dv = other.body.velocity() - my_vel;
            out.push(1.0);
            if scalar {
                out.push(d.norm());
            } else {
                out.push(d.x);
                out.push(d.y);
            }
            out.push(dv.x);
            out.push(dv.y);
        } else {
            out.extend(std::iter::repeat(0.0).take(slot_width(scalar)));
        }
    }

    if my_spec.team == Team::Criminal {
        for soi in &scenario.map.sois {
            out.push(soi.dist(my_pos));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::{load_scenario, Region};
    use crate::motion::{UavState, UgvState};
    use crate::state::{RobotBody, RobotState};

    fn two_robot_scenario() -> Scenario {
        load_scenario(
            r#"
            [map]
            width = 40.0
            height = 40.0
            stations = [[1.0, 1.0]]

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

    fn world_at(p_uav: Vec2, p_ugv: Vec2) -> WorldState {
        WorldState {
            robots: vec![
                RobotState {
                    body: RobotBody::Uav(UavState {
                        position: p_uav,
                        velocity: Vec2::new(1.0, 0.0),
                    }),
                    active: true,
                },
                RobotState {
                    body: RobotBody::Ugv(UgvState {
                        position: p_ugv,
                        heading: 0.0,
                        v_lin: 2.0,
                        v_ang: 0.0,
                    }),
                    active: true,
                },
            ],
        }
    }

    #[test]
    fn visibility_rules() {
        let s = two_robot_scenario();
        let firefly = &s.roster[0];
        assert!(visible(
            firefly,
            Vec2::ZERO,
            Vec2::new(10.0, 0.0),
            &s.map,
            HiddenMode::Target
        ));
        // Strict range cutoff just past the radius.
        let husky = RobotSpec::husky("h", Team::Police);
        assert!(!visible(
            &husky,
            Vec2::ZERO,
            Vec2::new(15.0001, 0.0),
            &s.map,
            HiddenMode::Target
        ));
        assert!(visible(
            &husky,
            Vec2::ZERO,
            Vec2::new(15.0, 0.0),
            &s.map,
            HiddenMode::Target
        ));
    }

    #[test]
    fn hidden_region_masks_target() {
        let mut s = two_robot_scenario();
        s.map.regions = vec![Region {
            kind: RegionKind::Hidden,
            polygon: vec![
                Vec2::new(8.0, 8.0),
                Vec2::new(12.0, 8.0),
                Vec2::new(12.0, 12.0),
                Vec2::new(8.0, 12.0),
            ],
        }];
        let firefly = &s.roster[0];
        assert!(!visible(
            firefly,
            Vec2::ZERO,
            Vec2::new(10.0, 10.0),
            &s.map,
            HiddenMode::Target
        ));
        // Observer mode blinds the observer instead.
        assert!(visible(
            firefly,
            Vec2::ZERO,
            Vec2::new(10.0, 10.0),
            &s.map,
            HiddenMode::Observer
        ));
        assert!(!visible(
            firefly,
            Vec2::new(10.0, 10.0),
            Vec2::ZERO,
            &s.map,
            HiddenMode::Observer
        ));
    }

    #[test]
    fn mutual_visibility_lengths_and_flags() {
        let s = two_robot_scenario();
        let w = world_at(Vec2::new(5.0, 5.0), Vec2::new(8.0, 9.0));
        let police = build_observation(&s, &w, "p1").unwrap();
        assert_eq!(police.len(), 9);
        assert_eq!(police[4], 1.0);
        assert_eq!(&police[5..7], &[3.0, 4.0]);
        let criminal = build_observation(&s, &w, "c1").unwrap();
        // Criminal gets no SoI entries here (none configured): same length.
        assert_eq!(criminal.len(), 9);
        assert_eq!(criminal[4], 1.0);
    }

    #[test]
    fn out_of_range_slots_are_zero() {
        let s = two_robot_scenario();
        let w = world_at(Vec2::new(0.0, 0.0), Vec2::new(39.0, 39.0));
        let police = build_observation(&s, &w, "p1").unwrap();
        assert_eq!(&police[4..9], &[0.0; 5]);
    }

    #[test]
    fn criminal_soi_distances_in_order() {
        let mut s = two_robot_scenario();
        s.map.sois = vec![Vec2::new(8.0, 13.0), Vec2::new(8.0, 6.0)];
        let w = world_at(Vec2::new(0.0, 0.0), Vec2::new(8.0, 10.0));
        let criminal = build_observation(&s, &w, "c1").unwrap();
        assert_eq!(criminal.len(), 11);
        assert_eq!(&criminal[9..], &[3.0, 4.0]);
        // Police never see SoI entries.
        let police = build_observation(&s, &w, "p1").unwrap();
        assert_eq!(police.len(), 9);
    }

    #[test]
    fn dim_formula() {
        let mut s = two_robot_scenario();
        s.map.sois = vec![Vec2::new(1.0, 1.0), Vec2::new(2.0, 2.0)];
        // Grow to 3 police + 1 criminal.
        let mut p2 = RobotSpec::iris("p2", Team::Police);
        p2.perception_radius = 20.0;
        let p3 = RobotSpec::husky("p3", Team::Police);
        s.roster.insert(1, p2);
        s.roster.insert(2, p3);
        assert_eq!(observation_dim(&s, "p1").unwrap(), 4 + 5 * 3);
        assert_eq!(observation_dim(&s, "c1").unwrap(), 4 + 5 * 3 + 2);
        assert!(observation_dim(&s, "nope").is_err());
    }

    #[test]
    fn scalar_mode_layout() {
        let mut s = two_robot_scenario();
        s.perception.scalar_distances = true;
        let w = world_at(Vec2::new(5.0, 5.0), Vec2::new(8.0, 9.0));
        let police = build_observation(&s, &w, "p1").unwrap();
        assert_eq!(police.len(), 8);
        assert_eq!(police[4], 1.0);
        assert_eq!(police[5], 5.0); // ‖(3,4)‖
    }

    #[test]
    fn observations_are_deterministic() {
        let s = two_robot_scenario();
        let w = world_at(Vec2::new(5.0, 5.0), Vec2::new(8.0, 9.0));
        let a = build_observation(&s, &w, "p1").unwrap();
        let b = build_observation(&s, &w, "p1").unwrap();
        assert_eq!(a, b);
    }
}

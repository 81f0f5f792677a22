//! Joint world state shared by perception, rewards and the engine.

use crate::geom::Vec2;
use crate::motion::{UavState, UgvState};

/// Kinematic state of one robot, by platform kind.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum RobotBody {
    Uav(UavState),
    Ugv(UgvState),
}

impl RobotBody {
    pub fn position(&self) -> Vec2 {
        match self {
            RobotBody::Uav(s) => s.position,
            RobotBody::Ugv(s) => s.position,
        }
    }

    /// Planar velocity vector; for UGVs this is v_lin along the heading.
    pub fn velocity(&self) -> Vec2 {
        match self {
            RobotBody::Uav(s) => s.velocity,
            RobotBody::Ugv(s) => Vec2::new(s.heading.cos(), s.heading.sin()) * s.v_lin,
        }
    }
}

/// One roster slot: body plus an active flag (captured criminals go
/// inactive and drop out of perception, rewards and events).
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RobotState {
    pub body: RobotBody,
    pub active: bool,
}

/// Joint state, indexed like the scenario roster.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub robots: Vec<RobotState>,
}

impl WorldState {
    pub fn positions(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.robots.iter().map(|r| r.body.position())
    }
}

//! Static world model and scenario loading.
//!
//! A scenario is a TOML document with `[map]`, `[[robots]]`, `[episode]`,
//! `[train]`, `[reward]` and `[perception]` sections (the last four are
//! optional and default-filled). Unknown keys are rejected. All coordinates
//! are stored verbatim in the configured frame; `map.origin` places the
//! arena rectangle, so configs may use negative coordinates as long as
//! everything fits inside `[origin, origin + size]`.

use crate::error::{Error, Result};
use crate::geom::{point_in_polygon, polygon_is_simple, Vec2};
use crate::motion::{RobotSpec, Team};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Region semantics: HIDDEN masks observation of entities inside it, NOFLY
/// blocks UAV positions, BUILDING blocks UGV positions, LAWN slows UGVs.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Hidden,
    Nofly,
    Building,
    Lawn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub kind: RegionKind,
    pub polygon: Vec<Vec2>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldMap {
    pub width: f64,
    pub height: f64,
    /// Lower-left corner of the arena rectangle in the configured frame.
    pub origin: Vec2,
    pub regions: Vec<Region>,
    pub sois: Vec<Vec2>,
    pub stations: Vec<Vec2>,
}

/// Observer flavor for containment queries.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum QueryMode {
    Air,
    Ground,
}

impl WorldMap {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.origin.x
            && p.x <= self.origin.x + self.width
            && p.y >= self.origin.y
            && p.y <= self.origin.y + self.height
    }

    pub fn diagonal(&self) -> f64 {
        (self.width * self.width + self.height * self.height).sqrt()
    }

    /// Iterate regions of one kind.
    pub fn regions_of(&self, kind: RegionKind) -> impl Iterator<Item = &Region> {
        self.regions.iter().filter(move |r| r.kind == kind)
    }

    pub fn point_in_kind(&self, p: Vec2, kind: RegionKind) -> bool {
        self.regions_of(kind)
            .any(|r| point_in_polygon(p, &r.polygon))
    }
}

/// Region kinds containing `p` that matter to the given mode. AIR reports
/// NOFLY membership; GROUND reports BUILDING, LAWN and HIDDEN. Points
/// outside every polygon (or outside the arena) return the empty set.
pub fn classify_point(map: &WorldMap, p: Vec2, mode: QueryMode) -> BTreeSet<RegionKind> {
    let relevant: &[RegionKind] = match mode {
        QueryMode::Air => &[RegionKind::Nofly],
        QueryMode::Ground => &[RegionKind::Building, RegionKind::Lawn, RegionKind::Hidden],
    };
    let mut out = BTreeSet::new();
    for &kind in relevant {
        if map.point_in_kind(p, kind) {
            out.insert(kind);
        }
    }
    out
}

/// Uniform rejection sample of a valid ground start (outside all BUILDING
/// polygons). Errors after 1000 failed draws.
pub fn sample_criminal_start<R: Rng>(map: &WorldMap, rng: &mut R) -> Result<Vec2> {
    for _ in 0..1000 {
        let x = rng.random_range(map.origin.x..map.origin.x + map.width);
        let y = rng.random_range(map.origin.y..map.origin.y + map.height);
        let p = Vec2::new(x, y);
        if !map.point_in_kind(p, RegionKind::Building) {
            return Ok(p);
        }
    }
    Err(Error::DegenerateMap(
        "no valid ground start found in 1000 rejection samples".into(),
    ))
}

/// Min Euclidean distance from `p` to any SoI.
pub fn nearest_soi_distance(map: &WorldMap, p: Vec2) -> Result<f64> {
    map.sois
        .iter()
        .map(|s| s.dist(p))
        .min_by(|a, b| a.total_cmp(b))
        .ok_or(Error::MissingTarget)
}

/// How the hidden-region mask is applied when building observations.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiddenMode {
    /// A robot standing inside a hidden region is invisible to everyone.
    Target,
    /// An observer inside a hidden region sees no other robots.
    Observer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerceptionParams {
    /// Store scalar distances instead of displacement vectors for other robots.
    pub scalar_distances: bool,
    pub hidden_mode: HiddenMode,
}

impl Default for PerceptionParams {
    fn default() -> Self {
        PerceptionParams {
            scalar_distances: false,
            hidden_mode: HiddenMode::Target,
        }
    }
}

/// Reward magnitudes. Shaping factors default to ∓`train.lambda`; event
/// bonuses dominate shaping by design (order 10 vs order 0.1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardParams {
    pub lambda_police: f64,
    pub lambda_criminal: f64,
    pub capture_bonus: f64,
    pub soi_bonus: f64,
    pub lawn_penalty: f64,
    pub safety_penalty: f64,
    pub edge_penalty: f64,
    pub edge_margin: f64,
}

/// Gradient application rule for both nets.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Adam with bias correction (β₁ 0.9, β₂ 0.999); the default.
    Adam,
    /// Plain gradient descent.
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainParams {
    pub optimizer: Optimizer,
    pub batch: usize,
    pub capacity: usize,
    pub tau: f64,
    pub lr_critic: f64,
    pub lr_policy: f64,
    pub noise_start: f64,
    pub noise_end: f64,
    pub episodes: u32,
    pub learn_police: bool,
    pub learn_criminal: bool,
    /// Hidden width of both policy and critic MLPs (two hidden layers).
    pub hidden: usize,
    /// Gradient steps run at the end of each episode.
    pub updates_per_episode: u32,
    /// Global gradient-norm clip applied at update time; 0 disables.
    pub grad_clip: f64,
    /// Checkpoint cadence in episodes; 0 = final checkpoint only.
    pub checkpoint_every: u32,
    /// Uniform observation divisor at the network boundary; 0 (default)
    /// selects per-feature normalization derived from the scenario.
    pub obs_scale: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            optimizer: Optimizer::Adam,
            batch: 256,
            capacity: 100_000,
            tau: 0.01,
            lr_critic: 1e-3,
            lr_policy: 1e-4,
            noise_start: 0.3,
            noise_end: 0.05,
            episodes: 1000,
            learn_police: true,
            learn_criminal: true,
            hidden: 64,
            updates_per_episode: 2,
            grad_clip: 0.0,
            checkpoint_every: 1000,
            obs_scale: 0.0,
        }
    }
}

/// A fully validated scenario: immutable after load, safe to share across
/// threads by reference.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub map: WorldMap,
    pub roster: Vec<RobotSpec>,
    pub horizon: u32,
    pub dt: f64,
    pub capture_distance: f64,
    pub min_capturers: usize,
    pub lawn_speed_factor: f64,
    pub sticky_capture: bool,
    pub gamma: f64,
    pub lambda: f64,
    pub seed: u64,
    pub train: TrainParams,
    pub reward: RewardParams,
    pub perception: PerceptionParams,
}

impl Scenario {
    pub fn robot_index(&self, id: &str) -> Result<usize> {
        self.roster
            .iter()
            .position(|r| r.id == id)
            .ok_or_else(|| Error::UnknownRobot(id.to_string()))
    }

    pub fn team_indices(&self, team: Team) -> Vec<usize> {
        self.roster
            .iter()
            .enumerate()
            .filter(|(_, r)| r.team == team)
            .map(|(i, _)| i)
            .collect()
    }

}

// --- document schema -------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub map: MapDoc,
    pub robots: Vec<RobotSpec>,
    #[serde(default)]
    pub episode: EpisodeDoc,
    #[serde(default)]
    pub train: TrainDoc,
    #[serde(default)]
    pub reward: RewardDoc,
    #[serde(default)]
    pub perception: PerceptionParams,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDoc {
    pub width: f64,
    pub height: f64,
    #[serde(default = "zero_vec")]
    pub origin: Vec2,
    #[serde(default)]
    pub regions: Vec<Region>,
    #[serde(default)]
    pub sois: Vec<Vec2>,
    #[serde(default)]
    pub stations: Vec<Vec2>,
}

fn zero_vec() -> Vec2 {
    Vec2::ZERO
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeDoc {
    pub horizon: u32,
    pub dt: f64,
    pub capture_distance: f64,
    pub min_capturers: usize,
    pub lawn_speed_factor: f64,
    pub sticky_capture: bool,
}

impl Default for EpisodeDoc {
    fn default() -> Self {
        EpisodeDoc {
            horizon: 400,
            dt: 0.1,
            capture_distance: 1.0,
            min_capturers: 2,
            lawn_speed_factor: 0.3,
            sticky_capture: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainDoc {
    pub gamma: f64,
    pub lambda: f64,
    pub seed: u64,
    #[serde(flatten)]
    pub params: TrainParams,
}

impl Default for TrainDoc {
    fn default() -> Self {
        TrainDoc {
            gamma: 0.95,
            lambda: 0.1,
            seed: 0,
            params: TrainParams::default(),
        }
    }
}

/// Reward keys are all optional; shaping factors fall back to ∓train.lambda.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardDoc {
    pub lambda_police: Option<f64>,
    pub lambda_criminal: Option<f64>,
    pub capture_bonus: Option<f64>,
    pub soi_bonus: Option<f64>,
    pub lawn_penalty: Option<f64>,
    pub safety_penalty: Option<f64>,
    pub edge_penalty: Option<f64>,
    pub edge_margin: Option<f64>,
}

impl RewardDoc {
    fn resolve(&self, lambda: f64) -> RewardParams {
        RewardParams {
            lambda_police: self.lambda_police.unwrap_or(-lambda),
            lambda_criminal: self.lambda_criminal.unwrap_or(lambda),
            capture_bonus: self.capture_bonus.unwrap_or(10.0),
            soi_bonus: self.soi_bonus.unwrap_or(10.0),
            lawn_penalty: self.lawn_penalty.unwrap_or(0.5),
            safety_penalty: self.safety_penalty.unwrap_or(1.0),
            edge_penalty: self.edge_penalty.unwrap_or(1.0),
            edge_margin: self.edge_margin.unwrap_or(0.5),
        }
    }
}

// --- loading and validation ------------------------------------------------

/// Parse and validate a scenario document.
pub fn load_scenario(source: &str) -> Result<Scenario> {
    let doc: ScenarioDoc = toml::from_str(source).map_err(|e| Error::Parse {
        key: "scenario".into(),
        message: e.to_string(),
    })?;
    scenario_from_doc(doc)
}

pub fn load_scenario_file(path: &std::path::Path) -> Result<Scenario> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    load_scenario(&text)
}

pub fn scenario_from_doc(doc: ScenarioDoc) -> Result<Scenario> {
    let scenario = Scenario {
        map: WorldMap {
            width: doc.map.width,
            height: doc.map.height,
            origin: doc.map.origin,
            regions: doc.map.regions,
            sois: doc.map.sois,
            stations: doc.map.stations,
        },
        roster: doc.robots,
        horizon: doc.episode.horizon,
        dt: doc.episode.dt,
        capture_distance: doc.episode.capture_distance,
        min_capturers: doc.episode.min_capturers,
        lawn_speed_factor: doc.episode.lawn_speed_factor,
        sticky_capture: doc.episode.sticky_capture,
        gamma: doc.train.gamma,
        lambda: doc.train.lambda,
        seed: doc.train.seed,
        train: doc.train.params,
        reward: doc.reward.resolve(doc.train.lambda),
        perception: doc.perception,
    };
    validate(&scenario)?;
    Ok(scenario)
}

/// Rebuild the document form (resolved snapshot) of a scenario.
pub fn scenario_to_doc(s: &Scenario) -> ScenarioDoc {
    ScenarioDoc {
        map: MapDoc {
            width: s.map.width,
            height: s.map.height,
            origin: s.map.origin,
            regions: s.map.regions.clone(),
            sois: s.map.sois.clone(),
            stations: s.map.stations.clone(),
        },
        robots: s.roster.clone(),
        episode: EpisodeDoc {
            horizon: s.horizon,
            dt: s.dt,
            capture_distance: s.capture_distance,
            min_capturers: s.min_capturers,
            lawn_speed_factor: s.lawn_speed_factor,
            sticky_capture: s.sticky_capture,
        },
        train: TrainDoc {
            gamma: s.gamma,
            lambda: s.lambda,
            seed: s.seed,
            params: s.train.clone(),
        },
        reward: RewardDoc {
            lambda_police: Some(s.reward.lambda_police),
            lambda_criminal: Some(s.reward.lambda_criminal),
            capture_bonus: Some(s.reward.capture_bonus),
            soi_bonus: Some(s.reward.soi_bonus),
            lawn_penalty: Some(s.reward.lawn_penalty),
            safety_penalty: Some(s.reward.safety_penalty),
            edge_penalty: Some(s.reward.edge_penalty),
            edge_margin: Some(s.reward.edge_margin),
        },
        perception: s.perception.clone(),
    }
}

/// Serialize the resolved scenario back to TOML. `load_scenario` of the
/// result reproduces the same scenario.
pub fn serialize_scenario(s: &Scenario) -> String {
    toml::to_string(&scenario_to_doc(s)).expect("scenario serializes")
}

fn validate(s: &Scenario) -> Result<()> {
    let map = &s.map;
    if !(map.width > 0.0) || !(map.height > 0.0) {
        return Err(Error::validation("map.width and map.height must be > 0"));
    }
    if !map.origin.is_finite() {
        return Err(Error::validation("map.origin must be finite"));
    }
    for (i, region) in map.regions.iter().enumerate() {
        if region.polygon.len() < 3 {
            return Err(Error::validation(format!(
                "map.regions[{i}].polygon needs at least 3 vertices"
            )));
        }
        if !region.polygon.iter().all(|v| v.is_finite()) {
            return Err(Error::validation(format!(
                "map.regions[{i}].polygon has non-finite vertices"
            )));
        }
        if !polygon_is_simple(&region.polygon) {
            return Err(Error::validation(format!(
                "map.regions[{i}].polygon is self-intersecting"
            )));
        }
        for v in &region.polygon {
            if !map.contains(*v) {
                return Err(Error::validation(format!(
                    "map.regions[{i}] vertex ({}, {}) outside arena",
                    v.x, v.y
                )));
            }
        }
    }
    for (i, p) in map.sois.iter().enumerate() {
        if !map.contains(*p) {
            return Err(Error::validation(format!("map.sois[{i}] outside arena")));
        }
        if map.point_in_kind(*p, RegionKind::Building) {
            return Err(Error::validation(format!(
                "map.sois[{i}] lies inside a building region"
            )));
        }
    }
    for (i, p) in map.stations.iter().enumerate() {
        if !map.contains(*p) {
            return Err(Error::validation(format!(
                "map.stations[{i}] outside arena"
            )));
        }
        if map.point_in_kind(*p, RegionKind::Building)
            || map.point_in_kind(*p, RegionKind::Hidden)
        {
            return Err(Error::validation(format!(
                "map.stations[{i}] lies inside a building or hidden region"
            )));
        }
    }

    if s.horizon < 1 {
        return Err(Error::validation("episode.horizon must be >= 1"));
    }
    if !(s.dt > 0.0) {
        return Err(Error::validation("episode.dt must be > 0"));
    }
    if !(s.capture_distance > 0.0) {
        return Err(Error::validation("episode.capture_distance must be > 0"));
    }
    if s.min_capturers < 1 {
        return Err(Error::validation("episode.min_capturers must be >= 1"));
    }
    if !(s.lawn_speed_factor > 0.0 && s.lawn_speed_factor <= 1.0) {
        return Err(Error::validation(
            "episode.lawn_speed_factor must be in (0, 1]",
        ));
    }
    if !(0.0..=1.0).contains(&s.gamma) {
        return Err(Error::validation("train.gamma must be in [0, 1]"));
    }
    if !s.lambda.is_finite() {
        return Err(Error::validation("train.lambda must be finite"));
    }

    let mut seen = BTreeSet::new();
    for spec in &s.roster {
        if spec.id.is_empty() {
            return Err(Error::validation("robot id must be non-empty"));
        }
        if !seen.insert(spec.id.clone()) {
            return Err(Error::validation(format!("duplicate robot id `{}`", spec.id)));
        }
        spec.validate()?;
    }
    let police = s.roster.iter().filter(|r| r.team == Team::Police).count();
    let criminals = s.roster.iter().filter(|r| r.team == Team::Criminal).count();
    if police == 0 || criminals == 0 {
        return Err(Error::validation(
            "roster needs at least one police and one criminal robot",
        ));
    }
    if police > 0 && map.stations.is_empty() {
        return Err(Error::validation(
            "map.stations must be non-empty (police start at stations)",
        ));
    }

    let t = &s.train;
    if t.batch < 1 {
        return Err(Error::validation("train.batch must be >= 1"));
    }
    if t.capacity < t.batch {
        return Err(Error::validation("train.capacity must be >= train.batch"));
    }
    if !(0.0..=1.0).contains(&t.tau) {
        return Err(Error::validation("train.tau must be in [0, 1]"));
    }
    if !(t.lr_critic > 0.0) || !(t.lr_policy > 0.0) {
        return Err(Error::validation("learning rates must be > 0"));
    }
    if t.noise_start < 0.0 || t.noise_end < 0.0 {
        return Err(Error::validation("noise scales must be >= 0"));
    }
    if t.hidden < 1 {
        return Err(Error::validation("train.hidden must be >= 1"));
    }
    if t.grad_clip < 0.0 {
        return Err(Error::validation("train.grad_clip must be >= 0"));
    }
    if t.obs_scale < 0.0 {
        return Err(Error::validation("train.obs_scale must be >= 0"));
    }

    let r = &s.reward;
    for (name, v) in [
        ("reward.lambda_police", r.lambda_police),
        ("reward.lambda_criminal", r.lambda_criminal),
        ("reward.capture_bonus", r.capture_bonus),
        ("reward.soi_bonus", r.soi_bonus),
        ("reward.lawn_penalty", r.lawn_penalty),
        ("reward.safety_penalty", r.safety_penalty),
        ("reward.edge_penalty", r.edge_penalty),
        ("reward.edge_margin", r.edge_margin),
    ] {
        if !v.is_finite() {
            return Err(Error::validation(format!("{name} must be finite")));
        }
    }

    Ok(())
}

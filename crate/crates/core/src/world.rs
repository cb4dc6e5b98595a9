//! Arena geometry, resource sites, mineral bookkeeping and seeded scenario
//! generation.

use std::fmt;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::PolicyKind;

/// Simulation time in ticks.
pub type Tick = u64;

/// Floating point slack used for geometric comparisons.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("could not place {wanted} sites with the required separation after {attempts} attempts")]
    OverDense { wanted: usize, attempts: usize },
    #[error("unknown site {0}")]
    UnknownSite(SiteId),
    #[error("site {site} is already claimed by {holder}")]
    AlreadyClaimed { site: SiteId, holder: String },
    #[error("site {site} is not claimed by {robot}")]
    NotClaimant { site: SiteId, robot: String },
    #[error("site {0} has no minerals left to dig")]
    SiteDepleted(SiteId),
    #[error("site {0} has no dug mineral waiting for pickup")]
    NothingToLoad(SiteId),
    #[error("hauler carries no mineral")]
    EmptyBin,
    #[error("hauler is not at the processing plant")]
    NotAtPlant,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(&self, other: &Point, t: f64) -> Point {
        Point::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Total order on the bit patterns, used wherever points key a map.
    pub fn total_cmp(&self, other: &Point) -> std::cmp::Ordering {
        self.x.total_cmp(&other.x).then(self.y.total_cmp(&other.y))
    }

    pub fn in_arena(&self, side: f64) -> bool {
        (-EPS..=side + EPS).contains(&self.x) && (-EPS..=side + EPS).contains(&self.y)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SiteId(pub u32);

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "site_{}", self.0)
    }
}

/// One unit of excavated volatile: the `ordinal`-th mineral dug at `site`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MineralId {
    pub site: SiteId,
    pub ordinal: u32,
}

impl fmt::Display for MineralId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/m{}", self.site, self.ordinal)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSite {
    pub site_id: SiteId,
    pub location: Point,
    pub minerals_remaining: u32,
    pub minerals_initial: u32,
    pub discovered: bool,
    pub claimed_by: Option<String>,
    /// Dug minerals sitting in the excavator bucket, waiting for a hauler.
    pub awaiting_pickup: Vec<MineralId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingConfig {
    pub robot_speed: f64,
    pub dig_duration: Tick,
    pub load_duration: Tick,
    pub unload_duration: Tick,
    pub bid_window: Tick,
    pub win_resolution_window: Tick,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            robot_speed: 1.0,
            dig_duration: 20,
            load_duration: 5,
            unload_duration: 5,
            bid_window: 3,
            win_resolution_window: 1,
        }
    }
}

impl TimingConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        if !(self.robot_speed.is_finite() && self.robot_speed > 0.0) {
            return Err(WorldError::InvalidConfig("robot_speed must be positive".into()));
        }
        let ticks = [
            ("dig_duration", self.dig_duration),
            ("load_duration", self.load_duration),
            ("unload_duration", self.unload_duration),
            ("bid_window", self.bid_window),
            ("win_resolution_window", self.win_resolution_window),
        ];
        for (name, value) in ticks {
            if value == 0 {
                return Err(WorldError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

pub const DEFAULT_TICK_CAP: Tick = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub arena_side: f64,
    pub n_scouts: usize,
    pub n_excavators: usize,
    pub n_haulers: usize,
    pub n_sites: usize,
    pub n_minerals: u32,
    pub scan_radius: f64,
    pub seed: u64,
    pub policy: PolicyKind,
    pub timing: TimingConfig,
    pub tick_cap: Tick,
    /// Append per-robot snapshots to the event log every tick.
    pub debug_snapshots: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            arena_side: 100.0,
            n_scouts: 2,
            n_excavators: 4,
            n_haulers: 6,
            n_sites: 10,
            n_minerals: 64,
            scan_radius: 2.5,
            seed: 0,
            policy: PolicyKind::Fcfs,
            timing: TimingConfig::default(),
            tick_cap: DEFAULT_TICK_CAP,
            debug_snapshots: false,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |msg: &str| Err(WorldError::InvalidConfig(msg.to_string()));
        if !(self.arena_side.is_finite() && self.arena_side > 0.0) {
            return bad("arena_side must be positive");
        }
        if !(self.scan_radius.is_finite() && self.scan_radius > 0.0) {
            return bad("scan_radius must be positive");
        }
        if self.n_scouts == 0 || self.n_excavators == 0 || self.n_haulers == 0 {
            return bad("every robot kind needs at least one robot");
        }
        if self.n_scouts > 2 {
            return bad("at most two scouts are supported");
        }
        if self.n_sites == 0 {
            return bad("n_sites must be at least 1");
        }
        if (self.n_minerals as usize) < self.n_sites {
            return bad("n_minerals must be at least n_sites");
        }
        if self.tick_cap == 0 {
            return bad("tick_cap must be positive");
        }
        self.timing.validate()
    }

    /// Side of a search grid cell: the largest divisor of the arena whose
    /// cells fit entirely inside the scan disk centred on them.
    pub fn cell_side(&self) -> f64 {
        let per_side = (self.arena_side / (self.scan_radius * std::f64::consts::SQRT_2)).ceil();
        self.arena_side / per_side.max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub arena_side: f64,
    pub plant_location: Point,
    pub sites: Vec<ResourceSite>,
    pub minerals_at_plant: u32,
    /// Minerals currently riding in hauler bins.
    pub minerals_in_transit: u32,
    pub tick: Tick,
}

impl WorldState {
    /// A world with no sites; the plant sits at the arena centre.
    pub fn empty(arena_side: f64) -> Self {
        Self {
            arena_side,
            plant_location: Point::new(arena_side / 2.0, arena_side / 2.0),
            sites: Vec::new(),
            minerals_at_plant: 0,
            minerals_in_transit: 0,
            tick: 0,
        }
    }

    /// Builds a world from explicit `(location, mineral count)` pairs.
    pub fn with_sites(arena_side: f64, sites: &[(Point, u32)]) -> Self {
        let mut world = Self::empty(arena_side);
        world.sites = sites
            .iter()
            .enumerate()
            .map(|(i, &(location, minerals))| ResourceSite {
                site_id: SiteId(i as u32),
                location,
                minerals_remaining: minerals,
                minerals_initial: minerals,
                discovered: false,
                claimed_by: None,
                awaiting_pickup: Vec::new(),
            })
            .collect();
        world
    }

    pub fn total_minerals(&self) -> u32 {
        self.sites.iter().map(|s| s.minerals_initial).sum()
    }

    pub fn site(&self, id: SiteId) -> Result<&ResourceSite, WorldError> {
        self.sites.get(id.0 as usize).ok_or(WorldError::UnknownSite(id))
    }

    fn site_mut(&mut self, id: SiteId) -> Result<&mut ResourceSite, WorldError> {
        self.sites.get_mut(id.0 as usize).ok_or(WorldError::UnknownSite(id))
    }

    pub fn site_at(&self, location: &Point) -> Option<SiteId> {
        self.sites
            .iter()
            .find(|s| s.location.distance(location) <= EPS)
            .map(|s| s.site_id)
    }

    pub fn all_discovered(&self) -> bool {
        self.sites.iter().all(|s| s.discovered)
    }

    /// Mineral conservation: plant + in the ground + buffered + in transit
    /// always equals the initial inventory.
    pub fn conserves_minerals(&self) -> bool {
        let in_ground: u32 = self.sites.iter().map(|s| s.minerals_remaining).sum();
        let buffered: u32 = self.sites.iter().map(|s| s.awaiting_pickup.len() as u32).sum();
        self.minerals_at_plant + in_ground + buffered + self.minerals_in_transit
            == self.total_minerals()
    }

    /// Marks every undiscovered site within `radius` of any point on the
    /// polyline `swath` as discovered and returns their ids.
    pub fn discover_along(&mut self, swath: &[Point], radius: f64) -> Vec<SiteId> {
        let mut found = Vec::new();
        for site in self.sites.iter_mut().filter(|s| !s.discovered) {
            if distance_to_polyline(&site.location, swath) <= radius + EPS {
                site.discovered = true;
                found.push(site.site_id);
            }
        }
        found
    }

    pub fn claim(&mut self, id: SiteId, excavator: &str) -> Result<(), WorldError> {
        let site = self.site_mut(id)?;
        match &site.claimed_by {
            Some(holder) if holder != excavator => Err(WorldError::AlreadyClaimed {
                site: id,
                holder: holder.clone(),
            }),
            _ => {
                site.claimed_by = Some(excavator.to_string());
                Ok(())
            }
        }
    }

    pub fn release(&mut self, id: SiteId, excavator: &str) -> Result<(), WorldError> {
        let site = self.site_mut(id)?;
        if site.claimed_by.as_deref() != Some(excavator) {
            return Err(WorldError::NotClaimant { site: id, robot: excavator.to_string() });
        }
        site.claimed_by = None;
        Ok(())
    }

    /// Moves one mineral out of the ground into the excavator bucket.
    pub fn dig(&mut self, id: SiteId) -> Result<MineralId, WorldError> {
        let site = self.site_mut(id)?;
        if site.minerals_remaining == 0 {
            return Err(WorldError::SiteDepleted(id));
        }
        let mineral = MineralId { site: id, ordinal: site.minerals_initial - site.minerals_remaining };
        site.minerals_remaining -= 1;
        site.awaiting_pickup.push(mineral);
        Ok(mineral)
    }

    /// Moves the oldest buffered mineral at a site into a hauler bin.
    pub fn load(&mut self, id: SiteId) -> Result<MineralId, WorldError> {
        let site = self.site_mut(id)?;
        if site.awaiting_pickup.is_empty() {
            return Err(WorldError::NothingToLoad(id));
        }
        let mineral = site.awaiting_pickup.remove(0);
        self.minerals_in_transit += 1;
        Ok(mineral)
    }

    /// Empties a hauler bin into the plant. The bin must hold a mineral and
    /// the hauler must stand at the plant; on error nothing changes.
    pub fn transfer_mineral_to_plant(
        &mut self,
        hauler_pose: &Point,
        bin: &mut Option<MineralId>,
    ) -> Result<MineralId, WorldError> {
        let Some(mineral) = *bin else {
            return Err(WorldError::EmptyBin);
        };
        if hauler_pose.distance(&self.plant_location) > EPS {
            return Err(WorldError::NotAtPlant);
        }
        *bin = None;
        self.minerals_in_transit -= 1;
        self.minerals_at_plant += 1;
        Ok(mineral)
    }
}

pub(crate) fn distance_to_segment(p: &Point, a: &Point, b: &Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(&a.lerp(b, t))
}

pub(crate) fn distance_to_polyline(p: &Point, line: &[Point]) -> f64 {
    match line {
        [] => f64::INFINITY,
        [only] => p.distance(only),
        _ => line
            .windows(2)
            .map(|w| distance_to_segment(p, &w[0], &w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

const PLACEMENT_ATTEMPTS: usize = 10_000;

/// Seeded scenario: sites placed uniformly at random, kept at least two scan
/// radii from the plant and one scan radius from each other; the mineral
/// inventory is split across sites by a uniform composition with every part
/// at least one.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<WorldState, WorldError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let side = config.arena_side;
    let plant = Point::new(side / 2.0, side / 2.0);
    let plant_clearance = 2.0 * config.scan_radius;

    let mut locations: Vec<Point> = Vec::with_capacity(config.n_sites);
    let mut attempts = 0;
    while locations.len() < config.n_sites {
        if attempts == PLACEMENT_ATTEMPTS {
            return Err(WorldError::OverDense { wanted: config.n_sites, attempts });
        }
        attempts += 1;
        let candidate = Point::new(rng.random_range(0.0..side), rng.random_range(0.0..side));
        if candidate.distance(&plant) < plant_clearance {
            continue;
        }
        if locations.iter().any(|p| p.distance(&candidate) < config.scan_radius) {
            continue;
        }
        locations.push(candidate);
    }

    let counts = split_minerals(&mut rng, config.n_minerals, config.n_sites);
    let pairs: Vec<(Point, u32)> = locations.into_iter().zip(counts).collect();
    Ok(WorldState::with_sites(side, &pairs))
}

/// Stars and bars: choose `parts - 1` distinct cut points in `1..total`.
fn split_minerals(rng: &mut ChaCha8Rng, total: u32, parts: usize) -> Vec<u32> {
    let mut cuts: Vec<u32> = sample(rng, total as usize - 1, parts - 1)
        .into_iter()
        .map(|c| c as u32 + 1)
        .collect();
    cuts.sort_unstable();
    let mut counts = Vec::with_capacity(parts);
    let mut last = 0;
    for cut in cuts.into_iter().chain(std::iter::once(total)) {
        counts.push(cut - last);
        last = cut;
    }
    counts
}

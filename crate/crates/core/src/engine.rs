//! The tick loop. Each tick: deliver last tick's messages, step every robot
//! in a fixed order, fire auction timers, then test for termination.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{spawn_fleet, Assignment, Peers, Robot, RobotKind, RobotState, SpiralError, StepCtx, START_RADIUS, STANDBY_OFFSET};
use crate::bus::{Bus, Message};
use crate::log::{EventLog, LogRecord, RunEnd, RunMeta, SiteSeed, Snapshot};
use crate::metrics::{collect_metrics, MetricsReport};
use crate::policy::{Policy, PolicyKind, UNPAIRED_HAULERS};
use crate::world::{generate_scenario, ScenarioConfig, Tick, WorldError, WorldState};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Spiral(#[from] SpiralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Stalled,
}

pub struct SimRun {
    pub config: ScenarioConfig,
    pub world: WorldState,
    pub robots: Vec<Robot>,
    pub policy: Policy,
    /// The next tick to execute.
    pub tick: Tick,
    pub status: RunStatus,
    bus: Bus,
    log: EventLog,
    dispatch: BTreeMap<String, Assignment>,
}

/// A finished run: its log and the metrics derived from it.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub status: RunStatus,
    pub final_tick: Tick,
    pub world: WorldState,
    pub records: Vec<LogRecord>,
    pub report: MetricsReport,
}

impl SimRun {
    pub fn new(config: ScenarioConfig) -> Result<Self, EngineError> {
        let world = generate_scenario(&config)?;
        Self::with_world(config, world)
    }

    /// Runs `config`'s fleet in a prepared world; site counts in the config
    /// are ignored in favour of the world's.
    pub fn with_world(config: ScenarioConfig, world: WorldState) -> Result<Self, EngineError> {
        config.timing.validate()?;
        if config.tick_cap == 0 {
            return Err(WorldError::InvalidConfig("tick_cap must be positive".into()).into());
        }
        let robots = spawn_fleet(&config, world.plant_location)?;
        let names_of = |kind| robots.iter().filter(|r| r.state.kind == kind).map(|r| r.state.name.clone()).collect::<Vec<_>>();
        let policy = Policy::new(config.policy, &names_of(RobotKind::Excavator), &names_of(RobotKind::Hauler));
        let mut log = EventLog::new();
        log.push(LogRecord::Meta(Box::new(run_meta(&config, &world, &robots, &policy))));
        Ok(Self {
            config,
            world,
            robots,
            policy,
            tick: 0,
            status: RunStatus::Running,
            bus: Bus::new(),
            log,
            dispatch: BTreeMap::new(),
        })
    }

    pub fn open_auctions(&self) -> usize {
        self.robots.iter().map(|r| r.house().open_count()).sum()
    }

    pub fn robot_states(&self) -> impl Iterator<Item = &RobotState> {
        self.robots.iter().map(|r| &r.state)
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn is_complete(&self) -> bool {
        self.world.all_discovered()
            && self.world.minerals_at_plant == self.world.total_minerals()
            && self.open_auctions() == 0
    }

    pub fn step(&mut self) {
        assert_eq!(self.status, RunStatus::Running, "stepping a finished run");
        let tick = self.tick;
        self.world.tick = tick;
        self.bus.deliver(tick);

        for i in 0..self.robots.len() {
            let (before, rest) = self.robots.split_at_mut(i);
            let (me, after) = rest.split_first_mut().expect("index in range");
            let mut ctx = StepCtx {
                tick,
                config: &self.config,
                policy: &self.policy,
                world: &mut self.world,
                bus: &mut self.bus,
                log: &mut self.log,
                dispatch: &mut self.dispatch,
                peers: Peers { before, after },
            };
            me.step(&mut ctx);
        }
        debug_assert!(self.dispatch.is_empty(), "direct assignments are picked up the tick they are made");

        let window = self.config.timing.bid_window;
        for i in 0..self.robots.len() {
            let fired: Vec<Message> = self.robots[i].house.fire_timers(tick, window);
            for msg in fired {
                let envelope = self.bus.publish(msg, tick);
                self.log.message(envelope);
            }
        }

        if self.config.debug_snapshots {
            for r in &self.robots {
                self.log.push(LogRecord::Snapshot(Snapshot {
                    tick,
                    name: r.state.name.clone(),
                    pose: r.state.pose,
                    activity: r.state.activity,
                    busy: r.state.is_busy(),
                    odometry: r.state.odometry,
                    carried_minerals: r.state.carried_minerals,
                }));
            }
        }

        if self.is_complete() {
            self.finish(RunStatus::Completed);
        } else if tick + 1 >= self.config.tick_cap {
            self.finish(RunStatus::Stalled);
        } else {
            self.tick += 1;
        }
    }

    fn finish(&mut self, status: RunStatus) {
        self.status = status;
        self.log.push(LogRecord::End(RunEnd {
            tick: self.tick,
            status,
            sites_discovered: self.world.sites.iter().filter(|s| s.discovered).count(),
            minerals_at_plant: self.world.minerals_at_plant,
            open_auctions: self.open_auctions(),
            odometry: self.robots.iter().map(|r| (r.state.name.clone(), r.state.odometry)).collect(),
        }));
    }

    pub fn run(&mut self) -> RunStatus {
        while self.status == RunStatus::Running {
            self.step();
        }
        self.status
    }

    /// SHA-256 over the full observable state.
    pub fn digest(&self) -> String {
        let states: Vec<&RobotState> = self.robot_states().collect();
        let state = serde_json::json!({
            "tick": self.tick,
            "status": self.status,
            "world": &self.world,
            "robots": states,
            "published": self.bus.published_count(),
            "log_len": self.log.records().len(),
        });
        let bytes = serde_json::to_vec(&state).expect("state serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn into_output(self) -> RunOutput {
        let records = self.log.into_records();
        let report = collect_metrics(&records).expect("the engine writes well-formed logs");
        RunOutput { status: self.status, final_tick: self.tick, world: self.world, records, report }
    }
}

fn run_meta(config: &ScenarioConfig, world: &WorldState, robots: &[Robot], policy: &Policy) -> RunMeta {
    let constants: BTreeMap<String, serde_json::Value> = [
        ("start_radius", serde_json::json!(START_RADIUS)),
        ("standby_offset", serde_json::json!(STANDBY_OFFSET)),
        ("unpaired_haulers", serde_json::json!(UNPAIRED_HAULERS)),
        ("hauler_capacity", serde_json::json!(1)),
        ("transport_auctions", serde_json::json!("one per mineral")),
        ("utility", serde_json::json!("negative straight-line path length; busy bids -inf")),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let mut notes = vec![
        "scouts keep searching while their auctions are open".to_string(),
        "acceptances are binding; later wins are declined while busy".to_string(),
    ];
    if config.policy == PolicyKind::Coalition {
        notes.push("scout-to-excavator tier uses first-come first-served bidding under coalition".to_string());
    }
    let cell_side = config.cell_side();
    RunMeta {
        config: config.clone(),
        cell_side,
        grid_side: (config.arena_side / cell_side).round() as usize,
        plant: world.plant_location,
        sites: world
            .sites
            .iter()
            .map(|s| SiteSeed { site: s.site_id, location: s.location, minerals: s.minerals_initial })
            .collect(),
        robots: robots.iter().map(|r| (r.state.name.clone(), r.state.kind)).collect(),
        coalition_pairs: policy.pairs.clone(),
        constants,
        notes,
    }
}

/// Generates the scenario for `config`, runs it to the end and derives its
/// metrics.
pub fn run_to_completion(config: ScenarioConfig) -> Result<RunOutput, EngineError> {
    let mut run = SimRun::new(config)?;
    run.run();
    Ok(run.into_output())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Point;

    #[test]
    fn empty_world_completes_at_once() {
        let config = ScenarioConfig::default();
        let mut run = SimRun::with_world(config, WorldState::empty(100.0)).unwrap();
        run.step();
        assert_eq!(run.status, RunStatus::Completed);
        assert_eq!(run.tick, 0);
    }

    #[test]
    fn tiny_cap_stalls() {
        let config = ScenarioConfig { tick_cap: 10, ..ScenarioConfig::default() };
        let out = run_to_completion(config).unwrap();
        assert_eq!(out.status, RunStatus::Stalled);
        assert_eq!(out.final_tick, 9);
        assert!(out.report.stalled);
    }

    #[test]
    fn minimal_mission() {
        let config = ScenarioConfig { n_sites: 1, n_minerals: 1, seed: 3, ..ScenarioConfig::default() };
        let out = run_to_completion(config).unwrap();
        assert_eq!(out.status, RunStatus::Completed);
        assert_eq!(out.world.minerals_at_plant, 1);
        let closes: Vec<_> = out
            .records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Message(e) => match &e.payload {
                    Message::Close(c) => Some(c.task_type),
                    _ => None,
                },
                _ => None,
            })
            .collect();
        assert_eq!(closes, vec![crate::bus::TaskType::Excavate, crate::bus::TaskType::Transport]);
    }

    #[test]
    fn hand_built_world_runs() {
        let world = WorldState::with_sites(100.0, &[(Point::new(60.0, 50.0), 3)]);
        let mut run = SimRun::with_world(ScenarioConfig::default(), world).unwrap();
        assert_eq!(run.run(), RunStatus::Completed);
        assert_eq!(run.world.minerals_at_plant, 3);
        assert!(run.world.conserves_minerals());
    }

    #[test]
    fn digest_tracks_state() {
        let config = ScenarioConfig { seed: 5, ..ScenarioConfig::default() };
        let mut a = SimRun::new(config.clone()).unwrap();
        let mut b = SimRun::new(config).unwrap();
        for _ in 0..200 {
            assert_eq!(a.digest(), b.digest());
            a.step();
            b.step();
        }
        let before = a.digest();
        a.step();
        assert_ne!(before, a.digest());
    }
}

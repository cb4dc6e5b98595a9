//! Robot controllers. Every robot is stepped once per tick by the engine:
//! it reads its inbox, runs the auctioneer side of any auctions it holds,
//! settles wins, performs its kind-specific behaviour and finally bids.

mod excavator;
mod hauler;
mod scout;
pub mod spiral;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::auction::{evaluate_self_utility, submit_bid, AuctionBook, AuctionHouse, AuctionKey};
use crate::bus::{Bus, Envelope, Message, TaskType, Verdict, WinnerDecl};
use crate::log::{EventLog, WinChoice, WorldEvent};
use crate::pathing::{estimate_path, Travel};
use crate::policy::Policy;
use crate::world::{MineralId, Point, ScenarioConfig, SiteId, Tick, WorldState};

pub use spiral::{build_spiral, Cell, SpiralError, SpiralPlan};

/// Radius of the circle around the plant on which ground robots start.
pub const START_RADIUS: f64 = 5.0;
/// Distance from its parent's site, toward the plant, at which a paired
/// hauler waits under the coalition policy.
pub const STANDBY_OFFSET: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotKind {
    Scout,
    Excavator,
    Hauler,
}

impl RobotKind {
    pub const ALL: [RobotKind; 3] = [RobotKind::Scout, RobotKind::Excavator, RobotKind::Hauler];

    pub fn as_str(&self) -> &'static str {
        match self {
            RobotKind::Scout => "scout",
            RobotKind::Excavator => "excavator",
            RobotKind::Hauler => "hauler",
        }
    }
}

impl fmt::Display for RobotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Searching,
    Done,
    Idle,
    Traveling,
    Digging,
    WaitingForHauler,
    Standby,
    ToSite,
    Loading,
    ToPlant,
    Unloading,
}

impl Activity {
    pub fn allowed_for(&self, kind: RobotKind) -> bool {
        use Activity::*;
        match kind {
            RobotKind::Scout => matches!(self, Searching | Done),
            RobotKind::Excavator => matches!(self, Idle | Traveling | Digging | WaitingForHauler),
            RobotKind::Hauler => matches!(self, Idle | Standby | ToSite | Loading | ToPlant | Unloading),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub name: String,
    pub kind: RobotKind,
    pub pose: Point,
    pub activity: Activity,
    pub odometry: f64,
    pub carried_minerals: u32,
}

impl RobotState {
    pub fn new(name: &str, kind: RobotKind, pose: Point, activity: Activity) -> Self {
        assert!(activity.allowed_for(kind), "{activity:?} is not a {kind} activity");
        Self { name: name.to_string(), kind, pose, activity, odometry: 0.0, carried_minerals: 0 }
    }

    /// Unavailable for new work. Scouts take no tasks and so are never busy.
    pub fn is_busy(&self) -> bool {
        match self.kind {
            RobotKind::Scout => false,
            _ => !matches!(self.activity, Activity::Idle | Activity::Standby),
        }
    }
}

pub fn robot_name(kind: RobotKind, index: usize) -> String {
    format!("{kind}_{}", index + 1)
}

/// Work handed straight to a paired hauler, bypassing the auction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub excavator: String,
    pub site: SiteId,
    pub location: Point,
    pub mineral: MineralId,
}

/// Where a robot is working, and until when.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct Job {
    pub site: Option<(SiteId, Point)>,
    /// The excavator a hauler is serving.
    pub partner: Option<String>,
    pub until: Tick,
}

#[derive(Debug, Clone)]
pub(crate) struct ScoutRoute {
    pub plan: SpiralPlan,
}

#[derive(Debug, Clone)]
pub struct Robot {
    pub state: RobotState,
    pub(crate) travel: Option<Travel>,
    pub(crate) job: Job,
    pub(crate) bin: Option<MineralId>,
    pub(crate) book: AuctionBook,
    pub(crate) house: AuctionHouse,
    /// Wins addressed to this robot, with the tick they were delivered.
    pub(crate) wins: Vec<(Tick, WinnerDecl)>,
    pub(crate) route: Option<ScoutRoute>,
}

impl Robot {
    pub fn new(state: RobotState) -> Self {
        Self {
            state,
            travel: None,
            job: Job::default(),
            bin: None,
            book: AuctionBook::default(),
            house: AuctionHouse::default(),
            wins: Vec::new(),
            route: None,
        }
    }

    pub fn scout(name: &str, start: Point, plan: SpiralPlan) -> Self {
        let mut robot = Robot::new(RobotState::new(name, RobotKind::Scout, start, Activity::Searching));
        let mut waypoints = vec![start];
        waypoints.extend(plan.waypoints());
        robot.travel = Some(Travel::new(crate::pathing::PathEstimate::through(waypoints)));
        robot.route = Some(ScoutRoute { plan });
        robot
    }

    pub fn house(&self) -> &AuctionHouse {
        &self.house
    }

    pub fn book(&self) -> &AuctionBook {
        &self.book
    }

    pub fn plan(&self) -> Option<&SpiralPlan> {
        self.route.as_ref().map(|r| &r.plan)
    }

    /// Site this robot is bound to, if any.
    pub fn site(&self) -> Option<(SiteId, Point)> {
        self.job.site
    }

    /// Cells whose centres this scout has reached so far.
    pub fn visited_cells(&self) -> Vec<Cell> {
        match (&self.route, &self.travel) {
            (Some(route), Some(travel)) => route.plan.visit_order[..travel.reached()].to_vec(),
            _ => Vec::new(),
        }
    }

    fn set_activity(&mut self, activity: Activity) {
        debug_assert!(activity.allowed_for(self.state.kind));
        self.state.activity = activity;
    }

    fn head_to(&mut self, goal: Point) {
        self.travel = Some(Travel::new(estimate_path(self.state.pose, goal)));
    }

    /// One tick of motion; returns the swept polyline and whether the goal
    /// has been reached.
    fn advance(&mut self, speed: f64) -> (Vec<Point>, bool) {
        let Some(travel) = self.travel.as_mut() else {
            return (vec![self.state.pose], true);
        };
        let stride = travel.advance(speed);
        self.state.pose = stride.pose;
        self.state.odometry += stride.moved;
        (stride.swept, stride.arrived)
    }

    /// The engine's per-tick entry point.
    pub fn step(&mut self, ctx: &mut StepCtx<'_>) {
        let inbox = ctx.bus.drain_inbox(&self.state.name, ctx.tick);
        self.read_inbox(&inbox, ctx);
        self.settle_wins(ctx);
        match self.state.kind {
            RobotKind::Scout => scout::step(self, ctx),
            RobotKind::Excavator => excavator::step(self, ctx),
            RobotKind::Hauler => hauler::step(self, ctx),
        }
        self.place_bids(ctx);
    }

    fn read_inbox(&mut self, inbox: &[Envelope], ctx: &mut StepCtx<'_>) {
        for envelope in inbox {
            if envelope.payload.auctioneer() == self.state.name {
                if let Some(reply) = self.house.receive(envelope, ctx.tick) {
                    ctx.publish(reply);
                }
            }
            self.book.observe(envelope);
            if let Message::WinnerDecl(w) = &envelope.payload {
                if w.winner == self.state.name {
                    self.wins.push((ctx.tick, w.clone()));
                }
            }
        }
    }

    fn settle_wins(&mut self, ctx: &mut StepCtx<'_>) {
        let window = ctx.config.timing.win_resolution_window;
        let (due, later): (Vec<_>, Vec<_>) =
            std::mem::take(&mut self.wins).into_iter().partition(|(t, _)| t + window - 1 <= ctx.tick);
        self.wins = later;
        if due.is_empty() {
            return;
        }
        let wins: Vec<WinnerDecl> = due.into_iter().map(|(_, w)| w).collect();
        let resolution = ctx.policy.resolve_wins(&self.state, &wins);
        let mut declined = resolution.decline;
        let mut accepted = None;
        if let Some(win) = resolution.accept {
            if self.take_task(&win, ctx) {
                accepted = Some(win);
            } else {
                declined.push(win);
            }
        }
        let choice = |w: &WinnerDecl| WinChoice {
            auctioneer: w.auctioneer.clone(),
            task_location: w.task_location,
            path_length: estimate_path(self.state.pose, w.task_location).length,
        };
        // the pose has not moved since the decision, so lengths match what
        // the policy compared
        ctx.event(WorldEvent::WinsResolved {
            robot: self.state.name.clone(),
            accepted: accepted.as_ref().map(choice),
            declined: declined.iter().map(choice).collect(),
        });
        let me = self.state.name.clone();
        if let Some(w) = &accepted {
            ctx.publish(Message::ack(&w.auctioneer, &me, w.task_location, Verdict::Accepted).expect("valid ack"));
        }
        for w in &declined {
            ctx.publish(Message::ack(&w.auctioneer, &me, w.task_location, Verdict::Declined).expect("valid ack"));
        }
    }

    /// Commits to an accepted task. Returns false when it cannot be taken.
    fn take_task(&mut self, win: &WinnerDecl, ctx: &mut StepCtx<'_>) -> bool {
        match win.task_type {
            TaskType::Excavate => excavator::accept(self, win, ctx),
            TaskType::Transport => hauler::accept(self, win, ctx),
        }
    }

    fn place_bids(&mut self, ctx: &mut StepCtx<'_>) {
        let open = self.book.ordered();
        let chosen: Vec<(AuctionKey, TaskType)> = ctx
            .policy
            .bid_filter(&self.state, &open)
            .into_iter()
            .map(|a| (a.key.clone(), a.task_type))
            .collect();
        for (key, task_type) in chosen {
            let utility = evaluate_self_utility(&self.state, key.task_location);
            if !self.book.get(&key).is_some_and(|a| a.wants_bid(utility)) {
                continue;
            }
            let bid = submit_bid(&self.state, &key, task_type, utility).expect("policy only offers capable auctions");
            ctx.publish(bid);
            self.book.note_bid(&key, utility);
        }
    }
}

/// Read-only view of every robot other than the one being stepped.
#[derive(Clone, Copy)]
pub struct Peers<'a> {
    pub before: &'a [Robot],
    pub after: &'a [Robot],
}

impl<'a> Peers<'a> {
    pub fn get(&self, name: &str) -> Option<&'a Robot> {
        self.before.iter().chain(self.after.iter()).find(|r| r.state.name == name)
    }
}

/// Everything a robot may touch during its step.
pub struct StepCtx<'a> {
    pub tick: Tick,
    pub config: &'a ScenarioConfig,
    pub policy: &'a Policy,
    pub world: &'a mut WorldState,
    pub bus: &'a mut Bus,
    pub log: &'a mut EventLog,
    pub dispatch: &'a mut BTreeMap<String, Assignment>,
    pub peers: Peers<'a>,
}

impl StepCtx<'_> {
    pub fn publish(&mut self, msg: Message) {
        let envelope = self.bus.publish(msg, self.tick);
        self.log.message(envelope);
    }

    pub fn event(&mut self, event: WorldEvent) {
        self.log.event(self.tick, event);
    }
}

/// Start poses for ground robots: equal angles on a circle around the plant,
/// excavators first, then haulers.
pub fn start_poses(plant: Point, n: usize) -> Vec<Point> {
    (0..n)
        .map(|i| {
            let angle = std::f64::consts::TAU * i as f64 / n as f64;
            Point::new(plant.x + START_RADIUS * angle.cos(), plant.y + START_RADIUS * angle.sin())
        })
        .collect()
}

/// Builds the fleet in step order: scouts, excavators, haulers.
pub fn spawn_fleet(config: &ScenarioConfig, plant: Point) -> Result<Vec<Robot>, SpiralError> {
    let plans = build_spiral(config.arena_side, config.cell_side(), config.n_scouts)?;
    let mut fleet: Vec<Robot> = plans
        .into_iter()
        .enumerate()
        .map(|(i, plan)| Robot::scout(&robot_name(RobotKind::Scout, i), plant, plan))
        .collect();
    let poses = start_poses(plant, config.n_excavators + config.n_haulers);
    let ground = (0..config.n_excavators)
        .map(|i| (RobotKind::Excavator, i))
        .chain((0..config.n_haulers).map(|i| (RobotKind::Hauler, i)));
    for ((kind, i), pose) in ground.zip(poses) {
        fleet.push(Robot::new(RobotState::new(&robot_name(kind, i), kind, pose, Activity::Idle)));
    }
    Ok(fleet)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activity_sets_per_kind() {
        assert!(Activity::Searching.allowed_for(RobotKind::Scout));
        assert!(!Activity::Idle.allowed_for(RobotKind::Scout));
        assert!(!Activity::Standby.allowed_for(RobotKind::Excavator));
        assert!(Activity::Standby.allowed_for(RobotKind::Hauler));
        assert!(!Activity::Digging.allowed_for(RobotKind::Hauler));
    }

    #[test]
    fn busy_rule() {
        let p = Point::new(0.0, 0.0);
        assert!(!RobotState::new("h", RobotKind::Hauler, p, Activity::Standby).is_busy());
        assert!(RobotState::new("h", RobotKind::Hauler, p, Activity::Loading).is_busy());
        assert!(RobotState::new("e", RobotKind::Excavator, p, Activity::WaitingForHauler).is_busy());
        assert!(!RobotState::new("s", RobotKind::Scout, p, Activity::Searching).is_busy());
    }

    #[test]
    fn fleet_layout() {
        let config = ScenarioConfig::default();
        let plant = Point::new(50.0, 50.0);
        let fleet = spawn_fleet(&config, plant).unwrap();
        let names: Vec<&str> = fleet.iter().map(|r| r.state.name.as_str()).collect();
        assert_eq!(names[..3], ["scout_1", "scout_2", "excavator_1"]);
        assert_eq!(names.len(), 12);
        assert_eq!(names[11], "hauler_6");
        for r in &fleet[2..] {
            assert!((r.state.pose.distance(&plant) - START_RADIUS).abs() < 1e-9);
        }
        assert_eq!(fleet[2].state.pose, Point::new(55.0, 50.0));
        assert_eq!(fleet[0].state.pose, plant);
    }
}

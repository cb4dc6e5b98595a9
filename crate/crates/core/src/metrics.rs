//! Run metrics, derived from the event log alone, plus sweep aggregation
//! and the CSV / JSON exports.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::RobotKind;
use crate::auction::AuctionKey;
use crate::bus::{Message, TaskType};
use crate::engine::{run_to_completion, EngineError, RunOutput, RunStatus};
use crate::log::{read_jsonl, LogError, LogRecord, WorldEvent};
use crate::policy::PolicyKind;
use crate::world::{Point, ScenarioConfig, Tick};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("log has no meta record")]
    MissingMeta,
    #[error("log has no end record; the run did not finish")]
    MissingEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AuctionTier {
    ScoutToExcavator,
    ExcavatorToHauler,
}

impl From<TaskType> for AuctionTier {
    fn from(t: TaskType) -> Self {
        match t {
            TaskType::Excavate => AuctionTier::ScoutToExcavator,
            TaskType::Transport => AuctionTier::ExcavatorToHauler,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionDuration {
    pub tier: AuctionTier,
    pub auctioneer: String,
    pub task_location: Point,
    /// First announcement.
    pub opened_tick: Tick,
    pub closed_tick: Option<Tick>,
    pub allocated_to: Option<String>,
    /// Announcements made, including the first.
    pub rounds: u32,
    pub last_round_opened_tick: Tick,
}

impl AuctionDuration {
    pub fn duration(&self) -> Option<Tick> {
        self.closed_tick.map(|c| c - self.opened_tick)
    }

    /// Open time of the round that finally allocated the task.
    pub fn last_round_duration(&self) -> Option<Tick> {
        self.closed_tick.map(|c| c - self.last_round_opened_tick)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: PolicyKind,
    pub seed: u64,
    pub stalled: bool,
    /// Tick at which the run completed; `None` when it stalled.
    pub completion_ticks: Option<Tick>,
    pub final_tick: Tick,
    pub discovery_complete_tick: Option<Tick>,
    pub per_robot_distance: BTreeMap<String, f64>,
    pub per_kind_distance: BTreeMap<RobotKind, f64>,
    pub auction_durations: Vec<AuctionDuration>,
    pub message_count: u64,
    pub minerals_at_plant: u32,
    pub sites_discovered: usize,
}

impl MetricsReport {
    pub fn kind_distance(&self, kind: RobotKind) -> f64 {
        self.per_kind_distance.get(&kind).copied().unwrap_or(0.0)
    }

    pub fn closed_auctions(&self, tier: AuctionTier) -> impl Iterator<Item = &AuctionDuration> {
        self.auction_durations.iter().filter(move |a| a.tier == tier && a.closed_tick.is_some())
    }

    /// Mean first-announcement-to-close time over closed auctions of `tier`;
    /// zero when there were none.
    pub fn mean_open_time(&self, tier: AuctionTier) -> f64 {
        let d: Vec<f64> = self.closed_auctions(tier).filter_map(|a| a.duration()).map(|d| d as f64).collect();
        if d.is_empty() {
            0.0
        } else {
            d.iter().sum::<f64>() / d.len() as f64
        }
    }
}

pub fn collect_metrics(records: &[LogRecord]) -> Result<MetricsReport, MetricsError> {
    let mut meta = None;
    let mut end = None;
    let mut auction_durations: Vec<AuctionDuration> = Vec::new();
    // keys repeat (one transport auction per mineral at the same site), so
    // only the currently open auction under a key is tracked by it
    let mut live: BTreeMap<AuctionKey, usize> = BTreeMap::new();
    let mut message_count = 0;
    let mut discovery_complete_tick = None;
    for record in records {
        match record {
            LogRecord::Meta(m) => meta = Some(m),
            LogRecord::End(e) => end = Some(e),
            LogRecord::Snapshot(_) => {}
            LogRecord::Event(e) => {
                if let WorldEvent::Discovered { .. } = e.event {
                    discovery_complete_tick = Some(e.tick);
                }
            }
            LogRecord::Message(env) => {
                message_count += 1;
                let tick = env.publish_tick;
                match &env.payload {
                    Message::Announcement(a) => match live.get(&env.payload.key()) {
                        Some(&i) => {
                            auction_durations[i].rounds += 1;
                            auction_durations[i].last_round_opened_tick = tick;
                        }
                        None => {
                            live.insert(env.payload.key(), auction_durations.len());
                            auction_durations.push(AuctionDuration {
                                tier: a.task_type.into(),
                                auctioneer: a.auctioneer.clone(),
                                task_location: a.task_location,
                                opened_tick: tick,
                                closed_tick: None,
                                allocated_to: None,
                                rounds: 1,
                                last_round_opened_tick: tick,
                            });
                        }
                    },
                    Message::Close(c) => {
                        if let Some(i) = live.remove(&env.payload.key()) {
                            auction_durations[i].closed_tick = Some(tick);
                            auction_durations[i].allocated_to = Some(c.allocated_to.clone());
                        }
                    }
                    _ => {}
                }
            }
        }
    }
    let meta = meta.ok_or(MetricsError::MissingMeta)?;
    let end = end.ok_or(MetricsError::MissingEnd)?;
    let mut per_kind_distance: BTreeMap<RobotKind, f64> = RobotKind::ALL.iter().map(|k| (*k, 0.0)).collect();
    for (name, kind) in &meta.robots {
        *per_kind_distance.entry(*kind).or_default() += end.odometry.get(name).copied().unwrap_or(0.0);
    }
    let stalled = end.status != RunStatus::Completed;
    Ok(MetricsReport {
        policy: meta.config.policy,
        seed: meta.config.seed,
        stalled,
        completion_ticks: (!stalled).then_some(end.tick),
        final_tick: end.tick,
        discovery_complete_tick: discovery_complete_tick.or(meta.sites.is_empty().then_some(0)),
        per_robot_distance: end.odometry.clone(),
        per_kind_distance,
        auction_durations,
        message_count,
        minerals_at_plant: end.minerals_at_plant,
        sites_discovered: end.sites_discovered,
    })
}

pub fn collect_metrics_jsonl<R: BufRead>(input: R) -> Result<MetricsReport, MetricsError> {
    collect_metrics(&read_jsonl(input)?)
}

/// One CSV row per run. Column order is part of the output format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub policy: PolicyKind,
    pub seed: u64,
    pub status: String,
    pub completion_ticks: Option<Tick>,
    pub discovery_complete_tick: Option<Tick>,
    pub scout_distance: f64,
    pub excavator_distance: f64,
    pub hauler_distance: f64,
    pub scout_to_excavator_auctions: usize,
    pub scout_to_excavator_mean_open: f64,
    pub excavator_to_hauler_auctions: usize,
    pub excavator_to_hauler_mean_open: f64,
    pub message_count: u64,
    pub minerals_at_plant: u32,
}

pub const CSV_COLUMNS: [&str; 14] = [
    "policy",
    "seed",
    "status",
    "completion_ticks",
    "discovery_complete_tick",
    "scout_distance",
    "excavator_distance",
    "hauler_distance",
    "scout_to_excavator_auctions",
    "scout_to_excavator_mean_open",
    "excavator_to_hauler_auctions",
    "excavator_to_hauler_mean_open",
    "message_count",
    "minerals_at_plant",
];

impl From<&MetricsReport> for CsvRow {
    fn from(r: &MetricsReport) -> Self {
        Self {
            policy: r.policy,
            seed: r.seed,
            status: if r.stalled { "stalled" } else { "completed" }.to_string(),
            completion_ticks: r.completion_ticks,
            discovery_complete_tick: r.discovery_complete_tick,
            scout_distance: r.kind_distance(RobotKind::Scout),
            excavator_distance: r.kind_distance(RobotKind::Excavator),
            hauler_distance: r.kind_distance(RobotKind::Hauler),
            scout_to_excavator_auctions: r.closed_auctions(AuctionTier::ScoutToExcavator).count(),
            scout_to_excavator_mean_open: r.mean_open_time(AuctionTier::ScoutToExcavator),
            excavator_to_hauler_auctions: r.closed_auctions(AuctionTier::ExcavatorToHauler).count(),
            excavator_to_hauler_mean_open: r.mean_open_time(AuctionTier::ExcavatorToHauler),
            message_count: r.message_count,
            minerals_at_plant: r.minerals_at_plant,
        }
    }
}

pub fn write_csv<W: Write>(reports: &[MetricsReport], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(CsvRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { (v[mid - 1] + v[mid]) / 2.0 })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub runs: usize,
    pub completed: usize,
    pub mean_completion_ticks: Option<f64>,
    pub median_completion_ticks: Option<f64>,
    pub median_distance: BTreeMap<RobotKind, f64>,
    pub median_scout_to_excavator_open: f64,
    pub median_excavator_to_hauler_open: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Soft,
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub name: String,
    pub claim: String,
    pub gate: Gate,
    pub measured: BTreeMap<PolicyKind, f64>,
    /// `None` when a policy needed for the comparison was not swept.
    pub passed: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StalledRun {
    pub policy: PolicyKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub stalled: Vec<StalledRun>,
    pub policies: BTreeMap<PolicyKind, PolicySummary>,
    pub orderings: Vec<OrderingCheck>,
}

impl Summary {
    pub fn ordering(&self, name: &str) -> Option<&OrderingCheck> {
        self.orderings.iter().find(|o| o.name == name)
    }

    /// True when every hard-gated ordering holds.
    pub fn hard_gates_pass(&self) -> bool {
        self.orderings.iter().filter(|o| o.gate == Gate::Hard).all(|o| o.passed == Some(true))
    }
}

pub fn summarize(reports: &[MetricsReport]) -> Summary {
    let mut by_policy: BTreeMap<PolicyKind, Vec<&MetricsReport>> = BTreeMap::new();
    for r in reports {
        by_policy.entry(r.policy).or_default().push(r);
    }
    let policies: BTreeMap<PolicyKind, PolicySummary> = by_policy
        .iter()
        .map(|(p, runs)| {
            let completion: Vec<f64> = runs.iter().filter_map(|r| r.completion_ticks).map(|t| t as f64).collect();
            let median_distance = RobotKind::ALL
                .iter()
                .map(|k| {
                    let d: Vec<f64> = runs.iter().map(|r| r.kind_distance(*k)).collect();
                    (*k, median(&d).unwrap_or(0.0))
                })
                .collect();
            let open = |tier| {
                let d: Vec<f64> = runs.iter().map(|r| r.mean_open_time(tier)).collect();
                median(&d).unwrap_or(0.0)
            };
            let summary = PolicySummary {
                runs: runs.len(),
                completed: completion.len(),
                mean_completion_ticks: mean(&completion),
                median_completion_ticks: median(&completion),
                median_distance,
                median_scout_to_excavator_open: open(AuctionTier::ScoutToExcavator),
                median_excavator_to_hauler_open: open(AuctionTier::ExcavatorToHauler),
            };
            (*p, summary)
        })
        .collect();

    let measured = |f: &dyn Fn(&PolicySummary) -> Option<f64>| -> BTreeMap<PolicyKind, f64> {
        policies.iter().filter_map(|(p, s)| f(s).map(|v| (*p, v))).collect()
    };
    let compare = |m: &BTreeMap<PolicyKind, f64>, subject: PolicyKind, holds: &dyn Fn(f64, f64) -> bool| {
        if PolicyKind::ALL.iter().any(|p| !m.contains_key(p)) {
            return None;
        }
        let v = m[&subject];
        Some(PolicyKind::ALL.iter().filter(|p| **p != subject).all(|p| holds(v, m[p])))
    };

    let completion = measured(&|s| s.median_completion_ticks);
    let excavator = measured(&|s| s.median_distance.get(&RobotKind::Excavator).copied());
    let e2h = measured(&|s| Some(s.median_excavator_to_hauler_open));
    let orderings = vec![
        OrderingCheck {
            name: "fcfs_fastest".into(),
            claim: "median completion time: fcfs below both other policies".into(),
            gate: Gate::Soft,
            passed: compare(&completion, PolicyKind::Fcfs, &|a, b| a < b),
            measured: completion,
        },
        OrderingCheck {
            name: "nearest_least_excavator_distance".into(),
            claim: "median excavator distance: nearest at or below both other policies".into(),
            gate: Gate::Hard,
            passed: compare(&excavator, PolicyKind::Nearest, &|a, b| a <= b),
            measured: excavator,
        },
        OrderingCheck {
            name: "coalition_longest_transport_auctions".into(),
            claim: "median excavator-to-hauler auction open time: coalition at or above both other policies".into(),
            gate: Gate::Hard,
            passed: compare(&e2h, PolicyKind::Coalition, &|a, b| a >= b),
            measured: e2h,
        },
    ];
    Summary {
        runs: reports.len(),
        stalled: reports.iter().filter(|r| r.stalled).map(|r| StalledRun { policy: r.policy, seed: r.seed }).collect(),
        policies,
        orderings,
    }
}

/// Runs every (policy, seed) pair of `base` in parallel and maps each
/// finished run through `f`. Results come back in (policy, seed) order.
pub fn sweep_with<T, F>(base: &ScenarioConfig, policies: &[PolicyKind], seeds: &[u64], f: F) -> Result<Vec<T>, EngineError>
where
    T: Send,
    F: Fn(RunOutput) -> T + Sync,
{
    let jobs: Vec<ScenarioConfig> = policies
        .iter()
        .flat_map(|p| seeds.iter().map(move |s| ScenarioConfig { policy: *p, seed: *s, ..base.clone() }))
        .collect();
    jobs.into_par_iter().map(|config| run_to_completion(config).map(&f)).collect()
}

pub fn sweep(base: &ScenarioConfig, policies: &[PolicyKind], seeds: &[u64]) -> Result<Vec<MetricsReport>, EngineError> {
    sweep_with(base, policies, seeds, |out| out.report)
}

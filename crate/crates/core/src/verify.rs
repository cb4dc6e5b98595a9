//! Protocol-safety checker. Replays an event log with its own model of the
//! auction rules (it shares no state machine code with the engine) and
//! reports every violation it finds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::auction::{AuctionKey, Utility};
use crate::bus::{Envelope, Message, TaskType, Verdict};
use crate::engine::RunStatus;
use crate::log::{LogRecord, RunMeta, WorldEvent};
use crate::policy::PolicyKind;
use crate::world::{MineralId, SiteId, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// No busy (-inf) bidder is ever named winner.
    BusyWinner,
    /// Every Close follows an accepted Ack from the allocated robot.
    CloseWithoutAccept,
    /// Winners hold the best eligible bid of their round.
    NotBestBid,
    /// dug -> loaded -> unloaded, once each, per mineral.
    MineralLifecycle,
    /// At most one excavator holds a site.
    SiteClaim,
    /// Auction messages out of protocol order or timing.
    Protocol,
    /// fcfs: finite bids only in the oldest open auction of their type.
    FcfsOrder,
    /// coalition: paired haulers never bid and load only for their parent.
    CoalitionPairing,
    /// nearest: the accepted win is no farther than any declined one.
    NearestChoice,
    /// A completed run left work or auctions behind.
    Termination,
    /// The log itself is incomplete.
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub tick: Tick,
    pub check: Check,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tick {}: {:?}: {}", self.tick, self.check, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub messages: usize,
    pub auctions: usize,
    pub minerals_delivered: usize,
    pub violations: Vec<Violation>,
}

impl VerifyReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, check: Check) -> usize {
        self.violations.iter().filter(|v| v.check == check).count()
    }
}

/// What the auctioneer owes the checker by the end of the current tick.
#[derive(Debug, Clone, PartialEq)]
enum Owed {
    Nothing,
    Offer(String),
    Reannounce,
    Close(String),
}

#[derive(Debug, Clone)]
struct Model {
    round_opened: Tick,
    bids: BTreeMap<String, Utility>,
    late: BTreeMap<String, Utility>,
    declined: BTreeSet<String>,
    offer: Option<String>,
    accepted: Option<String>,
    owed: Owed,
}

impl Model {
    fn best(&self) -> Option<(String, Utility)> {
        let mut best: Option<(&String, Utility)> = None;
        for (name, u) in &self.bids {
            if !u.is_finite() || self.declined.contains(name) {
                continue;
            }
            let better = match best {
                None => true,
                Some((bn, bu)) => u.value() > bu.value() || (u.value() == bu.value() && name < bn),
            };
            if better {
                best = Some((name, *u));
            }
        }
        best.map(|(n, u)| (n.clone(), u))
    }

    fn new_round(&mut self, tick: Tick) {
        self.bids = std::mem::take(&mut self.late);
        self.declined.clear();
        self.offer = None;
        self.round_opened = tick;
    }
}

struct Checker<'a> {
    meta: &'a RunMeta,
    report: VerifyReport,
    live: BTreeMap<AuctionKey, Model>,
    /// Open auctions as bidders see them: announced and not closed by the
    /// end of the previous tick.
    visible: BTreeMap<AuctionKey, (Tick, u64, TaskType)>,
    claims: BTreeMap<SiteId, String>,
    minerals: BTreeMap<MineralId, Vec<&'static str>>,
}

impl<'a> Checker<'a> {
    fn flag(&mut self, tick: Tick, check: Check, detail: String) {
        self.report.violations.push(Violation { tick, check, detail });
    }

    fn paired_parent(&self, hauler: &str) -> Option<&str> {
        self.meta.coalition_pairs.iter().find(|(_, h)| h.as_str() == hauler).map(|(e, _)| e.as_str())
    }

    /// Bids published at `tick`, judged against what bidders could see.
    fn check_bid_choice(&mut self, tick: Tick, env: &Envelope) {
        let Message::Bid(bid) = &env.payload else { return };
        let policy = self.meta.config.policy;
        if policy == PolicyKind::Coalition && self.paired_parent(&bid.bidder).is_some() {
            self.flag(tick, Check::CoalitionPairing, format!("paired {} bid on {}", bid.bidder, env.payload.key()));
        }
        if policy == PolicyKind::Nearest || !bid.utility.is_finite() {
            return;
        }
        let key = env.payload.key();
        let Some(&(_, _, task_type)) = self.visible.get(&key) else { return };
        let oldest = self
            .visible
            .iter()
            .filter(|(_, v)| v.2 == task_type)
            .min_by(|a, b| (a.1 .0, &a.0.auctioneer, a.1 .1).cmp(&(b.1 .0, &b.0.auctioneer, b.1 .1)))
            .map(|(k, _)| k.clone());
        if oldest.as_ref() != Some(&key) {
            self.flag(tick, Check::FcfsOrder, format!("{} bid finite on {key} while an older auction was open", bid.bidder));
        }
    }

    /// Bids and acks published at `tick - 1`, now being read.
    fn deliver(&mut self, tick: Tick, env: &Envelope) {
        let key = env.payload.key();
        let Some(m) = self.live.get_mut(&key) else { return };
        match &env.payload {
            Message::Bid(bid) => {
                if m.accepted.is_some() {
                    return;
                }
                if m.offer.is_some() {
                    m.late.insert(bid.bidder.clone(), bid.utility);
                } else {
                    m.bids.insert(bid.bidder.clone(), bid.utility);
                }
            }
            Message::Ack(ack) => {
                if m.accepted.is_some() || m.offer.as_deref() != Some(ack.auction_winner.as_str()) {
                    return;
                }
                match ack.verdict {
                    Verdict::Accepted => {
                        m.accepted = Some(ack.auction_winner.clone());
                        m.owed = Owed::Close(ack.auction_winner.clone());
                    }
                    Verdict::Declined => {
                        m.declined.insert(ack.auction_winner.clone());
                        m.offer = None;
                        match m.best() {
                            Some((next, _)) => {
                                m.offer = Some(next.clone());
                                m.owed = Owed::Offer(next);
                            }
                            None => {
                                m.new_round(tick);
                                m.owed = Owed::Reannounce;
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }

    /// Announcements, winner declarations and closes published at `tick`.
    fn auctioneer_says(&mut self, tick: Tick, env: &Envelope) {
        let key = env.payload.key();
        let window = self.meta.config.timing.bid_window;
        match &env.payload {
            Message::Announcement(a) => {
                self.visible.entry(key.clone()).or_insert((tick, env.sequence, a.task_type));
                let Some(m) = self.live.get_mut(&key) else {
                    self.report.auctions += 1;
                    self.live.insert(
                        key,
                        Model {
                            round_opened: tick,
                            bids: BTreeMap::new(),
                            late: BTreeMap::new(),
                            declined: BTreeSet::new(),
                            offer: None,
                            accepted: None,
                            owed: Owed::Nothing,
                        },
                    );
                    return;
                };
                if m.owed == Owed::Reannounce {
                    m.owed = Owed::Nothing;
                    return;
                }
                let problem = if m.offer.is_some() || m.accepted.is_some() {
                    Some(format!("{key} re-announced with an offer outstanding"))
                } else if tick < m.round_opened + window {
                    Some(format!("{key} re-announced before its bid window elapsed"))
                } else {
                    m.best().map(|(who, u)| format!("{key} re-announced although {who} bid {u}"))
                };
                m.new_round(tick);
                if let Some(p) = problem {
                    self.flag(tick, Check::Protocol, p);
                }
            }
            Message::WinnerDecl(w) => {
                let Some(m) = self.live.get_mut(&key) else {
                    return self.flag(tick, Check::Protocol, format!("winner declared on unknown auction {key}"));
                };
                let bid = m.bids.get(&w.winner).copied();
                let mut found = Vec::new();
                match &m.owed {
                    Owed::Offer(expected) => {
                        if *expected != w.winner {
                            found.push((Check::NotBestBid, format!("{key} reoffered to {} instead of {expected}", w.winner)));
                        }
                        m.owed = Owed::Nothing;
                    }
                    Owed::Nothing if m.offer.is_none() && m.accepted.is_none() => {
                        if tick < m.round_opened + window {
                            found.push((Check::Protocol, format!("{key} declared before its bid window elapsed")));
                        }
                        match m.best() {
                            Some((best, _)) if best == w.winner => {}
                            Some((best, u)) => found.push((
                                Check::NotBestBid,
                                format!("{key} went to {} but {best} bid {u}", w.winner),
                            )),
                            None => {}
                        }
                        m.offer = Some(w.winner.clone());
                    }
                    _ => found.push((Check::Protocol, format!("{key} declared {} out of turn", w.winner))),
                }
                match bid {
                    Some(u) if u.is_finite() => {}
                    Some(u) => found.push((Check::BusyWinner, format!("{key} named {} with bid {u}", w.winner))),
                    None => found.push((Check::NotBestBid, format!("{key} named {} who has no bid this round", w.winner))),
                }
                for (check, detail) in found {
                    self.flag(tick, check, detail);
                }
            }
            Message::Close(c) => {
                self.visible.remove(&key);
                let Some(m) = self.live.remove(&key) else {
                    return self.flag(tick, Check::CloseWithoutAccept, format!("close on unknown auction {key}"));
                };
                if m.accepted.as_deref() != Some(c.allocated_to.as_str()) {
                    self.flag(
                        tick,
                        Check::CloseWithoutAccept,
                        format!("{key} closed to {} without an accepted ack from it", c.allocated_to),
                    );
                }
            }
            _ => {}
        }
    }

    fn end_of_tick(&mut self, tick: Tick) {
        let owed: Vec<String> = self
            .live
            .iter()
            .filter(|(_, m)| m.owed != Owed::Nothing)
            .map(|(k, m)| format!("{k} owes {:?}", m.owed))
            .collect();
        for detail in owed {
            self.flag(tick, Check::Protocol, detail);
        }
        for m in self.live.values_mut() {
            m.owed = Owed::Nothing;
        }
    }

    fn event(&mut self, tick: Tick, event: &WorldEvent) {
        match event {
            WorldEvent::Claimed { excavator, site } => {
                if let Some(holder) = self.claims.get(site) {
                    let detail = format!("{excavator} claimed {site} held by {holder}");
                    self.flag(tick, Check::SiteClaim, detail);
                }
                self.claims.insert(*site, excavator.clone());
            }
            WorldEvent::Released { excavator, site } => {
                if self.claims.get(site) != Some(excavator) {
                    self.flag(tick, Check::SiteClaim, format!("{excavator} released {site} it did not hold"));
                }
                self.claims.remove(site);
            }
            WorldEvent::Dug { mineral, .. } => self.stage(tick, *mineral, "dug"),
            WorldEvent::Loaded { hauler, excavator, site, mineral } => {
                self.stage(tick, *mineral, "loaded");
                if self.meta.config.policy == PolicyKind::Coalition {
                    if let Some(parent) = self.paired_parent(hauler).map(str::to_string) {
                        let holder = self.claims.get(site);
                        if *excavator != parent || holder != Some(&parent) {
                            self.flag(tick, Check::CoalitionPairing, format!("{hauler} loaded at {site} for {excavator}, parent is {parent}"));
                        }
                    }
                }
            }
            WorldEvent::Unloaded { mineral, .. } => {
                self.stage(tick, *mineral, "unloaded");
                self.report.minerals_delivered += 1;
            }
            WorldEvent::WinsResolved { robot, accepted: Some(a), declined } => {
                if self.meta.config.policy == PolicyKind::Nearest {
                    if let Some(d) = declined.iter().find(|d| d.path_length < a.path_length) {
                        self.flag(
                            tick,
                            Check::NearestChoice,
                            format!("{robot} took a task {:.3} away over one {:.3} away", a.path_length, d.path_length),
                        );
                    }
                }
            }
            _ => {}
        }
    }

    fn stage(&mut self, tick: Tick, mineral: MineralId, stage: &'static str) {
        let history = self.minerals.entry(mineral).or_default();
        let expected = ["dug", "loaded", "unloaded"].get(history.len()).copied();
        history.push(stage);
        if expected != Some(stage) {
            let detail = format!("{mineral} went {} ", history.join(" -> "));
            self.flag(tick, Check::MineralLifecycle, detail);
        }
    }
}

/// Checks an entire log. Records must be in the order the engine wrote them.
pub fn verify_log(records: &[LogRecord]) -> VerifyReport {
    let Some(meta) = records.iter().find_map(|r| match r {
        LogRecord::Meta(m) => Some(m.as_ref()),
        _ => None,
    }) else {
        let mut report = VerifyReport::default();
        report.violations.push(Violation { tick: 0, check: Check::Log, detail: "no meta record".into() });
        return report;
    };
    let mut checker = Checker {
        meta,
        report: VerifyReport::default(),
        live: BTreeMap::new(),
        visible: BTreeMap::new(),
        claims: BTreeMap::new(),
        minerals: BTreeMap::new(),
    };

    // messages and events grouped by the tick they happened in
    let mut messages: BTreeMap<Tick, Vec<&Envelope>> = BTreeMap::new();
    let mut events: BTreeMap<Tick, Vec<&WorldEvent>> = BTreeMap::new();
    let mut end = None;
    for r in records {
        match r {
            LogRecord::Message(e) => messages.entry(e.publish_tick).or_default().push(e),
            LogRecord::Event(e) => events.entry(e.tick).or_default().push(&e.event),
            LogRecord::End(e) => end = Some(e),
            _ => {}
        }
    }
    checker.report.messages = messages.values().map(Vec::len).sum();
    let last = messages.keys().chain(events.keys()).copied().max().unwrap_or(0);
    let empty = Vec::new();
    for tick in 0..=last {
        let now = messages.get(&tick).unwrap_or(&empty);
        for env in now {
            checker.check_bid_choice(tick, env);
        }
        if let Some(prev) = tick.checked_sub(1).and_then(|t| messages.get(&t)) {
            let mut delivered: Vec<&&Envelope> =
                prev.iter().filter(|e| matches!(e.payload, Message::Bid(_) | Message::Ack(_))).collect();
            delivered.sort_by_key(|e| e.sequence);
            for env in delivered {
                checker.deliver(tick, env);
            }
        }
        let mut spoken: Vec<&&Envelope> = now
            .iter()
            .filter(|e| matches!(e.payload, Message::Announcement(_) | Message::WinnerDecl(_) | Message::Close(_)))
            .collect();
        spoken.sort_by_key(|e| e.sequence);
        for env in spoken {
            checker.auctioneer_says(tick, env);
        }
        checker.end_of_tick(tick);
        for ev in events.get(&tick).into_iter().flatten() {
            checker.event(tick, ev);
        }
    }

    match end {
        None => checker.flag(last, Check::Log, "no end record".into()),
        Some(end) if end.status == RunStatus::Completed => {
            let total: u32 = meta.sites.iter().map(|s| s.minerals).sum();
            if !checker.live.is_empty() {
                let detail = format!("{} auctions still open at completion", checker.live.len());
                checker.flag(end.tick, Check::Termination, detail);
            }
            if end.minerals_at_plant != total || checker.report.minerals_delivered != total as usize {
                let detail = format!("{} of {total} minerals delivered", checker.report.minerals_delivered);
                checker.flag(end.tick, Check::Termination, detail);
            }
            if end.sites_discovered != meta.sites.len() {
                checker.flag(end.tick, Check::Termination, "completed with undiscovered sites".into());
            }
            let unfinished: Vec<String> =
                checker.minerals.iter().filter(|(_, h)| h.len() != 3).map(|(m, _)| m.to_string()).collect();
            if !unfinished.is_empty() {
                checker.flag(end.tick, Check::MineralLifecycle, format!("unfinished minerals: {}", unfinished.join(", ")));
            }
        }
        Some(_) => {}
    }
    checker.report
}

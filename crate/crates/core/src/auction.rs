//! First-price, one-round auctions with decline-and-reoffer.
//!
//! The auctioneer side is [`Auction`] (one task) and [`AuctionHouse`] (all
//! auctions one robot holds). The bidder side is [`AuctionBook`], each
//! robot's view of which auctions are open, rebuilt from broadcast traffic.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::agents::{RobotKind, RobotState};
use crate::bus::{Ack, Bid, Envelope, Message, ProtocolError, TaskType, Verdict};
use crate::pathing::estimate_path;
use crate::world::{Point, Tick};

/// Fitness of a bidder for a task: the negated path cost, or negative
/// infinity when the bidder is busy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Utility(f64);

impl Utility {
    pub const BUSY: Utility = Utility(f64::NEG_INFINITY);

    pub const fn new(value: f64) -> Self {
        Utility(value)
    }

    /// Utility = -Cost, with Cost = path distance.
    pub fn from_cost(cost: f64) -> Self {
        Utility(-cost)
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    pub fn is_busy(&self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }

    pub fn is_well_formed(&self) -> bool {
        self.is_busy() || (self.0.is_finite() && self.0 <= 0.0)
    }

    pub fn total_cmp(&self, other: &Utility) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for Utility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_busy() {
            f.write_str("-inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

// JSON has no infinities, so the busy sentinel travels as the string "-inf".
impl Serialize for Utility {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.is_busy() {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Utility {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Utility;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"-inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Utility, E> {
                Ok(Utility(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Utility, E> {
                Ok(Utility(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Utility, E> {
                Ok(Utility(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Utility, E> {
                match v {
                    "-inf" => Ok(Utility::BUSY),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Auctioneer name plus task location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionKey {
    pub auctioneer: String,
    pub task_location: Point,
}

impl AuctionKey {
    pub fn new(auctioneer: &str, task_location: Point) -> Self {
        Self { auctioneer: auctioneer.to_string(), task_location }
    }
}

impl Eq for AuctionKey {}

impl Ord for AuctionKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.auctioneer
            .cmp(&other.auctioneer)
            .then_with(|| self.task_location.total_cmp(&other.task_location))
    }
}

impl PartialOrd for AuctionKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for AuctionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.auctioneer, self.task_location)
    }
}

/// Self-utility of `robot` for a task at `task_location`.
pub fn evaluate_self_utility(robot: &RobotState, task_location: Point) -> Utility {
    if robot.is_busy() {
        Utility::BUSY
    } else {
        Utility::from_cost(estimate_path(robot.pose, task_location).length)
    }
}

/// Builds the bid message. Robots that cannot perform the task never bid.
pub fn submit_bid(
    bidder: &RobotState,
    key: &AuctionKey,
    task_type: TaskType,
    utility: Utility,
) -> Result<Message, ProtocolError> {
    if !bidder.kind.can_perform(task_type) {
        return Err(ProtocolError::Incapable { robot: bidder.name.clone(), task_type });
    }
    Message::bid(&key.auctioneer, &bidder.name, key.task_location, utility)
}

/// Highest finite bid not in `excluded`; ties go to the smallest name.
pub fn best_bidder<'a>(bids: &'a BTreeMap<String, Utility>, excluded: &[String]) -> Option<&'a str> {
    let mut best: Option<(&str, Utility)> = None;
    for (name, utility) in bids {
        if !utility.is_finite() || excluded.contains(name) {
            continue;
        }
        // BTreeMap iterates names in order, so a strict comparison keeps the
        // smallest name among equal utilities.
        if best.is_none_or(|(_, u)| utility.value() > u.value()) {
            best = Some((name, *utility));
        }
    }
    best.map(|(name, _)| name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuctionState {
    Announced,
    Collecting,
    AwaitingAck,
    Closed,
}

/// Auctioneer-side record of one task being allocated.
#[derive(Debug, Clone, PartialEq)]
pub struct Auction {
    pub key: AuctionKey,
    pub task_type: TaskType,
    pub state: AuctionState,
    pub opened_tick: Tick,
    /// Zero for the first announcement, incremented on each re-announcement.
    pub round: u32,
    pub round_opened_tick: Tick,
    pub bids: BTreeMap<String, Utility>,
    /// Bids that arrived while an offer was outstanding; they seed the next
    /// round if the auction has to be re-announced.
    pub late_bids: BTreeMap<String, Utility>,
    pub offered_to: Vec<String>,
    pub offer: Option<String>,
    pub winner: Option<String>,
    pub closed_tick: Option<Tick>,
}

impl Auction {
    pub fn open(auctioneer: &str, task_type: TaskType, task_location: Point, tick: Tick) -> Result<(Auction, Message), ProtocolError> {
        let announcement = Message::announcement(auctioneer, task_type, task_location)?;
        let auction = Auction {
            key: AuctionKey::new(auctioneer, task_location),
            task_type,
            state: AuctionState::Announced,
            opened_tick: tick,
            round: 0,
            round_opened_tick: tick,
            bids: BTreeMap::new(),
            late_bids: BTreeMap::new(),
            offered_to: Vec::new(),
            offer: None,
            winner: None,
            closed_tick: None,
        };
        Ok((auction, announcement))
    }

    pub fn is_closed(&self) -> bool {
        self.state == AuctionState::Closed
    }

    fn announcement(&self) -> Message {
        Message::announcement(&self.key.auctioneer, self.task_type, self.key.task_location)
            .expect("auction keys are validated at open")
    }

    fn declare(&mut self, winner: String) -> Message {
        let msg = Message::winner(&self.key.auctioneer, self.task_type, self.key.task_location, &winner)
            .expect("auction keys are validated at open");
        self.offer = Some(winner);
        self.state = AuctionState::AwaitingAck;
        msg
    }

    fn reannounce(&mut self, tick: Tick) -> Message {
        self.bids = std::mem::take(&mut self.late_bids);
        self.offered_to.clear();
        self.offer = None;
        self.round += 1;
        self.round_opened_tick = tick;
        self.state = AuctionState::Announced;
        self.announcement()
    }

    pub fn record_bid(&mut self, bid: &Bid) {
        match self.state {
            AuctionState::Announced | AuctionState::Collecting => {
                self.bids.insert(bid.bidder.clone(), bid.utility);
            }
            AuctionState::AwaitingAck => {
                self.late_bids.insert(bid.bidder.clone(), bid.utility);
            }
            AuctionState::Closed => {}
        }
    }

    /// Timer hook. Once the bid window has elapsed, declares the highest
    /// eligible finite bidder, or re-announces when there is none.
    pub fn select_winner(&mut self, tick: Tick, bid_window: Tick) -> Option<Message> {
        if self.state == AuctionState::Announced && tick > self.round_opened_tick {
            self.state = AuctionState::Collecting;
        }
        if self.state != AuctionState::Collecting || tick < self.round_opened_tick + bid_window {
            return None;
        }
        match best_bidder(&self.bids, &self.offered_to) {
            Some(name) => {
                let name = name.to_string();
                Some(self.declare(name))
            }
            None => Some(self.reannounce(tick)),
        }
    }

    /// Acks from anyone but the current offeree are ignored.
    pub fn handle_ack(&mut self, ack: &Ack, tick: Tick) -> Option<Message> {
        if self.state != AuctionState::AwaitingAck || self.offer.as_deref() != Some(ack.auction_winner.as_str()) {
            return None;
        }
        let offeree = self.offer.take().expect("checked above");
        match ack.verdict {
            Verdict::Accepted => {
                let msg = Message::close(&self.key.auctioneer, self.task_type, self.key.task_location, &offeree)
                    .expect("auction keys are validated at open");
                self.winner = Some(offeree);
                self.closed_tick = Some(tick);
                self.state = AuctionState::Closed;
                Some(msg)
            }
            Verdict::Declined => {
                self.offered_to.push(offeree);
                match best_bidder(&self.bids, &self.offered_to) {
                    Some(next) => {
                        let next = next.to_string();
                        Some(self.declare(next))
                    }
                    None => Some(self.reannounce(tick)),
                }
            }
        }
    }
}

/// All auctions held by one auctioneer.
#[derive(Debug, Clone, Default)]
pub struct AuctionHouse {
    live: BTreeMap<AuctionKey, Auction>,
    closed: Vec<Auction>,
}

impl AuctionHouse {
    pub fn open_auction(
        &mut self,
        auctioneer: &str,
        task_type: TaskType,
        task_location: Point,
        tick: Tick,
    ) -> Result<Message, ProtocolError> {
        let key = AuctionKey::new(auctioneer, task_location);
        if self.live.contains_key(&key) {
            return Err(ProtocolError::DuplicateAuction(key));
        }
        let (auction, msg) = Auction::open(auctioneer, task_type, task_location, tick)?;
        self.live.insert(key, auction);
        Ok(msg)
    }

    /// Feeds bids and acks addressed to this house; returns any replies.
    pub fn receive(&mut self, envelope: &Envelope, tick: Tick) -> Option<Message> {
        match &envelope.payload {
            Message::Bid(bid) => {
                if let Some(a) = self.live.get_mut(&envelope.payload.key()) {
                    a.record_bid(bid);
                }
                None
            }
            Message::Ack(ack) => {
                let key = envelope.payload.key();
                let reply = self.live.get_mut(&key)?.handle_ack(ack, tick);
                self.retire_closed();
                reply
            }
            _ => None,
        }
    }

    pub fn fire_timers(&mut self, tick: Tick, bid_window: Tick) -> Vec<Message> {
        self.live.values_mut().filter_map(|a| a.select_winner(tick, bid_window)).collect()
    }

    fn retire_closed(&mut self) {
        let done: Vec<AuctionKey> = self.live.iter().filter(|(_, a)| a.is_closed()).map(|(k, _)| k.clone()).collect();
        for key in done {
            let a = self.live.remove(&key).expect("key from live");
            self.closed.push(a);
        }
    }

    pub fn open_count(&self) -> usize {
        self.live.len()
    }

    pub fn live(&self) -> impl Iterator<Item = &Auction> {
        self.live.values()
    }

    pub fn closed(&self) -> &[Auction] {
        &self.closed
    }
}

/// A bidder's view of one open auction.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenAuction {
    pub key: AuctionKey,
    pub task_type: TaskType,
    pub opened_tick: Tick,
    pub first_sequence: u64,
    pub round: u32,
    /// The last utility this robot bid, and in which round.
    pub my_bid: Option<(u32, Utility)>,
}

impl OpenAuction {
    /// Bid once per round; a busy bid is refreshed when the robot frees up.
    pub fn wants_bid(&self, utility: Utility) -> bool {
        match self.my_bid {
            Some((round, last)) if round == self.round => last.is_busy() && utility.is_finite(),
            _ => true,
        }
    }
}

/// Open auctions known to one robot, built from the broadcast stream.
#[derive(Debug, Clone, Default)]
pub struct AuctionBook {
    open: BTreeMap<AuctionKey, OpenAuction>,
}

impl AuctionBook {
    pub fn observe(&mut self, envelope: &Envelope) {
        match &envelope.payload {
            Message::Announcement(a) => {
                let key = envelope.payload.key();
                self.open
                    .entry(key.clone())
                    .and_modify(|known| known.round += 1)
                    .or_insert(OpenAuction {
                        key,
                        task_type: a.task_type,
                        opened_tick: envelope.publish_tick,
                        first_sequence: envelope.sequence,
                        round: 0,
                        my_bid: None,
                    });
            }
            Message::Close(_) => {
                self.open.remove(&envelope.payload.key());
            }
            _ => {}
        }
    }

    /// Open auctions ordered by (opened tick, auctioneer name).
    pub fn ordered(&self) -> Vec<&OpenAuction> {
        let mut v: Vec<&OpenAuction> = self.open.values().collect();
        v.sort_by(|a, b| {
            a.opened_tick
                .cmp(&b.opened_tick)
                .then_with(|| a.key.auctioneer.cmp(&b.key.auctioneer))
                .then_with(|| a.first_sequence.cmp(&b.first_sequence))
        });
        v
    }

    pub fn get(&self, key: &AuctionKey) -> Option<&OpenAuction> {
        self.open.get(key)
    }

    pub fn note_bid(&mut self, key: &AuctionKey, utility: Utility) {
        if let Some(a) = self.open.get_mut(key) {
            a.my_bid = Some((a.round, utility));
        }
    }

    pub fn len(&self) -> usize {
        self.open.len()
    }

    pub fn is_empty(&self) -> bool {
        self.open.is_empty()
    }
}

impl RobotKind {
    pub fn can_perform(&self, task_type: TaskType) -> bool {
        matches!(
            (self, task_type),
            (RobotKind::Excavator, TaskType::Excavate) | (RobotKind::Hauler, TaskType::Transport)
        )
    }
}

//! Broadcast message transport.
//!
//! Every published message reaches every robot, the publisher included,
//! exactly one tick after publication. Receivers filter; nothing is
//! addressed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::{AuctionKey, Utility};
use crate::world::{Point, Tick};

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("robot name must not be empty")]
    EmptyName,
    #[error("task location {0} is not finite")]
    BadLocation(Point),
    #[error("bid utility {0} is neither a finite non-positive value nor the busy sentinel")]
    BadUtility(f64),
    #[error("{robot} cannot perform {task_type:?} tasks")]
    Incapable { robot: String, task_type: TaskType },
    #[error("auction {0} is already open")]
    DuplicateAuction(AuctionKey),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    Excavate,
    Transport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuctionStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Declined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Announcement {
    pub auctioneer: String,
    pub task_type: TaskType,
    pub task_location: Point,
    pub status: AuctionStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub auctioneer: String,
    pub bidder: String,
    pub task_location: Point,
    pub utility: Utility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinnerDecl {
    pub auctioneer: String,
    pub task_type: TaskType,
    pub task_location: Point,
    pub status: AuctionStatus,
    pub winner: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub auctioneer: String,
    pub auction_winner: String,
    pub task_location: Point,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Close {
    pub auctioneer: String,
    pub task_type: TaskType,
    pub task_location: Point,
    pub status: AuctionStatus,
    pub allocated_to: String,
}

/// The five protocol messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Message {
    Announcement(Announcement),
    Bid(Bid),
    WinnerDecl(WinnerDecl),
    Ack(Ack),
    Close(Close),
}

fn check_name(name: &str) -> Result<(), ProtocolError> {
    if name.is_empty() {
        Err(ProtocolError::EmptyName)
    } else {
        Ok(())
    }
}

fn check_location(p: Point) -> Result<(), ProtocolError> {
    if p.is_finite() {
        Ok(())
    } else {
        Err(ProtocolError::BadLocation(p))
    }
}

impl Message {
    pub fn announcement(auctioneer: &str, task_type: TaskType, task_location: Point) -> Result<Self, ProtocolError> {
        check_name(auctioneer)?;
        check_location(task_location)?;
        Ok(Message::Announcement(Announcement {
            auctioneer: auctioneer.into(),
            task_type,
            task_location,
            status: AuctionStatus::Open,
        }))
    }

    pub fn bid(auctioneer: &str, bidder: &str, task_location: Point, utility: Utility) -> Result<Self, ProtocolError> {
        check_name(auctioneer)?;
        check_name(bidder)?;
        check_location(task_location)?;
        if !utility.is_well_formed() {
            return Err(ProtocolError::BadUtility(utility.value()));
        }
        Ok(Message::Bid(Bid { auctioneer: auctioneer.into(), bidder: bidder.into(), task_location, utility }))
    }

    pub fn winner(auctioneer: &str, task_type: TaskType, task_location: Point, winner: &str) -> Result<Self, ProtocolError> {
        check_name(auctioneer)?;
        check_name(winner)?;
        check_location(task_location)?;
        Ok(Message::WinnerDecl(WinnerDecl {
            auctioneer: auctioneer.into(),
            task_type,
            task_location,
            status: AuctionStatus::Open,
            winner: winner.into(),
        }))
    }

    pub fn ack(auctioneer: &str, auction_winner: &str, task_location: Point, verdict: Verdict) -> Result<Self, ProtocolError> {
        check_name(auctioneer)?;
        check_name(auction_winner)?;
        check_location(task_location)?;
        Ok(Message::Ack(Ack { auctioneer: auctioneer.into(), auction_winner: auction_winner.into(), task_location, verdict }))
    }

    pub fn close(auctioneer: &str, task_type: TaskType, task_location: Point, allocated_to: &str) -> Result<Self, ProtocolError> {
        check_name(auctioneer)?;
        check_name(allocated_to)?;
        check_location(task_location)?;
        Ok(Message::Close(Close {
            auctioneer: auctioneer.into(),
            task_type,
            task_location,
            status: AuctionStatus::Closed,
            allocated_to: allocated_to.into(),
        }))
    }

    pub fn auctioneer(&self) -> &str {
        match self {
            Message::Announcement(m) => &m.auctioneer,
            Message::Bid(m) => &m.auctioneer,
            Message::WinnerDecl(m) => &m.auctioneer,
            Message::Ack(m) => &m.auctioneer,
            Message::Close(m) => &m.auctioneer,
        }
    }

    pub fn task_location(&self) -> Point {
        match self {
            Message::Announcement(m) => m.task_location,
            Message::Bid(m) => m.task_location,
            Message::WinnerDecl(m) => m.task_location,
            Message::Ack(m) => m.task_location,
            Message::Close(m) => m.task_location,
        }
    }

    /// Auctioneer name plus task location identify the auction in every variant.
    pub fn key(&self) -> AuctionKey {
        AuctionKey::new(self.auctioneer(), self.task_location())
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Message::Announcement(_) => "announcement",
            Message::Bid(_) => "bid",
            Message::WinnerDecl(_) => "winner_decl",
            Message::Ack(_) => "ack",
            Message::Close(_) => "close",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(rename = "tick")]
    pub publish_tick: Tick,
    pub sequence: u64,
    #[serde(flatten)]
    pub payload: Message,
}

/// In-process broadcast bus with a fixed one-tick delivery latency.
#[derive(Debug, Default)]
pub struct Bus {
    next_sequence: u64,
    /// Published during the current tick, delivered next tick.
    outgoing: Vec<Envelope>,
    /// Published during the previous tick, readable now.
    incoming: Vec<Envelope>,
    delivery_tick: Tick,
    drained: BTreeMap<String, Tick>,
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&mut self, payload: Message, tick: Tick) -> Envelope {
        let envelope = Envelope { publish_tick: tick, sequence: self.next_sequence, payload };
        self.next_sequence += 1;
        self.outgoing.push(envelope.clone());
        envelope
    }

    /// Opens delivery for `tick`: everything published at `tick - 1` becomes
    /// readable, anything older is dropped.
    pub fn deliver(&mut self, tick: Tick) {
        let (ready, later): (Vec<_>, Vec<_>) =
            std::mem::take(&mut self.outgoing).into_iter().partition(|e| e.publish_tick < tick);
        self.incoming = ready.into_iter().filter(|e| e.publish_tick + 1 == tick).collect();
        self.outgoing = later;
        self.delivery_tick = tick;
    }

    /// Everything published at `tick - 1`, in sequence order. A second call
    /// for the same robot and tick returns nothing.
    pub fn drain_inbox(&mut self, robot: &str, tick: Tick) -> Vec<Envelope> {
        if tick != self.delivery_tick || self.drained.get(robot) == Some(&tick) {
            return Vec::new();
        }
        self.drained.insert(robot.to_string(), tick);
        self.incoming.clone()
    }

    pub fn published_count(&self) -> u64 {
        self.next_sequence
    }

    pub fn has_pending(&self) -> bool {
        !self.outgoing.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn announce(name: &str, x: f64) -> Message {
        Message::announcement(name, TaskType::Excavate, Point::new(x, 40.0)).unwrap()
    }

    #[test]
    fn delivered_to_everyone_next_tick() {
        let mut bus = Bus::new();
        bus.publish(announce("scout_1", 30.0), 10);
        bus.deliver(10);
        assert!(bus.drain_inbox("scout_1", 10).is_empty());
        bus.deliver(11);
        for robot in ["scout_1", "excavator_1", "hauler_3"] {
            let inbox = bus.drain_inbox(robot, 11);
            assert_eq!(inbox.len(), 1);
            assert_eq!(inbox[0].publish_tick, 10);
        }
    }

    #[test]
    fn same_tick_messages_keep_publish_order() {
        let mut bus = Bus::new();
        let a = bus.publish(announce("excavator_1", 1.0), 4);
        let b = bus.publish(announce("scout_2", 2.0), 4);
        assert!(a.sequence < b.sequence);
        bus.deliver(5);
        let inbox = bus.drain_inbox("hauler_1", 5);
        assert_eq!(inbox.iter().map(|e| e.payload.auctioneer()).collect::<Vec<_>>(), ["excavator_1", "scout_2"]);
    }

    #[test]
    fn fan_out_and_idempotent_drain() {
        let mut bus = Bus::new();
        bus.deliver(1);
        assert!(bus.drain_inbox("hauler_1", 1).is_empty());
        for i in 0..3 {
            bus.publish(announce("scout_1", i as f64), 1);
        }
        bus.deliver(2);
        for r in ["a", "b", "c"] {
            assert_eq!(bus.drain_inbox(r, 2).len(), 3);
            assert!(bus.drain_inbox(r, 2).is_empty());
        }
        bus.deliver(3);
        assert!(bus.drain_inbox("a", 3).is_empty());
    }

    #[test]
    fn malformed_messages_are_rejected() {
        let p = Point::new(1.0, 2.0);
        assert_eq!(Message::announcement("", TaskType::Excavate, p), Err(ProtocolError::EmptyName));
        assert!(matches!(
            Message::announcement("scout_1", TaskType::Excavate, Point::new(f64::NAN, 0.0)),
            Err(ProtocolError::BadLocation(_))
        ));
        assert!(matches!(Message::bid("scout_1", "excavator_1", p, Utility::new(3.0)), Err(ProtocolError::BadUtility(_))));
        assert!(matches!(Message::bid("scout_1", "excavator_1", p, Utility::new(f64::NAN)), Err(ProtocolError::BadUtility(_))));
        assert!(Message::bid("scout_1", "excavator_1", p, Utility::BUSY).is_ok());
        assert!(Message::bid("scout_1", "excavator_1", p, Utility::new(-12.5)).is_ok());
    }

    #[test]
    fn key_is_shared_by_all_variants() {
        let p = Point::new(30.0, 40.0);
        let msgs = [
            Message::announcement("scout_1", TaskType::Excavate, p).unwrap(),
            Message::bid("scout_1", "excavator_2", p, Utility::new(-12.5)).unwrap(),
            Message::winner("scout_1", TaskType::Excavate, p, "excavator_2").unwrap(),
            Message::ack("scout_1", "excavator_2", p, Verdict::Accepted).unwrap(),
            Message::close("scout_1", TaskType::Excavate, p, "excavator_2").unwrap(),
        ];
        for m in &msgs {
            assert_eq!(m.key(), AuctionKey::new("scout_1", p));
        }
    }

    #[test]
    fn envelope_json_is_flat() {
        let env = Envelope {
            publish_tick: 3,
            sequence: 9,
            payload: Message::bid("scout_1", "excavator_2", Point::new(30.0, 40.0), Utility::BUSY).unwrap(),
        };
        let json = serde_json::to_string(&env).unwrap();
        assert_eq!(
            json,
            r#"{"tick":3,"sequence":9,"variant":"bid","auctioneer":"scout_1","bidder":"excavator_2","task_location":{"x":30.0,"y":40.0},"utility":"-inf"}"#
        );
        let back: Envelope = serde_json::from_str(&json).unwrap();
        assert_eq!(back, env);
    }
}

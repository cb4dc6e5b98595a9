//! Allocation policies: which open auctions a robot bids in, and what it
//! does when it wins more than one at once.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::{RobotKind, RobotState};
use crate::auction::OpenAuction;
use crate::bus::WinnerDecl;
use crate::pathing::estimate_path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Bid only in the oldest open auction.
    Fcfs,
    /// Fixed excavator/hauler pairs; paired haulers serve only their parent.
    Coalition,
    /// Bid everywhere, take the nearest win.
    Nearest,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Fcfs, PolicyKind::Coalition, PolicyKind::Nearest];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::Fcfs => "fcfs",
            PolicyKind::Coalition => "coalition",
            PolicyKind::Nearest => "nearest",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown policy `{s}` (expected fcfs, coalition or nearest)"))
    }
}

/// Haulers kept out of the coalition pairs so that there is always someone
/// left to bid on overflow transport work.
pub const UNPAIRED_HAULERS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub accept: Option<WinnerDecl>,
    pub decline: Vec<WinnerDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Dispatch {
    Direct(String),
    Auction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub kind: PolicyKind,
    /// excavator -> hauler, coalition only
    pub pairs: BTreeMap<String, String>,
}

impl Policy {
    /// Pairs `excavators[i]` with `haulers[i]` while leaving two haulers free.
    pub fn new(kind: PolicyKind, excavators: &[String], haulers: &[String]) -> Self {
        let pairs = match kind {
            PolicyKind::Coalition => {
                let n = excavators.len().min(haulers.len().saturating_sub(UNPAIRED_HAULERS));
                excavators.iter().cloned().zip(haulers.iter().cloned()).take(n).collect()
            }
            _ => BTreeMap::new(),
        };
        Self { kind, pairs }
    }

    pub fn paired_hauler(&self, excavator: &str) -> Option<&str> {
        self.pairs.get(excavator).map(String::as_str)
    }

    pub fn parent_of(&self, hauler: &str) -> Option<&str> {
        self.pairs.iter().find(|(_, h)| h.as_str() == hauler).map(|(e, _)| e.as_str())
    }

    /// Subset of `open` (ordered oldest first) that `robot` should bid in.
    pub fn bid_filter<'a>(&self, robot: &RobotState, open: &[&'a OpenAuction]) -> Vec<&'a OpenAuction> {
        let mut capable = open.iter().copied().filter(|a| robot.kind.can_perform(a.task_type));
        match self.kind {
            PolicyKind::Nearest => capable.collect(),
            PolicyKind::Coalition if robot.kind == RobotKind::Hauler && self.parent_of(&robot.name).is_some() => {
                Vec::new()
            }
            PolicyKind::Fcfs | PolicyKind::Coalition => capable.next().into_iter().collect(),
        }
    }

    /// Splits simultaneous wins into at most one acceptance and declines.
    pub fn resolve_wins(&self, robot: &RobotState, wins: &[WinnerDecl]) -> Resolution {
        if robot.is_busy() || wins.is_empty() {
            return Resolution { accept: None, decline: wins.to_vec() };
        }
        let pick = match self.kind {
            PolicyKind::Nearest => {
                let cost = |w: &WinnerDecl| estimate_path(robot.pose, w.task_location).length;
                (0..wins.len())
                    .min_by(|&i, &j| {
                        cost(&wins[i])
                            .total_cmp(&cost(&wins[j]))
                            .then_with(|| wins[i].auctioneer.cmp(&wins[j].auctioneer))
                    })
                    .expect("non-empty")
            }
            PolicyKind::Fcfs | PolicyKind::Coalition => 0,
        };
        let mut decline = wins.to_vec();
        let accept = decline.remove(pick);
        Resolution { accept: Some(accept), decline }
    }

    /// Coalition hand-off for a freshly dug mineral: straight to the paired
    /// hauler when `hauler_free` says it can take it, otherwise an auction.
    pub fn coalition_dispatch(&self, excavator: &str, hauler_free: impl Fn(&str) -> bool) -> Dispatch {
        match self.paired_hauler(excavator) {
            Some(h) if self.kind == PolicyKind::Coalition && hauler_free(h) => Dispatch::Direct(h.to_string()),
            _ => Dispatch::Auction,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Activity;
    use crate::auction::AuctionKey;
    use crate::bus::{AuctionStatus, TaskType};
    use crate::world::Point;

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("{prefix}_{i}")).collect()
    }

    fn auction(auctioneer: &str, task_type: TaskType, opened: u64, x: f64) -> OpenAuction {
        OpenAuction {
            key: AuctionKey::new(auctioneer, Point::new(x, 0.0)),
            task_type,
            opened_tick: opened,
            first_sequence: opened,
            round: 0,
            my_bid: None,
        }
    }

    fn win(auctioneer: &str, x: f64) -> WinnerDecl {
        WinnerDecl {
            auctioneer: auctioneer.into(),
            task_type: TaskType::Excavate,
            task_location: Point::new(x, 0.0),
            status: AuctionStatus::Open,
            winner: "excavator_1".into(),
        }
    }

    fn idle_excavator() -> RobotState {
        RobotState::new("excavator_1", RobotKind::Excavator, Point::new(0.0, 0.0), Activity::Idle)
    }

    #[test]
    fn default_coalition_pairs() {
        let p = Policy::new(PolicyKind::Coalition, &names("excavator", 4), &names("hauler", 6));
        assert_eq!(p.pairs.len(), 4);
        assert_eq!(p.paired_hauler("excavator_3"), Some("hauler_3"));
        assert_eq!(p.parent_of("hauler_4"), Some("excavator_4"));
        assert_eq!(p.parent_of("hauler_5"), None);
        let small = Policy::new(PolicyKind::Coalition, &names("excavator", 4), &names("hauler", 3));
        assert_eq!(small.pairs.len(), 1);
        assert!(Policy::new(PolicyKind::Fcfs, &names("excavator", 4), &names("hauler", 6)).pairs.is_empty());
    }

    #[test]
    fn fcfs_takes_the_oldest_capable() {
        let a = [
            auction("scout_1", TaskType::Excavate, 5, 1.0),
            auction("scout_2", TaskType::Excavate, 8, 2.0),
            auction("scout_1", TaskType::Excavate, 9, 3.0),
        ];
        let open: Vec<&OpenAuction> = a.iter().collect();
        let p = Policy::new(PolicyKind::Fcfs, &[], &[]);
        let chosen = p.bid_filter(&idle_excavator(), &open);
        assert_eq!(chosen.len(), 1);
        assert_eq!(chosen[0].opened_tick, 5);

        let nearest = Policy::new(PolicyKind::Nearest, &[], &[]);
        assert_eq!(nearest.bid_filter(&idle_excavator(), &open).len(), 3);
    }

    #[test]
    fn fcfs_skips_incapable_auctions() {
        let a = [auction("excavator_2", TaskType::Transport, 1, 1.0), auction("scout_1", TaskType::Excavate, 4, 2.0)];
        let open: Vec<&OpenAuction> = a.iter().collect();
        let p = Policy::new(PolicyKind::Fcfs, &[], &[]);
        assert_eq!(p.bid_filter(&idle_excavator(), &open)[0].opened_tick, 4);
        let scout = RobotState::new("scout_1", RobotKind::Scout, Point::new(0.0, 0.0), Activity::Searching);
        assert!(p.bid_filter(&scout, &open).is_empty());
    }

    #[test]
    fn coalition_paired_haulers_never_bid() {
        let a = [auction("excavator_3", TaskType::Transport, 1, 1.0), auction("excavator_1", TaskType::Transport, 2, 2.0)];
        let open: Vec<&OpenAuction> = a.iter().collect();
        let p = Policy::new(PolicyKind::Coalition, &names("excavator", 4), &names("hauler", 6));
        let paired = RobotState::new("hauler_1", RobotKind::Hauler, Point::new(0.0, 0.0), Activity::Idle);
        let free = RobotState::new("hauler_5", RobotKind::Hauler, Point::new(0.0, 0.0), Activity::Idle);
        assert!(p.bid_filter(&paired, &open).is_empty());
        let chosen = p.bid_filter(&free, &open);
        assert_eq!(chosen.len(), 1);
        assert_eq!(chosen[0].key.auctioneer, "excavator_3");
    }

    #[test]
    fn nearest_accepts_the_closest_win() {
        let p = Policy::new(PolicyKind::Nearest, &[], &[]);
        let wins = [win("scout_1", 12.0), win("scout_2", 4.0), win("scout_1", 9.0)];
        let r = p.resolve_wins(&idle_excavator(), &wins);
        assert_eq!(r.accept.unwrap().task_location, Point::new(4.0, 0.0));
        assert_eq!(r.decline.len(), 2);
    }

    #[test]
    fn nearest_ties_go_to_smaller_auctioneer() {
        let p = Policy::new(PolicyKind::Nearest, &[], &[]);
        let wins = [win("scout_2", 4.0), win("scout_1", -4.0)];
        assert_eq!(p.resolve_wins(&idle_excavator(), &wins).accept.unwrap().auctioneer, "scout_1");
    }

    #[test]
    fn single_win_and_busy_robot() {
        let p = Policy::new(PolicyKind::Fcfs, &[], &[]);
        let r = p.resolve_wins(&idle_excavator(), &[win("scout_1", 3.0)]);
        assert!(r.accept.is_some() && r.decline.is_empty());

        let mut busy = idle_excavator();
        busy.activity = Activity::Digging;
        let r = p.resolve_wins(&busy, &[win("scout_1", 3.0), win("scout_2", 1.0)]);
        assert!(r.accept.is_none());
        assert_eq!(r.decline.len(), 2);
    }

    #[test]
    fn dispatch_follows_hauler_availability() {
        let p = Policy::new(PolicyKind::Coalition, &names("excavator", 4), &names("hauler", 6));
        assert_eq!(p.coalition_dispatch("excavator_2", |_| true), Dispatch::Direct("hauler_2".into()));
        assert_eq!(p.coalition_dispatch("excavator_2", |_| false), Dispatch::Auction);
        let fcfs = Policy::new(PolicyKind::Fcfs, &names("excavator", 4), &names("hauler", 6));
        assert_eq!(fcfs.coalition_dispatch("excavator_2", |_| true), Dispatch::Auction);
    }

    #[test]
    fn policy_names_round_trip() {
        for p in PolicyKind::ALL {
            assert_eq!(p.as_str().parse::<PolicyKind>().unwrap(), p);
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{p}\""));
        }
        assert!("greedy".parse::<PolicyKind>().is_err());
    }
}

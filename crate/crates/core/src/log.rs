//! JSON-lines event log. Every published message, every world event and
//! (optionally) per-robot snapshots go here; metrics and the safety checker
//! work from this log alone.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Activity, Cell, RobotKind};
use crate::bus::Envelope;
use crate::engine::RunStatus;
use crate::world::{MineralId, Point, ScenarioConfig, SiteId, Tick};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinChoice {
    pub auctioneer: String,
    pub task_location: Point,
    pub path_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum WorldEvent {
    Discovered { scout: String, site: SiteId, location: Point },
    Claimed { excavator: String, site: SiteId },
    Released { excavator: String, site: SiteId },
    Dug { excavator: String, site: SiteId, mineral: MineralId },
    /// Coalition hand-off to a paired hauler, no auction involved.
    Dispatched { excavator: String, hauler: String, site: SiteId, mineral: MineralId },
    Loaded { hauler: String, excavator: String, site: SiteId, mineral: MineralId },
    Unloaded { hauler: String, mineral: MineralId },
    WinsResolved { robot: String, accepted: Option<WinChoice>, declined: Vec<WinChoice> },
    ScoutDone { scout: String, cells: Vec<Cell> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub tick: Tick,
    #[serde(flatten)]
    pub event: WorldEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: Tick,
    pub name: String,
    pub pose: Point,
    pub activity: Activity,
    pub busy: bool,
    pub odometry: f64,
    pub carried_minerals: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSeed {
    pub site: SiteId,
    pub location: Point,
    pub minerals: u32,
}

/// Resolved configuration and the fixed constants a run was made with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config: ScenarioConfig,
    pub cell_side: f64,
    pub grid_side: usize,
    pub plant: Point,
    pub sites: Vec<SiteSeed>,
    pub robots: Vec<(String, RobotKind)>,
    pub coalition_pairs: BTreeMap<String, String>,
    pub constants: BTreeMap<String, serde_json::Value>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEnd {
    pub tick: Tick,
    pub status: RunStatus,
    pub sites_discovered: usize,
    pub minerals_at_plant: u32,
    pub open_auctions: usize,
    pub odometry: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Meta(Box<RunMeta>),
    Message(Envelope),
    Event(EventRecord),
    Snapshot(Snapshot),
    End(RunEnd),
}

#[derive(Debug, Clone, Default)]
pub struct EventLog {
    records: Vec<LogRecord>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: LogRecord) {
        self.records.push(record);
    }

    pub fn message(&mut self, envelope: Envelope) {
        self.records.push(LogRecord::Message(envelope));
    }

    pub fn event(&mut self, tick: Tick, event: WorldEvent) {
        self.records.push(LogRecord::Event(EventRecord { tick, event }));
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<LogRecord> {
        self.records
    }

    pub fn write_jsonl<W: Write>(&self, out: W) -> io::Result<()> {
        write_jsonl(&self.records, out)
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }
}

pub fn write_jsonl<W: Write>(records: &[LogRecord], out: W) -> io::Result<()> {
    let mut out = io::BufWriter::new(out);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Parses a JSON-lines log. Blank lines are skipped; errors carry the
/// 1-based line number.
pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<LogRecord>, LogError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| LogError::Parse { line: i + 1, source })?;
        records.push(record);
    }
    Ok(records)
}

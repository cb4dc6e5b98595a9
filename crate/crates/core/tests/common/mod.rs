#![allow(dead_code)]

use lunar_mrta::bus::{Envelope, Message};
use lunar_mrta::log::{LogRecord, WorldEvent};
use lunar_mrta::world::Tick;

pub fn messages(records: &[LogRecord]) -> Vec<&Envelope> {
    records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Message(e) => Some(e),
            _ => None,
        })
        .collect()
}

pub fn events(records: &[LogRecord]) -> Vec<(Tick, &WorldEvent)> {
    records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Event(e) => Some((e.tick, &e.event)),
            _ => None,
        })
        .collect()
}

pub fn count_tag(records: &[LogRecord], tag: &str) -> usize {
    messages(records).iter().filter(|e| e.payload.tag() == tag).count()
}

pub fn closes(records: &[LogRecord]) -> Vec<(Tick, &lunar_mrta::bus::Close)> {
    messages(records)
        .into_iter()
        .filter_map(|e| match &e.payload {
            Message::Close(c) => Some((e.publish_tick, c)),
            _ => None,
        })
        .collect()
}

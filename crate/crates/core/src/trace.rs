//! JSON Lines trace records.
//!
//! Every construction writes a `header` line, the raw enumeration as
//! `event` lines, and its own decision records. The field set of each
//! record kind is fixed by [`Record`]; `TRACE_SCHEMA.md` at the repository
//! root documents it for readers.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::TraceError;
use crate::kernel::{EnumerationEvent, EventLog, Index};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op")]
pub enum Record {
    #[serde(rename = "header")]
    Header(Header),
    #[serde(rename = "event")]
    Event { s: u64, e: Index, x: u64 },
    /// Friedberg routing: the chosen `<e, i, k>` or `null`.
    #[serde(rename = "route")]
    Route { s: u64, x: u64, req: Option<(Index, u8, u64)>, side: u8 },
    /// Herrmann–Kummer routing with the chosen triple's disagreement and
    /// restraint.
    #[serde(rename = "hk")]
    Hk { s: u64, x: u64, triple: (u64, u64, u8), l: u64, r: u64, side: u8 },
    /// A Herrmann–Kummer restraint `r` rising at stage `s`.
    #[serde(rename = "restraint")]
    Restraint { s: u64, code: u64, r: u64 },
    /// Slot pair claimed for an R-node.
    #[serde(rename = "slot")]
    Slot { s: u64, node: String, r: Index, rt: Index },
    /// Path approximation at construction stage `s`, computed at global
    /// stage `g` (the log through `g - 1` is visible).
    #[serde(rename = "f")]
    F { s: u64, g: u64, node: String },
    #[serde(rename = "chip")]
    Chip { s: u64, node: String, count: u64 },
    #[serde(rename = "enter")]
    Enter { s: u64, x: u64, node: String },
    #[serde(rename = "left")]
    Left { s: u64, from: String, to: String, balls: Vec<u64> },
    #[serde(rename = "pull")]
    Pull { s: u64, node: String, request: u64, x0: u64, x1: u64, extra: Vec<u64> },
    #[serde(rename = "patch")]
    Patch { s: u64, node: String, x: u64 },
    /// The e-state comparison behind an original dump.
    #[serde(rename = "marker")]
    Marker { s: u64, node: String, e: u64, i: u64, state_e: u64, state_i: u64 },
    #[serde(rename = "dump-orig")]
    DumpOrig { s: u64, node: String, e: u64, i: u64, balls: Vec<u64> },
    #[serde(rename = "dump-extra")]
    DumpExtra { s: u64, gamma: String, node: String, t: u64, x: u64 },
    #[serde(rename = "verdict")]
    Verdict { s: u64, g: u64, case: u8, detail: String },
}

impl Record {
    pub fn kind(&self) -> &'static str {
        match self {
            Record::Header(_) => "header",
            Record::Event { .. } => "event",
            Record::Route { .. } => "route",
            Record::Hk { .. } => "hk",
            Record::Restraint { .. } => "restraint",
            Record::Slot { .. } => "slot",
            Record::F { .. } => "f",
            Record::Chip { .. } => "chip",
            Record::Enter { .. } => "enter",
            Record::Left { .. } => "left",
            Record::Pull { .. } => "pull",
            Record::Patch { .. } => "patch",
            Record::Marker { .. } => "marker",
            Record::DumpOrig { .. } => "dump-orig",
            Record::DumpExtra { .. } => "dump-extra",
            Record::Verdict { .. } => "verdict",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Header {
    Enumerate { stages: u64 },
    Friedberg { a: Index, a0: Index, a1: Index, stages: u64 },
    Hk { b: Index, a: Index, b0: Index, b1: Index, stages: u64, y: Vec<(u64, Index)>, z: Vec<(u64, Index)> },
    Tree { a: Index, e: Index, e0: Index, e1: Index, stages: u64, depth: u32, listing: Vec<(u64, Index)> },
}

/// A parsed trace: its header, events and decision records in file order.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub header: Option<Header>,
    pub stepped: u64,
    pub records: Vec<(usize, Record)>,
}

impl Trace {
    pub fn events(&self) -> impl Iterator<Item = EnumerationEvent> + '_ {
        self.records.iter().filter_map(|(_, r)| match *r {
            Record::Event { s, e, x } => Some(EnumerationEvent { s, e, x }),
            _ => None,
        })
    }

    pub fn log(&self) -> EventLog {
        EventLog::from_events(self.events(), self.stepped)
    }

    /// The trace that `write_trace` would produce, with its line numbers.
    pub fn assemble(header: Header, log: &EventLog, decisions: Vec<Record>) -> Self {
        let mut records = Vec::with_capacity(log.events().len() + decisions.len() + 1);
        records.push((1, Record::Header(header.clone())));
        for ev in log.events() {
            records.push((records.len() + 1, Record::Event { s: ev.s, e: ev.e, x: ev.x }));
        }
        for r in decisions {
            records.push((records.len() + 1, r));
        }
        let stepped = match &header {
            Header::Enumerate { stages }
            | Header::Friedberg { stages, .. }
            | Header::Hk { stages, .. }
            | Header::Tree { stages, .. } => stages + 1,
        };
        Trace { header: Some(header), stepped, records }
    }

    pub fn decisions(&self) -> impl Iterator<Item = &(usize, Record)> {
        self.records.iter().filter(|(_, r)| !matches!(r, Record::Event { .. } | Record::Header(_)))
    }
}

pub fn write_record<W: Write>(out: &mut W, record: &Record) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")
}

/// Writes a header, the events, then the decision records.
pub fn write_trace<W: Write>(mut out: W, header: &Header, events: &[EnumerationEvent], decisions: &[Record]) -> std::io::Result<()> {
    write_record(&mut out, &Record::Header(header.clone()))?;
    for ev in events {
        write_record(&mut out, &Record::Event { s: ev.s, e: ev.e, x: ev.x })?;
    }
    for r in decisions {
        write_record(&mut out, r)?;
    }
    out.flush()
}

pub fn read_trace<R: BufRead>(input: R) -> Result<Trace, TraceError> {
    let mut trace = Trace::default();
    let mut last_event: Option<u64> = None;
    let mut seen = std::collections::HashSet::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record =
            serde_json::from_str(&line).map_err(|e| TraceError::Parse { line: lineno, message: e.to_string() })?;
        match &record {
            Record::Header(h) => {
                if trace.header.is_some() {
                    return Err(TraceError::Parse { line: lineno, message: "second header".into() });
                }
                trace.stepped = match h {
                    Header::Enumerate { stages }
                    | Header::Friedberg { stages, .. }
                    | Header::Hk { stages, .. }
                    | Header::Tree { stages, .. } => stages + 1,
                };
                trace.header = Some(h.clone());
            }
            Record::Event { s, e, x } => {
                if let Some(prev) = last_event {
                    if *s <= prev {
                        return Err(TraceError::Parse { line: lineno, message: format!("event stage {s} after {prev}") });
                    }
                }
                if !seen.insert((*e, *x)) {
                    return Err(TraceError::Parse { line: lineno, message: format!("{x} enters W{} twice", e.0) });
                }
                last_event = Some(*s);
            }
            _ => {}
        }
        trace.records.push((lineno, record));
    }
    Ok(trace)
}

//! In-memory event log model.
//!
//! A log is a set of traces; each trace is a time-ordered, non-empty run of
//! events belonging to one case. Attributes live either on the trace or on
//! individual events, and every attribute name keeps a single value kind per
//! level across the log.

mod csv;
mod enrich;
mod xes;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Serialize, Serializer};
use thiserror::Error;

pub use self::csv::CsvLogConfig;
pub use self::enrich::DurationUnit;
pub use self::xes::XesParse;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("missing mandatory column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: cannot parse timestamp `{value}`")]
    BadTimestamp { line: u64, value: String },
    #[error("case `{case}`: trace-level column `{column}` varies within the case")]
    TraceAttributeVaries { case: String, column: String },
    #[error("duplicate event id `{0}`")]
    DuplicateEventId(String),
    #[error("duplicate case id `{0}`")]
    DuplicateCaseId(String),
    #[error("case `{0}` has no events")]
    EmptyTrace(String),
    #[error("{level} attribute `{name}` holds both {first} and {second} values")]
    KindMismatch {
        level: Level,
        name: String,
        first: ValueKind,
        second: ValueKind,
    },
    #[error("negative timestamp on event `{0}`")]
    InvalidTimestamp(String),
    #[error("non-finite value for attribute `{0}`")]
    NonFinite(String),
    #[error("event attribute `{0}` already exists")]
    AttributeExists(String),
    #[error("malformed XML: {0}")]
    Xml(#[from] roxmltree::Error),
    #[error("not an XES document: {0}")]
    NotXes(String),
    #[error("trace {trace}, event {event}: missing `{key}`")]
    MissingXesKey { trace: usize, event: usize, key: &'static str },
    #[error("cannot parse {kind} value `{value}` for key `{key}`")]
    BadXesValue { kind: &'static str, key: String, value: String },
    #[error(transparent)]
    Csv(#[from] ::csv::Error),
}

/// Milliseconds since the Unix epoch, UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn millis(self) -> i64 {
        self.0
    }

    /// Accepts `YYYY-MM-DDTHH:MM:SS` (or a space instead of `T`), optional
    /// fractional seconds, and either no zone, `Z`, or an RFC 3339 offset.
    pub fn parse(text: &str) -> Option<Timestamp> {
        let text = text.trim();
        if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
            return Some(Timestamp(dt.with_timezone(&Utc).timestamp_millis()));
        }
        let naive = text.strip_suffix('Z').unwrap_or(text);
        ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"]
            .iter()
            .find_map(|fmt| NaiveDateTime::parse_from_str(naive, fmt).ok())
            .map(|dt| Timestamp(dt.and_utc().timestamp_millis()))
    }

    pub fn hours(self, h: i64) -> Timestamp {
        Timestamp(self.0 + h * 3_600_000)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match DateTime::<Utc>::from_timestamp_millis(self.0) {
            Some(dt) if self.0 % 1000 == 0 => write!(f, "{}", dt.format("%Y-%m-%dT%H:%M:%S")),
            Some(dt) => write!(f, "{}", dt.format("%Y-%m-%dT%H:%M:%S%.3f")),
            None => write!(f, "@{}ms", self.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Int,
    Real,
    Text,
    Timestamp,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValueKind::Int => "integer",
            ValueKind::Real => "real",
            ValueKind::Text => "text",
            ValueKind::Timestamp => "timestamp",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttributeValue {
    Int(i64),
    Real(f64),
    Text(String),
    Timestamp(Timestamp),
}

impl AttributeValue {
    pub fn kind(&self) -> ValueKind {
        match self {
            AttributeValue::Int(_) => ValueKind::Int,
            AttributeValue::Real(_) => ValueKind::Real,
            AttributeValue::Text(_) => ValueKind::Text,
            AttributeValue::Timestamp(_) => ValueKind::Timestamp,
        }
    }

    /// Numeric view; timestamps map to their millisecond count.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AttributeValue::Int(v) => Some(*v as f64),
            AttributeValue::Real(v) => Some(*v),
            AttributeValue::Timestamp(t) => Some(t.0 as f64),
            AttributeValue::Text(_) => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        !matches!(self, AttributeValue::Text(_))
    }

    /// Equality that treats reals bitwise, so it is usable as a dedup key.
    pub fn same_as(&self, other: &AttributeValue) -> bool {
        match (self, other) {
            (AttributeValue::Real(a), AttributeValue::Real(b)) => a.to_bits() == b.to_bits(),
            _ => self == other,
        }
    }
}

impl fmt::Display for AttributeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttributeValue::Int(v) => write!(f, "{v}"),
            AttributeValue::Real(v) => write!(f, "{v:?}"),
            AttributeValue::Text(s) => f.write_str(s),
            AttributeValue::Timestamp(t) => write!(f, "{t}"),
        }
    }
}

impl Serialize for AttributeValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            AttributeValue::Int(v) => s.serialize_i64(*v),
            AttributeValue::Real(v) => s.serialize_f64(*v),
            AttributeValue::Text(t) => s.serialize_str(t),
            AttributeValue::Timestamp(t) => s.serialize_str(&t.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    Trace,
    Event,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Trace => "trace",
            Level::Event => "event",
        })
    }
}

pub type Attributes = BTreeMap<String, AttributeValue>;

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub id: String,
    pub activity: String,
    pub timestamp: Timestamp,
    pub attrs: Attributes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
    pub attrs: Attributes,
}

pub type Schema = BTreeMap<(Level, String), ValueKind>;

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    traces: Vec<Trace>,
    schema: Schema,
}

impl EventLog {
    /// Validates the traces, stable-sorts each trace's events by timestamp
    /// and derives the attribute schema.
    pub fn new(mut traces: Vec<Trace>) -> Result<Self, LogError> {
        let mut cases = HashSet::new();
        let mut event_ids = HashSet::new();
        let mut schema = Schema::new();

        for trace in &mut traces {
            if !cases.insert(trace.case_id.clone()) {
                return Err(LogError::DuplicateCaseId(trace.case_id.clone()));
            }
            if trace.events.is_empty() {
                return Err(LogError::EmptyTrace(trace.case_id.clone()));
            }
            for (name, value) in &trace.attrs {
                register(&mut schema, Level::Trace, name, value)?;
            }
            for event in &trace.events {
                if !event_ids.insert(event.id.clone()) {
                    return Err(LogError::DuplicateEventId(event.id.clone()));
                }
                if event.timestamp.0 < 0 {
                    return Err(LogError::InvalidTimestamp(event.id.clone()));
                }
                for (name, value) in &event.attrs {
                    if let AttributeValue::Real(v) = value {
                        if !v.is_finite() {
                            return Err(LogError::NonFinite(name.clone()));
                        }
                    }
                    register(&mut schema, Level::Event, name, value)?;
                }
            }
            trace.events.sort_by_key(|e| e.timestamp);
        }
        Ok(EventLog { traces, schema })
    }

    pub fn empty() -> Self {
        EventLog { traces: Vec::new(), schema: Schema::new() }
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn into_traces(self) -> Vec<Trace> {
        self.traces
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn trace(&self, case_id: &str) -> Option<&Trace> {
        self.traces.iter().find(|t| t.case_id == case_id)
    }

    pub fn has_attribute(&self, level: Level, name: &str) -> bool {
        self.schema.contains_key(&(level, name.to_string()))
    }

    pub fn event_count(&self) -> usize {
        self.traces.iter().map(|t| t.events.len()).sum()
    }

    /// Concatenates logs; case and event ids must stay unique.
    pub fn merge(logs: Vec<EventLog>) -> Result<Self, LogError> {
        EventLog::new(logs.into_iter().flat_map(|l| l.traces).collect())
    }

    pub fn parse_csv(text: &str, config: &CsvLogConfig) -> Result<Self, LogError> {
        csv::parse(text, config)
    }

    pub fn to_csv(&self, config: &CsvLogConfig) -> Result<String, LogError> {
        csv::write(self, config)
    }

    pub fn parse_xes(text: &str) -> Result<XesParse, LogError> {
        xes::parse(text)
    }

    pub fn enrich_durations(&self, name: &str, unit: DurationUnit) -> Result<Self, LogError> {
        enrich::durations(self, name, unit)
    }
}

fn register(
    schema: &mut Schema,
    level: Level,
    name: &str,
    value: &AttributeValue,
) -> Result<(), LogError> {
    let kind = value.kind();
    match schema.get(&(level, name.to_string())) {
        Some(&first) if first != kind => Err(LogError::KindMismatch {
            level,
            name: name.to_string(),
            first,
            second: kind,
        }),
        Some(_) => Ok(()),
        None => {
            schema.insert((level, name.to_string()), kind);
            Ok(())
        }
    }
}

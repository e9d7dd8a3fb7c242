//! Flat CSV logs: one row per event, comma separated, header mandatory.
//!
//! Lines starting with `#` are comments. Column value kinds are inferred
//! per column: integer if every non-empty cell is an integer, then real,
//! then timestamp, otherwise text. Empty cells mean "attribute absent".

use std::collections::{BTreeSet, HashMap};

use csv::{QuoteStyle, ReaderBuilder, StringRecord, WriterBuilder};
use serde::{Deserialize, Serialize};

use super::{AttributeValue, Attributes, Event, EventLog, Level, LogError, Timestamp, Trace, ValueKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvLogConfig {
    pub case_column: String,
    pub activity_column: String,
    pub timestamp_column: String,
    /// Generated as `<case>:<n>` when absent.
    pub event_id_column: Option<String>,
    /// Remaining columns not listed here are event-level.
    pub trace_columns: Vec<String>,
}

impl Default for CsvLogConfig {
    fn default() -> Self {
        CsvLogConfig {
            case_column: "case id".into(),
            activity_column: "activity name".into(),
            timestamp_column: "timestamp".into(),
            event_id_column: Some("event id".into()),
            trace_columns: Vec::new(),
        }
    }
}

impl CsvLogConfig {
    pub fn with_trace_columns<I, S>(mut self, cols: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.trace_columns = cols.into_iter().map(Into::into).collect();
        self
    }
}

fn infer_kind<'a>(cells: impl Iterator<Item = &'a str>) -> ValueKind {
    let mut int = true;
    let mut real = true;
    let mut ts = true;
    for cell in cells.filter(|c| !c.is_empty()) {
        int &= cell.parse::<i64>().is_ok();
        real &= cell.parse::<f64>().map(f64::is_finite).unwrap_or(false);
        ts &= Timestamp::parse(cell).is_some();
    }
    match (int, real, ts) {
        (true, _, _) => ValueKind::Int,
        (_, true, _) => ValueKind::Real,
        (_, _, true) => ValueKind::Timestamp,
        _ => ValueKind::Text,
    }
}

fn convert(cell: &str, kind: ValueKind) -> Option<AttributeValue> {
    if cell.is_empty() {
        return None;
    }
    // infer_kind guarantees every non-empty cell converts
    Some(match kind {
        ValueKind::Int => AttributeValue::Int(cell.parse().ok()?),
        ValueKind::Real => AttributeValue::Real(cell.parse().ok()?),
        ValueKind::Timestamp => AttributeValue::Timestamp(Timestamp::parse(cell)?),
        ValueKind::Text => AttributeValue::Text(cell.to_string()),
    })
}

struct PendingTrace {
    case_id: String,
    raw_trace: Vec<Option<String>>,
    events: Vec<Event>,
    attrs: Attributes,
}

pub(super) fn parse(text: &str, config: &CsvLogConfig) -> Result<EventLog, LogError> {
    let mut reader = ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LogError::MissingColumn(name.to_string()))
    };
    let case_col = col(&config.case_column)?;
    let act_col = col(&config.activity_column)?;
    let ts_col = col(&config.timestamp_column)?;
    let id_col = config.event_id_column.as_deref().map(col).transpose()?;
    let trace_cols = config
        .trace_columns
        .iter()
        .map(|c| col(c))
        .collect::<Result<Vec<_>, _>>()?;
    let reserved: BTreeSet<usize> = [Some(case_col), Some(act_col), Some(ts_col), id_col]
        .into_iter()
        .flatten()
        .chain(trace_cols.iter().copied())
        .collect();
    let event_cols: Vec<usize> = (0..headers.len()).filter(|i| !reserved.contains(i)).collect();

    let records: Vec<StringRecord> = reader.records().collect::<Result<_, _>>()?;
    let kinds: HashMap<usize, ValueKind> = trace_cols
        .iter()
        .chain(&event_cols)
        .map(|&c| (c, infer_kind(records.iter().map(|r| &r[c]))))
        .collect();

    let mut order: Vec<PendingTrace> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for record in &records {
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let case_id = record[case_col].to_string();
        let ts_text = &record[ts_col];
        let timestamp = Timestamp::parse(ts_text)
            .ok_or_else(|| LogError::BadTimestamp { line, value: ts_text.to_string() })?;
        let raw_trace: Vec<Option<String>> = trace_cols
            .iter()
            .map(|&c| Some(record[c].to_string()).filter(|s| !s.is_empty()))
            .collect();

        let slot = *index.entry(case_id.clone()).or_insert_with(|| {
            let attrs = trace_cols
                .iter()
                .filter_map(|&c| Some((headers[c].to_string(), convert(&record[c], kinds[&c])?)))
                .collect();
            order.push(PendingTrace {
                case_id: case_id.clone(),
                raw_trace: raw_trace.clone(),
                events: Vec::new(),
                attrs,
            });
            order.len() - 1
        });
        let pending = &mut order[slot];
        if let Some(pos) = pending.raw_trace.iter().zip(&raw_trace).position(|(a, b)| a != b) {
            return Err(LogError::TraceAttributeVaries {
                case: case_id,
                column: headers[trace_cols[pos]].to_string(),
            });
        }
        let id = match id_col {
            Some(c) => record[c].to_string(),
            None => format!("{}:{}", case_id, pending.events.len()),
        };
        let attrs = event_cols
            .iter()
            .filter_map(|&c| Some((headers[c].to_string(), convert(&record[c], kinds[&c])?)))
            .collect();
        pending.events.push(Event {
            id,
            activity: record[act_col].to_string(),
            timestamp,
            attrs,
        });
    }

    EventLog::new(
        order
            .into_iter()
            .map(|p| Trace { case_id: p.case_id, events: p.events, attrs: p.attrs })
            .collect(),
    )
}

/// Serialises in the layout `parse` reads back with the same config:
/// id, case, activity, timestamp, then trace-level and event-level
/// attributes in schema order.
pub(super) fn write(log: &EventLog, config: &CsvLogConfig) -> Result<String, LogError> {
    let trace_attrs: Vec<&str> = attr_names(log, Level::Trace);
    let event_attrs: Vec<&str> = attr_names(log, Level::Event);

    let mut header: Vec<&str> = Vec::new();
    if let Some(id) = &config.event_id_column {
        header.push(id);
    }
    header.extend([
        config.case_column.as_str(),
        config.activity_column.as_str(),
        config.timestamp_column.as_str(),
    ]);
    header.extend(&trace_attrs);
    header.extend(&event_attrs);

    let mut writer = WriterBuilder::new()
        .quote_style(QuoteStyle::Necessary)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer.write_record(&header)?;
    let cell = |v: Option<&AttributeValue>| v.map(|v| v.to_string()).unwrap_or_default();
    for trace in log.traces() {
        for event in &trace.events {
            let mut row: Vec<String> = Vec::with_capacity(header.len());
            if config.event_id_column.is_some() {
                row.push(event.id.clone());
            }
            row.push(trace.case_id.clone());
            row.push(event.activity.clone());
            row.push(event.timestamp.to_string());
            row.extend(trace_attrs.iter().map(|a| cell(trace.attrs.get(*a))));
            row.extend(event_attrs.iter().map(|a| cell(event.attrs.get(*a))));
            writer.write_record(&row)?;
        }
    }
    let bytes = writer.into_inner().map_err(|e| LogError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits the UTF-8 it was given"))
}

fn attr_names(log: &EventLog, level: Level) -> Vec<&str> {
    log.schema()
        .keys()
        .filter(|(l, _)| *l == level)
        .map(|(_, n)| n.as_str())
        .collect()
}

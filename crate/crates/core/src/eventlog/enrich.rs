use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AttributeValue, EventLog, Level, LogError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DurationUnit {
    Hours,
    Minutes,
    Seconds,
}

impl DurationUnit {
    pub fn millis(self) -> i64 {
        match self {
            DurationUnit::Hours => 3_600_000,
            DurationUnit::Minutes => 60_000,
            DurationUnit::Seconds => 1_000,
        }
    }
}

impl FromStr for DurationUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hours" => Ok(DurationUnit::Hours),
            "minutes" => Ok(DurationUnit::Minutes),
            "seconds" => Ok(DurationUnit::Seconds),
            other => Err(format!("unknown duration unit `{other}`")),
        }
    }
}

impl fmt::Display for DurationUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DurationUnit::Hours => "hours",
            DurationUnit::Minutes => "minutes",
            DurationUnit::Seconds => "seconds",
        })
    }
}

/// Gap to the next event, in whole units, rounded half-up.
pub(super) fn durations(log: &EventLog, name: &str, unit: DurationUnit) -> Result<EventLog, LogError> {
    if log.has_attribute(Level::Event, name) {
        return Err(LogError::AttributeExists(name.to_string()));
    }
    let step = unit.millis();
    let mut traces = log.traces().to_vec();
    for trace in &mut traces {
        let next: Vec<i64> = trace.events.iter().skip(1).map(|e| e.timestamp.0).collect();
        for (event, next_ts) in trace.events.iter_mut().zip(next) {
            // events are sorted, so the gap is non-negative
            let gap = next_ts - event.timestamp.0;
            let value = (gap + step / 2) / step;
            event.attrs.insert(name.to_string(), AttributeValue::Int(value));
        }
    }
    EventLog::new(traces)
}

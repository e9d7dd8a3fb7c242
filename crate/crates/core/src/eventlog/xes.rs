//! Minimal XES reader.
//!
//! Understands `log`/`trace`/`event` elements with `string`, `int`, `float`
//! and `date` attribute children. `concept:name` names the case (on traces)
//! or the activity (on events), `time:timestamp` is the event time and
//! `identity:id` the event id. Anything else is skipped and counted.

use roxmltree::{Document, Node};

use super::{AttributeValue, Attributes, Event, EventLog, LogError, Timestamp, Trace};

#[derive(Debug, Clone, PartialEq)]
pub struct XesParse {
    pub log: EventLog,
    /// Elements that were not understood and therefore skipped.
    pub ignored_elements: usize,
}

const NAME: &str = "concept:name";
const TIME: &str = "time:timestamp";
const ID: &str = "identity:id";

fn attribute(node: Node<'_, '_>) -> Result<Option<(String, AttributeValue)>, LogError> {
    let tag = node.tag_name().name();
    let (Some(key), Some(value)) = (node.attribute("key"), node.attribute("value")) else {
        return Ok(None);
    };
    let bad = |kind: &'static str| LogError::BadXesValue {
        kind,
        key: key.to_string(),
        value: value.to_string(),
    };
    let parsed = match tag {
        "string" => AttributeValue::Text(value.to_string()),
        "int" => AttributeValue::Int(value.trim().parse().map_err(|_| bad("int"))?),
        "float" => AttributeValue::Real(value.trim().parse().map_err(|_| bad("float"))?),
        "date" => AttributeValue::Timestamp(Timestamp::parse(value).ok_or_else(|| bad("date"))?),
        _ => return Ok(None),
    };
    Ok(Some((key.to_string(), parsed)))
}

pub(super) fn parse(text: &str) -> Result<XesParse, LogError> {
    let doc = Document::parse(text)?;
    let root = doc.root_element();
    if root.tag_name().name() != "log" {
        return Err(LogError::NotXes(format!("root element is `{}`", root.tag_name().name())));
    }

    let mut ignored = 0usize;
    let mut traces = Vec::new();
    for (ti, trace_node) in root.children().filter(Node::is_element).enumerate() {
        if trace_node.tag_name().name() != "trace" {
            ignored += 1;
            continue;
        }
        let mut case_id = None;
        let mut attrs = Attributes::new();
        let mut events = Vec::new();
        for child in trace_node.children().filter(Node::is_element) {
            if child.tag_name().name() == "event" {
                events.push(child);
                continue;
            }
            match attribute(child)? {
                Some((key, AttributeValue::Text(v))) if key == NAME => case_id = Some(v),
                Some((key, value)) => {
                    attrs.insert(key, value);
                }
                None => ignored += 1,
            }
        }
        let case_id = case_id.unwrap_or_else(|| format!("trace-{ti}"));

        let mut parsed_events = Vec::with_capacity(events.len());
        for (ei, event_node) in events.into_iter().enumerate() {
            let mut activity = None;
            let mut timestamp = None;
            let mut id = None;
            let mut event_attrs = Attributes::new();
            for child in event_node.children().filter(Node::is_element) {
                match attribute(child)? {
                    Some((key, AttributeValue::Text(v))) if key == NAME => activity = Some(v),
                    Some((key, AttributeValue::Timestamp(t))) if key == TIME => timestamp = Some(t),
                    Some((key, AttributeValue::Text(v))) if key == ID => id = Some(v),
                    Some((key, value)) => {
                        event_attrs.insert(key, value);
                    }
                    None => ignored += 1,
                }
            }
            let missing = |key| LogError::MissingXesKey { trace: ti, event: ei, key };
            parsed_events.push(Event {
                id: id.unwrap_or_else(|| format!("{case_id}:{ei}")),
                activity: activity.ok_or_else(|| missing(NAME))?,
                timestamp: timestamp.ok_or_else(|| missing(TIME))?,
                attrs: event_attrs,
            });
        }
        traces.push(Trace { case_id, events: parsed_events, attrs });
    }

    Ok(XesParse { log: EventLog::new(traces)?, ignored_elements: ignored })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let text = r#"<?xml version="1.0" encoding="UTF-8"?>
<log xes.version="1.0">
  <trace>
    <string key="concept:name" value="c1"/>
    <event>
      <string key="concept:name" value="inspection"/>
      <date key="time:timestamp" value="2020-04-01T08:00:00.000+00:00"/>
    </event>
  </trace>
</log>"#;
        let parsed = EventLog::parse_xes(text).unwrap();
        assert_eq!(parsed.log.traces().len(), 1);
        assert_eq!(parsed.log.event_count(), 1);
        assert_eq!(parsed.ignored_elements, 0);
        let e = &parsed.log.traces()[0].events[0];
        assert_eq!(e.activity, "inspection");
        assert_eq!(e.id, "c1:0");
    }

    #[test]
    fn unknown_elements_counted_and_unsorted_events_sorted() {
        let text = r#"<log>
  <extension name="Concept" prefix="concept" uri="http://x"/>
  <global scope="event"><string key="concept:name" value="?"/></global>
  <trace>
    <string key="concept:name" value="c"/>
    <boolean key="flag" value="true"/>
    <event>
      <string key="concept:name" value="late"/>
      <date key="time:timestamp" value="2020-01-02T00:00:00"/>
    </event>
    <event>
      <string key="concept:name" value="early"/>
      <date key="time:timestamp" value="2020-01-01T00:00:00"/>
    </event>
  </trace>
</log>"#;
        let parsed = EventLog::parse_xes(text).unwrap();
        assert_eq!(parsed.ignored_elements, 3);
        let acts: Vec<_> = parsed.log.traces()[0].events.iter().map(|e| e.activity.as_str()).collect();
        assert_eq!(acts, ["early", "late"]);
    }

    #[test]
    fn malformed_xml() {
        assert!(matches!(EventLog::parse_xes("<log><trace></log>"), Err(LogError::Xml(_))));
    }

    #[test]
    fn event_without_timestamp() {
        let text = r#"<log><trace><event><string key="concept:name" value="a"/></event></trace></log>"#;
        assert!(matches!(
            EventLog::parse_xes(text),
            Err(LogError::MissingXesKey { key: TIME, .. })
        ));
    }

    #[test]
    fn event_without_activity() {
        let text = r#"<log><trace><event><date key="time:timestamp" value="2020-01-01T00:00:00"/></event></trace></log>"#;
        assert!(matches!(
            EventLog::parse_xes(text),
            Err(LogError::MissingXesKey { key: NAME, .. })
        ));
    }
}

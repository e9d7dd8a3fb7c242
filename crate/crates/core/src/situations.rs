//! Situations and the situation feature table.
//!
//! A situation is a trace prefix ending at an anchor event (or the whole
//! trace). A plan names the descriptive features and the target; each
//! situation then yields one [`Instance`], and the bag of instances plus the
//! observed per-feature domains forms a [`SituationTable`].

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventlog::{AttributeValue, Attributes, Event, EventLog, Level};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("feature name `{0}` used twice in the plan")]
    DuplicateName(String),
    #[error("target `{0}` is also listed as a descriptive feature")]
    TargetIsDescriptive(String),
    #[error("target `{target}` reads activity `{activity}`, which cannot occur in a situation anchored at `{anchor}`")]
    TargetOutsideAnchor { target: String, activity: String, anchor: String },
    #[error("feature `{feature}` reads {level} attribute `{attribute}`, which the log does not have")]
    UnknownAttribute { feature: String, level: Level, attribute: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "level", rename_all = "lowercase")]
pub enum FeatureSource {
    Trace { attribute: String },
    Activity { activity: String, attribute: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SituationFeature {
    pub name: String,
    pub source: FeatureSource,
}

impl SituationFeature {
    pub fn trace(name: impl Into<String>, attribute: impl Into<String>) -> Self {
        SituationFeature {
            name: name.into(),
            source: FeatureSource::Trace { attribute: attribute.into() },
        }
    }

    pub fn activity(
        name: impl Into<String>,
        activity: impl Into<String>,
        attribute: impl Into<String>,
    ) -> Self {
        SituationFeature {
            name: name.into(),
            source: FeatureSource::Activity {
                activity: activity.into(),
                attribute: attribute.into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    TraceEnd,
    Activity(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SituationFeaturePlan {
    descriptive: Vec<SituationFeature>,
    target: SituationFeature,
    anchor: Anchor,
}

impl SituationFeaturePlan {
    pub fn new(
        descriptive: Vec<SituationFeature>,
        target: SituationFeature,
        anchor: Anchor,
    ) -> Result<Self, PlanError> {
        let mut seen = HashSet::new();
        for f in &descriptive {
            if !seen.insert(f.name.as_str()) {
                return Err(PlanError::DuplicateName(f.name.clone()));
            }
        }
        if seen.contains(target.name.as_str()) {
            return Err(PlanError::TargetIsDescriptive(target.name.clone()));
        }
        if let (Anchor::Activity(anchor), FeatureSource::Activity { activity, .. }) = (&anchor, &target.source) {
            if anchor != activity {
                return Err(PlanError::TargetOutsideAnchor {
                    target: target.name.clone(),
                    activity: activity.clone(),
                    anchor: anchor.clone(),
                });
            }
        }
        Ok(SituationFeaturePlan { descriptive, target, anchor })
    }

    pub fn descriptive(&self) -> &[SituationFeature] {
        &self.descriptive
    }

    pub fn target(&self) -> &SituationFeature {
        &self.target
    }

    pub fn anchor(&self) -> &Anchor {
        &self.anchor
    }

    /// Descriptive features followed by the target.
    pub fn features(&self) -> impl Iterator<Item = &SituationFeature> {
        self.descriptive.iter().chain(std::iter::once(&self.target))
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features().map(|f| f.name.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Situation<'a> {
    pub case_id: &'a str,
    pub prefix: &'a [Event],
    pub trace_attrs: &'a Attributes,
}

/// One situation per anchor occurrence (prefix ends at that event), or one
/// per trace for [`Anchor::TraceEnd`].
pub fn extract_situations<'a>(log: &'a EventLog, anchor: &Anchor) -> Vec<Situation<'a>> {
    let mut out = Vec::new();
    for trace in log.traces() {
        let situation = |len: usize| Situation {
            case_id: &trace.case_id,
            prefix: &trace.events[..len],
            trace_attrs: &trace.attrs,
        };
        match anchor {
            Anchor::TraceEnd => out.push(situation(trace.events.len())),
            Anchor::Activity(a) => out.extend(
                trace
                    .events
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| &e.activity == a)
                    .map(|(i, _)| situation(i + 1)),
            ),
        }
    }
    out
}

/// Reads one feature from a situation. Activity features take the last
/// matching event of the prefix, which is the latest by timestamp with ties
/// resolved to the later occurrence.
pub fn feature_value(s: &Situation<'_>, f: &SituationFeature) -> Option<AttributeValue> {
    match &f.source {
        FeatureSource::Trace { attribute } => s.trace_attrs.get(attribute).cloned(),
        FeatureSource::Activity { activity, attribute } => s
            .prefix
            .iter()
            .rev()
            .find(|e| &e.activity == activity)
            .and_then(|e| e.attrs.get(attribute).cloned()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub case_id: String,
    pub prefix_len: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Instance {
    pub values: BTreeMap<String, Option<AttributeValue>>,
    pub provenance: Option<Provenance>,
}

impl Instance {
    pub fn from_values<I, S>(values: I) -> Self
    where
        I: IntoIterator<Item = (S, AttributeValue)>,
        S: Into<String>,
    {
        Instance {
            values: values.into_iter().map(|(k, v)| (k.into(), Some(v))).collect(),
            provenance: None,
        }
    }

    pub fn get(&self, feature: &str) -> Option<&AttributeValue> {
        self.values.get(feature).and_then(Option::as_ref)
    }

    pub fn get_f64(&self, feature: &str) -> Option<f64> {
        self.get(feature).and_then(AttributeValue::as_f64)
    }

    /// Value-only comparison; provenance is ignored.
    pub fn same_values(&self, other: &Instance) -> bool {
        self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|((ka, va), (kb, vb))| {
                ka == kb
                    && match (va, vb) {
                        (Some(a), Some(b)) => a.same_as(b),
                        (None, None) => true,
                        _ => false,
                    }
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Domain {
    /// Closed interval of observed values; `integer` when every value was an integer.
    Numeric { min: f64, max: f64, integer: bool },
    Categorical { values: BTreeSet<String> },
    Empty,
}

impl Domain {
    pub fn observe<'a>(values: impl Iterator<Item = &'a AttributeValue>) -> Domain {
        let mut domain = Domain::Empty;
        for v in values {
            domain = match (domain, v) {
                (Domain::Empty, AttributeValue::Text(t)) => Domain::Categorical {
                    values: BTreeSet::from([t.clone()]),
                },
                (Domain::Categorical { mut values }, AttributeValue::Text(t)) => {
                    values.insert(t.clone());
                    Domain::Categorical { values }
                }
                (Domain::Empty, v) => {
                    let x = v.as_f64().expect("non-text values are numeric");
                    Domain::Numeric { min: x, max: x, integer: matches!(v, AttributeValue::Int(_)) }
                }
                (Domain::Numeric { min, max, integer }, v) if v.is_numeric() => {
                    let x = v.as_f64().expect("non-text values are numeric");
                    Domain::Numeric {
                        min: min.min(x),
                        max: max.max(x),
                        integer: integer && matches!(v, AttributeValue::Int(_)),
                    }
                }
                // mixed kinds never come out of a validated log; keep the first kind
                (d, _) => d,
            };
        }
        domain
    }

    pub fn contains(&self, v: &AttributeValue) -> bool {
        match (self, v) {
            (Domain::Categorical { values }, AttributeValue::Text(t)) => values.contains(t),
            (Domain::Numeric { min, max, .. }, v) => v.as_f64().is_some_and(|x| *min <= x && x <= *max),
            _ => false,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Domain::Empty)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SituationTable {
    columns: Vec<String>,
    target: Option<String>,
    rows: Vec<Instance>,
    domains: BTreeMap<String, Domain>,
    dropped_missing_target: usize,
}

impl SituationTable {
    /// Builds a table over `columns`; rows are expected to carry exactly
    /// these keys. Rows missing the target are dropped and counted.
    pub fn from_rows(columns: Vec<String>, target: Option<String>, rows: Vec<Instance>) -> Self {
        let before = rows.len();
        let rows: Vec<Instance> = match &target {
            Some(t) => rows.into_iter().filter(|r| r.get(t).is_some()).collect(),
            None => rows,
        };
        let dropped_missing_target = before - rows.len();
        let domains = columns
            .iter()
            .map(|c| (c.clone(), Domain::observe(rows.iter().filter_map(|r| r.get(c)))))
            .collect();
        SituationTable { columns, target, rows, domains, dropped_missing_target }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn target(&self) -> Option<&str> {
        self.target.as_deref()
    }

    pub fn descriptive(&self) -> impl Iterator<Item = &str> {
        self.columns
            .iter()
            .map(String::as_str)
            .filter(move |c| Some(*c) != self.target.as_deref())
    }

    pub fn rows(&self) -> &[Instance] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn domains(&self) -> &BTreeMap<String, Domain> {
        &self.domains
    }

    pub fn domain(&self, feature: &str) -> Option<&Domain> {
        self.domains.get(feature)
    }

    pub fn dropped_missing_target(&self) -> usize {
        self.dropped_missing_target
    }

    /// Observed (non-missing) values of a column, duplicates included.
    pub fn column(&self, feature: &str) -> Vec<&AttributeValue> {
        self.rows.iter().filter_map(|r| r.get(feature)).collect()
    }

    /// Re-designates the target; rows missing it are dropped.
    pub fn with_target(self, target: &str) -> Self {
        SituationTable::from_rows(self.columns, Some(target.to_string()), self.rows)
    }

    /// Same columns and target over a subset of rows.
    pub fn subset(&self, indices: &[usize]) -> Self {
        SituationTable::from_rows(
            self.columns.clone(),
            self.target.clone(),
            indices.iter().map(|&i| self.rows[i].clone()).collect(),
        )
    }

    pub fn to_csv(&self) -> String {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer.write_record(&self.columns).expect("writing to memory");
        for row in &self.rows {
            writer
                .write_record(
                    self.columns
                        .iter()
                        .map(|c| row.get(c).map(ToString::to_string).unwrap_or_default()),
                )
                .expect("writing to memory");
        }
        String::from_utf8(writer.into_inner().expect("flush to memory")).expect("utf-8 input")
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<BTreeMap<&str, Option<&AttributeValue>>> = self
            .rows
            .iter()
            .map(|r| self.columns.iter().map(|c| (c.as_str(), r.get(c))).collect())
            .collect();
        serde_json::json!({
            "columns": self.columns,
            "target": self.target,
            "domains": self.domains,
            "dropped_missing_target": self.dropped_missing_target,
            "rows": rows,
        })
    }
}

/// Extracts one instance per situation and assembles the table.
pub fn build_table(log: &EventLog, plan: &SituationFeaturePlan) -> Result<SituationTable, PlanError> {
    if !log.traces().is_empty() {
        for f in plan.features() {
            let (level, attribute) = match &f.source {
                FeatureSource::Trace { attribute } => (Level::Trace, attribute),
                FeatureSource::Activity { attribute, .. } => (Level::Event, attribute),
            };
            if !log.has_attribute(level, attribute) {
                return Err(PlanError::UnknownAttribute {
                    feature: f.name.clone(),
                    level,
                    attribute: attribute.clone(),
                });
            }
        }
    }

    let rows = extract_situations(log, plan.anchor())
        .iter()
        .map(|s| Instance {
            values: plan.features().map(|f| (f.name.clone(), feature_value(s, f))).collect(),
            provenance: Some(Provenance {
                case_id: s.case_id.to_string(),
                prefix_len: s.prefix.len(),
            }),
        })
        .collect();
    Ok(SituationTable::from_rows(
        plan.feature_names(),
        Some(plan.target().name.clone()),
        rows,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::{CsvLogConfig, DurationUnit};

    const TABLE1: &str = "\
event id,case id,activity name,timestamp,team size,num test,model
e1,c1,inspection,2020-04-01T08:00:00,2,42,7
e2,c1,repair,2020-04-04T07:00:00,2,42,7
e3,c1,final test,2020-04-28T08:00:00,2,42,7
e4,c2,inspection,2020-05-01T08:00:00,3,26,5
e5,c2,repair,2020-05-03T11:00:00,3,26,5
e6,c2,final test,2020-05-19T20:00:00,3,26,5
";

    fn repair_log() -> EventLog {
        let cfg = CsvLogConfig::default().with_trace_columns(["team size", "model"]);
        EventLog::parse_csv(TABLE1, &cfg)
            .unwrap()
            .enrich_durations("duration", DurationUnit::Hours)
            .unwrap()
    }

    fn repair_plan() -> SituationFeaturePlan {
        SituationFeaturePlan::new(
            vec![
                SituationFeature::trace("model", "model"),
                SituationFeature::trace("team size", "team size"),
                SituationFeature::activity("inspNumTest", "inspection", "num test"),
                SituationFeature::activity("inspDuration", "inspection", "duration"),
            ],
            SituationFeature::activity("repairDuration", "repair", "duration"),
            Anchor::Activity("repair".into()),
        )
        .unwrap()
    }

    #[test]
    fn situation_s1_holds_e1_e2() {
        let log = repair_log();
        let situations = extract_situations(&log, &Anchor::Activity("repair".into()));
        assert_eq!(situations.len(), 2);
        let ids: Vec<_> = situations[0].prefix.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["e1", "e2"]);
        assert_eq!(situations[0].case_id, "c1");
    }

    #[test]
    fn trace_end_anchor() {
        let log = repair_log();
        let situations = extract_situations(&log, &Anchor::TraceEnd);
        assert_eq!(situations.len(), 2);
        assert!(situations.iter().all(|s| s.prefix.len() == 3));
    }

    #[test]
    fn repeated_anchor_gives_nested_prefixes() {
        let text = "\
event id,case id,activity name,timestamp
a,c,A,2020-01-01T00:00:00
b,c,B,2020-01-02T00:00:00
c,c,A,2020-01-03T00:00:00
d,c,C,2020-01-04T00:00:00
";
        let log = EventLog::parse_csv(text, &CsvLogConfig::default()).unwrap();
        let situations = extract_situations(&log, &Anchor::Activity("A".into()));
        let prefixes: Vec<Vec<&str>> = situations
            .iter()
            .map(|s| s.prefix.iter().map(|e| e.id.as_str()).collect())
            .collect();
        assert_eq!(prefixes, vec![vec!["a"], vec!["a", "b", "c"]]);
    }

    #[test]
    fn feature_values_on_s1() {
        let log = repair_log();
        let s1 = extract_situations(&log, &Anchor::Activity("repair".into()))[0];
        let get = |f: SituationFeature| feature_value(&s1, &f);
        assert_eq!(get(SituationFeature::activity("x", "inspection", "duration")), Some(AttributeValue::Int(71)));
        assert_eq!(get(SituationFeature::trace("x", "model")), Some(AttributeValue::Int(7)));
        assert_eq!(get(SituationFeature::activity("x", "final test", "duration")), None);
        assert_eq!(get(SituationFeature::trace("x", "absent")), None);
    }

    #[test]
    fn latest_matching_event_wins() {
        let text = "\
event id,case id,activity name,timestamp,v
a,c,A,2020-01-01T00:00:00,1
b,c,A,2020-01-02T00:00:00,2
c,c,A,2020-01-02T00:00:00,3
d,c,B,2020-01-03T00:00:00,4
";
        let log = EventLog::parse_csv(text, &CsvLogConfig::default()).unwrap();
        let s = extract_situations(&log, &Anchor::TraceEnd)[0];
        assert_eq!(
            feature_value(&s, &SituationFeature::activity("x", "A", "v")),
            Some(AttributeValue::Int(3))
        );
    }

    #[test]
    fn i_repair_row() {
        let table = build_table(&repair_log(), &repair_plan()).unwrap();
        assert_eq!(table.len(), 2);
        let expected = Instance::from_values([
            ("model", AttributeValue::Int(7)),
            ("team size", AttributeValue::Int(2)),
            ("inspNumTest", AttributeValue::Int(42)),
            ("inspDuration", AttributeValue::Int(71)),
            ("repairDuration", AttributeValue::Int(577)),
        ]);
        assert!(table.rows()[0].same_values(&expected));
        assert_eq!(
            table.rows()[0].provenance,
            Some(Provenance { case_id: "c1".into(), prefix_len: 2 })
        );
        assert_eq!(
            table.domain("model"),
            Some(&Domain::Numeric { min: 5.0, max: 7.0, integer: true })
        );
        assert_eq!(table.get_target_values(), vec![577.0, 393.0]);
    }

    #[test]
    fn no_anchor_occurrence_gives_empty_table() {
        let plan = SituationFeaturePlan::new(
            vec![SituationFeature::trace("model", "model")],
            SituationFeature::activity("t", "rework", "duration"),
            Anchor::Activity("rework".into()),
        )
        .unwrap();
        let table = build_table(&repair_log(), &plan).unwrap();
        assert!(table.is_empty());
    }

    #[test]
    fn missing_target_rows_dropped() {
        let plan = SituationFeaturePlan::new(
            vec![SituationFeature::trace("model", "model")],
            SituationFeature::activity("t", "final test", "duration"),
            Anchor::TraceEnd,
        )
        .unwrap();
        let table = build_table(&repair_log(), &plan).unwrap();
        assert!(table.is_empty());
        assert_eq!(table.dropped_missing_target(), 2);
    }

    #[test]
    fn unknown_attribute_fails_fast() {
        let plan = SituationFeaturePlan::new(
            vec![SituationFeature::activity("cost", "repair", "cost")],
            SituationFeature::activity("t", "repair", "duration"),
            Anchor::Activity("repair".into()),
        )
        .unwrap();
        assert!(matches!(
            build_table(&repair_log(), &plan),
            Err(PlanError::UnknownAttribute { feature, .. }) if feature == "cost"
        ));
    }

    #[test]
    fn plan_validation() {
        let t = SituationFeature::activity("t", "repair", "duration");
        assert!(matches!(
            SituationFeaturePlan::new(vec![t.clone()], t.clone(), Anchor::TraceEnd),
            Err(PlanError::TargetIsDescriptive(_))
        ));
        let m = SituationFeature::trace("m", "model");
        assert!(matches!(
            SituationFeaturePlan::new(vec![m.clone(), m], t.clone(), Anchor::TraceEnd),
            Err(PlanError::DuplicateName(_))
        ));
        assert!(matches!(
            SituationFeaturePlan::new(vec![], t, Anchor::Activity("inspection".into())),
            Err(PlanError::TargetOutsideAnchor { .. })
        ));
    }

    #[test]
    fn table_csv_layout() {
        let table = build_table(&repair_log(), &repair_plan()).unwrap();
        assert_eq!(
            table.to_csv(),
            "model,team size,inspNumTest,inspDuration,repairDuration\n7,2,42,71,577\n5,3,26,51,393\n"
        );
        let json = table.to_json();
        assert_eq!(json["domains"]["team size"]["min"], 2.0);
        assert_eq!(json["rows"][0]["repairDuration"], 577);
    }

    impl SituationTable {
        fn get_target_values(&self) -> Vec<f64> {
            let t = self.target().unwrap();
            self.rows.iter().filter_map(|r| r.get_f64(t)).collect()
        }
    }
}

//! Synthetic event logs drawn from a structural equation model.
//!
//! Each sampled row becomes one trace that walks the template's activities
//! in order. Durations are whole hours; the gap between an event and the
//! next one in its trace is the earlier event's duration.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventlog::{Event, EventLog, LogError, Timestamp, Trace};
use crate::sem::{round_half_up, Sem, SemError};
use crate::situations::{Anchor, PlanError, SituationFeature, SituationFeaturePlan, SituationTable};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("template has no activities")]
    NoActivities,
    #[error("activity `{0}` appears twice in the template")]
    DuplicateActivity(String),
    #[error("feature `{0}` has no placement in the template")]
    Unplaced(String),
    #[error("placement for `{0}`, which the model does not define")]
    UnknownFeature(String),
    #[error("feature `{feature}` is placed on unknown activity `{activity}`")]
    UnknownActivity { feature: String, activity: String },
    #[error("activity `{0}` has more than one duration placement")]
    DuplicateDuration(String),
    #[error("`{feature}` is a duration of `{activity}`, the last activity, which has no successor to measure against")]
    DurationOnLastActivity { feature: String, activity: String },
    #[error("attribute `{attribute}` is written by both `{first}` and `{second}`")]
    AttributeClash { attribute: String, first: String, second: String },
    #[error("inter-case gap and default duration must not be negative")]
    NegativeSpacing,
    #[error("row {row}: `{feature}` gives a negative duration ({value})")]
    NegativeDuration { row: usize, feature: String, value: f64 },
    #[error("row {row}: `{feature}` has no numeric value for a duration")]
    NonNumericDuration { row: usize, feature: String },
    #[error(transparent)]
    Sem(#[from] SemError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// Where a feature's value ends up in the log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Placement {
    Trace { attribute: String },
    Event { activity: String, attribute: String },
    /// Whole hours until the next event of the trace.
    Duration { activity: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogTemplate {
    pub activities: Vec<String>,
    pub placements: BTreeMap<String, Placement>,
    /// Hours spent in activities without a duration placement.
    pub default_hours: i64,
    pub epoch: Timestamp,
    pub gap_hours: i64,
    pub case_prefix: String,
    /// Attribute name under which durations are re-derived from timestamps.
    pub duration_attribute: String,
}

impl LogTemplate {
    /// The repair process: inspection, repair, final test.
    pub fn repair() -> Self {
        let place = |f: &str, p: Placement| (f.to_string(), p);
        LogTemplate {
            activities: ["inspection", "repair", "final test"].map(String::from).to_vec(),
            placements: BTreeMap::from([
                place("model", Placement::Trace { attribute: "model".into() }),
                place("team size", Placement::Trace { attribute: "team size".into() }),
                place(
                    "inspNumTest",
                    Placement::Event { activity: "inspection".into(), attribute: "num test".into() },
                ),
                place("inspDuration", Placement::Duration { activity: "inspection".into() }),
                place("repairDuration", Placement::Duration { activity: "repair".into() }),
            ]),
            default_hours: 24,
            epoch: Timestamp::parse("2021-01-01T08:00:00").expect("valid literal"),
            gap_hours: 30 * 24,
            case_prefix: "s".into(),
            duration_attribute: "duration".into(),
        }
    }

    /// Checks the template against the model's features.
    pub fn validate(&self, sem: &Sem) -> Result<(), SynthError> {
        if self.activities.is_empty() {
            return Err(SynthError::NoActivities);
        }
        if self.gap_hours < 0 || self.default_hours < 0 {
            return Err(SynthError::NegativeSpacing);
        }
        let mut seen = BTreeSet::new();
        for a in &self.activities {
            if !seen.insert(a) {
                return Err(SynthError::DuplicateActivity(a.clone()));
            }
        }
        for f in sem.order() {
            if !self.placements.contains_key(f) {
                return Err(SynthError::Unplaced(f.to_string()));
            }
        }
        let last = self.activities.last().expect("non-empty");
        let mut durations = BTreeSet::new();
        // (activity or "" for trace level, attribute) → feature
        let mut written: BTreeMap<(&str, &str), &str> = BTreeMap::new();
        for (feature, placement) in &self.placements {
            if !sem.contains(feature) {
                return Err(SynthError::UnknownFeature(feature.clone()));
            }
            let activity = match placement {
                Placement::Trace { .. } => None,
                Placement::Event { activity, .. } | Placement::Duration { activity } => Some(activity),
            };
            if let Some(activity) = activity {
                if !self.activities.contains(activity) {
                    return Err(SynthError::UnknownActivity { feature: feature.clone(), activity: activity.clone() });
                }
            }
            let slot = match placement {
                Placement::Trace { attribute } => ("", attribute.as_str()),
                Placement::Event { activity, attribute } => (activity.as_str(), attribute.as_str()),
                Placement::Duration { activity } => {
                    if activity == last {
                        return Err(SynthError::DurationOnLastActivity {
                            feature: feature.clone(),
                            activity: activity.clone(),
                        });
                    }
                    if !durations.insert(activity) {
                        return Err(SynthError::DuplicateDuration(activity.clone()));
                    }
                    continue;
                }
            };
            let clash = |first: &str| SynthError::AttributeClash {
                attribute: slot.1.to_string(),
                first: first.to_string(),
                second: feature.clone(),
            };
            if !slot.0.is_empty() && slot.1 == self.duration_attribute {
                return Err(clash("the derived duration"));
            }
            if let Some(first) = written.insert(slot, feature) {
                return Err(clash(first));
            }
        }
        Ok(())
    }

    /// The feature plan that reads sampled values back out of a synthesized
    /// log, after durations were derived under `duration_attribute`.
    /// Features come in the model's topological order; the anchor is the
    /// target's activity, or the trace end for a trace-level target.
    pub fn plan(&self, sem: &Sem, target: &str) -> Result<SituationFeaturePlan, SynthError> {
        self.validate(sem)?;
        let feature = |f: &str| match &self.placements[f] {
            Placement::Trace { attribute } => SituationFeature::trace(f, attribute.as_str()),
            Placement::Event { activity, attribute } => {
                SituationFeature::activity(f, activity.as_str(), attribute.as_str())
            }
            Placement::Duration { activity } => {
                SituationFeature::activity(f, activity.as_str(), self.duration_attribute.as_str())
            }
        };
        let target_feature = match self.placements.get(target) {
            Some(_) => feature(target),
            None => return Err(SynthError::UnknownFeature(target.to_string())),
        };
        let anchor = match &self.placements[target] {
            Placement::Trace { .. } => Anchor::TraceEnd,
            Placement::Event { activity, .. } | Placement::Duration { activity } => Anchor::Activity(activity.clone()),
        };
        let descriptive = sem.order().into_iter().filter(|f| *f != target).map(feature).collect();
        Ok(SituationFeaturePlan::new(descriptive, target_feature, anchor)?)
    }

    fn materialize(&self, table: &SituationTable) -> Result<EventLog, SynthError> {
        let mut hours: BTreeMap<&str, &str> = BTreeMap::new();
        for (feature, p) in &self.placements {
            if let Placement::Duration { activity } = p {
                hours.insert(activity, feature);
            }
        }
        let mut traces = Vec::with_capacity(table.len());
        for (row, inst) in table.rows().iter().enumerate() {
            let case_id = format!("{}{}", self.case_prefix, row + 1);
            let mut trace = Trace { case_id: case_id.clone(), events: Vec::new(), attrs: BTreeMap::new() };
            let mut ts = self.epoch.hours(self.gap_hours * row as i64);
            for (j, activity) in self.activities.iter().enumerate() {
                let mut event = Event {
                    id: format!("{case_id}-{}", j + 1),
                    activity: activity.clone(),
                    timestamp: ts,
                    attrs: BTreeMap::new(),
                };
                for (feature, p) in &self.placements {
                    let Some(value) = inst.get(feature) else { continue };
                    match p {
                        Placement::Trace { attribute } if j == 0 => {
                            trace.attrs.insert(attribute.clone(), value.clone());
                        }
                        Placement::Event { activity: a, attribute } if a == activity => {
                            event.attrs.insert(attribute.clone(), value.clone());
                        }
                        _ => {}
                    }
                }
                let step = match hours.get(activity.as_str()) {
                    Some(&feature) => {
                        let v = inst
                            .get_f64(feature)
                            .ok_or_else(|| SynthError::NonNumericDuration { row, feature: feature.to_string() })?;
                        let h = round_half_up(v);
                        if h < 0.0 {
                            return Err(SynthError::NegativeDuration { row, feature: feature.to_string(), value: v });
                        }
                        h as i64
                    }
                    None => self.default_hours,
                };
                trace.events.push(event);
                ts = ts.hours(step);
            }
            traces.push(trace);
        }
        Ok(EventLog::new(traces)?)
    }
}

/// A synthesized log together with the rows it was drawn from.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub log: EventLog,
    pub table: SituationTable,
}

/// Samples `n` rows and writes each one out as a trace.
pub fn synthesize(sem: &Sem, template: &LogTemplate, n: usize, seed: u64) -> Result<Synthesis, SynthError> {
    template.validate(sem)?;
    let table = sem.sample(n, seed)?;
    let log = template.materialize(&table)?;
    Ok(Synthesis { log, table })
}

pub fn synthesize_log(sem: &Sem, template: &LogTemplate, n: usize, seed: u64) -> Result<EventLog, SynthError> {
    Ok(synthesize(sem, template, n, seed)?.log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::DurationUnit;
    use crate::situations::build_table;

    const REPAIR_SEM: &str = "\
model = N ; noise model ~ DiscreteUniform(1,10) ; integer
\"team size\" = N ; noise \"team size\" ~ DiscreteUniform(1,3) ; integer
inspDuration = 10*model + N ; noise inspDuration ~ Uniform(-2,4) ; integer
inspNumTest = 5*model + 3*\"team size\" + N ; noise inspNumTest ~ Uniform(-1,2) ; integer
repairDuration = 50*model + 5*inspNumTest + N ; noise repairDuration ~ Uniform(10,20) ; integer
";

    fn sem() -> Sem {
        Sem::parse(REPAIR_SEM).unwrap()
    }

    #[test]
    fn two_traces_look_like_the_repair_log() {
        let log = synthesize_log(&sem(), &LogTemplate::repair(), 2, 1).unwrap();
        assert_eq!(log.traces().len(), 2);
        for t in log.traces() {
            let acts: Vec<&str> = t.events.iter().map(|e| e.activity.as_str()).collect();
            assert_eq!(acts, ["inspection", "repair", "final test"]);
            assert!(t.events.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
            assert_eq!(t.attrs.keys().collect::<Vec<_>>(), ["model", "team size"]);
            assert!(t.events[0].attrs.contains_key("num test"));
        }
        let t1 = &log.traces()[1];
        assert_eq!(t1.case_id, "s2");
        assert_eq!(t1.events[0].timestamp, Timestamp::parse("2021-01-31T08:00:00").unwrap());
        // final test follows repair by exactly the sampled repair duration
        let gap = t1.events[2].timestamp.millis() - t1.events[1].timestamp.millis();
        assert_eq!(gap % 3_600_000, 0);
    }

    #[test]
    fn round_trip_through_the_log() {
        let sem = sem();
        let template = LogTemplate::repair();
        let Synthesis { log, table } = synthesize(&sem, &template, 200, 42).unwrap();
        let log = log.enrich_durations("duration", DurationUnit::Hours).unwrap();
        let plan = template.plan(&sem, "repairDuration").unwrap();
        let rebuilt = build_table(&log, &plan).unwrap();
        assert_eq!(rebuilt.len(), table.len());
        for (a, b) in rebuilt.rows().iter().zip(table.rows()) {
            assert!(a.same_values(b), "{a:?} != {b:?}");
        }
    }

    #[test]
    fn empty_log() {
        let log = synthesize_log(&sem(), &LogTemplate::repair(), 0, 1).unwrap();
        assert!(log.traces().is_empty());
    }

    #[test]
    fn negative_duration_names_the_row() {
        let sem = Sem::parse(
            "model = N ; noise model ~ DiscreteUniform(1,2) ; integer\n\
             \"team size\" = 1\n\
             inspNumTest = 1\n\
             inspDuration = N ; noise inspDuration ~ Uniform(-30,-20)\n\
             repairDuration = 5\n",
        )
        .unwrap();
        let err = synthesize_log(&sem, &LogTemplate::repair(), 3, 0).unwrap_err();
        assert!(matches!(err, SynthError::NegativeDuration { row: 0, ref feature, .. } if feature == "inspDuration"), "{err}");
    }

    #[test]
    fn template_checks() {
        let sem = sem();
        let mut t = LogTemplate::repair();
        t.placements.remove("model");
        assert!(matches!(t.validate(&sem), Err(SynthError::Unplaced(f)) if f == "model"));

        let mut t = LogTemplate::repair();
        t.placements.insert("inspNumTest".into(), Placement::Duration { activity: "repair".into() });
        assert!(matches!(t.validate(&sem), Err(SynthError::DuplicateDuration(a)) if a == "repair"));

        let mut t = LogTemplate::repair();
        t.placements.insert("inspNumTest".into(), Placement::Duration { activity: "final test".into() });
        assert!(matches!(t.validate(&sem), Err(SynthError::DurationOnLastActivity { .. })));

        let mut t = LogTemplate::repair();
        t.placements.insert("inspNumTest".into(), Placement::Trace { attribute: "model".into() });
        assert!(matches!(t.validate(&sem), Err(SynthError::AttributeClash { .. })));

        let mut t = LogTemplate::repair();
        t.placements.insert("extra".into(), Placement::Trace { attribute: "x".into() });
        assert!(matches!(t.validate(&sem), Err(SynthError::UnknownFeature(_))));

        let mut t = LogTemplate::repair();
        t.placements.insert("inspNumTest".into(), Placement::Event { activity: "packing".into(), attribute: "n".into() });
        assert!(matches!(t.validate(&sem), Err(SynthError::UnknownActivity { .. })));
    }
}

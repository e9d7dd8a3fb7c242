use std::collections::BTreeMap;

use casecf::eventlog::{CsvLogConfig, DurationUnit};
use casecf::situations::build_table;
use casecf::synth::{synthesize, LogTemplate};
use casecf::{AttributeValue, Event, EventLog, Instance, Sem, Timestamp, Trace};
use proptest::prelude::*;

const REPAIR_SEM: &str = include_str!("../../../configs/repair.sem");
const NONLINEAR_SEM: &str = include_str!("data/nonlinear.sem");

/// (activity, gap in ms, cost, count, note)
type EventSpec = (&'static str, i64, Option<f64>, Option<i64>, Option<String>);
/// (team, label, events)
type TraceSpec = (i64, String, Vec<EventSpec>);

fn text() -> impl Strategy<Value = String> {
    // the leading letter keeps cells from reading as numbers or timestamps
    "t[a-z ,\"]{0,6}"
}

prop_compose! {
    fn event_spec()(
        activity in prop::sample::select(vec!["register", "check", "pay"]),
        gap in 0i64..400_000_000,
        cost in prop::option::of(-1.0e6f64..1.0e6),
        count in prop::option::of(-1000i64..1000),
        note in prop::option::of(text()),
    ) -> EventSpec {
        (activity, gap, cost, count, note)
    }
}

prop_compose! {
    fn trace_spec()(
        team in -50i64..50,
        label in text(),
        events in prop::collection::vec(event_spec(), 1..5),
    ) -> TraceSpec {
        (team, label, events)
    }
}

fn build_log(specs: Vec<TraceSpec>) -> EventLog {
    let mut traces = Vec::new();
    for (c, (team, label, events)) in specs.into_iter().enumerate() {
        let case_id = format!("case{c}");
        let mut ts = 1_600_000_000_000i64 + c as i64 * 1_000;
        let mut evs = Vec::new();
        for (j, (activity, gap, cost, count, note)) in events.into_iter().enumerate() {
            ts += gap;
            let mut attrs = BTreeMap::new();
            if let Some(v) = cost {
                attrs.insert("cost".to_string(), AttributeValue::Real(v));
            }
            if let Some(v) = count {
                attrs.insert("count".to_string(), AttributeValue::Int(v));
            }
            if let Some(v) = note {
                attrs.insert("note".to_string(), AttributeValue::Text(v));
            }
            evs.push(Event { id: format!("{case_id}e{j}"), activity: activity.into(), timestamp: Timestamp(ts), attrs });
        }
        let attrs = BTreeMap::from([
            ("team".to_string(), AttributeValue::Int(team)),
            ("label".to_string(), AttributeValue::Text(label)),
        ]);
        traces.push(Trace { case_id, events: evs, attrs });
    }
    EventLog::new(traces).unwrap()
}

fn arb_log() -> impl Strategy<Value = EventLog> {
    prop::collection::vec(trace_spec(), 1..6).prop_map(build_log)
}

fn csv_config() -> CsvLogConfig {
    CsvLogConfig::default().with_trace_columns(["team", "label"])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_write_then_read_is_identity(log in arb_log()) {
        let text = log.to_csv(&csv_config()).unwrap();
        let back = EventLog::parse_csv(&text, &csv_config()).unwrap();
        prop_assert_eq!(back, log);
    }

    #[test]
    fn enrichment_only_adds_durations(log in arb_log()) {
        let enriched = log.enrich_durations("duration", DurationUnit::Hours).unwrap();
        prop_assert_eq!(enriched.traces().len(), log.traces().len());
        for (a, b) in enriched.traces().iter().zip(log.traces()) {
            prop_assert_eq!(&a.case_id, &b.case_id);
            prop_assert_eq!(&a.attrs, &b.attrs);
            for (j, (x, y)) in a.events.iter().zip(&b.events).enumerate() {
                prop_assert_eq!(&x.id, &y.id);
                prop_assert_eq!(x.timestamp, y.timestamp);
                let mut attrs = x.attrs.clone();
                let duration = attrs.remove("duration");
                prop_assert_eq!(&attrs, &y.attrs);
                match b.events.get(j + 1) {
                    Some(next) => {
                        let gap = next.timestamp.millis() - y.timestamp.millis();
                        let hours = (gap as f64 / 3_600_000.0 + 0.5).floor() as i64;
                        prop_assert_eq!(duration, Some(AttributeValue::Int(hours)));
                    }
                    None => prop_assert_eq!(duration, None),
                }
            }
        }
    }

    #[test]
    fn trace_order_does_not_change_the_table(seed in 0u64..1000, n in 1usize..30, perm_seed in any::<u64>()) {
        let sem = Sem::parse(REPAIR_SEM).unwrap();
        let template = LogTemplate::repair();
        let plan = template.plan(&sem, "repairDuration").unwrap();
        let log = synthesize(&sem, &template, n, seed).unwrap().log;
        let mut traces = log.traces().to_vec();
        // deterministic Fisher-Yates driven by the generated seed
        let mut state = perm_seed;
        for i in (1..traces.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            traces.swap(i, (state >> 33) as usize % (i + 1));
        }
        let shuffled = EventLog::new(traces).unwrap();
        let enrich = |l: &EventLog| l.enrich_durations("duration", DurationUnit::Hours).unwrap();
        let key = |r: &Instance| r.provenance.as_ref().unwrap().case_id.clone();
        let rows = |l: &EventLog| {
            let t = build_table(&enrich(l), &plan).unwrap();
            let mut rows = t.rows().to_vec();
            rows.sort_by_key(key);
            rows
        };
        prop_assert_eq!(rows(&log), rows(&shuffled));
    }

    #[test]
    fn abduction_round_trip_repair(seed in any::<u64>()) {
        let sem = Sem::parse(REPAIR_SEM).unwrap();
        for row in sem.sample(20, seed).unwrap().rows() {
            let values = sem.abduce(row).unwrap().evaluate_values().unwrap();
            for (f, v) in &values {
                prop_assert!(row.get(f).unwrap().same_as(v), "{} {:?} vs {:?}", f, row.get(f), v);
            }
        }
    }

    #[test]
    fn abduction_round_trip_nonlinear(seed in any::<u64>()) {
        let sem = Sem::parse(NONLINEAR_SEM).unwrap();
        for row in sem.sample(20, seed).unwrap().rows() {
            let values = sem.abduce(row).unwrap().evaluate().unwrap();
            for (f, v) in &values {
                let x = row.get_f64(f).unwrap();
                prop_assert!((x - v).abs() <= 1e-9, "{} {} vs {}", f, x, v);
            }
        }
    }

    #[test]
    fn interventions_leave_non_descendants_alone(
        seed in any::<u64>(),
        which in 0usize..5,
        value in 0.0f64..20.0,
    ) {
        for text in [REPAIR_SEM, NONLINEAR_SEM] {
            let sem = Sem::parse(text).unwrap();
            let row = sem.sample(1, seed).unwrap().rows()[0].clone();
            let cf = sem.abduce(&row).unwrap();
            let before = cf.evaluate().unwrap();
            let feature = sem.order()[which];
            let v = AttributeValue::Real(value);
            let after = match cf.intervene([(feature, &v)]).and_then(|acted| acted.evaluate()) {
                Ok(after) => after,
                // a forced value may leave a downstream square root's domain
                Err(_) => continue,
            };
            prop_assert_eq!(after[feature], value);
            for g in sem.order() {
                if g != feature && !sem.affects(feature, g).unwrap() {
                    prop_assert_eq!(after[g], before[g], "{} changed after intervening on {}", g, feature);
                }
            }
        }
    }
}

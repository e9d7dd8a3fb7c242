use casecf::eventlog::{CsvLogConfig, DurationUnit};
use casecf::situations::{build_table, Anchor};
use casecf::{AttributeValue, EventLog, SituationFeature, SituationFeaturePlan};

const TABLE1_CSV: &str = include_str!("../../../configs/table1.csv");
const TABLE1_XES: &str = include_str!("../../../configs/table1.xes");

fn csv_log() -> EventLog {
    EventLog::parse_csv(TABLE1_CSV, &CsvLogConfig::default().with_trace_columns(["team size", "model"])).unwrap()
}

#[test]
fn xes_and_csv_give_the_same_log() {
    let xes = EventLog::parse_xes(TABLE1_XES).unwrap();
    assert_eq!(xes.ignored_elements, 0);
    let csv = csv_log();
    assert_eq!(xes.log.schema(), csv.schema());
    assert_eq!(xes.log.traces().len(), csv.traces().len());
    for (a, b) in xes.log.traces().iter().zip(csv.traces()) {
        assert_eq!(a.case_id, b.case_id);
        assert_eq!(a.attrs, b.attrs);
        assert_eq!(a.events.len(), b.events.len());
        for (x, y) in a.events.iter().zip(&b.events) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.activity, y.activity);
            assert_eq!(x.timestamp, y.timestamp);
            assert_eq!(x.attrs, y.attrs);
        }
    }
    assert_eq!(xes.log, csv);
}

#[test]
fn repair_instance_from_the_first_case() {
    let log = csv_log().enrich_durations("duration", DurationUnit::Hours).unwrap();
    let plan = SituationFeaturePlan::new(
        vec![
            SituationFeature::trace("model", "model"),
            SituationFeature::trace("team size", "team size"),
            SituationFeature::activity("inspNumTest", "inspection", "num test"),
            SituationFeature::activity("inspDuration", "inspection", "duration"),
        ],
        SituationFeature::activity("repairDuration", "repair", "duration"),
        Anchor::Activity("repair".into()),
    )
    .unwrap();
    let table = build_table(&log, &plan).unwrap();
    let first = &table.rows()[0];
    let expected = [("model", 7), ("team size", 2), ("inspNumTest", 42), ("inspDuration", 71), ("repairDuration", 577)];
    for (f, v) in expected {
        assert_eq!(first.get(f), Some(&AttributeValue::Int(v)), "{f}");
    }
    assert_eq!(first.provenance.as_ref().unwrap().case_id, "c1");
    assert_eq!(first.provenance.as_ref().unwrap().prefix_len, 2);
}

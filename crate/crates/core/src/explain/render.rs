use std::fmt::Write as _;

use serde_json::{json, Map, Value};

use super::{CounterfactualInstance, ExplanationSet};
use crate::eventlog::AttributeValue;

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    pub json: Value,
}

/// Integral numbers print without a fraction, others with two decimals.
fn number(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:.2}")
    }
}

fn value_text(v: &AttributeValue) -> String {
    match v {
        AttributeValue::Real(x) => number(*x),
        other => other.to_string(),
    }
}

fn sentence(set: &ExplanationSet, observed: Option<f64>, cf: &CounterfactualInstance) -> String {
    let clauses: Vec<String> = cf
        .changed()
        .into_iter()
        .map(|(f, v)| format!("{f} had been set to {}", value_text(v)))
        .collect();
    let mut s = format!("If {}, then {} would have been {}", clauses.join(" and "), set.target, number(cf.predicted));
    if let Some(obs) = observed {
        let _ = write!(s, " instead of {}", number(obs));
    }
    s.push('.');
    s
}

fn values_json<'a>(values: impl Iterator<Item = (&'a String, Option<&'a AttributeValue>)>) -> Value {
    let mut m = Map::new();
    for (k, v) in values {
        m.insert(k.clone(), serde_json::to_value(v).expect("attribute values serialize"));
    }
    Value::Object(m)
}

/// Renders an explanation set as sentences and as a JSON document.
pub fn render(set: &ExplanationSet) -> Report {
    let observed = set.given.get_f64(&set.target);
    let mut text = String::new();
    let given: Vec<String> = set
        .given
        .values
        .iter()
        .map(|(k, v)| match v {
            Some(v) => format!("{k}={}", value_text(v)),
            None => format!("{k}=?"),
        })
        .collect();
    let _ = writeln!(text, "Given: {}", given.join(", "));
    let _ = writeln!(text, "Goal: {} {} {}", set.target, set.direction, number(set.threshold));
    if set.explanations.is_empty() {
        let _ = writeln!(text, "No desirable counterfactual instance was found.");
    }
    for cf in &set.explanations {
        let _ = writeln!(text, "{}", sentence(set, observed, cf));
    }

    let explanations: Vec<Value> = set
        .explanations
        .iter()
        .map(|cf| {
            let changed: Map<String, Value> = cf
                .changed()
                .into_iter()
                .map(|(f, v)| (f.to_string(), serde_json::to_value(v).expect("attribute values serialize")))
                .collect();
            json!({
                "changed": changed,
                "predicted": cf.predicted,
                "distance": cf.distance,
                "effective_domain": cf.effective_domain,
                "candidate_index": cf.index,
                "values": values_json(cf.values.iter().map(|(k, v)| (k, v.as_ref()))),
            })
        })
        .collect();
    let json = json!({
        "given": values_json(set.given.values.iter().map(|(k, v)| (k, v.as_ref()))),
        "target": set.target,
        "observed": observed,
        "threshold": set.threshold,
        "direction": set.direction,
        "explanations": explanations,
    });
    Report { text, json }
}

/// One row per explanation: `rank,candidate_index,predicted,effective_domain_size`.
pub fn plot_data_csv(set: &ExplanationSet) -> String {
    let mut out = String::from("rank,candidate_index,predicted,effective_domain_size\n");
    for (rank, cf) in set.explanations.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{}", rank + 1, cf.index, cf.predicted, cf.effective_domain.len());
    }
    out
}

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use casecf::baselines::{run_experiment, ExperimentConfig, ExperimentError, ModelError};
use casecf::eventlog::{CsvLogConfig, LogError};
use casecf::explain::{explain, plot_data_csv, render, ExplainConfig, ExplainError};
use casecf::sem::SemError;
use casecf::situations::{build_table, Anchor, PlanError, SituationFeature, SituationFeaturePlan};
use casecf::synth::{synthesize, LogTemplate, Placement, SynthError};
use casecf::{EventLog, Instance, Sem, SemPredictor, SituationTable};
use serde_json::{json, Value};

use crate::config::{config_error, FeatureSpec, Loaded};

/// The pipeline ran but nothing desirable came out; exits with 3.
#[derive(Debug)]
pub struct NoExplanation;

impl std::fmt::Display for NoExplanation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("no desirable counterfactual instance was found")
    }
}

impl std::error::Error for NoExplanation {}

fn sem_code(e: &ExplainError) -> u8 {
    match e {
        ExplainError::Sem(_) => 4,
        ExplainError::Candidate { source, .. } => sem_code(source),
        _ => 2,
    }
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<crate::config::ConfigError>() {
            return 2;
        }
        if cause.is::<NoExplanation>() {
            return 3;
        }
        if cause.is::<SemError>() {
            return 4;
        }
        if let Some(e) = cause.downcast_ref::<ExplainError>() {
            return sem_code(e);
        }
        if let Some(e) = cause.downcast_ref::<ExperimentError>() {
            return match e {
                ExperimentError::Explain(e) => sem_code(e),
                ExperimentError::Model(_) => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<SynthError>() {
            return match e {
                SynthError::Sem(_) => 4,
                _ => 2,
            };
        }
        if cause.is::<ModelError>() || cause.is::<LogError>() || cause.is::<PlanError>() {
            return 2;
        }
    }
    1
}

fn write(out: &Path, name: &str, content: &str) -> Result<PathBuf> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(name);
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn write_json(out: &Path, name: &str, loaded: &Loaded, mut doc: Value) -> Result<PathBuf> {
    if let Value::Object(m) = &mut doc {
        m.insert("meta".into(), loaded.meta());
    }
    let mut text = serde_json::to_string_pretty(&doc).context("serializing JSON")?;
    text.push('\n');
    write(out, name, &text)
}

fn read_sem(loaded: &Loaded, path: Option<&Path>) -> Result<Sem> {
    let path = match path {
        Some(p) => p.to_path_buf(),
        None => {
            let s = loaded.config.sem.as_ref().ok_or_else(|| config_error("no model given: set sem.path"))?;
            loaded.resolve(&s.path)
        }
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Sem::parse(&text).with_context(|| format!("in {}", path.display()))
}

fn template(loaded: &Loaded) -> Result<LogTemplate> {
    loaded.config.synth.template(loaded.config.log.durations.as_deref())
}

/// CSV layout matching a template: its trace placements become trace columns.
fn synth_csv_config(template: &LogTemplate) -> CsvLogConfig {
    let mut cols: Vec<String> = template
        .placements
        .values()
        .filter_map(|p| match p {
            Placement::Trace { attribute } => Some(attribute.clone()),
            _ => None,
        })
        .collect();
    cols.sort();
    cols.dedup();
    CsvLogConfig::default().with_trace_columns(cols)
}

fn read_log(path: &Path, csv: &CsvLogConfig) -> Result<EventLog> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_xes = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xes"));
    let log = if is_xes {
        EventLog::parse_xes(&text).map(|p| p.log)
    } else {
        EventLog::parse_csv(&text, csv)
    };
    log.with_context(|| format!("in {}", path.display()))
}

/// All configured logs merged, with durations derived when asked for.
fn load_log(loaded: &Loaded, sem: Option<&Sem>) -> Result<EventLog> {
    let cfg = &loaded.config;
    let mut logs = Vec::new();
    for p in &cfg.log.paths {
        logs.push(read_log(&loaded.resolve(p), &cfg.log.csv)?);
    }
    if cfg.log.synthesize {
        let sem = sem.ok_or_else(|| config_error("log.synthesize needs a model (sem.path)"))?;
        logs.push(synthesize(sem, &template(loaded)?, cfg.synth.traces, cfg.seed)?.log);
    }
    if logs.is_empty() {
        return Err(config_error("no event log: set log.paths or log.synthesize"));
    }
    let log = EventLog::merge(logs)?;
    match &cfg.log.durations {
        Some(name) => Ok(log.enrich_durations(name, cfg.log.duration_unit)?),
        None => Ok(log),
    }
}

fn feature(spec: &FeatureSpec) -> SituationFeature {
    match &spec.activity {
        Some(a) => SituationFeature::activity(spec.name.as_str(), a.as_str(), spec.attribute.as_str()),
        None => SituationFeature::trace(spec.name.as_str(), spec.attribute.as_str()),
    }
}

fn plan(loaded: &Loaded) -> Result<SituationFeaturePlan> {
    let p = loaded.config.plan.as_ref().ok_or_else(|| config_error("no [plan] section"))?;
    let anchor = match &p.anchor {
        Some(a) => Anchor::Activity(a.clone()),
        None => Anchor::TraceEnd,
    };
    Ok(SituationFeaturePlan::new(p.features.iter().map(feature).collect(), feature(&p.target), anchor)?)
}

fn load_table(loaded: &Loaded, sem: Option<&Sem>) -> Result<SituationTable> {
    let log = load_log(loaded, sem)?;
    Ok(build_table(&log, &plan(loaded)?)?)
}

/// The instance of `case` at the given prefix length, or its last situation.
fn find_instance(table: &SituationTable, case: &str, prefix: Option<usize>) -> Result<Instance> {
    let found = table
        .rows()
        .iter()
        .filter(|r| {
            r.provenance
                .as_ref()
                .is_some_and(|p| p.case_id == case && prefix.is_none_or(|n| p.prefix_len == n))
        })
        .max_by_key(|r| r.provenance.as_ref().map(|p| p.prefix_len));
    match (found, prefix) {
        (Some(r), _) => Ok(r.clone()),
        (None, Some(n)) => Err(config_error(format!("case `{case}` has no situation with prefix length {n}"))),
        (None, None) => Err(config_error(format!("unknown case `{case}`"))),
    }
}

fn given(loaded: &Loaded, table: &SituationTable, case: Option<&str>, prefix: Option<usize>) -> Result<Instance> {
    let case = case
        .or(loaded.config.explain.case.as_deref())
        .ok_or_else(|| config_error("no case given: use --case or explain.case"))?;
    find_instance(table, case, prefix.or(loaded.config.explain.prefix))
}

fn explain_config(loaded: &Loaded, table: &SituationTable) -> Result<ExplainConfig> {
    let e = &loaded.config.explain;
    let threshold = e.threshold.ok_or_else(|| config_error("explain.threshold is not set"))?;
    if e.k == 0 {
        return Err(config_error("explain.k must be at least 1"));
    }
    if e.count < e.k {
        return Err(config_error(format!("explain.count ({}) must be at least k ({})", e.count, e.k)));
    }
    let descriptive: Vec<String> = table.descriptive().map(String::from).collect();
    let actionable = if e.actionable.is_empty() { descriptive.clone() } else { e.actionable.clone() };
    if let Some(bad) = actionable.iter().find(|a| !descriptive.contains(a)) {
        return Err(config_error(format!("actionable feature `{bad}` is not a descriptive feature of the plan")));
    }
    Ok(ExplainConfig { actionable, threshold, direction: e.direction, k: e.k, count: e.count, seed: loaded.config.seed })
}

pub fn synth(loaded: &Loaded, out: &Path, traces: Option<usize>) -> Result<()> {
    let sem = read_sem(loaded, None)?;
    let template = template(loaded)?;
    let n = traces.unwrap_or(loaded.config.synth.traces);
    let s = synthesize(&sem, &template, n, loaded.config.seed)?;
    let log_csv = s.log.to_csv(&synth_csv_config(&template))?;
    write(out, "log.csv", &format!("{}{log_csv}", loaded.header()))?;
    write(out, "sample.csv", &format!("{}{}", loaded.header(), s.table.to_csv()))?;
    println!("traces: {}", s.log.traces().len());
    println!("events: {}", s.log.event_count());
    println!("sample rows: {}", s.table.len());
    Ok(())
}

pub fn extract(loaded: &Loaded, out: &Path) -> Result<()> {
    let sem = match (&loaded.config.sem, loaded.config.log.synthesize) {
        (Some(_), true) => Some(read_sem(loaded, None)?),
        _ => None,
    };
    let table = load_table(loaded, sem.as_ref())?;
    write(out, "table.csv", &format!("{}{}", loaded.header(), table.to_csv()))?;
    write_json(out, "table.json", loaded, table.to_json())?;
    println!("rows: {}", table.len());
    println!("dropped (no target value): {}", table.dropped_missing_target());
    Ok(())
}

pub fn sem_check(loaded: &Loaded, path: Option<&Path>) -> Result<()> {
    let sem = read_sem(loaded, path)?;
    print!("{}", sem.to_dot());
    Ok(())
}

pub fn explain_case(loaded: &Loaded, out: &Path, case: Option<&str>, prefix: Option<usize>) -> Result<()> {
    let sem = read_sem(loaded, None)?;
    let table = load_table(loaded, Some(&sem))?;
    let given = given(loaded, &table, case, prefix)?;
    let config = explain_config(loaded, &table)?;
    let run = explain(&table, &given, &SemPredictor::new(&sem), &config)?;
    let report = render(&run.set);
    write(out, "explanations.txt", &format!("{}{}", loaded.header(), report.text))?;
    write_json(out, "explanations.json", loaded, report.json)?;
    write(out, "explanations_plot.csv", &format!("{}{}", loaded.header(), plot_data_csv(&run.set)))?;
    print!("{}", report.text);
    if run.set.explanations.is_empty() {
        return Err(NoExplanation.into());
    }
    Ok(())
}

pub fn evaluate(loaded: &Loaded, out: &Path, case: Option<&str>, prefix: Option<usize>) -> Result<()> {
    let sem = read_sem(loaded, None)?;
    let table = load_table(loaded, Some(&sem))?;
    let given = given(loaded, &table, case, prefix)?;
    let e = &loaded.config.evaluate;
    let config = ExperimentConfig {
        epsilon: e.epsilon,
        test_fraction: e.test_fraction,
        tree: e.tree(),
        k: e.neighbours,
        kernel: e.kernel,
        explain: explain_config(loaded, &table)?,
    };
    let x = run_experiment(&sem, &table, &given, &config, loaded.config.seed)?;
    write(out, "comparison.csv", &format!("{}{}", loaded.header(), x.comparison.to_csv()))?;
    let mut comparison = serde_json::to_value(&x.comparison).context("serializing comparison")?;
    // per-prediction residuals would dwarf the rest of the document
    if let Some(Value::Array(rows)) = comparison.get_mut("rows") {
        for row in rows {
            for key in ["observational", "counterfactual"] {
                if let Some(Value::Object(report)) = row.get_mut(key) {
                    report.remove("residuals");
                }
            }
        }
    }
    write_json(
        out,
        "comparison.json",
        loaded,
        json!({
            "comparison": comparison,
            "mean_gap": { "rt": x.mean_gap("rt"), "lwl": x.mean_gap("lwl") },
            "selected": x.selected,
        }),
    )?;
    write(out, "plot_predictions.csv", &format!("{}{}", loaded.header(), x.predictions_csv()))?;
    write(out, "plot_domains.csv", &format!("{}{}", loaded.header(), x.domains_csv()))?;
    print!("{}", x.comparison.to_csv());
    Ok(())
}

//! Run configuration: a TOML file plus `--set key=value` overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use casecf::baselines::{Kernel, TreeParams};
use casecf::eventlog::{CsvLogConfig, DurationUnit};
use casecf::explain::Direction;
use casecf::synth::{LogTemplate, Placement};
use casecf::Timestamp;
use serde::Deserialize;
use sha2::{Digest, Sha256};

/// A problem with the configuration or the command line; exits with 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub log: LogSection,
    #[serde(default)]
    pub synth: SynthSection,
    pub sem: Option<SemSection>,
    pub plan: Option<PlanSection>,
    #[serde(default)]
    pub explain: ExplainSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogSection {
    /// CSV or XES files (chosen by extension), merged in order.
    #[serde(default)]
    pub paths: Vec<String>,
    /// Also include a log synthesized from the model and `[synth]`.
    #[serde(default)]
    pub synthesize: bool,
    /// Name of the derived duration attribute; no enrichment when absent.
    pub durations: Option<String>,
    #[serde(default = "default_unit")]
    pub duration_unit: DurationUnit,
    #[serde(default)]
    pub csv: CsvLogConfig,
}

fn default_unit() -> DurationUnit {
    DurationUnit::Hours
}

impl Default for LogSection {
    fn default() -> Self {
        LogSection {
            paths: Vec::new(),
            synthesize: false,
            durations: None,
            duration_unit: default_unit(),
            csv: CsvLogConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    #[serde(default = "default_traces")]
    pub traces: usize,
    pub activities: Option<Vec<String>>,
    pub placements: Option<BTreeMap<String, Placement>>,
    pub default_hours: Option<i64>,
    pub epoch: Option<String>,
    pub gap_hours: Option<i64>,
    pub case_prefix: Option<String>,
}

fn default_traces() -> usize {
    1000
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            traces: default_traces(),
            activities: None,
            placements: None,
            default_hours: None,
            epoch: None,
            gap_hours: None,
            case_prefix: None,
        }
    }
}

impl SynthSection {
    /// The repair template with any configured fields replaced.
    pub fn template(&self, duration_attribute: Option<&str>) -> Result<LogTemplate> {
        let mut t = LogTemplate::repair();
        if let Some(a) = &self.activities {
            t.activities = a.clone();
        }
        if let Some(p) = &self.placements {
            t.placements = p.clone();
        }
        if let Some(h) = self.default_hours {
            t.default_hours = h;
        }
        if let Some(e) = &self.epoch {
            t.epoch = Timestamp::parse(e).ok_or_else(|| config_error(format!("synth.epoch: bad timestamp `{e}`")))?;
        }
        if let Some(g) = self.gap_hours {
            t.gap_hours = g;
        }
        if let Some(p) = &self.case_prefix {
            t.case_prefix = p.clone();
        }
        if let Some(d) = duration_attribute {
            t.duration_attribute = d.to_string();
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemSection {
    pub path: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub name: String,
    /// Trace-level when absent.
    pub activity: Option<String>,
    pub attribute: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    /// Activity that ends each situation; whole traces when absent.
    pub anchor: Option<String>,
    pub target: FeatureSpec,
    pub features: Vec<FeatureSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainSection {
    pub case: Option<String>,
    /// Length of the situation prefix; the longest one when absent.
    pub prefix: Option<usize>,
    #[serde(default)]
    pub actionable: Vec<String>,
    pub threshold: Option<f64>,
    #[serde(default = "default_direction")]
    pub direction: Direction,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_count")]
    pub count: usize,
}

fn default_direction() -> Direction {
    Direction::Below
}

fn default_k() -> usize {
    8
}

fn default_count() -> usize {
    1000
}

impl Default for ExplainSection {
    fn default() -> Self {
        ExplainSection {
            case: None,
            prefix: None,
            actionable: Vec::new(),
            threshold: None,
            direction: default_direction(),
            k: default_k(),
            count: default_count(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    #[serde(default = "default_neighbours")]
    pub neighbours: usize,
    #[serde(default = "default_kernel")]
    pub kernel: Kernel,
}

fn default_epsilon() -> f64 {
    0.05
}

fn default_fraction() -> f64 {
    0.2
}

fn default_min_leaf() -> usize {
    2
}

fn default_neighbours() -> usize {
    18
}

fn default_kernel() -> Kernel {
    Kernel::Linear
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            epsilon: default_epsilon(),
            test_fraction: default_fraction(),
            min_leaf: default_min_leaf(),
            max_depth: None,
            neighbours: default_neighbours(),
            kernel: default_kernel(),
        }
    }
}

impl EvaluateSection {
    pub fn tree(&self) -> TreeParams {
        TreeParams { min_leaf: self.min_leaf, max_depth: self.max_depth }
    }
}

/// A parsed configuration with what is needed to reproduce it.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    /// Relative paths in the file resolve against this directory.
    pub base: PathBuf,
    /// First 12 hex digits of the SHA-256 of the effective settings.
    pub hash: String,
}

impl Loaded {
    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Comment line put at the top of every CSV or text output.
    pub fn header(&self) -> String {
        format!("# seed={} config={}\n", self.config.seed, self.hash)
    }

    pub fn meta(&self) -> serde_json::Value {
        serde_json::json!({ "seed": self.config.seed, "config": self.hash })
    }
}

/// Parses `value` as a TOML value, falling back to a plain string.
fn override_value(value: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {value}")) {
        Ok(mut t) => t.remove("v").expect("just parsed"),
        Err(_) => toml::Value::String(value.to_string()),
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| config_error(format!("--set expects key=value, got `{assignment}`")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!(ConfigError(format!("--set: bad key `{key}`")));
    }
    let (last, sections) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for s in sections {
        let entry = cur.entry(s.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => bail!(ConfigError(format!("--set: `{s}` is not a section"))),
        };
    }
    cur.insert(last.to_string(), override_value(value.trim()));
    Ok(())
}

/// Reads the file (if any), applies overrides and the seed, and checks the
/// result against the schema.
pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Loaded> {
    let (mut table, base) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let table: toml::Table = toml::from_str(&text)
                .map_err(|e| config_error(format!("{}: {e}", p.display())))?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            (table, base)
        }
        None => (toml::Table::new(), PathBuf::new()),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    if let Some(seed) = seed {
        table.insert("seed".into(), toml::Value::Integer(seed as i64));
    }
    let canonical = toml::to_string(&table).context("serializing configuration")?;
    let hash = hex::encode(Sha256::digest(canonical.as_bytes()))[..12].to_string();
    let config: RunConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| config_error(format!("invalid configuration: {e}")))?;
    Ok(Loaded { config, base, hash })
}

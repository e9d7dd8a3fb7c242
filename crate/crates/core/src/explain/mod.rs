//! Counterfactual explanation pipeline.
//!
//! `generate_candidates` → `evaluate` → `filter_desirable` →
//! `select_diverse`, wrapped together by [`explain`]. Prediction is
//! pluggable: [`SemPredictor`] runs abduction, action and prediction on a
//! structural equation model; correlation-based models live in
//! [`crate::baselines`].

mod candidates;
mod render;
mod select;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventlog::AttributeValue;
use crate::sem::{Sem, SemError};
use crate::situations::{Domain, Instance, SituationTable};

pub use self::candidates::generate_candidates;
pub use self::render::{plot_data_csv, render, Report};
pub use self::select::select_diverse;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("no actionable features given")]
    NoActionable,
    #[error("`{0}` is not a descriptive feature of the table")]
    NotDescriptive(String),
    #[error("feature `{0}` has no observed values to draw from")]
    EmptyDomain(String),
    #[error("too many actionable features ({0}); at most 63 are supported")]
    TooManyActionable(usize),
    #[error("candidate count must be at least 1")]
    ZeroCount,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("table has no target feature")]
    NoTarget,
    #[error("a candidate must assign at least one feature")]
    EmptyCandidate,
    #[error("candidate {index}: {source}")]
    Candidate { index: usize, source: Box<ExplainError> },
    #[error(transparent)]
    Sem(#[from] SemError),
    #[error("model prediction failed: {0}")]
    Model(String),
}

/// A value assignment to a non-empty subset of actionable features.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Candidate(BTreeMap<String, AttributeValue>);

impl Candidate {
    pub fn new(assignment: BTreeMap<String, AttributeValue>) -> Result<Self, ExplainError> {
        if assignment.is_empty() {
            return Err(ExplainError::EmptyCandidate);
        }
        Ok(Candidate(assignment))
    }

    pub fn from_pairs<I, S>(pairs: I) -> Result<Self, ExplainError>
    where
        I: IntoIterator<Item = (S, AttributeValue)>,
        S: Into<String>,
    {
        Candidate::new(pairs.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn assignment(&self) -> &BTreeMap<String, AttributeValue> {
        &self.0
    }

    pub fn features(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Below,
    Above,
}

impl Direction {
    /// Strict: a prediction equal to the threshold is not desirable.
    pub fn is_desirable(self, predicted: f64, threshold: f64) -> bool {
        match self {
            Direction::Below => predicted < threshold,
            Direction::Above => predicted > threshold,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Below => "below",
            Direction::Above => "above",
        })
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "below" => Ok(Direction::Below),
            "above" => Ok(Direction::Above),
            other => Err(format!("direction must be `below` or `above`, not `{other}`")),
        }
    }
}

/// What a predictor says about one candidate applied to one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub values: BTreeMap<String, Option<AttributeValue>>,
    pub target: f64,
    /// Candidate features that actually changed and are kept after pruning.
    pub effective_domain: BTreeSet<String>,
}

pub trait Predictor {
    fn name(&self) -> &str;

    fn counterfactual(
        &self,
        given: &Instance,
        candidate: &Candidate,
        target: &str,
    ) -> Result<Prediction, ExplainError>;
}

/// True when the candidate value differs from the instance's value.
pub(crate) fn changes(given: &Instance, feature: &str, value: &AttributeValue) -> bool {
    match (given.get(feature), value.as_f64()) {
        (Some(old), Some(new)) if old.is_numeric() => old.as_f64() != Some(new),
        (Some(old), _) => !old.same_as(value),
        (None, _) => true,
    }
}

/// Abduction, action and prediction on a structural equation model.
///
/// Candidate features without a directed path to the target, or whose value
/// equals the observed one, are pruned before intervening.
#[derive(Debug, Clone, Copy)]
pub struct SemPredictor<'a> {
    sem: &'a Sem,
}

impl<'a> SemPredictor<'a> {
    pub fn new(sem: &'a Sem) -> Self {
        SemPredictor { sem }
    }
}

impl Predictor for SemPredictor<'_> {
    fn name(&self) -> &str {
        "sem"
    }

    fn counterfactual(
        &self,
        given: &Instance,
        candidate: &Candidate,
        target: &str,
    ) -> Result<Prediction, ExplainError> {
        let mut effective = BTreeSet::new();
        for (feature, value) in candidate.assignment() {
            if self.sem.affects(feature, target)? && changes(given, feature, value) {
                effective.insert(feature.clone());
            }
        }
        let cf = self.sem.abduce(given)?;
        let acted = cf.intervene(
            candidate
                .assignment()
                .iter()
                .filter(|(f, _)| effective.contains(*f))
                .map(|(f, v)| (f.as_str(), v)),
        )?;
        let mut values = given.values.clone();
        for (feature, value) in acted.evaluate_values()? {
            values.insert(feature, Some(value));
        }
        let predicted = acted.predict(target)?;
        Ok(Prediction { values, target: predicted, effective_domain: effective })
    }
}

/// Min-max scaled L1 distance over a fixed feature list.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    features: Vec<(String, Domain)>,
}

impl Normalizer {
    pub fn new(features: Vec<(String, Domain)>) -> Self {
        Normalizer { features }
    }

    /// Uses the table's descriptive features and their observed domains.
    pub fn from_table(table: &SituationTable) -> Self {
        Normalizer {
            features: table
                .descriptive()
                .map(|f| (f.to_string(), table.domain(f).cloned().unwrap_or(Domain::Empty)))
                .collect(),
        }
    }

    pub fn features(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|(f, _)| f.as_str())
    }

    pub fn domain(&self, feature: &str) -> Option<&Domain> {
        self.features.iter().find(|(f, _)| f == feature).map(|(_, d)| d)
    }

    /// Per-feature contribution in `[0, ∞)`: scaled absolute difference for
    /// numeric domains (0 for zero-width ones), 0/1 for categorical values.
    pub fn contribution(&self, domain: &Domain, a: Option<&AttributeValue>, b: Option<&AttributeValue>) -> f64 {
        match (a, b) {
            (None, None) => 0.0,
            (None, Some(_)) | (Some(_), None) => 1.0,
            (Some(a), Some(b)) => match (domain, a.as_f64(), b.as_f64()) {
                (Domain::Numeric { min, max, .. }, Some(x), Some(y)) => {
                    let width = max - min;
                    if width > 0.0 {
                        (x - y).abs() / width
                    } else {
                        0.0
                    }
                }
                _ => {
                    if a.same_as(b) {
                        0.0
                    } else {
                        1.0
                    }
                }
            },
        }
    }

    pub fn distance(
        &self,
        a: &BTreeMap<String, Option<AttributeValue>>,
        b: &BTreeMap<String, Option<AttributeValue>>,
    ) -> f64 {
        self.features
            .iter()
            .map(|(f, d)| self.contribution(d, a.get(f).and_then(Option::as_ref), b.get(f).and_then(Option::as_ref)))
            .sum()
    }
}

/// Distance between the given instance and a counterfactual instance.
pub fn distance(given: &Instance, cf: &CounterfactualInstance, normalizer: &Normalizer) -> f64 {
    normalizer.distance(&given.values, &cf.values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualInstance {
    /// Position of the originating candidate in the evaluated list.
    pub index: usize,
    pub candidate: Candidate,
    pub values: BTreeMap<String, Option<AttributeValue>>,
    pub predicted: f64,
    pub effective_domain: BTreeSet<String>,
    pub distance: f64,
}

impl CounterfactualInstance {
    /// The candidate restricted to its effective domain.
    pub fn changed(&self) -> BTreeMap<&str, &AttributeValue> {
        self.candidate
            .assignment()
            .iter()
            .filter(|(f, _)| self.effective_domain.contains(*f))
            .map(|(f, v)| (f.as_str(), v))
            .collect()
    }
}

/// Predicts every candidate and measures its distance to `given`.
pub fn evaluate(
    given: &Instance,
    candidates: &[Candidate],
    predictor: &dyn Predictor,
    target: &str,
    normalizer: &Normalizer,
) -> Result<Vec<CounterfactualInstance>, ExplainError> {
    candidates
        .iter()
        .enumerate()
        .map(|(index, candidate)| {
            let p = predictor
                .counterfactual(given, candidate, target)
                .map_err(|e| ExplainError::Candidate { index, source: Box::new(e) })?;
            let distance = normalizer.distance(&given.values, &p.values);
            Ok(CounterfactualInstance {
                index,
                candidate: candidate.clone(),
                values: p.values,
                predicted: p.target,
                effective_domain: p.effective_domain,
                distance,
            })
        })
        .collect()
}

/// Keeps desirable predictions with a non-empty effective domain.
pub fn filter_desirable(
    cfs: Vec<CounterfactualInstance>,
    threshold: f64,
    direction: Direction,
) -> Vec<CounterfactualInstance> {
    cfs.into_iter()
        .filter(|cf| !cf.effective_domain.is_empty() && direction.is_desirable(cf.predicted, threshold))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationSet {
    pub given: Instance,
    pub target: String,
    pub threshold: f64,
    pub direction: Direction,
    pub explanations: Vec<CounterfactualInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainConfig {
    pub actionable: Vec<String>,
    pub threshold: f64,
    pub direction: Direction,
    pub k: usize,
    pub count: usize,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            actionable: Vec::new(),
            threshold: 0.0,
            direction: Direction::Below,
            k: 8,
            count: 1000,
            seed: 0,
        }
    }
}

/// Everything the pipeline produced, for callers that need more than the
/// final set (plot data, baseline comparisons).
#[derive(Debug, Clone)]
pub struct ExplainRun {
    pub candidates: Vec<Candidate>,
    pub evaluated: Vec<CounterfactualInstance>,
    pub set: ExplanationSet,
}

/// generate → evaluate → filter → select.
pub fn explain(
    table: &SituationTable,
    given: &Instance,
    predictor: &dyn Predictor,
    config: &ExplainConfig,
) -> Result<ExplainRun, ExplainError> {
    if config.k == 0 {
        return Err(ExplainError::ZeroK);
    }
    let target = table.target().ok_or(ExplainError::NoTarget)?;
    let candidates = generate_candidates(table, &config.actionable, config.count, config.seed)?;
    let normalizer = Normalizer::from_table(table);
    let evaluated = evaluate(given, &candidates, predictor, target, &normalizer)?;
    let desirable = filter_desirable(evaluated.clone(), config.threshold, config.direction);
    let explanations = select_diverse(desirable, config.k);
    Ok(ExplainRun {
        candidates,
        evaluated,
        set: ExplanationSet {
            given: given.clone(),
            target: target.to_string(),
            threshold: config.threshold,
            direction: config.direction,
            explanations,
        },
    })
}

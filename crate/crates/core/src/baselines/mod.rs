//! Correlation-based regressors and accuracy reports.
//!
//! A model sees a counterfactual instance as a fresh row: substituted
//! values are fed in as they are, with no propagation to downstream
//! features.

mod experiment;
mod lwl;
mod tree;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::eventlog::AttributeValue;
use crate::explain::{Candidate, ExplainError, Prediction, Predictor};
use crate::situations::{Domain, Instance, SituationTable};

pub use self::experiment::{run_experiment, Experiment, ExperimentConfig, ExperimentError, SelectedPrediction};
pub use self::lwl::{train_lwl, Kernel, LwlModel};
pub use self::tree::{train_rt, Node, RegressionTree, TreeParams};

/// Fewest rows `train_test_split` accepts.
pub const MIN_SPLIT_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("table has no target feature")]
    NoTarget,
    #[error("need at least {needed} rows, got {rows}")]
    InsufficientRows { rows: usize, needed: usize },
    #[error("target value in row {row} is not numeric")]
    NonNumericTarget { row: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the {rows} training rows")]
    KTooLarge { k: usize, rows: usize },
    #[error("min leaf size must be at least 1")]
    ZeroMinLeaf,
    #[error("test fraction {0} is not in (0, 1)")]
    BadFraction(f64),
}

pub type Values = BTreeMap<String, Option<AttributeValue>>;

/// Fills missing descriptive values: median for numeric features, most
/// frequent value for categorical ones (ties go to the smallest).
#[derive(Debug, Clone, PartialEq)]
pub struct Imputer {
    fill: BTreeMap<String, AttributeValue>,
}

impl Imputer {
    pub fn fit(table: &SituationTable) -> Self {
        let mut fill = BTreeMap::new();
        for f in table.descriptive() {
            let observed = table.column(f);
            let value = match table.domain(f) {
                Some(Domain::Numeric { .. }) => {
                    let mut xs: Vec<f64> = observed.iter().filter_map(|v| v.as_f64()).collect();
                    xs.sort_by(f64::total_cmp);
                    let n = xs.len();
                    let m = if n % 2 == 1 { xs[n / 2] } else { (xs[n / 2 - 1] + xs[n / 2]) / 2.0 };
                    AttributeValue::Real(m)
                }
                Some(Domain::Categorical { .. }) => {
                    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                    for v in &observed {
                        if let AttributeValue::Text(t) = v {
                            *counts.entry(t).or_default() += 1;
                        }
                    }
                    let best = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).expect("observed");
                    AttributeValue::Text(best.0.to_string())
                }
                _ => continue,
            };
            fill.insert(f.to_string(), value);
        }
        Imputer { fill }
    }

    pub fn fill_value(&self, feature: &str) -> Option<&AttributeValue> {
        self.fill.get(feature)
    }

    pub fn apply(&self, values: &Values) -> Values {
        let mut out = values.clone();
        for (f, v) in &self.fill {
            let slot = out.entry(f.clone()).or_insert(None);
            if slot.is_none() {
                *slot = Some(v.clone());
            }
        }
        out
    }
}

pub trait Regressor {
    fn name(&self) -> &str;

    /// Prediction for a raw value map; missing values are imputed.
    fn predict_values(&self, values: &Values) -> f64;
}

/// Plain inference on `given` with `substitution` written over it.
pub fn predict_model(
    model: &dyn Regressor,
    given: &Instance,
    substitution: &BTreeMap<String, AttributeValue>,
) -> f64 {
    let mut values = given.values.clone();
    for (f, v) in substitution {
        values.insert(f.clone(), Some(v.clone()));
    }
    model.predict_values(&values)
}

fn targets(table: &SituationTable) -> Result<Vec<f64>, ModelError> {
    let target = table.target().ok_or(ModelError::NoTarget)?;
    table
        .rows()
        .iter()
        .enumerate()
        .map(|(row, r)| {
            r.get(target)
                .filter(|v| v.is_numeric())
                .and_then(AttributeValue::as_f64)
                .ok_or(ModelError::NonNumericTarget { row })
        })
        .collect()
}

/// Seeded shuffle, then the first `round(n * test_fraction)` rows (at least
/// one) become the test set.
pub fn train_test_split(
    table: &SituationTable,
    test_fraction: f64,
    seed: u64,
) -> Result<(SituationTable, SituationTable), ModelError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(ModelError::BadFraction(test_fraction));
    }
    let n = table.len();
    if n < MIN_SPLIT_ROWS {
        return Err(ModelError::InsufficientRows { rows: n, needed: MIN_SPLIT_ROWS });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let (test, train) = idx.split_at(n_test);
    let mut train = train.to_vec();
    let mut test = test.to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((table.subset(&train), table.subset(&test)))
}

/// A trained regressor exposed as an explanation predictor.
pub struct ModelPredictor<'a> {
    model: &'a dyn Regressor,
}

impl<'a> ModelPredictor<'a> {
    pub fn new(model: &'a dyn Regressor) -> Self {
        ModelPredictor { model }
    }
}

impl Predictor for ModelPredictor<'_> {
    fn name(&self) -> &str {
        self.model.name()
    }

    fn counterfactual(&self, given: &Instance, candidate: &Candidate, target: &str) -> Result<Prediction, ExplainError> {
        // no causal pruning: every substituted feature counts
        let effective: BTreeSet<String> = candidate.features().map(String::from).collect();
        let predicted = predict_model(self.model, given, candidate.assignment());
        let mut values = given.values.clone();
        for (f, v) in candidate.assignment() {
            values.insert(f.clone(), Some(v.clone()));
        }
        values.insert(target.to_string(), Some(AttributeValue::Real(predicted)));
        Ok(Prediction { values, target: predicted, effective_domain: effective })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub predictor: String,
    pub epsilon: f64,
    /// `None` when there were no rows to score.
    pub accuracy: Option<f64>,
    pub correct: usize,
    pub total: usize,
    /// Prediction minus truth, per scored row.
    pub residuals: Vec<f64>,
}

impl EvalReport {
    /// Scores `(prediction, truth)` pairs at relative tolerance `epsilon`.
    pub fn score(predictor: &str, epsilon: f64, pairs: Vec<(f64, f64)>) -> Self {
        let correct = pairs.iter().filter(|&&(p, t)| within_tolerance(p, t, epsilon)).count();
        let total = pairs.len();
        EvalReport {
            predictor: predictor.to_string(),
            epsilon,
            accuracy: (total > 0).then(|| correct as f64 / total as f64),
            correct,
            total,
            residuals: pairs.iter().map(|(p, t)| p - t).collect(),
        }
    }
}

/// True when `pred` is within `epsilon * max(|truth|, 1)` of `truth`.
pub fn within_tolerance(pred: f64, truth: f64, epsilon: f64) -> bool {
    (pred - truth).abs() <= epsilon * truth.abs().max(1.0)
}

/// Accuracy on held-out rows of `table` (the model predicts each row as is).
pub fn observational_accuracy(
    model: &dyn Regressor,
    table: &SituationTable,
    epsilon: f64,
) -> Result<EvalReport, ModelError> {
    let truth = targets(table)?;
    let pairs = table
        .rows()
        .iter()
        .zip(truth)
        .map(|(r, t)| (model.predict_values(&r.values), t))
        .collect();
    Ok(EvalReport::score(model.name(), epsilon, pairs))
}

/// Accuracy on counterfactual instances: every (instance, candidate) pair,
/// scored against what the structural model predicts for it.
pub fn counterfactual_accuracy(
    predictor: &dyn Predictor,
    truth: &dyn Predictor,
    instances: &[Instance],
    candidates: &[Candidate],
    target: &str,
    epsilon: f64,
) -> Result<EvalReport, ExplainError> {
    let mut pairs = Vec::with_capacity(instances.len() * candidates.len());
    for given in instances {
        for (index, c) in candidates.iter().enumerate() {
            let wrap = |e| ExplainError::Candidate { index, source: Box::new(e) };
            let t = truth.counterfactual(given, c, target).map_err(wrap)?.target;
            let p = predictor.counterfactual(given, c, target).map_err(wrap)?.target;
            pairs.push((p, t));
        }
    }
    Ok(EvalReport::score(predictor.name(), epsilon, pairs))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub predictor: String,
    pub observational: EvalReport,
    pub counterfactual: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub seed: u64,
    pub epsilon: f64,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    /// `predictor,observational_accuracy,counterfactual_accuracy,epsilon,seed`;
    /// undefined accuracies are left empty.
    pub fn to_csv(&self) -> String {
        let cell = |a: Option<f64>| a.map(|a| format!("{a:.6}")).unwrap_or_default();
        let mut out = String::from("predictor,observational_accuracy,counterfactual_accuracy,epsilon,seed\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.predictor,
                cell(r.observational.accuracy),
                cell(r.counterfactual.accuracy),
                self.epsilon,
                self.seed
            );
        }
        out
    }
}

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use super::{
    counterfactual_accuracy, observational_accuracy, train_lwl, train_rt, train_test_split, Comparison,
    ComparisonRow, Kernel, ModelError, ModelPredictor, Regressor, TreeParams,
};
use crate::explain::{explain, ExplainConfig, ExplainError, ExplainRun, Predictor, SemPredictor};
use crate::sem::Sem;
use crate::situations::{Instance, SituationTable};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub epsilon: f64,
    pub test_fraction: f64,
    pub tree: TreeParams,
    pub k: usize,
    pub kernel: Kernel,
    /// Its seed is replaced by the experiment seed.
    pub explain: ExplainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            epsilon: 0.05,
            test_fraction: 0.2,
            tree: TreeParams::default(),
            k: 18,
            kernel: Kernel::Linear,
            explain: ExplainConfig::default(),
        }
    }
}

/// What each predictor says about one explanation picked with the model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectedPrediction {
    pub rank: usize,
    pub candidate_index: usize,
    pub effective_domain: Vec<String>,
    pub sem: f64,
    pub rt: f64,
    pub lwl: f64,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub seed: u64,
    pub comparison: Comparison,
    pub run: ExplainRun,
    pub selected: Vec<SelectedPrediction>,
}

impl Experiment {
    /// Mean |model − sem| over the selected explanations, `None` if there are none.
    pub fn mean_gap(&self, model: &str) -> Option<f64> {
        if self.selected.is_empty() {
            return None;
        }
        let gap: f64 = self
            .selected
            .iter()
            .map(|s| match model {
                "rt" => (s.rt - s.sem).abs(),
                "lwl" => (s.lwl - s.sem).abs(),
                _ => 0.0,
            })
            .sum();
        Some(gap / self.selected.len() as f64)
    }

    /// `rank,candidate_index,sem,rt,lwl`
    pub fn predictions_csv(&self) -> String {
        let mut out = String::from("rank,candidate_index,sem,rt,lwl\n");
        for s in &self.selected {
            let _ = writeln!(out, "{},{},{},{},{}", s.rank, s.candidate_index, s.sem, s.rt, s.lwl);
        }
        out
    }

    /// `rank,candidate_index,effective_domain_size,effective_domain`
    pub fn domains_csv(&self) -> String {
        let mut out = String::from("rank,candidate_index,effective_domain_size,effective_domain\n");
        for s in &self.selected {
            let _ = writeln!(
                out,
                "{},{},{},\"{}\"",
                s.rank,
                s.candidate_index,
                s.effective_domain.len(),
                s.effective_domain.join(";")
            );
        }
        out
    }
}

/// Trains both baselines on a seeded split of `table`, scores them on the
/// held-out rows and on counterfactual versions of `given`, and compares
/// their predictions with the structural model's on the explanations it
/// selects.
pub fn run_experiment(
    sem: &Sem,
    table: &SituationTable,
    given: &Instance,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<Experiment, ExperimentError> {
    let target = table.target().ok_or(ModelError::NoTarget)?.to_string();
    let (train, test) = train_test_split(table, config.test_fraction, seed)?;
    let rt = train_rt(&train, config.tree)?;
    let lwl = train_lwl(&train, config.k, config.kernel)?;

    let sem_predictor = SemPredictor::new(sem);
    let explain_config = ExplainConfig { seed, ..config.explain.clone() };
    let run = explain(table, given, &sem_predictor, &explain_config)?;
    let instances = std::slice::from_ref(given);

    let mut rows = vec![ComparisonRow {
        predictor: "sem".into(),
        observational: crate::baselines::EvalReport::score(
            "sem",
            config.epsilon,
            test.rows()
                .iter()
                .map(|r| {
                    let cf = sem.abduce(r)?;
                    let t = r.get_f64(&target).unwrap_or(f64::NAN);
                    Ok((cf.predict(&target)?, t))
                })
                .collect::<Result<Vec<_>, crate::sem::SemError>>()
                .map_err(ExplainError::from)?,
        ),
        counterfactual: counterfactual_accuracy(
            &sem_predictor,
            &sem_predictor,
            instances,
            &run.candidates,
            &target,
            config.epsilon,
        )?,
    }];
    let models: [&dyn Regressor; 2] = [&rt, &lwl];
    for model in models {
        let p = ModelPredictor::new(model);
        rows.push(ComparisonRow {
            predictor: model.name().to_string(),
            observational: observational_accuracy(model, &test, config.epsilon)?,
            counterfactual: counterfactual_accuracy(&p, &sem_predictor, instances, &run.candidates, &target, config.epsilon)?,
        });
    }

    let mut selected = Vec::with_capacity(run.set.explanations.len());
    for (rank, cf) in run.set.explanations.iter().enumerate() {
        let predict = |p: &dyn Predictor| -> Result<f64, ExplainError> {
            Ok(p.counterfactual(given, &cf.candidate, &target)?.target)
        };
        selected.push(SelectedPrediction {
            rank: rank + 1,
            candidate_index: cf.index,
            effective_domain: cf.effective_domain.iter().cloned().collect(),
            sem: cf.predicted,
            rt: predict(&ModelPredictor::new(&rt))?,
            lwl: predict(&ModelPredictor::new(&lwl))?,
        });
    }

    Ok(Experiment {
        seed,
        comparison: Comparison { seed, epsilon: config.epsilon, rows },
        run,
        selected,
    })
}

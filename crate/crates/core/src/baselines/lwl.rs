use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{targets, Imputer, ModelError, Regressor, Values};
use crate::eventlog::AttributeValue;
use crate::explain::Normalizer;
use crate::situations::SituationTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// The j-th nearest neighbour (from 0) gets weight `(k - j) / k`.
    Linear,
    Uniform,
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kernel::Linear => "linear",
            Kernel::Uniform => "uniform",
        })
    }
}

impl FromStr for Kernel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Kernel::Linear),
            "uniform" => Ok(Kernel::Uniform),
            other => Err(format!("kernel must be `linear` or `uniform`, not `{other}`")),
        }
    }
}

/// Lazy k-nearest-neighbour regressor with rank-based weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LwlModel {
    k: usize,
    kernel: Kernel,
    normalizer: Normalizer,
    imputer: Imputer,
    /// Training rows as value vectors in normalizer feature order.
    rows: Vec<Vec<Option<AttributeValue>>>,
    targets: Vec<f64>,
}

impl LwlModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    fn project(&self, values: &Values) -> Vec<Option<AttributeValue>> {
        let filled = self.imputer.apply(values);
        self.normalizer
            .features()
            .map(|f| filled.get(f).cloned().flatten())
            .collect()
    }

    /// Indices of the k nearest training rows, nearest first; ties by index.
    pub fn neighbours(&self, values: &Values) -> Vec<usize> {
        let q = self.project(values);
        let domains: Vec<_> = self.normalizer.features().map(|f| self.normalizer.domain(f).expect("own feature")).collect();
        let mut scored: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let d = domains
                    .iter()
                    .zip(row.iter().zip(&q))
                    .map(|(dom, (a, b))| self.normalizer.contribution(dom, a.as_ref(), b.as_ref()))
                    .sum::<f64>();
                (d, i)
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scored.into_iter().take(self.k).map(|(_, i)| i).collect()
    }
}

impl Regressor for LwlModel {
    fn name(&self) -> &str {
        "lwl"
    }

    fn predict_values(&self, values: &Values) -> f64 {
        let k = self.k as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for (j, i) in self.neighbours(values).into_iter().enumerate() {
            let w = match self.kernel {
                Kernel::Linear => (k - j as f64) / k,
                Kernel::Uniform => 1.0,
            };
            num += w * self.targets[i];
            den += w;
        }
        num / den
    }
}

pub fn train_lwl(table: &SituationTable, k: usize, kernel: Kernel) -> Result<LwlModel, ModelError> {
    if k == 0 {
        return Err(ModelError::ZeroK);
    }
    let targets = targets(table)?;
    if k > targets.len() {
        return Err(ModelError::KTooLarge { k, rows: targets.len() });
    }
    let imputer = Imputer::fit(table);
    let normalizer = Normalizer::from_table(table);
    let mut model = LwlModel { k, kernel, normalizer, imputer, rows: Vec::new(), targets };
    model.rows = table.rows().iter().map(|r| model.project(&r.values)).collect();
    Ok(model)
}

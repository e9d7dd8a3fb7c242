use serde::Serialize;

use super::{targets, Imputer, ModelError, Regressor, Values};
use crate::eventlog::AttributeValue;
use crate::situations::{Domain, SituationTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TreeParams {
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { min_leaf: 2, max_depth: None }
    }
}

/// Numeric features are used as is; categorical ones become 0/1 indicators.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Column {
    Numeric { feature: String },
    Indicator { feature: String, value: String },
}

impl Column {
    fn read(&self, values: &Values) -> f64 {
        match self {
            Column::Numeric { feature } => values
                .get(feature)
                .and_then(Option::as_ref)
                .and_then(AttributeValue::as_f64)
                .unwrap_or(0.0),
            Column::Indicator { feature, value } => match values.get(feature).and_then(Option::as_ref) {
                Some(AttributeValue::Text(t)) if t == value => 1.0,
                _ => 0.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Leaf { value: f64, rows: usize },
    /// Rows with `x[column] <= threshold` go left.
    Split { column: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
}

impl Node {
    pub fn leaves(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn route(&self, x: &[f64]) -> &Node {
        match self {
            Node::Leaf { .. } => self,
            Node::Split { column, threshold, left, right } => {
                if x[*column] <= *threshold {
                    left.route(x)
                } else {
                    right.route(x)
                }
            }
        }
    }
}

/// CART regression tree grown by variance reduction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionTree {
    params: TreeParams,
    columns: Vec<Column>,
    root: Node,
    #[serde(skip)]
    imputer: Imputer,
}

impl RegressionTree {
    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn params(&self) -> TreeParams {
        self.params
    }

    fn encode(&self, values: &Values) -> Vec<f64> {
        let filled = self.imputer.apply(values);
        self.columns.iter().map(|c| c.read(&filled)).collect()
    }

    /// The leaf a query ends up in.
    pub fn leaf(&self, values: &Values) -> &Node {
        self.root.route(&self.encode(values))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("tree serializes")
    }
}

impl Regressor for RegressionTree {
    fn name(&self) -> &str {
        "rt"
    }

    fn predict_values(&self, values: &Values) -> f64 {
        match self.leaf(values) {
            Node::Leaf { value, .. } => *value,
            Node::Split { .. } => unreachable!("routing ends in a leaf"),
        }
    }
}

pub fn train_rt(table: &SituationTable, params: TreeParams) -> Result<RegressionTree, ModelError> {
    if params.min_leaf == 0 {
        return Err(ModelError::ZeroMinLeaf);
    }
    let y = targets(table)?;
    if y.len() < 2 {
        return Err(ModelError::InsufficientRows { rows: y.len(), needed: 2 });
    }
    let imputer = Imputer::fit(table);
    let mut columns = Vec::new();
    for f in table.descriptive() {
        match table.domain(f) {
            Some(Domain::Numeric { .. }) => columns.push(Column::Numeric { feature: f.to_string() }),
            Some(Domain::Categorical { values }) => columns.extend(
                values.iter().map(|v| Column::Indicator { feature: f.to_string(), value: v.clone() }),
            ),
            _ => {}
        }
    }
    let x: Vec<Vec<f64>> = table
        .rows()
        .iter()
        .map(|r| {
            let filled = imputer.apply(&r.values);
            columns.iter().map(|c| c.read(&filled)).collect()
        })
        .collect();
    let rows: Vec<usize> = (0..y.len()).collect();
    let root = grow(&x, &y, rows, params, 0);
    Ok(RegressionTree { params, columns, root, imputer })
}

fn sse(sum: f64, sumsq: f64, n: f64) -> f64 {
    (sumsq - sum * sum / n).max(0.0)
}

fn grow(x: &[Vec<f64>], y: &[f64], rows: Vec<usize>, params: TreeParams, depth: usize) -> Node {
    let n = rows.len();
    let sum: f64 = rows.iter().map(|&i| y[i]).sum();
    let leaf = Node::Leaf { value: sum / n as f64, rows: n };
    if n < 2 * params.min_leaf || params.max_depth.is_some_and(|d| depth >= d) {
        return leaf;
    }
    let sumsq: f64 = rows.iter().map(|&i| y[i] * y[i]).sum();
    let parent = sse(sum, sumsq, n as f64);
    if parent <= 1e-12 * sumsq.max(1.0) {
        return leaf;
    }

    // (total sse, column, threshold)
    let mut best: Option<(f64, usize, f64)> = None;
    let ncols = x.first().map_or(0, Vec::len);
    let mut order = rows.clone();
    for c in 0..ncols {
        order.sort_by(|&a, &b| x[a][c].total_cmp(&x[b][c]).then(a.cmp(&b)));
        let (mut ls, mut lsq) = (0.0, 0.0);
        for p in 1..n {
            let i = order[p - 1];
            ls += y[i];
            lsq += y[i] * y[i];
            if p < params.min_leaf || n - p < params.min_leaf {
                continue;
            }
            let (lo, hi) = (x[i][c], x[order[p]][c]);
            if lo == hi {
                continue;
            }
            let total = sse(ls, lsq, p as f64) + sse(sum - ls, sumsq - lsq, (n - p) as f64);
            if best.is_none_or(|(b, _, _)| total < b) {
                let mid = lo + (hi - lo) / 2.0;
                let threshold = if mid < hi { mid } else { lo };
                best = Some((total, c, threshold));
            }
        }
    }
    let Some((total, column, threshold)) = best else {
        return leaf;
    };
    if total >= parent - 1e-12 * parent.max(1.0) {
        return leaf;
    }
    let (left, right): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| x[i][column] <= threshold);
    Node::Split {
        column,
        threshold,
        left: Box::new(grow(x, y, left, params, depth + 1)),
        right: Box::new(grow(x, y, right, params, depth + 1)),
    }
}

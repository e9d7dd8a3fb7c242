//! Structural equation models.
//!
//! Each feature has one equation `feature = expr(parents, N)` with its own
//! independent noise `N`. The parent graph must be acyclic. Besides forward
//! sampling, a model supports the three counterfactual steps: [`Sem::abduce`]
//! fixes the noise values that reproduce an observed instance,
//! [`CounterfactualSem::intervene`] overrides equations with constants, and
//! [`CounterfactualSem::predict`] re-evaluates the model.
//!
//! Abduction requires every equation to be noise-free, the bare noise, or
//! `g(parents) ± N`, which makes the recovered noise unique.

pub mod expr;
pub mod parse;

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::cmp::Reverse;
use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::eventlog::AttributeValue;
use crate::situations::{Instance, SituationTable};

pub use self::expr::{EvalError, Expr, NoiseShape};
pub use self::parse::{parse_equations, parse_expr, EquationDecl, ParseError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("line {line}: second equation for `{feature}`")]
    DuplicateEquation { feature: String, line: usize },
    #[error("equation for `{feature}` refers to undeclared feature `{reference}`")]
    UndeclaredFeature { feature: String, reference: String },
    #[error("the model has a cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("equation for `{0}` uses more than one noise term")]
    MultipleNoise(String),
    #[error("equation for `{0}` uses N but declares no noise distribution")]
    MissingNoise(String),
    #[error("invalid noise distribution for `{feature}`: {reason}")]
    InvalidNoise { feature: String, reason: String },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("instance has no numeric value for `{0}`")]
    MissingValue(String),
    #[error("row {row}, feature `{feature}`: {source}")]
    Sample { feature: String, row: usize, source: EvalError },
    #[error("feature `{feature}`: {source}")]
    Eval { feature: String, source: EvalError },
    #[error("feature `{feature}`: recovered noise {noise} lies outside {dist}")]
    NoiseOutOfSupport { feature: String, noise: f64, dist: NoiseDist },
    #[error("feature `{feature}` is noise-free: observed {observed}, model gives {expected}")]
    Inconsistent { feature: String, observed: f64, expected: f64 },
    #[error("equation for `{0}` is not of the form g(parents) + N; cannot recover its noise")]
    NotNoiseSolvable(String),
    #[error("intervention on `{0}` needs a numeric value")]
    NonNumericIntervention(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseDist {
    Uniform { lo: f64, hi: f64 },
    DiscreteUniform { lo: i64, hi: i64 },
    Normal { mean: f64, stddev: f64 },
    PointMass { value: f64 },
}

impl fmt::Display for NoiseDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseDist::Uniform { lo, hi } => write!(f, "Uniform({lo}, {hi})"),
            NoiseDist::DiscreteUniform { lo, hi } => write!(f, "DiscreteUniform({lo}, {hi})"),
            NoiseDist::Normal { mean, stddev } => write!(f, "Normal({mean}, {stddev})"),
            NoiseDist::PointMass { value } => write!(f, "PointMass({value})"),
        }
    }
}

impl NoiseDist {
    pub fn validate(&self) -> Result<(), String> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match *self {
            NoiseDist::Uniform { lo, hi } if !finite(&[lo, hi]) => Err("bounds must be finite".into()),
            NoiseDist::Uniform { lo, hi } if lo > hi => Err(format!("lower bound {lo} exceeds upper bound {hi}")),
            NoiseDist::DiscreteUniform { lo, hi } if lo > hi => {
                Err(format!("lower bound {lo} exceeds upper bound {hi}"))
            }
            NoiseDist::Normal { mean, stddev } if !finite(&[mean, stddev]) => Err("parameters must be finite".into()),
            NoiseDist::Normal { stddev, .. } if stddev < 0.0 => Err(format!("negative standard deviation {stddev}")),
            NoiseDist::PointMass { value } if !value.is_finite() => Err("value must be finite".into()),
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseDist::Uniform { lo, hi } if lo == hi => lo,
            NoiseDist::Uniform { lo, hi } => rng.random_range(lo..=hi),
            NoiseDist::DiscreteUniform { lo, hi } => rng.random_range(lo..=hi) as f64,
            NoiseDist::Normal { mean, stddev } => Normal::new(mean, stddev)
                .expect("validated parameters")
                .sample(rng),
            NoiseDist::PointMass { value } => value,
        }
    }

    /// Closed support, widened by `slack` on both sides.
    pub fn supports(&self, x: f64, slack: f64) -> bool {
        let within = |lo: f64, hi: f64| {
            let tol = slack + 1e-9 * lo.abs().max(hi.abs()).max(1.0);
            lo - tol <= x && x <= hi + tol
        };
        match *self {
            NoiseDist::Uniform { lo, hi } => within(lo, hi),
            NoiseDist::DiscreteUniform { lo, hi } => {
                within(lo as f64, hi as f64) && (slack > 0.0 || (x - x.round()).abs() <= 1e-9)
            }
            NoiseDist::Normal { .. } => x.is_finite(),
            NoiseDist::PointMass { value } => within(value, value),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            NoiseDist::Uniform { lo, hi } => (lo + hi) / 2.0,
            NoiseDist::DiscreteUniform { lo, hi } => (lo + hi) as f64 / 2.0,
            NoiseDist::Normal { mean, .. } => mean,
            NoiseDist::PointMass { value } => value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    pub feature: String,
    pub expr: Expr,
    pub noise: Option<NoiseDist>,
    /// Values are rounded half-up after evaluation.
    pub integer: bool,
    shape: NoiseShape,
}

impl Equation {
    pub fn new(feature: impl Into<String>, expr: Expr, noise: Option<NoiseDist>, integer: bool) -> Self {
        let shape = expr.noise_shape();
        Equation { feature: feature.into(), expr, noise, integer, shape }
    }

    pub fn uses_noise(&self) -> bool {
        !matches!(self.shape, NoiseShape::Free)
    }

    fn finish(&self, v: f64) -> f64 {
        if self.integer {
            round_half_up(v)
        } else {
            v
        }
    }
}

pub fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sem {
    equations: Vec<Equation>,
    index: HashMap<String, usize>,
    order: Vec<usize>,
    children: Vec<BTreeSet<usize>>,
    parents: Vec<BTreeSet<usize>>,
}

impl Sem {
    pub fn parse(text: &str) -> Result<Sem, SemError> {
        let decls = parse_equations(text)?;
        let mut seen = HashMap::new();
        for d in &decls {
            if seen.insert(d.feature.clone(), d.line).is_some() {
                return Err(SemError::DuplicateEquation { feature: d.feature.clone(), line: d.line });
            }
        }
        Sem::new(
            decls
                .into_iter()
                .map(|d| Equation::new(d.feature, d.expr, d.noise, d.integer))
                .collect(),
        )
    }

    /// Validates the equations and computes a topological order. Ties in
    /// the order are broken by declaration order.
    pub fn new(equations: Vec<Equation>) -> Result<Sem, SemError> {
        let mut index = HashMap::new();
        for (i, eq) in equations.iter().enumerate() {
            if index.insert(eq.feature.clone(), i).is_some() {
                return Err(SemError::DuplicateEquation { feature: eq.feature.clone(), line: i + 1 });
            }
        }
        let n = equations.len();
        let mut parents = vec![BTreeSet::new(); n];
        let mut children = vec![BTreeSet::new(); n];
        for (i, eq) in equations.iter().enumerate() {
            for r in eq.expr.features() {
                let p = *index.get(r).ok_or_else(|| SemError::UndeclaredFeature {
                    feature: eq.feature.clone(),
                    reference: r.to_string(),
                })?;
                parents[i].insert(p);
                children[p].insert(i);
            }
        }
        if let Some(cycle) = find_cycle(&children) {
            return Err(SemError::Cycle(cycle.into_iter().map(|i| equations[i].feature.clone()).collect()));
        }
        for eq in &equations {
            if eq.expr.noise_count() > 1 {
                return Err(SemError::MultipleNoise(eq.feature.clone()));
            }
            if eq.uses_noise() && eq.noise.is_none() {
                return Err(SemError::MissingNoise(eq.feature.clone()));
            }
            if let Some(Err(reason)) = eq.noise.as_ref().map(NoiseDist::validate) {
                return Err(SemError::InvalidNoise { feature: eq.feature.clone(), reason });
            }
        }

        let mut indegree: Vec<usize> = parents.iter().map(BTreeSet::len).collect();
        let mut ready: BinaryHeap<Reverse<usize>> =
            (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse(i)) = ready.pop() {
            order.push(i);
            for &c in &children[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(Reverse(c));
                }
            }
        }
        debug_assert_eq!(order.len(), n, "acyclic graphs sort completely");

        Ok(Sem { equations, index, order, children, parents })
    }

    pub fn len(&self) -> usize {
        self.equations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equations.is_empty()
    }

    /// Feature names in topological order.
    pub fn order(&self) -> Vec<&str> {
        self.order.iter().map(|&i| self.equations[i].feature.as_str()).collect()
    }

    pub fn contains(&self, feature: &str) -> bool {
        self.index.contains_key(feature)
    }

    pub fn equation(&self, feature: &str) -> Option<&Equation> {
        self.index.get(feature).map(|&i| &self.equations[i])
    }

    fn idx(&self, feature: &str) -> Result<usize, SemError> {
        self.index
            .get(feature)
            .copied()
            .ok_or_else(|| SemError::UnknownFeature(feature.to_string()))
    }

    pub fn parents(&self, feature: &str) -> Result<Vec<&str>, SemError> {
        let i = self.idx(feature)?;
        Ok(self.parents[i].iter().map(|&p| self.equations[p].feature.as_str()).collect())
    }

    /// True iff a directed path of length at least one leads from `from`
    /// to `to` in the parent graph.
    pub fn affects(&self, from: &str, to: &str) -> Result<bool, SemError> {
        let start = self.idx(from)?;
        let goal = self.idx(to)?;
        let mut seen = vec![false; self.len()];
        let mut queue: VecDeque<usize> = self.children[start].iter().copied().collect();
        while let Some(i) = queue.pop_front() {
            if i == goal {
                return Ok(true);
            }
            if !std::mem::replace(&mut seen[i], true) {
                queue.extend(self.children[i].iter().copied());
            }
        }
        Ok(false)
    }

    /// Parent graph in Graphviz DOT format.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph sem {\n");
        for &i in &self.order {
            let _ = writeln!(out, "  \"{}\";", self.equations[i].feature);
        }
        for &i in &self.order {
            for &c in &self.children[i] {
                let _ = writeln!(out, "  \"{}\" -> \"{}\";", self.equations[i].feature, self.equations[c].feature);
            }
        }
        out.push_str("}\n");
        out
    }

    fn value_of(&self, eq: &Equation, v: f64) -> AttributeValue {
        if eq.integer {
            AttributeValue::Int(v as i64)
        } else {
            AttributeValue::Real(v)
        }
    }

    /// Draws `n` rows: one independent noise draw per equation, equations
    /// evaluated in topological order. The table has no target designated.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SituationTable, SemError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        let mut values = vec![0.0; self.len()];
        for row in 0..n {
            for &i in &self.order {
                let eq = &self.equations[i];
                let noise = eq.noise.as_ref().map(|d| d.sample(&mut rng)).unwrap_or(0.0);
                let lookup = |f: &str| values[self.index[f]];
                let v = eq
                    .expr
                    .eval(&lookup, noise)
                    .map_err(|source| SemError::Sample { feature: eq.feature.clone(), row, source })?;
                values[i] = eq.finish(v);
            }
            rows.push(Instance {
                values: self
                    .equations
                    .iter()
                    .zip(&values)
                    .map(|(eq, &v)| (eq.feature.clone(), Some(self.value_of(eq, v))))
                    .collect(),
                provenance: None,
            });
        }
        Ok(SituationTable::from_rows(
            self.order().into_iter().map(String::from).collect(),
            None,
            rows,
        ))
    }

    /// Recovers the noise values under which the model reproduces `instance`.
    pub fn abduce(&self, instance: &Instance) -> Result<CounterfactualSem<'_>, SemError> {
        let observed: Vec<f64> = self
            .equations
            .iter()
            .map(|eq| instance.get_f64(&eq.feature).ok_or_else(|| SemError::MissingValue(eq.feature.clone())))
            .collect::<Result<_, _>>()?;
        let lookup = |f: &str| observed[self.index[f]];

        let mut noise = vec![None; self.len()];
        let mut slack_used = BTreeSet::new();
        for &i in &self.order {
            let eq = &self.equations[i];
            let obs = observed[i];
            let slack: f64 = if eq.integer { 0.5 } else { 0.0 };
            match &eq.shape {
                NoiseShape::Free => {
                    let expected = eq
                        .expr
                        .eval(&lookup, 0.0)
                        .map_err(|source| SemError::Eval { feature: eq.feature.clone(), source })?;
                    let tol = slack.max(1e-9 * obs.abs().max(1.0));
                    if (obs - expected).abs() > tol {
                        return Err(SemError::Inconsistent { feature: eq.feature.clone(), observed: obs, expected });
                    }
                }
                NoiseShape::Additive { sign, .. } => {
                    let g = eq
                        .shape
                        .deterministic_part(&lookup)
                        .map_err(|source| SemError::Eval { feature: eq.feature.clone(), source })?;
                    let n = sign * (obs - g);
                    let dist = eq.noise.as_ref().expect("validated: noise-using equations declare a distribution");
                    if !dist.supports(n, 0.0) {
                        if !dist.supports(n, slack) {
                            return Err(SemError::NoiseOutOfSupport {
                                feature: eq.feature.clone(),
                                noise: n,
                                dist: dist.clone(),
                            });
                        }
                        slack_used.insert(eq.feature.clone());
                    }
                    noise[i] = Some(n);
                }
                NoiseShape::NonAdditive => return Err(SemError::NotNoiseSolvable(eq.feature.clone())),
            }
        }
        Ok(CounterfactualSem { base: self, noise, interventions: vec![None; self.len()], slack_used })
    }
}

/// First cycle found by depth-first search in declaration order, closed
/// by repeating its first node.
fn find_cycle(children: &[BTreeSet<usize>]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    fn dfs(v: usize, children: &[BTreeSet<usize>], mark: &mut [Mark], stack: &mut Vec<usize>) -> Option<Vec<usize>> {
        mark[v] = Mark::Active;
        stack.push(v);
        for &c in &children[v] {
            match mark[c] {
                Mark::Active => {
                    let start = stack.iter().position(|&s| s == c).expect("active nodes are on the stack");
                    let mut cycle = stack[start..].to_vec();
                    cycle.push(c);
                    return Some(cycle);
                }
                Mark::New => {
                    if let Some(cycle) = dfs(c, children, mark, stack) {
                        return Some(cycle);
                    }
                }
                Mark::Done => {}
            }
        }
        stack.pop();
        mark[v] = Mark::Done;
        None
    }

    let mut mark = vec![Mark::New; children.len()];
    let mut stack = Vec::new();
    (0..children.len()).find_map(|v| {
        if mark[v] == Mark::New {
            dfs(v, children, &mut mark, &mut stack)
        } else {
            None
        }
    })
}

/// A model with its noise fixed to the values abduced from one instance,
/// plus the current set of interventions.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualSem<'a> {
    base: &'a Sem,
    noise: Vec<Option<f64>>,
    interventions: Vec<Option<f64>>,
    slack_used: BTreeSet<String>,
}

impl<'a> CounterfactualSem<'a> {
    pub fn base(&self) -> &'a Sem {
        self.base
    }

    pub fn noise_values(&self) -> BTreeMap<&str, f64> {
        self.base
            .equations
            .iter()
            .zip(&self.noise)
            .filter_map(|(eq, n)| n.map(|n| (eq.feature.as_str(), n)))
            .collect()
    }

    pub fn interventions(&self) -> BTreeMap<&str, f64> {
        self.base
            .equations
            .iter()
            .zip(&self.interventions)
            .filter_map(|(eq, v)| v.map(|v| (eq.feature.as_str(), v)))
            .collect()
    }

    /// Features whose recovered noise needed the ±0.5 rounding allowance.
    pub fn slack_used(&self) -> &BTreeSet<String> {
        &self.slack_used
    }

    /// Replaces the equations of the assigned features with constants.
    /// Previous interventions are discarded; noise values are untouched.
    pub fn intervene<'v, I>(&self, assignment: I) -> Result<CounterfactualSem<'a>, SemError>
    where
        I: IntoIterator<Item = (&'v str, &'v AttributeValue)>,
    {
        let mut interventions = vec![None; self.base.len()];
        for (feature, value) in assignment {
            let i = self.base.idx(feature)?;
            let v = value
                .as_f64()
                .ok_or_else(|| SemError::NonNumericIntervention(feature.to_string()))?;
            interventions[i] = Some(v);
        }
        Ok(CounterfactualSem { interventions, ..self.clone() })
    }

    /// Evaluates every feature; values are indexed by declaration order.
    fn evaluate_raw(&self) -> Result<Vec<f64>, SemError> {
        let sem = self.base;
        let mut values = vec![0.0; sem.len()];
        for &i in &sem.order {
            let eq = &sem.equations[i];
            values[i] = match self.interventions[i] {
                Some(v) => v,
                None => {
                    let lookup = |f: &str| values[sem.index[f]];
                    let v = eq
                        .expr
                        .eval(&lookup, self.noise[i].unwrap_or(0.0))
                        .map_err(|source| SemError::Eval { feature: eq.feature.clone(), source })?;
                    eq.finish(v)
                }
            };
        }
        Ok(values)
    }

    /// All feature values of the counterfactual world.
    pub fn evaluate(&self) -> Result<BTreeMap<String, f64>, SemError> {
        let values = self.evaluate_raw()?;
        Ok(self.base.equations.iter().map(|eq| eq.feature.clone()).zip(values).collect())
    }

    /// Same as [`evaluate`](Self::evaluate), typed like sampled rows:
    /// integer equations yield integers unless an intervention set a fraction.
    pub fn evaluate_values(&self) -> Result<BTreeMap<String, AttributeValue>, SemError> {
        let values = self.evaluate_raw()?;
        Ok(self
            .base
            .equations
            .iter()
            .zip(values)
            .map(|(eq, v)| {
                let value = if eq.integer && v.fract() == 0.0 {
                    AttributeValue::Int(v as i64)
                } else {
                    AttributeValue::Real(v)
                };
                (eq.feature.clone(), value)
            })
            .collect())
    }

    pub fn predict(&self, target: &str) -> Result<f64, SemError> {
        let i = self.base.idx(target)?;
        Ok(self.evaluate_raw()?[i])
    }
}

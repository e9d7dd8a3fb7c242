//! Case-level counterfactual explanations for process event logs.
//!
//! The crate covers the whole path from a raw event log to a ranked set of
//! "if X had been v, the outcome would have been y" statements:
//!
//! * [`eventlog`] reads CSV or XES logs and derives activity durations.
//! * [`situations`] cuts traces into prefixes and turns them into a feature table.
//! * [`sem`] parses and evaluates structural equation models, including
//!   abduction, intervention and counterfactual prediction.
//! * [`explain`] generates candidates, predicts their outcome and picks a
//!   diverse, close, desirable subset.
//! * [`baselines`] holds the correlation-based regressors used for comparison.
//! * [`synth`] materialises event logs from a structural equation model.

pub mod baselines;
pub mod eventlog;
pub mod explain;
pub mod sem;
pub mod situations;
pub mod synth;

pub use eventlog::{AttributeValue, Event, EventLog, Level, Timestamp, Trace, ValueKind};
pub use explain::{Candidate, CounterfactualInstance, ExplanationSet, Predictor, SemPredictor};
pub use sem::{CounterfactualSem, Sem};
pub use situations::{Instance, SituationFeature, SituationFeaturePlan, SituationTable};
pub use synth::{synthesize, synthesize_log, LogTemplate, Placement};

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Candidate, ExplainError};
use crate::eventlog::AttributeValue;
use crate::situations::{Domain, SituationTable};

/// Draws `count` candidates over the actionable features.
///
/// Each candidate picks a uniformly random non-empty subset of the
/// actionable features. The first `ceil(count / 2)` candidates take their
/// values from observed rows (duplicates included), the rest uniformly from
/// each feature's domain: continuous over `[min, max]` for numeric
/// features, over the value set for categorical ones. Actionable features
/// are used in sorted order, so the output depends only on the set, `count`
/// and `seed`.
pub fn generate_candidates(
    table: &SituationTable,
    actionable: &[String],
    count: usize,
    seed: u64,
) -> Result<Vec<Candidate>, ExplainError> {
    if count == 0 {
        return Err(ExplainError::ZeroCount);
    }
    let mut features: Vec<&str> = actionable.iter().map(String::as_str).collect();
    features.sort_unstable();
    features.dedup();
    if features.is_empty() {
        return Err(ExplainError::NoActionable);
    }
    if features.len() > 63 {
        return Err(ExplainError::TooManyActionable(features.len()));
    }
    let mut pools = Vec::with_capacity(features.len());
    for &f in &features {
        if !table.descriptive().any(|d| d == f) {
            return Err(ExplainError::NotDescriptive(f.to_string()));
        }
        let observed = table.column(f);
        let domain = table.domain(f).unwrap_or(&Domain::Empty);
        if observed.is_empty() || domain.is_empty() {
            return Err(ExplainError::EmptyDomain(f.to_string()));
        }
        pools.push((observed, domain));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let empirical = count.div_ceil(2);
    let full: u64 = (1 << features.len()) - 1;
    let mut out = Vec::with_capacity(count);
    for idx in 0..count {
        let mask = rng.random_range(1..=full);
        let mut assignment = BTreeMap::new();
        for (bit, (&f, (observed, domain))) in features.iter().zip(&pools).enumerate() {
            if mask & (1 << bit) == 0 {
                continue;
            }
            let value = if idx < empirical {
                (*observed.choose(&mut rng).expect("non-empty")).clone()
            } else {
                draw_from_domain(domain, &mut rng)
            };
            assignment.insert(f.to_string(), value);
        }
        out.push(Candidate::new(assignment)?);
    }
    Ok(out)
}

fn draw_from_domain<R: Rng>(domain: &Domain, rng: &mut R) -> AttributeValue {
    match domain {
        Domain::Numeric { min, max, .. } if min < max => AttributeValue::Real(rng.random_range(*min..=*max)),
        Domain::Numeric { min, .. } => AttributeValue::Real(*min),
        Domain::Categorical { values } => {
            let values: Vec<&String> = values.iter().collect();
            AttributeValue::Text((*values.choose(rng).expect("non-empty")).clone())
        }
        Domain::Empty => unreachable!("empty domains are rejected up front"),
    }
}

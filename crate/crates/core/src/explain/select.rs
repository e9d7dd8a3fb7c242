use std::cmp::Ordering;
use std::collections::{BTreeSet, VecDeque};

use super::CounterfactualInstance;

fn nearest_first(a: &CounterfactualInstance, b: &CounterfactualInstance) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.predicted.total_cmp(&b.predicted))
        .then(a.index.cmp(&b.index))
}

/// Picks up to `k` explanations that spread over different sets of changed
/// features.
///
/// Instances with identical values are collapsed to the nearest one. The
/// rest are grouped by effective domain; groups are visited round-robin,
/// smaller domains first (ties by feature names), each contributing its
/// nearest remaining instance per round.
pub fn select_diverse(cfs: Vec<CounterfactualInstance>, k: usize) -> Vec<CounterfactualInstance> {
    let mut sorted = cfs;
    sorted.sort_by(nearest_first);

    let mut unique: Vec<CounterfactualInstance> = Vec::new();
    for cf in sorted {
        if !unique.iter().any(|u| u.values == cf.values) {
            unique.push(cf);
        }
    }

    let mut groups: Vec<(BTreeSet<String>, VecDeque<CounterfactualInstance>)> = Vec::new();
    for cf in unique {
        match groups.iter_mut().find(|(d, _)| *d == cf.effective_domain) {
            Some((_, members)) => members.push_back(cf),
            None => groups.push((cf.effective_domain.clone(), VecDeque::from([cf]))),
        }
    }
    groups.sort_by(|(a, _), (b, _)| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));

    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let before = out.len();
        for (_, members) in groups.iter_mut() {
            if out.len() == k {
                break;
            }
            if let Some(cf) = members.pop_front() {
                out.push(cf);
            }
        }
        if out.len() == before {
            break;
        }
    }
    out
}

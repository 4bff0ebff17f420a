//! Plain-data views of crate types for the oracles.
#![allow(dead_code)]

use std::collections::BTreeMap;

use estnma_core::{EvidenceBase, NmaResult, Treatment};

use super::oracle::{se_from_ci, Pairwise, Row};

pub fn rows(base: &EvidenceBase, nodes: &[Treatment]) -> (Vec<Row>, BTreeMap<(String, usize), f64>) {
    let idx = |t: &Treatment| nodes.iter().position(|n| n == t).expect("known treatment");
    let rows = base
        .contrasts
        .iter()
        .map(|c| Row {
            trial: c.trial_id.clone(),
            treatment: idx(&c.treatment),
            comparator: idx(&c.comparator),
            md: c.md,
            se: c.se,
        })
        .collect();
    let arm_var = base
        .arm_summaries
        .iter()
        .filter(|a| nodes.contains(&a.treatment))
        .map(|a| {
            let se = se_from_ci(a.ci_lower, a.ci_upper, a.ci_level);
            ((a.trial_id.clone(), idx(&a.treatment)), se * se)
        })
        .collect();
    (rows, arm_var)
}

/// Engine estimates rearranged into the oracle's `[a][b]` layout over `nodes`.
pub fn pairwise(result: &NmaResult, nodes: &[Treatment]) -> Pairwise {
    let n = nodes.len();
    let mut md = vec![vec![0.0; n]; n];
    let mut se = vec![vec![0.0; n]; n];
    for (a, ta) in nodes.iter().enumerate() {
        for (b, tb) in nodes.iter().enumerate() {
            if a != b {
                let c = result.get(ta.as_str(), tb.as_str()).expect("pair present");
                md[a][b] = c.md;
                se[a][b] = c.se;
            }
        }
    }
    Pairwise { md, se }
}

/// Largest entrywise difference relative to the largest magnitude of the reference.
pub fn rel_err(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let scale = b.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let diff = a.iter().flatten().zip(b.iter().flatten()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / scale
}

pub fn abs_err(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

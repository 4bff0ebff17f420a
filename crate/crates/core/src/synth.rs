//! Random evidence bases for property tests and benchmarks.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::estimand::{Direction, EndpointSpec, Estimand, IntercurrentEventHandling, IntercurrentEventStrategy, SummaryMeasure};
use crate::ingest::{ArmSummary, ContrastEstimate, EvidenceBase, Trial, UncertaintySource};
use crate::stats::z_for_level;
use crate::Treatment;

pub const LABEL: &str = "e";
pub const ENDPOINT: &str = "y";

#[derive(Clone, Copy, Debug)]
pub struct SynthSpec {
    pub max_nodes: usize,
    pub max_trials: usize,
    /// Probability that a trial gets a third arm.
    pub three_arm_prob: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec { max_nodes: 6, max_trials: 8, three_arm_prob: 0.35 }
    }
}

pub fn treatment(i: usize) -> Treatment {
    Treatment::new(format!("t{i}"))
}

fn arm(trial: &str, t: &Treatment, mean: f64, se: f64) -> ArmSummary {
    let hw = se * z_for_level(0.95);
    ArmSummary {
        trial_id: trial.to_string(),
        treatment: t.clone(),
        n_randomized: 100,
        endpoint: ENDPOINT.to_string(),
        estimand_label: LABEL.to_string(),
        mean_change: mean,
        ci_lower: mean - hw,
        ci_upper: mean + hw,
        ci_level: 0.95,
    }
}

fn estimand(arms: &BTreeSet<Treatment>) -> Estimand {
    Estimand::new(
        LABEL,
        "",
        arms.iter().cloned(),
        EndpointSpec::new(ENDPOINT, "u", 12, Direction::LowerIsBetter).expect("valid endpoint"),
        SummaryMeasure::MeanDifference,
        vec![IntercurrentEventHandling::new("dropout", IntercurrentEventStrategy::Hypothetical).expect("valid event")],
    )
    .expect("valid estimand")
}

/// A connected evidence base over at most `max_nodes` treatments and `max_trials` trials.
///
/// Trial designs start from a random spanning tree, so every base is connected.
/// Two-arm trials carry a reported SE unrelated to their arms; multi-arm trials
/// report contrasts against their first arm with SEs derived from the arm summaries,
/// which makes every covariance block positive definite. Arm means are drawn
/// independently, so the network is generally inconsistent around loops.
pub fn random_evidence<R: Rng + ?Sized>(rng: &mut R, spec: SynthSpec) -> EvidenceBase {
    let n = rng.random_range(2..=spec.max_nodes.max(2));
    let nodes: Vec<Treatment> = (0..n).map(treatment).collect();
    let mut designs: Vec<Vec<usize>> = (1..n).map(|i| vec![rng.random_range(0..i), i]).collect();
    designs.truncate(spec.max_trials.max(1));
    let total = rng.random_range(designs.len()..=spec.max_trials.max(designs.len()));
    while designs.len() < total {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        designs.push(vec![a, b]);
    }
    if n >= 3 {
        for d in &mut designs {
            if rng.random_bool(spec.three_arm_prob) {
                let mut others: Vec<usize> = (0..n).filter(|x| !d.contains(x)).collect();
                others.shuffle(rng);
                d.push(others[0]);
            }
        }
    }

    let mut trials = BTreeMap::new();
    let mut contrasts = Vec::new();
    let mut arm_summaries = Vec::new();
    for (k, design) in designs.iter_mut().enumerate() {
        design.shuffle(rng);
        let id = format!("trial{k:02}");
        let arms: Vec<ArmSummary> = design
            .iter()
            .map(|&i| arm(&id, &nodes[i], rng.random_range(-3.0..1.0), rng.random_range(0.05..0.5)))
            .collect();
        let base_arm = &arms[0];
        for other in &arms[1..] {
            let (md, se, source) = if arms.len() == 2 {
                (other.mean_change - base_arm.mean_change, rng.random_range(0.05..0.8), UncertaintySource::ReportedSe)
            } else {
                let v = other.variance().expect("valid arm") + base_arm.variance().expect("valid arm");
                (other.mean_change - base_arm.mean_change, v.sqrt(), UncertaintySource::FromArms)
            };
            contrasts.push(ContrastEstimate {
                trial_id: id.clone(),
                treatment: other.treatment.clone(),
                comparator: base_arm.treatment.clone(),
                endpoint: ENDPOINT.to_string(),
                estimand_label: LABEL.to_string(),
                md,
                se,
                source,
                reported_ci: None,
            });
        }
        let arm_set: BTreeSet<Treatment> = arms.iter().map(|a| a.treatment.clone()).collect();
        let e = estimand(&arm_set);
        let mut estimands = BTreeMap::new();
        estimands.insert((LABEL.to_string(), ENDPOINT.to_string()), e);
        trials.insert(id, Trial { arms: arm_set, estimands });
        arm_summaries.extend(arms);
    }
    EvidenceBase { trials, contrasts, arm_summaries }
}

/// Two-arm contrasts over `n` treatments with random endpoints; may be disconnected.
pub fn random_graph<R: Rng + ?Sized>(rng: &mut R, max_nodes: usize) -> Vec<ContrastEstimate> {
    let n = rng.random_range(2..=max_nodes.max(2));
    let m = rng.random_range(1..=2 * n);
    (0..m)
        .map(|k| {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            ContrastEstimate {
                trial_id: format!("g{k:03}"),
                treatment: treatment(a),
                comparator: treatment(b),
                endpoint: ENDPOINT.to_string(),
                estimand_label: LABEL.to_string(),
                md: rng.random_range(-1.0..1.0),
                se: rng.random_range(0.05..2.0),
                source: UncertaintySource::ReportedSe,
                reported_ci: None,
            }
        })
        .collect()
}

//! Fixed inputs shared by the benchmarks.

use estnma_core::network::build_network;
use estnma_core::synth::{random_evidence, random_graph, SynthSpec};
use estnma_core::{EvidenceBase, EvidenceNetwork};
use rand::rngs::StdRng;
use rand::SeedableRng;

/// `count` random connected evidence bases, reproducible from `seed`.
pub fn evidence_corpus(seed: u64, count: usize, spec: SynthSpec) -> Vec<EvidenceBase> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..count).map(|_| random_evidence(&mut rng, spec)).collect()
}

/// Random two-arm networks, connected or not.
pub fn graph_corpus(seed: u64, count: usize, max_nodes: usize) -> Vec<EvidenceNetwork> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..count)
        .map(|_| build_network(&random_graph(&mut rng, max_nodes)).expect("non-empty graph"))
        .collect()
}

pub fn case_study_path() -> String {
    format!("{}/../../fixtures/case_study.csv", env!("CARGO_MANIFEST_DIR"))
}

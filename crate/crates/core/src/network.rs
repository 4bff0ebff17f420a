//! Evidence network: treatments as nodes, one edge per contrast.
//!
//! Parallel edges are kept (two trials on the same pair give two edges) and a
//! multi-arm trial contributes one edge per contrast row. Node order is fixed by
//! sorting contrasts on `(trial, treatment, comparator)` and taking treatments in
//! order of first appearance, so it does not depend on input order.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen};
use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::ContrastEstimate;
use crate::Treatment;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("cannot build a network from no contrasts")]
    Empty,
    #[error("contrasts mix endpoints '{0}' and '{1}'")]
    MixedEndpoints(String, String),
    #[error("unknown treatment '{0}'")]
    UnknownTreatment(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkEdge {
    pub trial_id: String,
    pub treatment: Treatment,
    pub comparator: Treatment,
    /// Index into the contrast slice the network was built from.
    pub contrast_index: usize,
    /// Inverse-variance weight `1 / se^2`.
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidenceNetwork {
    pub endpoint: String,
    pub nodes: Vec<Treatment>,
    pub edges: Vec<NetworkEdge>,
    pub trial_designs: BTreeMap<String, BTreeSet<Treatment>>,
}

pub fn build_network(contrasts: &[ContrastEstimate]) -> Result<EvidenceNetwork, NetworkError> {
    let first = contrasts.first().ok_or(NetworkError::Empty)?;
    if let Some(other) = contrasts.iter().find(|c| c.endpoint != first.endpoint) {
        return Err(NetworkError::MixedEndpoints(first.endpoint.clone(), other.endpoint.clone()));
    }

    let mut order: Vec<usize> = (0..contrasts.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&contrasts[a], &contrasts[b]);
        (&x.trial_id, &x.treatment, &x.comparator, a).cmp(&(&y.trial_id, &y.treatment, &y.comparator, b))
    });

    let mut nodes: Vec<Treatment> = Vec::new();
    let mut edges = Vec::with_capacity(contrasts.len());
    let mut trial_designs: BTreeMap<String, BTreeSet<Treatment>> = BTreeMap::new();
    for i in order {
        let c = &contrasts[i];
        let (lo, hi) = if c.treatment <= c.comparator {
            (&c.treatment, &c.comparator)
        } else {
            (&c.comparator, &c.treatment)
        };
        for t in [lo, hi] {
            if !nodes.contains(t) {
                nodes.push(t.clone());
            }
        }
        let design = trial_designs.entry(c.trial_id.clone()).or_default();
        design.insert(c.treatment.clone());
        design.insert(c.comparator.clone());
        edges.push(NetworkEdge {
            trial_id: c.trial_id.clone(),
            treatment: c.treatment.clone(),
            comparator: c.comparator.clone(),
            contrast_index: i,
            weight: 1.0 / (c.se * c.se),
        });
    }

    Ok(EvidenceNetwork { endpoint: first.endpoint.clone(), nodes, edges, trial_designs })
}

impl EvidenceNetwork {
    pub fn node_index(&self, t: &Treatment) -> Option<usize> {
        self.nodes.iter().position(|n| n == t)
    }

    fn require(&self, t: &Treatment) -> Result<usize, NetworkError> {
        self.node_index(t).ok_or_else(|| NetworkError::UnknownTreatment(t.to_string()))
    }

    fn endpoints_of(&self, e: &NetworkEdge) -> (usize, usize) {
        (
            self.node_index(&e.treatment).expect("edge endpoints are nodes"),
            self.node_index(&e.comparator).expect("edge endpoints are nodes"),
        )
    }

    /// Adjacency lists of `(neighbour, edge index)`, sorted by neighbour then edge.
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (k, e) in self.edges.iter().enumerate() {
            let (a, b) = self.endpoints_of(e);
            adj[a].push((b, k));
            adj[b].push((a, k));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Breadth-first traversal from the first node.
    pub fn is_connected(&self) -> bool {
        if self.nodes.len() <= 1 {
            return true;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.nodes.len()
    }

    /// Weighted Laplacian `D - A` with edge weights `1 / se^2`, in node order.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.nodes.len();
        let mut l = DMatrix::zeros(n, n);
        for e in &self.edges {
            let (a, b) = self.endpoints_of(e);
            l[(a, a)] += e.weight;
            l[(b, b)] += e.weight;
            l[(a, b)] -= e.weight;
            l[(b, a)] -= e.weight;
        }
        l
    }

    /// Numerical rank of the Laplacian: eigenvalues above `max|λ| · n · 1e-12`.
    pub fn laplacian_rank(&self) -> usize {
        laplacian_rank(&self.laplacian())
    }

    /// Spectral connectivity test: rank of the Laplacian equals `|nodes| - 1`.
    pub fn is_connected_spectral(&self) -> bool {
        self.nodes.len() <= 1 || self.laplacian_rank() + 1 == self.nodes.len()
    }

    /// Components in node order; members listed in node order.
    pub fn connected_components(&self) -> Vec<Vec<Treatment>> {
        let n = self.nodes.len();
        let mut uf = UnionFind::<usize>::new(n);
        for e in &self.edges {
            let (a, b) = self.endpoints_of(e);
            uf.union(a, b);
        }
        let mut by_root: Vec<(usize, Vec<Treatment>)> = Vec::new();
        for i in 0..n {
            let root = uf.find(i);
            match by_root.iter_mut().find(|(r, _)| *r == root) {
                Some((_, members)) => members.push(self.nodes[i].clone()),
                None => by_root.push((root, vec![self.nodes[i].clone()])),
            }
        }
        by_root.into_iter().map(|(_, m)| m).collect()
    }

    /// Shortest path by edge count from `a` to `b`; `None` when disconnected.
    ///
    /// Ties go to the neighbour earliest in node order, then the earliest edge.
    pub fn anchoring_path(&self, a: &Treatment, b: &Treatment) -> Result<Option<Vec<&NetworkEdge>>, NetworkError> {
        let (src, dst) = (self.require(a)?, self.require(b)?);
        if src == dst {
            return Ok(Some(Vec::new()));
        }
        let adj = self.adjacency();
        let mut via: Vec<Option<(usize, usize)>> = vec![None; self.nodes.len()];
        let mut seen = vec![false; self.nodes.len()];
        seen[src] = true;
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            if u == dst {
                break;
            }
            for &(v, k) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    via[v] = Some((u, k));
                    queue.push_back(v);
                }
            }
        }
        if !seen[dst] {
            return Ok(None);
        }
        let mut path = Vec::new();
        let mut at = dst;
        while let Some((prev, k)) = via[at] {
            path.push(&self.edges[k]);
            at = prev;
        }
        path.reverse();
        Ok(Some(path))
    }

    /// Edge list for external graph viewers: `trial_id,treatment,comparator,weight`.
    pub fn edge_list(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["trial_id", "treatment", "comparator", "weight"]).expect("write to memory");
        for e in &self.edges {
            w.write_record([
                e.trial_id.as_str(),
                e.treatment.as_str(),
                e.comparator.as_str(),
                &e.weight.to_string(),
            ])
            .expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8")
    }
}

/// Numerical rank of a symmetric positive semi-definite matrix.
pub fn laplacian_rank(l: &DMatrix<f64>) -> usize {
    let n = l.nrows();
    if n == 0 {
        return 0;
    }
    let eig = SymmetricEigen::new(l.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return 0;
    }
    let threshold = max * n as f64 * 1e-12;
    eig.eigenvalues.iter().filter(|v| v.abs() > threshold).count()
}

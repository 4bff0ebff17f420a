//! Estimand-aware fixed-effects network meta-analysis.
//!
//! The crate is organised along the analysis path:
//!
//! - [`estimand`]: ICH E9 (R1) estimands, trial-vs-target matching and alignment reports.
//! - [`ingest`]: evidence files, standard errors from confidence intervals, validation.
//! - [`network`]: the evidence graph, connectivity and anchoring paths.
//! - [`nma`]: generalized least squares with block-diagonal multi-arm covariance.
//! - [`pipeline`]: restriction by a target meta-estimand, feasibility, per-slice analyses
//!   and side-by-side strategy comparison.
//! - [`synth`]: random evidence generators used by tests and benchmarks.

pub mod estimand;
pub mod ingest;
pub mod network;
pub mod nma;
pub mod pipeline;
pub mod stats;
pub mod synth;

mod treatment;

pub use estimand::{
    AlignmentReport, AttributeDiff, EndpointSpec, Estimand, EstimandError, IntercurrentEventHandling,
    IntercurrentEventStrategy, MatchVerdict, MatchingMode, MetaEstimand, SummaryMeasure,
    DEFAULT_TOLERANCE_WEEKS,
};
pub use ingest::{
    ArmSummary, ContrastEstimate, EvidenceBase, IngestError, Issue, Severity, UncertaintySource,
};
pub use network::{EvidenceNetwork, NetworkEdge, NetworkError};
pub use nma::{Comparison, GlsSystem, NmaError, NmaResult};
pub use pipeline::{
    AnalysisConfig, FeasibilityReport, FeasibilityVerdict, PipelineError, StrategyComparison,
};
pub use treatment::Treatment;

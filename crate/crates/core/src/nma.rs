//! Fixed-effects network meta-analysis by generalized least squares.
//!
//! The model is contrast-based. Each contrast row `(t, c)` observes
//! `θ_t - θ_c` where `θ_ref = 0`. Rows from one trial share a covariance block:
//! a two-arm trial contributes `[se²]`, and a multi-arm trial adds the shared-arm
//! variance to every pair of rows that share an arm. Trials are independent, so
//! the covariance is block diagonal.
//!
//! The solver whitens each block with its Cholesky factor and solves the whitened
//! least-squares problem by QR, which is the inverse-variance weighted estimator
//! `(XᵀΣ⁻¹X)⁻¹XᵀΣ⁻¹y` without forming `Σ⁻¹`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{ArmSummary, ContrastEstimate, EvidenceBase, IngestError};
use crate::network::{EvidenceNetwork, NetworkError};
use crate::stats::z_for_level;
use crate::Treatment;

pub const CONDITION_LIMIT: f64 = 1e12;
pub const CONDITION_WARNING: f64 = 1e8;

#[derive(Debug, Error)]
pub enum NmaError {
    #[error("evidence network is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("unknown treatment '{0}'")]
    UnknownTreatment(String),
    #[error("trial {trial}: shared-arm variance unidentifiable (no arm summary for {arm})")]
    SharedArmVarianceUnidentifiable { trial: String, arm: String },
    #[error("trial {trial}: {rows} contrasts over {arms} arms are linearly dependent")]
    RedundantContrasts { trial: String, rows: usize, arms: usize },
    #[error("trial {trial}: covariance block is not symmetric positive definite")]
    NotPositiveDefinite { trial: String },
    #[error("trial {trial}: explicit covariance is {rows}x{cols}, expected {expected}x{expected}")]
    CovarianceShape { trial: String, rows: usize, cols: usize, expected: usize },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("normal matrix condition number {condition:.3e} exceeds {limit:.0e}")]
    IllConditioned { condition: f64, limit: f64 },
    #[error("confidence level must lie in (0, 1) (got {0})")]
    InvalidLevel(f64),
    #[error("no contrasts to analyse")]
    Empty,
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Source of the within-trial covariance for multi-arm trials.
#[derive(Clone, Copy, Debug)]
pub enum CovarianceInput<'a> {
    /// Arm summaries of the trial's slice; arm variances come from their intervals.
    Arms(&'a [&'a ArmSummary]),
    /// A reported covariance of the contrast rows, in row order.
    Explicit(&'a DMatrix<f64>),
}

/// Covariance block for the contrasts of one trial.
///
/// Diagonal entries are each contrast's own `se²`; off-diagonal entries collect the
/// variances of shared arms with the sign implied by the two contrasts
/// (`v_c` for two rows sharing comparator `c`).
pub fn trial_covariance(contrasts: &[&ContrastEstimate], input: CovarianceInput<'_>) -> Result<DMatrix<f64>, NmaError> {
    let k = contrasts.len();
    if k == 0 {
        return Err(NmaError::Empty);
    }
    let trial = contrasts[0].trial_id.clone();
    if k == 1 {
        return Ok(DMatrix::from_element(1, 1, contrasts[0].variance()));
    }

    let block = match input {
        CovarianceInput::Explicit(m) => {
            if m.nrows() != k || m.ncols() != k {
                return Err(NmaError::CovarianceShape { trial, rows: m.nrows(), cols: m.ncols(), expected: k });
            }
            let scale = m.amax().max(f64::MIN_POSITIVE);
            if (m - m.transpose()).amax() > 1e-12 * scale {
                return Err(NmaError::NotPositiveDefinite { trial });
            }
            m.clone()
        }
        CovarianceInput::Arms(arms) => {
            let treatments: BTreeSet<&Treatment> =
                contrasts.iter().flat_map(|c| [&c.treatment, &c.comparator]).collect();
            if k > treatments.len() - 1 {
                return Err(NmaError::RedundantContrasts { trial, rows: k, arms: treatments.len() });
            }
            let variance_of = |t: &Treatment| -> Result<f64, NmaError> {
                let c0 = contrasts[0];
                let arm = arms
                    .iter()
                    .find(|a| {
                        &a.treatment == t
                            && a.trial_id == c0.trial_id
                            && a.endpoint == c0.endpoint
                            && a.estimand_label == c0.estimand_label
                    })
                    .ok_or_else(|| NmaError::SharedArmVarianceUnidentifiable {
                        trial: trial.clone(),
                        arm: t.to_string(),
                    })?;
                Ok(arm.variance()?)
            };
            let variances = treatments
                .iter()
                .map(|t| Ok(((*t).clone(), variance_of(t)?)))
                .collect::<Result<Vec<_>, NmaError>>()?;
            let v = |t: &Treatment| variances.iter().find(|(x, _)| x == t).map(|(_, v)| *v).unwrap_or(0.0);

            let mut m = DMatrix::zeros(k, k);
            for i in 0..k {
                m[(i, i)] = contrasts[i].variance();
                for j in (i + 1)..k {
                    let (a, b) = (contrasts[i], contrasts[j]);
                    let mut cov = 0.0;
                    if a.treatment == b.treatment {
                        cov += v(&a.treatment);
                    }
                    if a.treatment == b.comparator {
                        cov -= v(&a.treatment);
                    }
                    if a.comparator == b.treatment {
                        cov -= v(&a.comparator);
                    }
                    if a.comparator == b.comparator {
                        cov += v(&a.comparator);
                    }
                    m[(i, j)] = cov;
                    m[(j, i)] = cov;
                }
            }
            m
        }
    };

    if block.clone().cholesky().is_none() {
        return Err(NmaError::NotPositiveDefinite { trial });
    }
    Ok(block)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlsRow {
    pub trial_id: String,
    pub treatment: Treatment,
    pub comparator: Treatment,
    pub contrast_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialBlock {
    pub trial_id: String,
    pub start: usize,
    pub len: usize,
}

/// `y = Xθ + ε`, `ε ~ N(0, Σ)` over the basic parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GlsSystem {
    pub reference: Treatment,
    /// All treatments in node order.
    pub treatments: Vec<Treatment>,
    /// Non-reference treatments, one per column of `design`.
    pub parameters: Vec<Treatment>,
    pub rows: Vec<GlsRow>,
    pub y: DVector<f64>,
    pub design: DMatrix<f64>,
    pub covariance: DMatrix<f64>,
    pub blocks: Vec<TrialBlock>,
}

impl GlsSystem {
    pub fn column(&self, t: &Treatment) -> Option<usize> {
        self.parameters.iter().position(|p| p == t)
    }
}

/// Assembles the GLS system for a network built from `base.contrasts`.
pub fn assemble_gls(net: &EvidenceNetwork, base: &EvidenceBase, reference: &Treatment) -> Result<GlsSystem, NmaError> {
    assemble_with(net, base, reference, false).map(|(sys, _)| sys)
}

/// Like [`assemble_gls`]; with `diagonal_fallback`, multi-arm blocks lacking arm data
/// are treated as independent rows instead of failing. Returns the affected trials.
pub(crate) fn assemble_with(
    net: &EvidenceNetwork,
    base: &EvidenceBase,
    reference: &Treatment,
    diagonal_fallback: bool,
) -> Result<(GlsSystem, Vec<String>), NmaError> {
    if net.edges.is_empty() {
        return Err(NmaError::Empty);
    }
    if !net.is_connected() {
        return Err(NmaError::Disconnected { components: net.connected_components().len() });
    }
    if net.node_index(reference).is_none() {
        return Err(NmaError::UnknownTreatment(reference.to_string()));
    }
    let parameters: Vec<Treatment> = net.nodes.iter().filter(|t| *t != reference).cloned().collect();
    let column = |t: &Treatment| parameters.iter().position(|p| p == t);

    let mut edges: Vec<_> = net.edges.iter().collect();
    edges.sort_by(|a, b| {
        (&a.trial_id, &a.treatment, &a.comparator, a.contrast_index)
            .cmp(&(&b.trial_id, &b.treatment, &b.comparator, b.contrast_index))
    });

    let m = edges.len();
    let p = parameters.len();
    let mut design = DMatrix::zeros(m, p);
    let mut y = DVector::zeros(m);
    let mut rows = Vec::with_capacity(m);
    for (r, e) in edges.iter().enumerate() {
        let c = &base.contrasts[e.contrast_index];
        if let Some(j) = column(&c.treatment) {
            design[(r, j)] = 1.0;
        }
        if let Some(j) = column(&c.comparator) {
            design[(r, j)] = -1.0;
        }
        y[r] = c.md;
        rows.push(GlsRow {
            trial_id: c.trial_id.clone(),
            treatment: c.treatment.clone(),
            comparator: c.comparator.clone(),
            contrast_index: e.contrast_index,
        });
    }

    let mut covariance = DMatrix::zeros(m, m);
    let mut blocks = Vec::new();
    let mut fallback = Vec::new();
    let mut start = 0;
    while start < m {
        let trial = &rows[start].trial_id;
        let len = rows[start..].iter().take_while(|r| &r.trial_id == trial).count();
        let contrasts: Vec<&ContrastEstimate> =
            rows[start..start + len].iter().map(|r| &base.contrasts[r.contrast_index]).collect();
        let arms: Vec<&ArmSummary> = base.arm_summaries.iter().filter(|a| &a.trial_id == trial).collect();
        let block = match trial_covariance(&contrasts, CovarianceInput::Arms(&arms)) {
            Err(NmaError::SharedArmVarianceUnidentifiable { .. }) if diagonal_fallback => {
                fallback.push(trial.clone());
                DMatrix::from_diagonal(&DVector::from_iterator(len, contrasts.iter().map(|c| c.variance())))
            }
            other => other?,
        };
        covariance.view_mut((start, start), (len, len)).copy_from(&block);
        blocks.push(TrialBlock { trial_id: trial.clone(), start, len });
        start += len;
    }

    Ok((
        GlsSystem {
            reference: reference.clone(),
            treatments: net.nodes.clone(),
            parameters,
            rows,
            y,
            design,
            covariance,
            blocks,
        },
        fallback,
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedEffectsFit {
    pub estimates: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Condition number of `XᵀΣ⁻¹X`.
    pub condition_number: f64,
    pub warnings: Vec<String>,
}

#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail the checks
pub fn solve_fixed_effects(sys: &GlsSystem) -> Result<FixedEffectsFit, NmaError> {
    let m = sys.y.len();
    let p = sys.parameters.len();
    if m == 0 {
        return Err(NmaError::Empty);
    }
    if m < p {
        return Err(NmaError::RankDeficient);
    }

    let mut w = DMatrix::zeros(m, p);
    let mut z = DVector::zeros(m);
    for b in &sys.blocks {
        let block = sys.covariance.view((b.start, b.start), (b.len, b.len)).clone_owned();
        let chol = block
            .cholesky()
            .ok_or_else(|| NmaError::NotPositiveDefinite { trial: b.trial_id.clone() })?;
        let l = chol.l();
        let xb = sys.design.rows(b.start, b.len).clone_owned();
        let yb = sys.y.rows(b.start, b.len).clone_owned();
        let wx = l.solve_lower_triangular(&xb).ok_or(NmaError::RankDeficient)?;
        let wy = l.solve_lower_triangular(&yb).ok_or(NmaError::RankDeficient)?;
        w.rows_mut(b.start, b.len).copy_from(&wx);
        z.rows_mut(b.start, b.len).copy_from(&wy);
    }

    let sv = w.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !(smin > smax * f64::EPSILON * m.max(p) as f64) {
        return Err(NmaError::RankDeficient);
    }
    let condition_number = (smax / smin).powi(2);
    if !(condition_number <= CONDITION_LIMIT) {
        return Err(NmaError::IllConditioned { condition: condition_number, limit: CONDITION_LIMIT });
    }
    let mut warnings = Vec::new();
    if condition_number > CONDITION_WARNING {
        warnings.push(format!("normal matrix condition number {condition_number:.3e} exceeds {CONDITION_WARNING:.0e}"));
    }

    let qr = w.qr();
    let r = qr.r();
    let qtz = qr.q().transpose() * z;
    let estimates = r.solve_upper_triangular(&qtz).ok_or(NmaError::RankDeficient)?;
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(p, p)).ok_or(NmaError::RankDeficient)?;
    let mut covariance = &r_inv * r_inv.transpose();
    covariance = (&covariance + covariance.transpose()) * 0.5;

    Ok(FixedEffectsFit { estimates, covariance, condition_number, warnings })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub treatment: Treatment,
    pub comparator: Treatment,
    pub md: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub ci_level: f64,
}

/// Pooled estimates for one (endpoint, estimand) slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmaResult {
    pub endpoint: String,
    pub estimand_label: String,
    pub reference: Treatment,
    pub treatments: Vec<Treatment>,
    pub parameters: Vec<Treatment>,
    pub basic_estimates: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub ci_level: f64,
    pub condition_number: f64,
    /// Every ordered pair at `ci_level`, in league-table order.
    pub comparisons: Vec<Comparison>,
    pub warnings: Vec<String>,
}

impl NmaResult {
    pub fn from_fit(
        sys: &GlsSystem,
        fit: &FixedEffectsFit,
        endpoint: &str,
        estimand_label: &str,
        ci_level: f64,
    ) -> Result<Self, NmaError> {
        let p = sys.parameters.len();
        let mut result = NmaResult {
            endpoint: endpoint.to_string(),
            estimand_label: estimand_label.to_string(),
            reference: sys.reference.clone(),
            treatments: sys.treatments.clone(),
            parameters: sys.parameters.clone(),
            basic_estimates: fit.estimates.iter().copied().collect(),
            covariance: (0..p).map(|i| (0..p).map(|j| fit.covariance[(i, j)]).collect()).collect(),
            ci_level,
            condition_number: fit.condition_number,
            comparisons: Vec::new(),
            warnings: fit.warnings.clone(),
        };
        result.comparisons = league_table(&result, ci_level)?;
        Ok(result)
    }

    fn column(&self, t: &Treatment) -> Result<Option<usize>, NmaError> {
        if t == &self.reference {
            return Ok(None);
        }
        self.parameters
            .iter()
            .position(|p| p == t)
            .map(Some)
            .ok_or_else(|| NmaError::UnknownTreatment(t.to_string()))
    }

    /// Stored comparison at the result's own level.
    pub fn get(&self, treatment: &str, comparator: &str) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.treatment.as_str() == treatment && c.comparator.as_str() == comparator)
    }
}

/// `treatment - comparator` with a normal-theory interval at `level`.
pub fn comparison(res: &NmaResult, treatment: &Treatment, comparator: &Treatment, level: f64) -> Result<Comparison, NmaError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(NmaError::InvalidLevel(level));
    }
    let a = res.column(treatment)?;
    let b = res.column(comparator)?;
    let theta = |x: Option<usize>| x.map_or(0.0, |i| res.basic_estimates[i]);
    let cov = |x: Option<usize>, y: Option<usize>| match (x, y) {
        (Some(i), Some(j)) => res.covariance[i][j],
        _ => 0.0,
    };
    // Written symmetrically in (a, b) so that swapping them gives the same se bit for bit.
    let (md, var) = if treatment == comparator {
        (0.0, 0.0)
    } else {
        (theta(a) - theta(b), (cov(a, a) + cov(b, b)) - 2.0 * cov(a, b))
    };
    let se = var.max(0.0).sqrt();
    let z = z_for_level(level);
    Ok(Comparison {
        treatment: treatment.clone(),
        comparator: comparator.clone(),
        md,
        se,
        ci_lower: md - z * se,
        ci_upper: md + z * se,
        ci_level: level,
    })
}

/// Every ordered pair of distinct treatments, outer loop over `treatment` in node order.
pub fn league_table(res: &NmaResult, level: f64) -> Result<Vec<Comparison>, NmaError> {
    let mut out = Vec::with_capacity(res.treatments.len() * res.treatments.len().saturating_sub(1));
    for a in &res.treatments {
        for b in &res.treatments {
            if a != b {
                out.push(comparison(res, a, b, level)?);
            }
        }
    }
    Ok(out)
}

/// Assemble, solve and summarise in one step.
pub fn analyse_network(
    net: &EvidenceNetwork,
    base: &EvidenceBase,
    reference: &Treatment,
    estimand_label: &str,
    level: f64,
) -> Result<NmaResult, NmaError> {
    let sys = assemble_gls(net, base, reference)?;
    let fit = solve_fixed_effects(&sys)?;
    NmaResult::from_fit(&sys, &fit, &net.endpoint, estimand_label, level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::UncertaintySource;
    use crate::network::build_network;

    fn contrast(trial: &str, t: &str, c: &str, md: f64, se: f64) -> ContrastEstimate {
        ContrastEstimate {
            trial_id: trial.into(),
            treatment: t.into(),
            comparator: c.into(),
            endpoint: "y".into(),
            estimand_label: "e".into(),
            md,
            se,
            source: UncertaintySource::ReportedSe,
            reported_ci: None,
        }
    }

    fn base(contrasts: Vec<ContrastEstimate>, arms: Vec<ArmSummary>) -> EvidenceBase {
        EvidenceBase { trials: Default::default(), contrasts, arm_summaries: arms }
    }

    fn arm(trial: &str, t: &str, se: f64) -> ArmSummary {
        let hw = se * z_for_level(0.95);
        ArmSummary {
            trial_id: trial.into(),
            treatment: t.into(),
            n_randomized: 100,
            endpoint: "y".into(),
            estimand_label: "e".into(),
            mean_change: 0.0,
            ci_lower: -hw,
            ci_upper: hw,
            ci_level: 0.95,
        }
    }

    fn fit(b: &EvidenceBase, reference: &str) -> NmaResult {
        let net = build_network(&b.contrasts).unwrap();
        analyse_network(&net, b, &reference.into(), "e", 0.95).unwrap()
    }

    #[test]
    fn two_arm_block_is_se_squared() {
        let c = contrast("T", "A", "B", -0.47, 0.1199);
        let block = trial_covariance(&[&c], CovarianceInput::Arms(&[])).unwrap();
        assert!((block[(0, 0)] - 0.01437601).abs() < 1e-12);
    }

    #[test]
    fn three_arm_block_shares_comparator_variance() {
        let se = 0.02f64.sqrt();
        let c1 = contrast("T", "d4.5", "d1.5", 0.0, se);
        let c2 = contrast("T", "d3.0", "d1.5", 0.0, se);
        let arms = [arm("T", "d4.5", 0.1), arm("T", "d3.0", 0.1), arm("T", "d1.5", 0.1)];
        let refs: Vec<&ArmSummary> = arms.iter().collect();
        let block = trial_covariance(&[&c1, &c2], CovarianceInput::Arms(&refs)).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.02, 0.01, 0.01, 0.02]);
        assert!((block - expected).amax() < 1e-12);
    }

    #[test]
    fn three_arm_without_arms_fails() {
        let c1 = contrast("T", "A", "C", 0.0, 0.1);
        let c2 = contrast("T", "B", "C", 0.0, 0.1);
        let err = trial_covariance(&[&c1, &c2], CovarianceInput::Arms(&[])).unwrap_err();
        assert!(matches!(err, NmaError::SharedArmVarianceUnidentifiable { .. }));
    }

    #[test]
    fn explicit_covariance_is_validated() {
        let c1 = contrast("T", "A", "C", 0.0, 0.1);
        let c2 = contrast("T", "B", "C", 0.0, 0.1);
        let good = DMatrix::from_row_slice(2, 2, &[0.02, 0.01, 0.01, 0.02]);
        assert_eq!(trial_covariance(&[&c1, &c2], CovarianceInput::Explicit(&good)).unwrap(), good);
        let not_pd = DMatrix::from_row_slice(2, 2, &[0.01, 0.02, 0.02, 0.01]);
        assert!(matches!(
            trial_covariance(&[&c1, &c2], CovarianceInput::Explicit(&not_pd)),
            Err(NmaError::NotPositiveDefinite { .. })
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[0.02, 0.01, 0.0, 0.02]);
        assert!(trial_covariance(&[&c1, &c2], CovarianceInput::Explicit(&asym)).is_err());
    }

    #[test]
    fn redundant_multi_arm_rows_are_rejected() {
        let c1 = contrast("T", "A", "C", 0.0, 0.1);
        let c2 = contrast("T", "B", "C", 0.0, 0.1);
        let c3 = contrast("T", "A", "B", 0.0, 0.1);
        let arms = [arm("T", "A", 0.1), arm("T", "B", 0.1), arm("T", "C", 0.1)];
        let refs: Vec<&ArmSummary> = arms.iter().collect();
        assert!(matches!(
            trial_covariance(&[&c1, &c2, &c3], CovarianceInput::Arms(&refs)),
            Err(NmaError::RedundantContrasts { .. })
        ));
    }

    #[test]
    fn single_study_identity() {
        let b = base(vec![contrast("T", "A", "B", 0.7, 0.3)], vec![]);
        let net = build_network(&b.contrasts).unwrap();
        let sys = assemble_gls(&net, &b, &"B".into()).unwrap();
        assert_eq!(sys.design, DMatrix::from_element(1, 1, 1.0));
        let f = solve_fixed_effects(&sys).unwrap();
        assert!((f.estimates[0] - 0.7).abs() < 1e-12);
        assert!((f.covariance[(0, 0)] - 0.09).abs() < 1e-12);
    }

    #[test]
    fn inverse_variance_mean_of_two_trials() {
        let b = base(vec![contrast("T1", "A", "B", 0.0, 1.0), contrast("T2", "A", "B", 2.0, 1.0)], vec![]);
        let r = fit(&b, "B");
        let c = r.get("A", "B").unwrap();
        assert!((c.md - 1.0).abs() < 1e-12);
        assert!((c.se - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn chain_adds_effects_and_variances() {
        let b = base(vec![contrast("T1", "A", "B", 1.0, 1.0), contrast("T2", "B", "C", 1.0, 1.0)], vec![]);
        let r = fit(&b, "C");
        let c = r.get("A", "C").unwrap();
        assert!((c.md - 2.0).abs() < 1e-12);
        assert!((c.se - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn comparison_edge_cases() {
        let b = base(vec![contrast("T1", "A", "B", 1.0, 1.0), contrast("T2", "B", "C", 1.0, 1.0)], vec![]);
        let r = fit(&b, "C");
        let same = comparison(&r, &"A".into(), &"A".into(), 0.95).unwrap();
        assert_eq!((same.md, same.se), (0.0, 0.0));
        let ca = comparison(&r, &"C".into(), &"A".into(), 0.95).unwrap();
        let ac = r.get("A", "C").unwrap();
        assert_eq!(ca.md, -ac.md);
        assert_eq!(ca.se, ac.se);
        assert!(comparison(&r, &"Z".into(), &"A".into(), 0.95).is_err());
        assert!(comparison(&r, &"A".into(), &"B".into(), 1.0).is_err());
    }

    #[test]
    fn league_table_size_and_level() {
        let b = base(vec![contrast("T1", "A", "B", 1.0, 1.0)], vec![]);
        let r = fit(&b, "A");
        assert_eq!(r.comparisons.len(), 2);
        assert_eq!(r.comparisons[0].md, -r.comparisons[1].md);
        let narrow = league_table(&r, 0.80).unwrap();
        for (w, n) in r.comparisons.iter().zip(&narrow) {
            assert_eq!(w.md, n.md);
            assert!(n.ci_upper - n.ci_lower < w.ci_upper - w.ci_lower);
        }
    }

    #[test]
    fn three_arm_trial_alone_reproduces_arm_differences() {
        let arms = vec![
            ArmSummary { mean_change: -1.5, ..arm("T", "A", 0.1) },
            ArmSummary { mean_change: -1.7, ..arm("T", "B", 0.1) },
            ArmSummary { mean_change: -1.9, ..arm("T", "C", 0.1) },
        ];
        let se = 0.02f64.sqrt();
        let b = base(vec![contrast("T", "B", "A", -0.2, se), contrast("T", "C", "A", -0.4, se)], arms);
        let r = fit(&b, "A");
        let cb = r.get("C", "B").unwrap();
        assert!((cb.md + 0.2).abs() < 1e-12);
        assert!((cb.se - se).abs() < 1e-12);
    }

    #[test]
    fn disconnected_and_unknown_reference_fail() {
        let b = base(vec![contrast("T1", "A", "B", 1.0, 1.0), contrast("T2", "C", "D", 1.0, 1.0)], vec![]);
        let net = build_network(&b.contrasts).unwrap();
        assert!(matches!(assemble_gls(&net, &b, &"A".into()), Err(NmaError::Disconnected { components: 2 })));
        let b = base(vec![contrast("T1", "A", "B", 1.0, 1.0)], vec![]);
        let net = build_network(&b.contrasts).unwrap();
        assert!(matches!(assemble_gls(&net, &b, &"Q".into()), Err(NmaError::UnknownTreatment(_))));
    }

    #[test]
    fn ill_conditioning_is_reported() {
        let b = base(vec![contrast("T1", "A", "B", 1.0, 1e-7), contrast("T2", "B", "C", 1.0, 1.0)], vec![]);
        let net = build_network(&b.contrasts).unwrap();
        let sys = assemble_gls(&net, &b, &"C".into()).unwrap();
        assert!(matches!(solve_fixed_effects(&sys), Err(NmaError::IllConditioned { .. })));

        let b = base(vec![contrast("T1", "A", "B", 1.0, 1e-5), contrast("T2", "B", "C", 1.0, 1.0)], vec![]);
        let net = build_network(&b.contrasts).unwrap();
        let sys = assemble_gls(&net, &b, &"C".into()).unwrap();
        let f = solve_fixed_effects(&sys).unwrap();
        assert_eq!(f.warnings.len(), 1);
    }
}
